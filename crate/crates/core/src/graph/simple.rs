use serde::{Deserialize, Serialize};

use super::CompatGraph;
use crate::error::{Error, Result};

/// Undirected graph whose nodes act as both dispatcher and server.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimpleGraph {
    num_nodes: usize,
    /// Unordered pairs stored as `(low, high)`, sorted and deduplicated.
    edges: Vec<(u32, u32)>,
    arrival: Vec<f64>,
    service: Vec<f64>,
}

impl SimpleGraph {
    pub fn new(num_nodes: usize, edges: Vec<(u32, u32)>, arrival: Vec<f64>, service: Vec<f64>) -> Result<Self> {
        if arrival.len() != num_nodes || service.len() != num_nodes {
            return Err(Error::domain("one arrival and one service rate per node is required"));
        }
        if arrival.iter().any(|r| !r.is_finite() || *r < 0.0) || service.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return Err(Error::domain("rates must be finite, arrivals nonnegative and services positive"));
        }
        let mut norm = Vec::with_capacity(edges.len());
        for (u, v) in edges {
            if u == v {
                return Err(Error::domain(format!("self-loop at node {u}")));
            }
            if u.max(v) as usize >= num_nodes {
                return Err(Error::domain(format!("edge ({u}, {v}) names an unknown node")));
            }
            norm.push((u.min(v), u.max(v)));
        }
        norm.sort_unstable();
        let before = norm.len();
        norm.dedup();
        if norm.len() != before {
            return Err(Error::domain("duplicate edge in simple graph"));
        }
        Ok(SimpleGraph { num_nodes, edges: norm, arrival, service })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn arrival_rates(&self) -> &[f64] {
        &self.arrival
    }

    pub fn service_rates(&self) -> &[f64] {
        &self.service
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for &(u, v) in &self.edges {
            deg[u as usize] += 1;
            deg[v as usize] += 1;
        }
        deg
    }

    /// Per-node sufficient condition: every node serves faster than it
    /// receives.
    pub fn check_ergodicity_simple(&self) -> bool {
        self.arrival.iter().zip(&self.service).all(|(l, m)| l < m)
    }

    /// Equivalent bipartite network: every node becomes a dispatcher and a
    /// server, compatible with itself and with its graph neighbors.
    pub fn to_bipartite(&self) -> Result<CompatGraph> {
        let n = self.num_nodes as u32;
        let edges = (0..n)
            .map(|u| (u, u))
            .chain(self.edges.iter().flat_map(|&(u, v)| [(u, v), (v, u)]));
        CompatGraph::builder(self.num_nodes, self.num_nodes)
            .edges(edges)
            .arrival_rates(self.arrival.clone())
            .service_rates(self.service.clone())
            .build()
    }
}
