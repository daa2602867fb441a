//! Bipartite compatibility graphs.
//!
//! A [`CompatGraph`] couples a bipartite graph of dispatchers and servers
//! with per-dispatcher arrival rates, per-server service rates and a
//! partition of the servers into blocks that share one potential-departure
//! clock. Node ids are dense integers and every set-valued query returns ids
//! in ascending order, so all algorithms built on top are deterministic.

mod ergodicity;
mod io;
mod simple;
mod skew;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ergodicity::{Ergodicity, DEFAULT_ERGODICITY_SERVER_CAP};
pub use io::GraphFile;
pub use simple::SimpleGraph;
pub use skew::{CoreSearch, SkewParams, SkewedCore};

/// Default group label for servers that were not tagged by a generator.
pub const DEFAULT_GROUP: &str = "server";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DispatcherId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ServerId(pub u32);

impl DispatcherId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ServerId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for DispatcherId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d{}", self.0)
    }
}

impl fmt::Display for ServerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// Where a graph came from: generator family, its parameters and the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub family: String,
    pub params: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// A load balancing network: compatibility graph, rates and departure blocks.
///
/// Immutable once built; construct through [`CompatGraph::builder`].
#[derive(Clone, Debug, PartialEq)]
pub struct CompatGraph {
    dispatcher_nbrs: Vec<Vec<ServerId>>,
    server_nbrs: Vec<Vec<DispatcherId>>,
    arrival: Vec<f64>,
    service: Vec<f64>,
    blocks: Vec<Vec<ServerId>>,
    block_of: Vec<u32>,
    group: Vec<String>,
    provenance: Option<Provenance>,
}

/// Incremental constructor for [`CompatGraph`]; validation happens in
/// [`GraphBuilder::build`].
#[derive(Clone, Debug)]
pub struct GraphBuilder {
    num_dispatchers: usize,
    num_servers: usize,
    edges: Vec<(u32, u32)>,
    arrival: Vec<f64>,
    service: Vec<f64>,
    blocks: Option<Vec<Vec<ServerId>>>,
    group: Vec<String>,
    provenance: Option<Provenance>,
}

impl GraphBuilder {
    pub fn edge(mut self, d: u32, u: u32) -> Self {
        self.edges.push((d, u));
        self
    }

    pub fn edges(mut self, edges: impl IntoIterator<Item = (u32, u32)>) -> Self {
        self.edges.extend(edges);
        self
    }

    pub fn arrival(mut self, d: u32, rate: f64) -> Self {
        if let Some(slot) = self.arrival.get_mut(d as usize) {
            *slot = rate;
        }
        self
    }

    pub fn uniform_arrival(mut self, rate: f64) -> Self {
        self.arrival.iter_mut().for_each(|r| *r = rate);
        self
    }

    pub fn arrival_rates(mut self, rates: Vec<f64>) -> Self {
        self.arrival = rates;
        self
    }

    pub fn service(mut self, u: u32, rate: f64) -> Self {
        if let Some(slot) = self.service.get_mut(u as usize) {
            *slot = rate;
        }
        self
    }

    pub fn uniform_service(mut self, rate: f64) -> Self {
        self.service.iter_mut().for_each(|r| *r = rate);
        self
    }

    pub fn service_rates(mut self, rates: Vec<f64>) -> Self {
        self.service = rates;
        self
    }

    /// Replaces the default all-singletons departure partition.
    pub fn partition(mut self, blocks: Vec<Vec<ServerId>>) -> Self {
        self.blocks = Some(blocks);
        self
    }

    pub fn group(mut self, u: u32, label: impl Into<String>) -> Self {
        if let Some(slot) = self.group.get_mut(u as usize) {
            *slot = label.into();
        }
        self
    }

    pub fn groups(mut self, labels: Vec<String>) -> Self {
        self.group = labels;
        self
    }

    pub fn provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    pub fn build(self) -> Result<CompatGraph> {
        let nd = self.num_dispatchers;
        let ns = self.num_servers;
        if nd > u32::MAX as usize || ns > u32::MAX as usize {
            return Err(Error::domain("node count exceeds u32 id space"));
        }
        if self.arrival.len() != nd {
            return Err(Error::domain(format!(
                "arrival_rate has {} entries for {nd} dispatchers",
                self.arrival.len()
            )));
        }
        if self.service.len() != ns {
            return Err(Error::domain(format!(
                "service_rate has {} entries for {ns} servers",
                self.service.len()
            )));
        }
        if self.group.len() != ns {
            return Err(Error::domain("one group label per server is required"));
        }
        for (d, &rate) in self.arrival.iter().enumerate() {
            if !rate.is_finite() || rate < 0.0 {
                return Err(Error::domain(format!(
                    "arrival rate of d{d} must be finite and nonnegative, got {rate}"
                )));
            }
        }
        for (u, &rate) in self.service.iter().enumerate() {
            if !rate.is_finite() || rate <= 0.0 {
                return Err(Error::domain(format!(
                    "service rate of s{u} must be finite and positive, got {rate}"
                )));
            }
        }

        let mut dispatcher_nbrs = vec![Vec::new(); nd];
        let mut server_nbrs = vec![Vec::new(); ns];
        for &(d, u) in &self.edges {
            if d as usize >= nd {
                return Err(Error::domain(format!("edge endpoint d{d} is not a dispatcher")));
            }
            if u as usize >= ns {
                return Err(Error::domain(format!("edge endpoint s{u} is not a server")));
            }
            dispatcher_nbrs[d as usize].push(ServerId(u));
            server_nbrs[u as usize].push(DispatcherId(d));
        }
        for list in &mut dispatcher_nbrs {
            list.sort_unstable();
            list.dedup();
        }
        for list in &mut server_nbrs {
            list.sort_unstable();
            list.dedup();
        }
        if let Some(d) = dispatcher_nbrs.iter().position(Vec::is_empty) {
            return Err(Error::domain(format!("dispatcher d{d} has no compatible server")));
        }

        let blocks = match self.blocks {
            Some(blocks) => blocks,
            None => (0..ns as u32).map(|u| vec![ServerId(u)]).collect(),
        };
        let mut block_of = vec![u32::MAX; ns];
        let mut normalized = Vec::with_capacity(blocks.len());
        for (b, mut block) in blocks.into_iter().enumerate() {
            if block.is_empty() {
                return Err(Error::domain(format!("departure block {b} is empty")));
            }
            block.sort_unstable();
            let rate = match block.first().and_then(|u| self.service.get(u.index())) {
                Some(&rate) => rate,
                None => return Err(Error::domain(format!("departure block {b} names an unknown server"))),
            };
            for &u in &block {
                let slot = block_of
                    .get_mut(u.index())
                    .ok_or_else(|| Error::domain(format!("departure block {b} names unknown server {u}")))?;
                if *slot != u32::MAX {
                    return Err(Error::domain(format!("server {u} appears in two departure blocks")));
                }
                *slot = b as u32;
                if self.service[u.index()] != rate {
                    return Err(Error::domain(format!(
                        "departure block {b} mixes service rates {rate} and {}",
                        self.service[u.index()]
                    )));
                }
            }
            normalized.push(block);
        }
        if let Some(u) = block_of.iter().position(|&b| b == u32::MAX) {
            return Err(Error::domain(format!("server s{u} is not covered by the departure partition")));
        }

        Ok(CompatGraph {
            dispatcher_nbrs,
            server_nbrs,
            arrival: self.arrival,
            service: self.service,
            blocks: normalized,
            block_of,
            group: self.group,
            provenance: self.provenance,
        })
    }
}

impl CompatGraph {
    /// Starts a graph with the given node counts, unit rates, no edges and
    /// the default group label.
    pub fn builder(num_dispatchers: usize, num_servers: usize) -> GraphBuilder {
        GraphBuilder {
            num_dispatchers,
            num_servers,
            edges: Vec::new(),
            arrival: vec![1.0; num_dispatchers],
            service: vec![1.0; num_servers],
            blocks: None,
            group: vec![DEFAULT_GROUP.to_owned(); num_servers],
            provenance: None,
        }
    }

    /// Reopens this graph as a builder, keeping every field.
    pub fn to_builder(&self) -> GraphBuilder {
        GraphBuilder {
            num_dispatchers: self.num_dispatchers(),
            num_servers: self.num_servers(),
            edges: self.edge_list(),
            arrival: self.arrival.clone(),
            service: self.service.clone(),
            blocks: Some(self.blocks.clone()),
            group: self.group.clone(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn num_dispatchers(&self) -> usize {
        self.dispatcher_nbrs.len()
    }

    pub fn num_servers(&self) -> usize {
        self.server_nbrs.len()
    }

    pub fn num_edges(&self) -> usize {
        self.dispatcher_nbrs.iter().map(Vec::len).sum()
    }

    pub fn dispatchers(&self) -> impl ExactSizeIterator<Item = DispatcherId> + '_ {
        (0..self.num_dispatchers() as u32).map(DispatcherId)
    }

    pub fn servers(&self) -> impl ExactSizeIterator<Item = ServerId> + '_ {
        (0..self.num_servers() as u32).map(ServerId)
    }

    /// All edges `(d, u)` sorted by dispatcher, then server.
    pub fn edge_list(&self) -> Vec<(u32, u32)> {
        self.dispatcher_nbrs
            .iter()
            .enumerate()
            .flat_map(|(d, nbrs)| nbrs.iter().map(move |u| (d as u32, u.0)))
            .collect()
    }

    pub fn has_edge(&self, d: DispatcherId, u: ServerId) -> bool {
        self.dispatcher_nbrs
            .get(d.index())
            .is_some_and(|n| n.binary_search(&u).is_ok())
    }

    pub fn contains_dispatcher(&self, d: DispatcherId) -> bool {
        d.index() < self.num_dispatchers()
    }

    pub fn contains_server(&self, u: ServerId) -> bool {
        u.index() < self.num_servers()
    }

    /// The servers compatible with `d`, ascending.
    pub fn neighborhood_of_dispatcher(&self, d: DispatcherId) -> Result<&[ServerId]> {
        self.dispatcher_nbrs
            .get(d.index())
            .map(Vec::as_slice)
            .ok_or_else(|| Error::domain(format!("unknown dispatcher {d}")))
    }

    /// The dispatchers compatible with `u`, ascending.
    pub fn neighborhood_of_server(&self, u: ServerId) -> Result<&[DispatcherId]> {
        self.server_nbrs
            .get(u.index())
            .map(Vec::as_slice)
            .ok_or_else(|| Error::domain(format!("unknown server {u}")))
    }

    /// Unchecked neighborhood lookup for hot loops.
    #[inline]
    pub(crate) fn nbrs(&self, d: usize) -> &[ServerId] {
        &self.dispatcher_nbrs[d]
    }

    #[inline]
    pub(crate) fn server_nbrs(&self, u: usize) -> &[DispatcherId] {
        &self.server_nbrs[u]
    }

    pub fn dispatcher_degree(&self, d: DispatcherId) -> usize {
        self.dispatcher_nbrs[d.index()].len()
    }

    pub fn server_degree(&self, u: ServerId) -> usize {
        self.server_nbrs[u.index()].len()
    }

    pub fn max_dispatcher_degree(&self) -> usize {
        self.dispatcher_nbrs.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// The server with the largest degree; ties go to the smallest id.
    pub fn max_degree_server(&self) -> Option<ServerId> {
        let mut best: Option<(usize, ServerId)> = None;
        for u in self.servers() {
            let deg = self.server_degree(u);
            if best.is_none_or(|(b, _)| deg > b) {
                best = Some((deg, u));
            }
        }
        best.map(|(_, u)| u)
    }

    pub fn arrival_rate(&self, d: DispatcherId) -> f64 {
        self.arrival[d.index()]
    }

    pub fn service_rate(&self, u: ServerId) -> f64 {
        self.service[u.index()]
    }

    pub fn arrival_rates(&self) -> &[f64] {
        &self.arrival
    }

    pub fn service_rates(&self) -> &[f64] {
        &self.service
    }

    pub fn total_arrival_rate(&self) -> f64 {
        self.arrival.iter().sum()
    }

    /// Departure blocks; each block shares one potential-departure clock.
    pub fn blocks(&self) -> &[Vec<ServerId>] {
        &self.blocks
    }

    pub fn block_of(&self, u: ServerId) -> usize {
        self.block_of[u.index()] as usize
    }

    /// Service rate shared by every member of a block.
    pub fn block_rate(&self, block: usize) -> f64 {
        self.service[self.blocks[block][0].index()]
    }

    pub fn has_singleton_partition(&self) -> bool {
        self.blocks.iter().all(|b| b.len() == 1)
    }

    pub fn group(&self, u: ServerId) -> &str {
        &self.group[u.index()]
    }

    pub fn groups(&self) -> &[String] {
        &self.group
    }

    /// Distinct group labels in order of first appearance.
    pub fn group_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for g in &self.group {
            if !names.contains(g) {
                names.push(g.clone());
            }
        }
        names
    }

    pub fn servers_in_group<'a>(&'a self, label: &'a str) -> impl Iterator<Item = ServerId> + 'a {
        self.servers().filter(move |u| self.group(*u) == label)
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    /// Connected components, each as (dispatchers, servers), ordered by their
    /// smallest dispatcher id, then by smallest server id for dispatcher-free
    /// components.
    pub fn connected_components(&self) -> Vec<(Vec<DispatcherId>, Vec<ServerId>)> {
        let nd = self.num_dispatchers();
        let mut parent: Vec<usize> = (0..nd + self.num_servers()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (d, nbrs) in self.dispatcher_nbrs.iter().enumerate() {
            for u in nbrs {
                let a = find(&mut parent, d);
                let b = find(&mut parent, nd + u.index());
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut slot_of_root = std::collections::HashMap::new();
        let mut comps: Vec<(Vec<DispatcherId>, Vec<ServerId>)> = Vec::new();
        for x in 0..parent.len() {
            let root = find(&mut parent, x);
            let slot = *slot_of_root.entry(root).or_insert_with(|| {
                comps.push((Vec::new(), Vec::new()));
                comps.len() - 1
            });
            if x < nd {
                comps[slot].0.push(DispatcherId(x as u32));
            } else {
                comps[slot].1.push(ServerId((x - nd) as u32));
            }
        }
        comps
    }
}
