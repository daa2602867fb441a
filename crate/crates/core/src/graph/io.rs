//! JSON graph files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CompatGraph, Provenance, ServerId, DEFAULT_GROUP};
use crate::error::{Error, Result};

/// On-disk form of a [`CompatGraph`].
///
/// Ids must be dense: `dispatchers` and `servers` list `0..n` in order.
/// Rates are keyed by id. `server_groups` maps a label to its servers and
/// may omit servers in the default group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub dispatchers: Vec<u32>,
    pub servers: Vec<u32>,
    pub edges: Vec<(u32, u32)>,
    pub arrival_rate: BTreeMap<u32, f64>,
    pub service_rate: BTreeMap<u32, f64>,
    pub departure_partition: Vec<Vec<u32>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub server_groups: BTreeMap<String, Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl From<&CompatGraph> for GraphFile {
    fn from(g: &CompatGraph) -> Self {
        let mut server_groups: BTreeMap<String, Vec<u32>> = BTreeMap::new();
        for u in g.servers() {
            if g.group(u) != DEFAULT_GROUP {
                server_groups.entry(g.group(u).to_owned()).or_default().push(u.0);
            }
        }
        GraphFile {
            dispatchers: g.dispatchers().map(|d| d.0).collect(),
            servers: g.servers().map(|u| u.0).collect(),
            edges: g.edge_list(),
            arrival_rate: g.dispatchers().map(|d| (d.0, g.arrival_rate(d))).collect(),
            service_rate: g.servers().map(|u| (u.0, g.service_rate(u))).collect(),
            departure_partition: g.blocks().iter().map(|b| b.iter().map(|u| u.0).collect()).collect(),
            server_groups,
            provenance: g.provenance().cloned(),
        }
    }
}

fn dense_rates(map: &BTreeMap<u32, f64>, n: usize, what: &str) -> Result<Vec<f64>> {
    if map.len() != n || map.keys().enumerate().any(|(i, &k)| i as u32 != k) {
        return Err(Error::domain(format!("{what} must have exactly one entry per id 0..{n}")));
    }
    Ok(map.values().copied().collect())
}

impl TryFrom<GraphFile> for CompatGraph {
    type Error = Error;

    fn try_from(file: GraphFile) -> Result<Self> {
        let nd = file.dispatchers.len();
        let ns = file.servers.len();
        if file.dispatchers.iter().enumerate().any(|(i, &d)| i as u32 != d) {
            return Err(Error::domain("dispatchers must be listed as 0..n in order"));
        }
        if file.servers.iter().enumerate().any(|(i, &u)| i as u32 != u) {
            return Err(Error::domain("servers must be listed as 0..n in order"));
        }
        let arrival = dense_rates(&file.arrival_rate, nd, "arrival_rate")?;
        let service = dense_rates(&file.service_rate, ns, "service_rate")?;
        let mut groups = vec![DEFAULT_GROUP.to_owned(); ns];
        for (label, members) in file.server_groups {
            for u in members {
                let slot = groups
                    .get_mut(u as usize)
                    .ok_or_else(|| Error::domain(format!("server_groups names unknown server s{u}")))?;
                *slot = label.clone();
            }
        }
        let blocks = file
            .departure_partition
            .into_iter()
            .map(|b| b.into_iter().map(ServerId).collect())
            .collect();
        let mut builder = CompatGraph::builder(nd, ns)
            .edges(file.edges)
            .arrival_rates(arrival)
            .service_rates(service)
            .partition(blocks)
            .groups(groups);
        if let Some(p) = file.provenance {
            builder = builder.provenance(p);
        }
        builder.build()
    }
}

impl CompatGraph {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&GraphFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text)?;
        CompatGraph::try_from(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
