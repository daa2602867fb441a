use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{CompatGraph, CoreSearch, ServerId, SkewParams, SkewedCore};

/// Skewed-neighborhood sizes of every server and the core grown around the
/// largest one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewDetection {
    pub alpha: SkewParams,
    /// `|N^alpha(u)|` per server.
    pub sizes: Vec<usize>,
    /// Server with the largest skewed neighborhood, smallest id on ties.
    pub u_max: ServerId,
    pub max_size: usize,
    /// Largest-degree server and its skewed-neighborhood size.
    pub max_degree_server: ServerId,
    pub max_degree_size: usize,
    pub core: SkewedCore,
}

/// Counts qualifying dispatchers once per edge instead of filtering every
/// server's neighborhood separately.
pub fn detect_skew(g: &CompatGraph, alpha: &SkewParams, search: CoreSearch) -> Result<SkewDetection> {
    let mut sizes = vec![0usize; g.num_servers()];
    for d in g.dispatchers() {
        let nbrs = g.nbrs(d.index());
        let qualifies = nbrs.len() <= alpha.a
            && g.arrival_rate(d) >= alpha.lambda_min
            && nbrs.iter().all(|&u| g.service_rate(u) <= alpha.mu_max);
        if qualifies {
            for u in nbrs {
                sizes[u.index()] += 1;
            }
        }
    }
    let (mut best, mut max_size) = (0, 0);
    for (u, &s) in sizes.iter().enumerate() {
        if s > max_size {
            best = u;
            max_size = s;
        }
    }
    let u_max = ServerId(best as u32);
    let max_degree_server = g.max_degree_server().unwrap_or(ServerId(0));
    let max_degree_size = sizes.get(max_degree_server.index()).copied().unwrap_or(0);
    let core = g.find_skewed_core(u_max, alpha, search)?;
    Ok(SkewDetection { alpha: *alpha, sizes, u_max, max_size, max_degree_server, max_degree_size, core })
}
