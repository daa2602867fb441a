//! Skewed-neighborhood queries and the core search built on them.

use serde::{Deserialize, Serialize};

use super::{CompatGraph, DispatcherId, ServerId};
use crate::error::{Error, Result};

/// Thresholds `(a, lambda_min, mu_max)` selecting the bounded-degree,
/// non-vanishing-load dispatchers around a server.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewParams {
    pub a: usize,
    pub lambda_min: f64,
    pub mu_max: f64,
}

impl SkewParams {
    pub fn new(a: usize, lambda_min: f64, mu_max: f64) -> Result<Self> {
        if a == 0 {
            return Err(Error::domain("skew degree cap a must be at least 1"));
        }
        if !(lambda_min > 0.0 && lambda_min.is_finite()) {
            return Err(Error::domain("lambda_min must be positive and finite"));
        }
        if !(mu_max > 0.0 && mu_max.is_finite()) {
            return Err(Error::domain("mu_max must be positive and finite"));
        }
        Ok(SkewParams { a, lambda_min, mu_max })
    }
}

/// Tuning for [`CompatGraph::find_skewed_core`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoreSearch {
    /// The search stops once the best extension keeps less than this
    /// fraction of the current joint neighborhood.
    pub drop_fraction: f64,
}

impl Default for CoreSearch {
    fn default() -> Self {
        CoreSearch { drop_fraction: 0.5 }
    }
}

/// Output of the core search: the server set, its joint skewed
/// neighborhood and the conflict-free subset selected from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewedCore {
    pub servers: Vec<ServerId>,
    pub joint: Vec<DispatcherId>,
    pub dispatchers: Vec<DispatcherId>,
}

impl CompatGraph {
    fn qualifies(&self, d: usize, alpha: &SkewParams) -> bool {
        let nbrs = self.nbrs(d);
        nbrs.len() <= alpha.a
            && self.arrival_rates()[d] >= alpha.lambda_min
            && nbrs.iter().all(|v| self.service_rates()[v.index()] <= alpha.mu_max)
    }

    /// Dispatchers compatible with `u` that have degree at most `a`, arrival
    /// rate at least `lambda_min`, and only servers of rate at most `mu_max`.
    pub fn n_alpha(&self, u: ServerId, alpha: &SkewParams) -> Result<Vec<DispatcherId>> {
        Ok(self
            .neighborhood_of_server(u)?
            .iter()
            .copied()
            .filter(|d| self.qualifies(d.index(), alpha))
            .collect())
    }

    /// Intersection of [`n_alpha`](Self::n_alpha) over a nonempty server set.
    pub fn n_alpha_joint(&self, servers: &[ServerId], alpha: &SkewParams) -> Result<Vec<DispatcherId>> {
        let (&first, rest) = servers
            .split_first()
            .ok_or_else(|| Error::domain("joint skewed neighborhood needs a nonempty server set"))?;
        for &u in rest {
            if !self.contains_server(u) {
                return Err(Error::domain(format!("unknown server {u}")));
            }
        }
        Ok(self
            .n_alpha(first, alpha)?
            .into_iter()
            .filter(|&d| rest.iter().all(|&u| self.has_edge(d, u)))
            .collect())
    }

    fn overlap_within(&self, d: DispatcherId, e: DispatcherId, core: &[ServerId]) -> bool {
        let (a, b) = (self.nbrs(d.index()), self.nbrs(e.index()));
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    if !core.contains(&a[i]) {
                        return false;
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        true
    }

    /// Greedy coloring: the smallest uncolored dispatcher of `candidates`
    /// turns green and every uncolored dispatcher sharing a server outside
    /// `core` with it turns red. Returns the green set, ascending.
    pub fn greedy_skew_subset(&self, core: &[ServerId], candidates: &[DispatcherId]) -> Vec<DispatcherId> {
        let mut pool: Vec<DispatcherId> = candidates.to_vec();
        pool.sort_unstable();
        pool.dedup();
        let mut colored = vec![false; pool.len()];
        let mut green = Vec::new();
        for i in 0..pool.len() {
            if colored[i] {
                continue;
            }
            colored[i] = true;
            let d = pool[i];
            green.push(d);
            for j in i + 1..pool.len() {
                if !colored[j] && !self.overlap_within(d, pool[j], core) {
                    colored[j] = true;
                }
            }
        }
        green
    }

    /// Largest number of `candidates` sharing a single server outside `core`.
    pub fn conflict_degree(&self, core: &[ServerId], candidates: &[DispatcherId]) -> usize {
        let mut counts = std::collections::HashMap::new();
        for &d in candidates {
            for &u in self.nbrs(d.index()) {
                if !core.contains(&u) {
                    *counts.entry(u).or_insert(0usize) += 1;
                }
            }
        }
        counts.into_values().max().unwrap_or(0)
    }

    /// Grows a server set around `seed` by repeatedly adding the server that
    /// keeps the largest joint skewed neighborhood (smallest id on ties),
    /// stopping at `a` servers or when the best extension falls below
    /// `drop_fraction` of the current joint size. The dispatchers of the
    /// result are the greedy conflict-free subset of the joint neighborhood.
    pub fn find_skewed_core(&self, seed: ServerId, alpha: &SkewParams, search: CoreSearch) -> Result<SkewedCore> {
        let mut core = vec![seed];
        let mut joint = self.n_alpha(seed, alpha)?;
        let mut counts = vec![0usize; self.num_servers()];
        while core.len() < alpha.a && !joint.is_empty() {
            counts.iter_mut().for_each(|c| *c = 0);
            for &d in &joint {
                for &u in self.nbrs(d.index()) {
                    counts[u.index()] += 1;
                }
            }
            for &u in &core {
                counts[u.index()] = 0;
            }
            let Some((best, &count)) = counts.iter().enumerate().rev().max_by_key(|(_, &c)| c) else {
                break;
            };
            if count == 0 || (count as f64) < search.drop_fraction * joint.len() as f64 {
                break;
            }
            let best = ServerId(best as u32);
            joint.retain(|&d| self.has_edge(d, best));
            core.push(best);
        }
        core.sort_unstable();
        let dispatchers = self.greedy_skew_subset(&core, &joint);
        Ok(SkewedCore { servers: core, joint, dispatchers })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{dandelion, DandelionSpec};

    fn dand(n: usize) -> CompatGraph {
        dandelion(&DandelionSpec::new(n, 3, 4, 2.85, 1.0)).unwrap()
    }

    fn centers() -> Vec<ServerId> {
        (0..4).map(ServerId).collect()
    }

    #[test]
    fn central_server_sees_every_dispatcher_at_threshold() {
        let g = dand(5);
        let alpha = SkewParams::new(7, 2.85, 1.0).unwrap();
        assert_eq!(g.n_alpha(ServerId(0), &alpha).unwrap().len(), 5);
        let tight = SkewParams::new(6, 2.85, 1.0).unwrap();
        assert!(g.n_alpha(ServerId(0), &tight).unwrap().is_empty());
    }

    #[test]
    fn joint_neighborhoods() {
        let g = dand(5);
        let alpha = SkewParams::new(7, 2.85, 1.0).unwrap();
        assert_eq!(g.n_alpha_joint(&centers(), &alpha).unwrap().len(), 5);
        // first boundary server of dispatcher 1 is 4 + 1*3
        let mixed = [ServerId(0), ServerId(7)];
        assert_eq!(g.n_alpha_joint(&mixed, &alpha).unwrap(), vec![DispatcherId(1)]);
        assert!(g.n_alpha_joint(&[], &alpha).is_err());
    }

    #[test]
    fn joint_is_empty_beyond_cap() {
        let g = dand(5);
        let alpha = SkewParams::new(2, 1.0, 1.0).unwrap();
        assert!(g.n_alpha_joint(&centers()[..3], &alpha).unwrap().is_empty());
    }

    #[test]
    fn greedy_on_dandelion_keeps_everyone() {
        let g = dand(5);
        let all: Vec<_> = g.dispatchers().collect();
        assert_eq!(g.greedy_skew_subset(&centers(), &all), all);
    }

    #[test]
    fn greedy_forced_conflict() {
        // both dispatchers share server 1, core is {0}
        let g = CompatGraph::builder(2, 2).edges([(0, 0), (0, 1), (1, 0), (1, 1)]).build().unwrap();
        let green = g.greedy_skew_subset(&[ServerId(0)], &[DispatcherId(0), DispatcherId(1)]);
        assert_eq!(green, vec![DispatcherId(0)]);
    }

    #[test]
    fn core_of_dandelion_is_the_center() {
        let g = dand(8);
        let alpha = SkewParams::new(7, 2.85, 1.0).unwrap();
        for seed in 0..4 {
            let core = g.find_skewed_core(ServerId(seed), &alpha, CoreSearch::default()).unwrap();
            assert_eq!(core.servers, centers());
            assert_eq!(core.dispatchers, g.dispatchers().collect::<Vec<_>>());
        }
    }

    #[test]
    fn core_of_single_edge() {
        let g = CompatGraph::builder(1, 1).edge(0, 0).arrival(0, 2.0).build().unwrap();
        let loose = SkewParams::new(1, 1.0, 1.0).unwrap();
        let core = g.find_skewed_core(ServerId(0), &loose, CoreSearch::default()).unwrap();
        assert_eq!(core.servers, vec![ServerId(0)]);
        assert_eq!(core.dispatchers, vec![DispatcherId(0)]);
        let strict = SkewParams::new(1, 3.0, 1.0).unwrap();
        let core = g.find_skewed_core(ServerId(0), &strict, CoreSearch::default()).unwrap();
        assert!(core.dispatchers.is_empty());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(SkewParams::new(0, 1.0, 1.0).is_err());
        assert!(SkewParams::new(1, 0.0, 1.0).is_err());
        assert!(SkewParams::new(1, 1.0, f64::INFINITY).is_err());
    }
}
