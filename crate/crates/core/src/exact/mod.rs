//! Truncated-state CTMC engine.
//!
//! Each server's occupancy is capped at `K`; arrivals that would push a
//! server past `K` are removed from the generator, so the truncated process
//! is itself a CTMC. States are indexed in mixed radix `K + 1` with server 0
//! as the least significant digit.

mod checks;
mod solve;

pub use checks::{
    basic_jsq_stationary, check_min_rate_inequality, random_bounded_functions, BoundedFn, BoundedKind, check_theorem2_convergence, check_zero_mean_drift, drift,
    drift_from_rows, central_minimizer_check, center_count_check, minimizer_probability, CentralMinimizerRow, CenterCountCheck, MinRateCheck,
    ConvergenceRow,
};
pub use solve::{stationary, stationary_with, SolveMethod, SolverOptions, StationaryDist};

use crate::error::{Error, Result};
use crate::generators::{binomial, next_combination};
use crate::graph::{CompatGraph, ServerId};
use crate::sim::Policy;

/// Default cap on the number of truncated states.
pub const DEFAULT_STATE_CAP: usize = 5_000_000;

/// Generator of the truncated chain in compressed row form. Only
/// off-diagonal entries are stored; the diagonal is minus `exit_rate`.
#[derive(Clone, Debug)]
pub struct TruncatedChain {
    graph: CompatGraph,
    policy: Policy,
    cap: u32,
    strides: Vec<usize>,
    num_states: usize,
    row_ptr: Vec<usize>,
    col: Vec<u32>,
    rate: Vec<f64>,
    exit: Vec<f64>,
}

/// Minimizer set of `candidates` under `x`, ascending.
pub(crate) fn minimizers(candidates: &[ServerId], x: &[u32], out: &mut Vec<ServerId>) {
    let min = candidates.iter().map(|u| x[u.index()]).min().unwrap_or(0);
    out.clear();
    out.extend(candidates.iter().copied().filter(|u| x[u.index()] == min));
}

/// JSQ generator with the default state cap.
pub fn build_generator(g: &CompatGraph, cap: u32) -> Result<TruncatedChain> {
    build_generator_with(g, cap, Policy::Jsq, DEFAULT_STATE_CAP)
}

/// Generator under `policy`. For power-of-d, every `d`-subset of a
/// dispatcher's neighborhood is drawn with equal probability and the task
/// joins a least-occupied member of the subset.
pub fn build_generator_with(g: &CompatGraph, cap: u32, policy: Policy, state_cap: usize) -> Result<TruncatedChain> {
    if cap == 0 {
        return Err(Error::domain("truncation level K must be at least 1"));
    }
    if !g.has_singleton_partition() {
        return Err(Error::Unsupported(
            "shared potential-departure clocks; exact analysis needs a singleton departure partition".into(),
        ));
    }
    let ns = g.num_servers();
    let radix = cap as u128 + 1;
    let requested = (0..ns).try_fold(1u128, |acc, _| acc.checked_mul(radix)).unwrap_or(u128::MAX);
    if requested > state_cap as u128 || requested > u32::MAX as u128 {
        return Err(Error::Size {
            what: "truncated states",
            requested,
            cap: state_cap.min(u32::MAX as usize) as u128,
            hint: "; lower K or shrink the graph",
        });
    }
    let n = requested as usize;
    let strides: Vec<usize> = (0..ns).map(|u| (radix as usize).pow(u as u32)).collect();

    // per-dispatcher candidate sets with their selection weights
    let mut choice_sets: Vec<Vec<(f64, Vec<ServerId>)>> = Vec::with_capacity(g.num_dispatchers());
    for d in g.dispatchers() {
        let nbrs = g.nbrs(d.index());
        let lam = g.arrival_rate(d);
        let sets = match policy {
            Policy::PowerOfD(k) if k < nbrs.len() => {
                let w = lam / binomial(nbrs.len(), k) as f64;
                let mut idx: Vec<usize> = (0..k).collect();
                let mut sets = Vec::new();
                loop {
                    sets.push((w, idx.iter().map(|&i| nbrs[i]).collect()));
                    if !next_combination(&mut idx, nbrs.len()) {
                        break;
                    }
                }
                sets
            }
            _ => vec![(lam, nbrs.to_vec())],
        };
        choice_sets.push(sets);
    }

    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col = Vec::new();
    let mut rate = Vec::new();
    let mut exit = vec![0.0; n];
    let mut x = vec![0u32; ns];
    let mut inflow = vec![0.0f64; ns];
    let mut mins = Vec::new();
    row_ptr.push(0);
    for (idx, exit_slot) in exit.iter_mut().enumerate() {
        inflow.iter_mut().for_each(|r| *r = 0.0);
        for sets in &choice_sets {
            for (w, cands) in sets {
                if *w == 0.0 {
                    continue;
                }
                minimizers(cands, &x, &mut mins);
                let share = w / mins.len() as f64;
                for u in &mins {
                    inflow[u.index()] += share;
                }
            }
        }
        let mut total = 0.0;
        for u in 0..ns {
            if inflow[u] > 0.0 && x[u] < cap {
                col.push((idx + strides[u]) as u32);
                rate.push(inflow[u]);
                total += inflow[u];
            }
        }
        for u in 0..ns {
            if x[u] > 0 {
                col.push((idx - strides[u]) as u32);
                rate.push(g.service_rates()[u]);
                total += g.service_rates()[u];
            }
        }
        *exit_slot = total;
        row_ptr.push(col.len());
        // advance the mixed-radix counter
        for xu in x.iter_mut() {
            if *xu < cap {
                *xu += 1;
                break;
            }
            *xu = 0;
        }
    }
    Ok(TruncatedChain { graph: g.clone(), policy, cap, strides, num_states: n, row_ptr, col, rate, exit })
}

impl TruncatedChain {
    pub fn graph(&self) -> &CompatGraph {
        &self.graph
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    /// Truncation level `K`.
    pub fn cap(&self) -> u32 {
        self.cap
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_transitions(&self) -> usize {
        self.col.len()
    }

    pub fn encode(&self, x: &[u32]) -> usize {
        x.iter().zip(&self.strides).map(|(&xu, &s)| xu as usize * s).sum()
    }

    pub fn decode(&self, idx: usize, x: &mut [u32]) {
        let radix = self.cap as usize + 1;
        let mut rest = idx;
        for xu in x.iter_mut() {
            *xu = (rest % radix) as u32;
            rest /= radix;
        }
    }

    pub fn state(&self, idx: usize) -> Vec<u32> {
        let mut x = vec![0; self.graph.num_servers()];
        self.decode(idx, &mut x);
        x
    }

    /// Off-diagonal entries `(target, rate)` of row `idx`.
    pub fn row(&self, idx: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[idx]..self.row_ptr[idx + 1];
        self.col[span.clone()].iter().map(|&c| c as usize).zip(self.rate[span].iter().copied())
    }

    /// Minus the diagonal entry of row `idx`.
    pub fn exit_rate(&self, idx: usize) -> f64 {
        self.exit[idx]
    }

    /// Largest absolute row sum, diagonal included.
    pub fn max_row_sum(&self) -> f64 {
        (0..self.num_states)
            .map(|i| (self.row(i).map(|(_, r)| r).sum::<f64>() - self.exit[i]).abs())
            .fold(0.0, f64::max)
    }

    /// Evaluates `f` on every state.
    pub fn tabulate(&self, f: impl Fn(&[u32]) -> f64) -> Vec<f64> {
        let mut x = vec![0; self.graph.num_servers()];
        (0..self.num_states)
            .map(|i| {
                self.decode(i, &mut x);
                f(&x)
            })
            .collect()
    }

    pub(crate) fn strides(&self) -> &[usize] {
        &self.strides
    }
}
