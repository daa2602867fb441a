use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_generator, minimizers, stationary, StationaryDist, TruncatedChain};
use crate::error::{Error, Result};
use crate::generators::{dandelion, dandelion_spec_of, DandelionSpec};
use crate::graph::{CompatGraph, DispatcherId, ServerId};
use crate::sim::Policy;
use crate::stats::total_variation;

/// JSQ drift `Af(x)` evaluated server by server from the rates: every
/// dispatcher adjacent to `u` pushes `lambda(d) / |M(d, x)|` into `u` when
/// `u` is one of its minimizers, and `u` drains at `mu(u)` when nonempty.
/// Increments past the cap contribute nothing.
pub fn drift(chain: &TruncatedChain, f: impl Fn(&[u32]) -> f64, x: &[u32]) -> Result<f64> {
    if chain.policy() != Policy::Jsq {
        return Err(Error::Unsupported("the drift formula is stated for JSQ dispatch".into()));
    }
    let g = chain.graph();
    if x.len() != g.num_servers() || x.iter().any(|&v| v > chain.cap()) {
        return Err(Error::domain("state outside the truncated box"));
    }
    let fx = f(x);
    let mut y = x.to_vec();
    let mut mins = Vec::new();
    let mut total = 0.0;
    for u in g.servers() {
        let i = u.index();
        let mut inflow = 0.0;
        for &d in g.server_nbrs(i) {
            minimizers(g.nbrs(d.index()), x, &mut mins);
            if mins.contains(&u) {
                inflow += g.arrival_rate(d) / mins.len() as f64;
            }
        }
        if inflow > 0.0 && x[i] < chain.cap() {
            y[i] += 1;
            total += (f(&y) - fx) * inflow;
            y[i] -= 1;
        }
        if x[i] > 0 {
            y[i] -= 1;
            total += (f(&y) - fx) * g.service_rate(u);
            y[i] += 1;
        }
    }
    Ok(total)
}

/// `sum_y A(x, y) (f(y) - f(x))` read off the generator row of `x`.
pub fn drift_from_rows(chain: &TruncatedChain, f: impl Fn(&[u32]) -> f64, idx: usize) -> f64 {
    let fx = f(&chain.state(idx));
    chain.row(idx).map(|(j, r)| r * (f(&chain.state(j)) - fx)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundedKind {
    Sin,
    Tanh,
    /// `1{w . x > phase}`.
    Step,
}

/// A bounded function of the occupancy vector built on `w . x + phase`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundedFn {
    pub kind: BoundedKind,
    pub weights: Vec<f64>,
    pub phase: f64,
}

impl BoundedFn {
    pub fn eval(&self, x: &[u32]) -> f64 {
        let s: f64 = self.weights.iter().zip(x).map(|(w, &v)| w * v as f64).sum();
        match self.kind {
            BoundedKind::Sin => (s + self.phase).sin(),
            BoundedKind::Tanh => (s - self.phase).tanh(),
            BoundedKind::Step => (s > self.phase) as u8 as f64,
        }
    }
}

/// `count` functions cycling through the kinds, with weights in `[-1, 1)`
/// and phases in `[0, 3)`, reproducible from `seed`.
pub fn random_bounded_functions(count: usize, num_servers: usize, seed: u64) -> Vec<BoundedFn> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kinds = [BoundedKind::Sin, BoundedKind::Tanh, BoundedKind::Step];
    (0..count)
        .map(|i| BoundedFn {
            kind: kinds[i % kinds.len()],
            weights: (0..num_servers).map(|_| rng.random_range(-1.0..1.0)).collect(),
            phase: rng.random_range(0.0..3.0),
        })
        .collect()
}

/// `|E_pi[Af]|` for `f` tabulated over the states.
pub fn check_zero_mean_drift(chain: &TruncatedChain, pi: &StationaryDist, f: impl Fn(&[u32]) -> f64) -> f64 {
    let fv = chain.tabulate(f);
    let mut acc = 0.0;
    for (i, &p) in pi.pi.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let af: f64 = chain.row(i).map(|(j, r)| r * (fv[j] - fv[i])).sum();
        acc += p * af;
    }
    acc.abs()
}

fn minimizer_event_probability(
    chain: &TruncatedChain,
    pi: &StationaryDist,
    d: DispatcherId,
    event: impl Fn(&[ServerId]) -> bool,
) -> f64 {
    let g = chain.graph();
    let mut x = vec![0; g.num_servers()];
    let mut mins = Vec::new();
    let mut acc = 0.0;
    for (i, &p) in pi.pi.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        chain.decode(i, &mut x);
        minimizers(g.nbrs(d.index()), &x, &mut mins);
        if event(&mins) {
            acc += p;
        }
    }
    acc
}

/// `P_pi(servers ∩ M(d, X) ≠ ∅)`.
pub fn minimizer_probability(chain: &TruncatedChain, pi: &StationaryDist, d: DispatcherId, servers: &[ServerId]) -> f64 {
    minimizer_event_probability(chain, pi, d, |m| m.iter().any(|u| servers.contains(u)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinRateCheck {
    pub server: ServerId,
    pub lhs: f64,
    pub mu: f64,
    pub holds: bool,
}

/// Compares `sum_{d ~ u} lambda(d) / deg(d) * P(u in M(d, X))` with `mu(u)`.
pub fn check_min_rate_inequality(chain: &TruncatedChain, pi: &StationaryDist, u: ServerId) -> Result<MinRateCheck> {
    let g = chain.graph();
    let lhs = g
        .neighborhood_of_server(u)?
        .iter()
        .map(|&d| g.arrival_rate(d) / g.dispatcher_degree(d) as f64 * minimizer_probability(chain, pi, d, &[u]))
        .sum();
    let mu = g.service_rate(u);
    Ok(MinRateCheck { server: u, lhs, mu, holds: lhs <= mu + 1e-9 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentralMinimizerRow {
    pub central: ServerId,
    pub dispatcher: DispatcherId,
    pub probability: f64,
    pub bound: f64,
    pub holds: bool,
}

/// `P(c in M(d, X)) <= mu (b + c) / (lambda n)` for every central server and
/// dispatcher of a dandelion.
pub fn central_minimizer_check(chain: &TruncatedChain, pi: &StationaryDist) -> Result<Vec<CentralMinimizerRow>> {
    let spec = dandelion_spec_of(chain.graph())?;
    let bound = spec.mu * (spec.b + spec.c) as f64 / (spec.lambda * spec.n as f64);
    let mut rows = Vec::new();
    for c in spec.central() {
        for d in chain.graph().dispatchers() {
            let probability = minimizer_probability(chain, pi, d, &[c]);
            rows.push(CentralMinimizerRow { central: c, dispatcher: d, probability, bound, holds: probability <= bound + 1e-9 });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterCountCheck {
    /// Expected number of dispatchers whose minimizer set meets the center.
    pub expected_count: f64,
    pub bound: f64,
    pub holds: bool,
}

/// `E[M_n] <= mu (b + c) c / lambda` on a dandelion.
pub fn center_count_check(chain: &TruncatedChain, pi: &StationaryDist) -> Result<CenterCountCheck> {
    let spec = dandelion_spec_of(chain.graph())?;
    let center: Vec<ServerId> = spec.central().collect();
    let expected_count = chain.graph().dispatchers().map(|d| minimizer_probability(chain, pi, d, &center)).sum();
    let bound = spec.mu * ((spec.b + spec.c) * spec.c) as f64 / spec.lambda;
    Ok(CenterCountCheck { expected_count, bound, holds: expected_count <= bound + 1e-9 })
}

/// Stationary law of one dispatcher doing JSQ over `b` servers.
pub fn basic_jsq_stationary(b: usize, lambda: f64, mu: f64, cap: u32) -> Result<StationaryDist> {
    if !(lambda < b as f64 * mu) {
        return Err(Error::domain(format!("basic process needs lambda < b * mu, got {lambda} >= {}", b as f64 * mu)));
    }
    let g = CompatGraph::builder(1, b)
        .edges((0..b as u32).map(|u| (0, u)))
        .arrival(0, lambda)
        .uniform_service(mu)
        .build()?;
    stationary(&build_generator(&g, cap)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub states: usize,
    pub boundary_mass: f64,
    /// TV distance between one boundary block's law and the basic law.
    pub marginal_tv: f64,
    /// TV distance between two blocks' joint law and the product of basic
    /// laws; absent for a single dispatcher.
    pub joint_tv: Option<f64>,
    pub center_count: CenterCountCheck,
}

/// Mixed-radix index of the occupancy restricted to `servers`.
fn sub_index(x: &[u32], servers: &[ServerId], radix: usize) -> usize {
    servers.iter().rev().fold(0, |acc, u| acc * radix + x[u.index()] as usize)
}

/// Exact boundary-block laws of `dandelion(n, b, c)` against the basic
/// process, for each `n`.
pub fn check_theorem2_convergence(ns: &[usize], b: usize, c: usize, lambda: f64, mu: f64, cap: u32) -> Result<Vec<ConvergenceRow>> {
    let basic = basic_jsq_stationary(b, lambda, mu, cap)?;
    let radix = cap as usize + 1;
    let block_states = radix.pow(b as u32);
    ns.par_iter()
        .map(|&n| {
            let spec = DandelionSpec::new(n, b, c, lambda, mu);
            let chain = build_generator(&dandelion(&spec)?, cap)?;
            let pi = stationary(&chain)?;
            let b0: Vec<ServerId> = spec.boundary(0).collect();
            let b1: Vec<ServerId> = if n > 1 { spec.boundary(1).collect() } else { Vec::new() };
            let mut marginal = vec![0.0; block_states];
            let mut joint = vec![0.0; if n > 1 { block_states * block_states } else { 0 }];
            let mut x = vec![0; chain.graph().num_servers()];
            for (i, &p) in pi.pi.iter().enumerate() {
                chain.decode(i, &mut x);
                let m0 = sub_index(&x, &b0, radix);
                marginal[m0] += p;
                if n > 1 {
                    joint[m0 + block_states * sub_index(&x, &b1, radix)] += p;
                }
            }
            let joint_tv = (n > 1).then(|| {
                let product: Vec<f64> = (0..block_states * block_states)
                    .map(|k| basic.pi[k % block_states] * basic.pi[k / block_states])
                    .collect();
                total_variation(&joint, &product)
            });
            Ok(ConvergenceRow {
                n,
                states: chain.num_states(),
                boundary_mass: pi.boundary_mass,
                marginal_tv: total_variation(&marginal, &basic.pi),
                joint_tv,
                center_count: center_count_check(&chain, &pi)?,
            })
        })
        .collect()
}
