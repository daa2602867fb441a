//! Event-driven simulation of the load balancing process.
//!
//! Every dispatcher owns a Poisson arrival clock and every departure block a
//! Poisson potential-departure clock. Each clock draws from its own ChaCha
//! stream derived from the master seed, and tie-breaking and power-of-d
//! sampling use a separate selection stream, so a run is a pure function of
//! graph, policy, initial state and config.

mod record;

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use record::{GroupMetrics, OccupancyMetrics, TracePoint};
pub(crate) use record::{Counters, Recorder};

use crate::error::{Error, Result};
use crate::generators::sample_without_replacement;
use crate::graph::{CompatGraph, DispatcherId, ServerId};

/// Stream id reserved for tie-breaking and sampling draws.
pub(crate) const SELECTION_STREAM: u64 = u64::MAX;

pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Dispatch rule applied on every arrival.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Policy {
    /// Join a least-occupied compatible server.
    Jsq,
    /// Sample `d` compatible servers without replacement and join a
    /// least-occupied one among them.
    PowerOfD(usize),
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Jsq => f.write_str("jsq"),
            Policy::PowerOfD(d) => write!(f, "pod:{d}"),
        }
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "jsq" => Ok(Policy::Jsq),
            other => {
                let d = other
                    .strip_prefix("pod:")
                    .and_then(|d| d.parse::<usize>().ok())
                    .ok_or_else(|| Error::domain(format!("unknown policy {s:?}; expected jsq or pod:<d>")))?;
                if d == 0 {
                    return Err(Error::domain("power-of-d needs d >= 1"));
                }
                Ok(Policy::PowerOfD(d))
            }
        }
    }
}

impl TryFrom<String> for Policy {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Policy> for String {
    fn from(p: Policy) -> String {
        p.to_string()
    }
}

/// Occupancy of every server.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QueueState {
    pub occupancy: Vec<u32>,
}

impl QueueState {
    pub fn empty(num_servers: usize) -> Self {
        QueueState { occupancy: vec![0; num_servers] }
    }

    pub fn total(&self) -> u64 {
        self.occupancy.iter().map(|&x| x as u64).sum()
    }
}

fn default_warmup() -> f64 {
    0.25
}

fn default_batches() -> usize {
    20
}

fn default_tail_ks() -> Vec<u32> {
    vec![1, 5, 10]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Simulated time at which the run stops.
    pub horizon: f64,
    /// Optional cap on processed events; hitting it flags a partial result.
    #[serde(default)]
    pub max_events: Option<u64>,
    /// Leading fraction of the horizon excluded from all averages.
    #[serde(default = "default_warmup")]
    pub warmup_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    /// Strictly increasing thresholds for the tail frequencies.
    #[serde(default = "default_tail_ks")]
    pub tail_ks: Vec<u32>,
    /// Number of equal batches the measurement window is split into.
    #[serde(default = "default_batches")]
    pub batches: usize,
    /// Spacing of group min/mean/max samples; none when absent.
    #[serde(default)]
    pub trace_interval: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            horizon: 1e4,
            max_events: None,
            warmup_fraction: default_warmup(),
            seed: 0,
            tail_ks: default_tail_ks(),
            batches: default_batches(),
            trace_interval: None,
        }
    }
}

impl SimConfig {
    pub fn with_horizon(horizon: f64) -> Self {
        SimConfig { horizon, ..Self::default() }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::domain(format!("horizon must be positive and finite, got {}", self.horizon)));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::domain(format!("warmup_fraction must lie in [0, 1), got {}", self.warmup_fraction)));
        }
        if self.tail_ks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("tail_ks must be strictly increasing"));
        }
        if let Some(step) = self.trace_interval {
            if !(step > 0.0 && step.is_finite()) {
                return Err(Error::domain("trace_interval must be positive"));
            }
        }
        Ok(())
    }

    pub fn warmup_end(&self) -> f64 {
        self.warmup_fraction * self.horizon
    }
}

/// Hooks called by [`simulate_observed`]; all methods default to no-ops.
pub trait Observer {
    /// A task arriving at `d` at time `t` joins `chosen` out of `candidates`.
    /// `state` is the occupancy just before the placement.
    fn arrival(&mut self, _t: f64, _d: DispatcherId, _candidates: &[ServerId], _chosen: ServerId, _state: &[u32]) {}

    /// The potential-departure clock of `block` ticks for all of `servers`.
    fn departure_tick(&mut self, _t: f64, _block: usize, _servers: &[ServerId]) {}
}

impl Observer for () {}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Clock {
    pub t: f64,
    pub source: u32,
}

impl PartialEq for Clock {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Clock {}

impl PartialOrd for Clock {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Clock {
    fn cmp(&self, other: &Self) -> Ordering {
        self.t.total_cmp(&other.t).then(self.source.cmp(&other.source))
    }
}

/// Chooses uniformly among the least-occupied entries of `candidates`.
pub(crate) fn least_loaded<R: Rng>(candidates: &[ServerId], x: &[u32], rng: &mut R, ties: &mut Vec<ServerId>) -> ServerId {
    let min = candidates.iter().map(|u| x[u.index()]).min().expect("nonempty candidate set");
    ties.clear();
    ties.extend(candidates.iter().copied().filter(|u| x[u.index()] == min));
    if ties.len() == 1 {
        ties[0]
    } else {
        ties[rng.random_range(0..ties.len())]
    }
}

pub fn simulate(g: &CompatGraph, policy: Policy, x0: &QueueState, cfg: &SimConfig) -> Result<OccupancyMetrics> {
    simulate_observed(g, policy, x0, cfg, &mut ())
}

pub fn simulate_observed<O: Observer>(
    g: &CompatGraph,
    policy: Policy,
    x0: &QueueState,
    cfg: &SimConfig,
    observer: &mut O,
) -> Result<OccupancyMetrics> {
    cfg.validate()?;
    if x0.occupancy.len() != g.num_servers() {
        return Err(Error::domain(format!(
            "initial state has {} entries for {} servers",
            x0.occupancy.len(),
            g.num_servers()
        )));
    }
    if g.arrival_rates().iter().chain(g.service_rates()).any(|r| !r.is_finite()) {
        return Err(Error::domain("rates must be finite"));
    }
    let nd = g.num_dispatchers();
    let nb = g.blocks().len();

    let mut rates = Vec::with_capacity(nd + nb);
    rates.extend_from_slice(g.arrival_rates());
    rates.extend((0..nb).map(|b| g.block_rate(b)));
    let mut rngs: Vec<ChaCha8Rng> = (0..rates.len() as u64).map(|i| stream(cfg.seed, i)).collect();
    let clocks: Vec<Option<Exp<f64>>> = rates.iter().map(|&r| (r > 0.0).then(|| Exp::new(r).expect("positive rate"))).collect();
    let mut heap = BinaryHeap::with_capacity(rates.len());
    for (i, clock) in clocks.iter().enumerate() {
        if let Some(exp) = clock {
            heap.push(Reverse(Clock { t: exp.sample(&mut rngs[i]), source: i as u32 }));
        }
    }
    let mut sel = stream(cfg.seed, SELECTION_STREAM);

    let mut rec = Recorder::new(
        g,
        x0.occupancy.clone(),
        cfg.tail_ks.clone(),
        cfg.warmup_end(),
        Some(cfg.horizon),
        cfg.batches,
        cfg.trace_interval,
    );
    let mut counters = Counters::default();
    let mut last_t = 0.0;
    let mut ties = Vec::new();
    let mut sample = Vec::new();
    let mut subset: Vec<ServerId> = Vec::new();

    while let Some(Reverse(Clock { t, source })) = heap.pop() {
        if t > cfg.horizon {
            break;
        }
        if cfg.max_events.is_some_and(|cap| counters.events >= cap) {
            counters.partial = true;
            break;
        }
        rec.advance(t);
        let src = source as usize;
        if src < nd {
            let nbrs = g.nbrs(src);
            let candidates: &[ServerId] = match policy {
                Policy::PowerOfD(k) if k < nbrs.len() => {
                    sample_without_replacement(&mut sel, nbrs.len(), k, &mut sample);
                    subset.clear();
                    subset.extend(sample.iter().map(|&i| nbrs[i]));
                    subset.sort_unstable();
                    &subset
                }
                _ => nbrs,
            };
            let chosen = least_loaded(candidates, rec.state(), &mut sel, &mut ties);
            observer.arrival(t, DispatcherId(source), candidates, chosen, rec.state());
            rec.inc(chosen.index(), t);
            counters.arrivals += 1;
        } else {
            let b = src - nd;
            let block = &g.blocks()[b];
            observer.departure_tick(t, b, block);
            for u in block {
                if rec.state()[u.index()] > 0 {
                    rec.dec(u.index(), t);
                    counters.departures += 1;
                }
            }
        }
        counters.events += 1;
        last_t = t;
        let exp = clocks[src].as_ref().expect("scheduled clocks have positive rate");
        heap.push(Reverse(Clock { t: t + exp.sample(&mut rngs[src]), source }));
    }
    let end = if counters.partial { last_t } else { cfg.horizon };
    Ok(rec.finish(end, counters))
}

pub(crate) fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if jobs == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::domain(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// One run per parameter point, in parallel, with seed `cfg.seed + index`
/// and an empty initial state. Results keep the order of `points`.
/// `jobs = 0` uses the ambient rayon pool.
pub fn sweep<P, F>(points: &[P], family: F, policy: Policy, cfg: &SimConfig, jobs: usize) -> Result<Vec<OccupancyMetrics>>
where
    P: Sync,
    F: Fn(&P) -> Result<CompatGraph> + Sync,
{
    if points.is_empty() {
        return Err(Error::domain("sweep needs at least one parameter point"));
    }
    cfg.validate()?;
    with_pool(jobs, || {
        points
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let g = family(p)?;
                let run_cfg = SimConfig { seed: cfg.seed.wrapping_add(i as u64), ..cfg.clone() };
                simulate(&g, policy, &QueueState::empty(g.num_servers()), &run_cfg)
            })
            .collect()
    })?
}

/// `replicas` independent runs of one graph with seeds `cfg.seed + i`.
pub fn replicate(g: &CompatGraph, policy: Policy, cfg: &SimConfig, replicas: usize, jobs: usize) -> Result<Vec<OccupancyMetrics>> {
    let seeds: Vec<usize> = (0..replicas).collect();
    sweep(&seeds, |_| Ok(g.clone()), policy, cfg, jobs)
}

#[cfg(test)]
mod tests;
