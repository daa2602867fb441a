//! Network families: dandelions, the tiered CDN model, random bipartite
//! graphs, Erdős–Rényi networks and the power-of-d expansion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::graph::{CompatGraph, Provenance, ServerId, SimpleGraph};

pub const DANDELION: &str = "dandelion";
pub const GROUP_CENTRAL: &str = "central";
pub const GROUP_BOUNDARY: &str = "boundary";
pub const GROUP_EDGE: &str = "edge";
pub const GROUP_ORIGIN: &str = "origin";
pub const GROUP_DEDICATED: &str = "dedicated";

/// Default cap on the number of sub-dispatchers created by [`pod_expand`].
pub const DEFAULT_POD_EXPANSION_CAP: u128 = 1_000_000;

fn check_rate(name: &str, rate: f64, allow_zero: bool) -> Result<()> {
    let ok = rate.is_finite() && (rate > 0.0 || (allow_zero && rate == 0.0));
    if ok {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be a finite {} rate, got {rate}", if allow_zero { "nonnegative" } else { "positive" })))
    }
}

/// `n` dispatchers, each with `b` private boundary servers, all sharing `c`
/// central servers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DandelionSpec {
    pub n: usize,
    pub b: usize,
    pub c: usize,
    pub lambda: f64,
    pub mu: f64,
    /// Reject specs with `lambda >= mu * b`.
    #[serde(default)]
    pub strict_ergodic: bool,
}

impl DandelionSpec {
    pub fn new(n: usize, b: usize, c: usize, lambda: f64, mu: f64) -> Self {
        DandelionSpec { n, b, c, lambda, mu, strict_ergodic: false }
    }

    pub fn strict(mut self) -> Self {
        self.strict_ergodic = true;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.b == 0 {
            return Err(Error::domain("dandelion needs n >= 1 and b >= 1"));
        }
        check_rate("lambda", self.lambda, true)?;
        check_rate("mu", self.mu, false)?;
        if self.strict_ergodic && self.lambda >= self.mu * self.b as f64 {
            return Err(Error::domain(format!(
                "lambda = {} is not below mu * b = {}",
                self.lambda,
                self.mu * self.b as f64
            )));
        }
        Ok(())
    }

    /// Server ids of the central servers.
    pub fn central(&self) -> impl Iterator<Item = ServerId> {
        (0..self.c as u32).map(ServerId)
    }

    /// Server ids of the boundary block of dispatcher `d`.
    pub fn boundary(&self, d: usize) -> impl Iterator<Item = ServerId> {
        let start = (self.c + d * self.b) as u32;
        (start..start + self.b as u32).map(ServerId)
    }
}

/// Builds a dandelion. Central servers take ids `0..c`; dispatcher `d`'s
/// boundary block follows at `c + d*b .. c + (d+1)*b`.
pub fn dandelion(spec: &DandelionSpec) -> Result<CompatGraph> {
    spec.validate()?;
    let ns = spec.n * spec.b + spec.c;
    let mut edges = Vec::with_capacity(spec.n * (spec.b + spec.c));
    for d in 0..spec.n {
        edges.extend(spec.central().map(|u| (d as u32, u.0)));
        edges.extend(spec.boundary(d).map(|u| (d as u32, u.0)));
    }
    let groups = (0..ns)
        .map(|u| if u < spec.c { GROUP_CENTRAL } else { GROUP_BOUNDARY }.to_owned())
        .collect();
    CompatGraph::builder(spec.n, ns)
        .edges(edges)
        .uniform_arrival(spec.lambda)
        .uniform_service(spec.mu)
        .groups(groups)
        .provenance(Provenance {
            family: DANDELION.into(),
            params: serde_json::to_value(spec)?,
            seed: None,
        })
        .build()
}

/// Recovers the spec of a graph built by [`dandelion`].
pub fn dandelion_spec_of(g: &CompatGraph) -> Result<DandelionSpec> {
    let prov = g
        .provenance()
        .filter(|p| p.family == DANDELION)
        .ok_or_else(|| Error::domain("graph does not carry dandelion provenance"))?;
    let spec: DandelionSpec = serde_json::from_value(prov.params.clone())
        .map_err(|e| Error::domain(format!("malformed dandelion provenance: {e}")))?;
    if g.num_dispatchers() != spec.n || g.num_servers() != spec.n * spec.b + spec.c {
        return Err(Error::domain("graph shape does not match its dandelion provenance"));
    }
    for d in g.dispatchers() {
        let expected: Vec<ServerId> = spec.central().chain(spec.boundary(d.index())).collect();
        if g.neighborhood_of_dispatcher(d)? != expected.as_slice() {
            return Err(Error::domain(format!("dispatcher {d} does not match its dandelion provenance")));
        }
    }
    Ok(spec)
}

/// Deletes the central servers of a dandelion, leaving `n` disjoint basic
/// systems of one dispatcher and `b` servers. Server ids shift down by `c`.
pub fn remove_central(g: &CompatGraph) -> Result<CompatGraph> {
    let spec = dandelion_spec_of(g)?;
    let c = spec.c as u32;
    let edges = g
        .edge_list()
        .into_iter()
        .filter(|&(_, u)| u >= c)
        .map(|(d, u)| (d, u - c));
    let ns = spec.n * spec.b;
    CompatGraph::builder(spec.n, ns)
        .edges(edges)
        .arrival_rates(g.arrival_rates().to_vec())
        .service_rates(g.service_rates()[spec.c..].to_vec())
        .groups(vec![GROUP_BOUNDARY.to_owned(); ns])
        .provenance(Provenance {
            family: "dandelion_without_center".into(),
            params: serde_json::to_value(spec)?,
            seed: None,
        })
        .build()
}

/// Tiered CDN model: per cluster one tier-1 dispatcher over all of the
/// cluster's edge servers and one dispatcher per edge server, every
/// dispatcher also compatible with all origin servers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdnSpec {
    pub clusters: usize,
    pub edge_per_cluster: usize,
    pub origin_count: usize,
    /// Total arrival rate as a fraction of the combined edge capacity.
    pub rho: f64,
    /// Tier-1 dispatcher rate relative to each single-server dispatcher.
    pub tier1_rate_multiplier: f64,
    pub mu: f64,
}

impl CdnSpec {
    /// 1000 clusters of 10 edge servers, 100 origin servers, 90% load.
    pub fn full_scale() -> Self {
        CdnSpec { clusters: 1000, edge_per_cluster: 10, origin_count: 100, rho: 0.9, tier1_rate_multiplier: 5.0, mu: 1.0 }
    }

    pub fn scaled(clusters: usize, origin_count: usize) -> Self {
        CdnSpec { clusters, origin_count, ..Self::full_scale() }
    }

    /// Arrival rate of each single-edge-server dispatcher.
    pub fn stripe_rate(&self) -> f64 {
        let e = self.edge_per_cluster as f64;
        self.rho * self.mu * e / (self.tier1_rate_multiplier + e)
    }
}

pub fn cdn_network(spec: &CdnSpec) -> Result<CompatGraph> {
    if spec.clusters == 0 || spec.edge_per_cluster == 0 {
        return Err(Error::domain("cdn needs at least one cluster and one edge server per cluster"));
    }
    if !(spec.rho > 0.0 && spec.rho < 1.0) {
        return Err(Error::domain(format!("rho must lie in (0, 1), got {}", spec.rho)));
    }
    check_rate("tier1_rate_multiplier", spec.tier1_rate_multiplier, false)?;
    check_rate("mu", spec.mu, false)?;

    let e = spec.edge_per_cluster;
    let nd = spec.clusters * (e + 1);
    let n_edge = spec.clusters * e;
    let ns = n_edge + spec.origin_count;
    let origins = n_edge as u32..ns as u32;
    let stripe = spec.stripe_rate();
    let mut edges = Vec::with_capacity(nd * (spec.origin_count + 1) + n_edge);
    let mut arrival = Vec::with_capacity(nd);
    for k in 0..spec.clusters {
        let first_edge = (k * e) as u32;
        let tier1 = (k * (e + 1)) as u32;
        edges.extend((first_edge..first_edge + e as u32).map(|u| (tier1, u)));
        edges.extend(origins.clone().map(|u| (tier1, u)));
        arrival.push(spec.tier1_rate_multiplier * stripe);
        for i in 0..e as u32 {
            let d = tier1 + 1 + i;
            edges.push((d, first_edge + i));
            edges.extend(origins.clone().map(|u| (d, u)));
            arrival.push(stripe);
        }
    }
    let groups = (0..ns)
        .map(|u| if u < n_edge { GROUP_EDGE } else { GROUP_ORIGIN }.to_owned())
        .collect();
    CompatGraph::builder(nd, ns)
        .edges(edges)
        .arrival_rates(arrival)
        .uniform_service(spec.mu)
        .groups(groups)
        .provenance(Provenance { family: "cdn".into(), params: serde_json::to_value(spec)?, seed: None })
        .build()
}

/// `n` dispatchers and `n` servers with independent edges of probability
/// `mean_degree / n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomBipartiteSpec {
    pub n: usize,
    pub mean_degree: f64,
    pub lambda: f64,
    pub mu: f64,
    /// Attach a dedicated server `n + d` to every dispatcher `d`.
    pub stabilize: bool,
}

/// Appends the positions of successes of `len` Bernoulli(`p`) trials.
fn bernoulli_positions(rng: &mut ChaCha8Rng, len: u64, p: f64, out: &mut Vec<u64>) {
    if p >= 1.0 {
        out.extend(0..len);
        return;
    }
    if p <= 0.0 {
        return;
    }
    let skip = Geometric::new(p).expect("p in (0, 1)");
    let mut pos = 0u64;
    loop {
        pos = pos.saturating_add(skip.sample(rng));
        if pos >= len {
            return;
        }
        out.push(pos);
        pos += 1;
    }
}

/// Samples a random bipartite network. Without stabilization, dispatchers
/// that draw no edge have their row redrawn until it is nonempty.
pub fn random_bipartite(spec: &RandomBipartiteSpec, seed: u64) -> Result<CompatGraph> {
    let n = spec.n;
    if n == 0 || !(spec.mean_degree > 0.0) || spec.mean_degree > n as f64 {
        return Err(Error::domain("random bipartite graph needs n >= mean_degree > 0"));
    }
    check_rate("lambda", spec.lambda, true)?;
    check_rate("mu", spec.mu, false)?;
    let p = spec.mean_degree / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    let mut row = Vec::new();
    for d in 0..n as u32 {
        loop {
            row.clear();
            bernoulli_positions(&mut rng, n as u64, p, &mut row);
            if !row.is_empty() || spec.stabilize {
                break;
            }
        }
        edges.extend(row.iter().map(|&u| (d, u as u32)));
        if spec.stabilize {
            edges.push((d, n as u32 + d));
        }
    }
    let ns = if spec.stabilize { 2 * n } else { n };
    let groups = (0..ns)
        .map(|u| if u < n { "random" } else { GROUP_DEDICATED }.to_owned())
        .collect();
    CompatGraph::builder(n, ns)
        .edges(edges)
        .uniform_arrival(spec.lambda)
        .uniform_service(spec.mu)
        .groups(groups)
        .provenance(Provenance {
            family: "random_bipartite".into(),
            params: serde_json::to_value(spec)?,
            seed: Some(seed),
        })
        .build()
}

/// Erdős–Rényi network on `n` nodes whose mean degree grows like
/// `log log n / 2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErSpec {
    pub n: usize,
    pub lambda: f64,
    pub mu: f64,
}

impl ErSpec {
    pub fn edge_probability(&self) -> f64 {
        let n = self.n as f64;
        n.ln().ln() / (2.0 * (n - 1.0))
    }
}

pub fn er_network(spec: &ErSpec, seed: u64) -> Result<SimpleGraph> {
    check_rate("lambda", spec.lambda, true)?;
    check_rate("mu", spec.mu, false)?;
    let p = if spec.n >= 2 { spec.edge_probability() } else { f64::NAN };
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!(
            "n = {} gives edge probability {p}, outside (0, 1); need n >= 3",
            spec.n
        )));
    }
    let n = spec.n as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let skip = Geometric::new(p).expect("p in (0, 1)");
    // walk the lower triangle (w < v) row by row, jumping over non-edges
    let mut edges = Vec::new();
    let (mut v, mut w) = (1u64, 0u64);
    let mut first = true;
    loop {
        let jump = skip.sample(&mut rng);
        w = if first { jump } else { w.saturating_add(1 + jump) };
        first = false;
        while v < n && w >= v {
            w -= v;
            v += 1;
        }
        if v >= n {
            break;
        }
        edges.push((w as u32, v as u32));
    }
    SimpleGraph::new(spec.n, edges, vec![spec.lambda; spec.n], vec![spec.mu; spec.n])
}

/// Same as [`SimpleGraph::to_bipartite`].
pub fn to_bipartite(sg: &SimpleGraph) -> Result<CompatGraph> {
    sg.to_bipartite()
}

pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Advances `idx` to the next `k`-combination of `0..n` in lexicographic
/// order; returns false after the last one.
pub(crate) fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] != i + n - k {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Replaces every dispatcher of degree at least `d_sample` by one
/// sub-dispatcher per `d_sample`-subset of its neighborhood, splitting its
/// rate evenly. JSQ on the result has the law of power-of-d sampling
/// without replacement on `g`.
pub fn pod_expand(g: &CompatGraph, d_sample: usize) -> Result<CompatGraph> {
    pod_expand_capped(g, d_sample, DEFAULT_POD_EXPANSION_CAP)
}

pub fn pod_expand_capped(g: &CompatGraph, d_sample: usize, cap: u128) -> Result<CompatGraph> {
    if d_sample == 0 {
        return Err(Error::domain("power-of-d sample size must be at least 1"));
    }
    let total: u128 = g
        .dispatchers()
        .map(|d| binomial(g.dispatcher_degree(d), d_sample).max(1))
        .fold(0u128, u128::saturating_add);
    if total > cap {
        return Err(Error::Size {
            what: "sub-dispatchers in power-of-d expansion",
            requested: total,
            cap,
            hint: "",
        });
    }
    let mut edges = Vec::new();
    let mut arrival = Vec::with_capacity(total as usize);
    for d in g.dispatchers() {
        let nbrs = g.nbrs(d.index());
        let lam = g.arrival_rate(d);
        if nbrs.len() <= d_sample {
            let id = arrival.len() as u32;
            edges.extend(nbrs.iter().map(|u| (id, u.0)));
            arrival.push(lam);
            continue;
        }
        let share = lam / binomial(nbrs.len(), d_sample) as f64;
        let mut idx: Vec<usize> = (0..d_sample).collect();
        loop {
            let id = arrival.len() as u32;
            edges.extend(idx.iter().map(|&i| (id, nbrs[i].0)));
            arrival.push(share);
            if !next_combination(&mut idx, nbrs.len()) {
                break;
            }
        }
    }
    let mut builder = CompatGraph::builder(arrival.len(), g.num_servers())
        .edges(edges)
        .arrival_rates(arrival)
        .service_rates(g.service_rates().to_vec())
        .partition(g.blocks().to_vec())
        .groups(g.groups().to_vec());
    builder = builder.provenance(Provenance {
        family: "pod_expand".into(),
        params: json!({ "d_sample": d_sample, "parent": g.provenance() }),
        seed: None,
    });
    builder.build()
}

/// Draws a uniformly random `k`-subset of `0..n` (partial Fisher–Yates) into
/// `scratch[..k]`.
pub(crate) fn sample_without_replacement<R: Rng>(rng: &mut R, n: usize, k: usize, scratch: &mut Vec<usize>) {
    scratch.clear();
    scratch.extend(0..n);
    for i in 0..k.min(n) {
        let j = rng.random_range(i..n);
        scratch.swap(i, j);
    }
    scratch.truncate(k.min(n));
}
