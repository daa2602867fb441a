//! Monotone network transformations and the coupled construction that runs
//! a network and its transformed copy on one event stream.
//!
//! Every transformation here can only lower queue lengths: the transformed
//! system receives a thinned copy of the original arrivals, the original
//! receives a thinned copy of the transformed departure clocks, and a task
//! arriving at both is placed by [`joint_dispatch`]. Run side by side, the
//! original dominates the copy server by server on every sample path.

mod lower_bound;

pub use lower_bound::{build_dandelion_lower_bound, DandelionComponent, LowerBound, LowerBoundRates};

use std::collections::BinaryHeap;
use std::cmp::Reverse;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::minimizers;
use crate::graph::{CompatGraph, DispatcherId, ServerId};
use crate::sim::{stream, Clock, Counters, OccupancyMetrics, QueueState, Recorder, SELECTION_STREAM};

pub const GROUP_ADDED: &str = "added";

/// One monotone transformation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum TransformOp {
    /// Replace edge `(d, u)` by `(d, v)` for a fresh server `v` that shares
    /// `u`'s departure clock. `v_new`, when given, must be the next free id.
    EdgeSimplify {
        d: DispatcherId,
        u: ServerId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        v_new: Option<ServerId>,
    },
    /// Attach a fresh server of rate `mu` with its own clock to `d`.
    AddServer {
        d: DispatcherId,
        mu: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        u_new: Option<ServerId>,
    },
    DecreaseArrival { d: DispatcherId, lambda: f64 },
    /// Raise the rate of `u`'s whole departure block to `mu`.
    IncreaseService { u: ServerId, mu: f64 },
}

/// Injection of the source network's servers into the transformed one, with
/// the per-dispatcher maps `phi_d` from the source neighborhood of `d` into
/// the transformed neighborhood.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServerMap {
    pub servers: Vec<ServerId>,
    /// `phi[d]` lists `(w, phi_d(w))` for `w` in the source neighborhood, by `w`.
    pub phi: Vec<Vec<(ServerId, ServerId)>>,
}

impl ServerMap {
    pub fn identity(g: &CompatGraph) -> Self {
        ServerMap {
            servers: g.servers().collect(),
            phi: g.dispatchers().map(|d| g.nbrs(d.index()).iter().map(|&u| (u, u)).collect()).collect(),
        }
    }

    pub fn phi_of(&self, d: DispatcherId, w: ServerId) -> Option<ServerId> {
        let row = self.phi.get(d.index())?;
        row.binary_search_by_key(&w, |&(a, _)| a).ok().map(|i| row[i].1)
    }

    /// `next ∘ self`.
    pub fn then(&self, next: &ServerMap) -> Result<ServerMap> {
        let servers = self.servers.iter().map(|u| next.servers[u.index()]).collect();
        let phi = self
            .phi
            .iter()
            .enumerate()
            .map(|(d, row)| {
                row.iter()
                    .map(|&(w, mid)| {
                        next.phi_of(DispatcherId(d as u32), mid)
                            .map(|img| (w, img))
                            .ok_or_else(|| Error::CouplingIntegrity(format!("phi of d{d} loses {w}")))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        Ok(ServerMap { servers, phi })
    }
}

/// Applies one transformation, returning the new network and the map from
/// the old network into it. New servers get the next free ids.
pub fn apply_transform(g: &CompatGraph, op: &TransformOp) -> Result<(CompatGraph, ServerMap)> {
    let ns = g.num_servers() as u32;
    let dispatcher = |d: DispatcherId| -> Result<()> {
        if g.contains_dispatcher(d) {
            Ok(())
        } else {
            Err(Error::domain(format!("{op:?}: unknown dispatcher {d}")))
        }
    };
    let fresh = |given: Option<ServerId>| -> Result<()> {
        match given {
            Some(v) if v.0 != ns => Err(Error::domain(format!("{op:?}: new server must be the next free id s{ns}"))),
            _ => Ok(()),
        }
    };
    let mut map = ServerMap::identity(g);
    let mut b = g.to_builder();
    let graph = match *op {
        TransformOp::EdgeSimplify { d, u, v_new } => {
            dispatcher(d)?;
            if !g.has_edge(d, u) {
                return Err(Error::domain(format!("{op:?}: ({d}, {u}) is not an edge")));
            }
            fresh(v_new)?;
            let v = ServerId(ns);
            let mut edges = g.edge_list();
            edges.retain(|&e| e != (d.0, u.0));
            edges.push((d.0, v.0));
            let mut blocks = g.blocks().to_vec();
            blocks[g.block_of(u)].push(v);
            let mut service = g.service_rates().to_vec();
            service.push(g.service_rate(u));
            let mut groups = g.groups().to_vec();
            groups.push(g.group(u).to_owned());
            let row = &mut map.phi[d.index()];
            let slot = row.iter().position(|&(w, _)| w == u).expect("edge present");
            row[slot].1 = v;
            CompatGraph::builder(g.num_dispatchers(), ns as usize + 1)
                .edges(edges)
                .arrival_rates(g.arrival_rates().to_vec())
                .service_rates(service)
                .partition(blocks)
                .groups(groups)
                .build()?
        }
        TransformOp::AddServer { d, mu, u_new } => {
            dispatcher(d)?;
            fresh(u_new)?;
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(Error::domain(format!("{op:?}: service rate must be positive and finite")));
            }
            let mut edges = g.edge_list();
            edges.push((d.0, ns));
            let mut blocks = g.blocks().to_vec();
            blocks.push(vec![ServerId(ns)]);
            let mut service = g.service_rates().to_vec();
            service.push(mu);
            let mut groups = g.groups().to_vec();
            groups.push(GROUP_ADDED.to_owned());
            CompatGraph::builder(g.num_dispatchers(), ns as usize + 1)
                .edges(edges)
                .arrival_rates(g.arrival_rates().to_vec())
                .service_rates(service)
                .partition(blocks)
                .groups(groups)
                .build()?
        }
        TransformOp::DecreaseArrival { d, lambda } => {
            dispatcher(d)?;
            if !(lambda > 0.0 && lambda <= g.arrival_rate(d)) {
                return Err(Error::domain(format!(
                    "{op:?}: need 0 < lambda <= current rate {}",
                    g.arrival_rate(d)
                )));
            }
            b = b.arrival(d.0, lambda);
            b.build()?
        }
        TransformOp::IncreaseService { u, mu } => {
            if !g.contains_server(u) {
                return Err(Error::domain(format!("{op:?}: unknown server {u}")));
            }
            if !(mu >= g.service_rate(u) && mu.is_finite()) {
                return Err(Error::domain(format!("{op:?}: need finite mu >= current rate {}", g.service_rate(u))));
            }
            for &w in &g.blocks()[g.block_of(u)] {
                b = b.service(w.0, mu);
            }
            b.build()?
        }
    };
    Ok((graph, map))
}

/// Folds [`apply_transform`] over `ops`.
pub fn apply_all(g: &CompatGraph, ops: &[TransformOp]) -> Result<(CompatGraph, ServerMap)> {
    let mut graph = g.clone();
    let mut map = ServerMap::identity(g);
    for op in ops {
        let (next, step) = apply_transform(&graph, op)?;
        map = map.then(&step)?;
        graph = next;
    }
    Ok((graph, map))
}

fn pick(set: &[ServerId], draw: f64) -> ServerId {
    set[((draw * set.len() as f64) as usize).min(set.len() - 1)]
}

/// Places one task in both systems so that each marginal is uniform on its
/// minimizer set and the dominance `x1(w) >= x2(phi(w))` survives the
/// placement. `phi[i]` is the image of `n1[i]`; `draws` are two uniforms in
/// `[0, 1)`.
pub fn joint_dispatch(
    n1: &[ServerId],
    x1: &[u32],
    n2: &[ServerId],
    x2: &[u32],
    phi: &[ServerId],
    draws: (f64, f64),
) -> Result<(ServerId, ServerId)> {
    if n1.is_empty() || n2.is_empty() || phi.len() != n1.len() {
        return Err(Error::CouplingIntegrity("empty neighborhood or misaligned phi".into()));
    }
    for (w, fw) in n1.iter().zip(phi) {
        if !n2.contains(fw) {
            return Err(Error::CouplingIntegrity(format!("phi maps {w} outside the second neighborhood")));
        }
        if x1[w.index()] < x2[fw.index()] {
            return Err(Error::CouplingIntegrity(format!(
                "dominance fails before dispatch: x1({w}) = {} < x2({fw}) = {}",
                x1[w.index()],
                x2[fw.index()]
            )));
        }
    }
    let (mut m1, mut m2) = (Vec::new(), Vec::new());
    minimizers(n1, x1, &mut m1);
    minimizers(n2, x2, &mut m2);
    let (min1, min2) = (x1[m1[0].index()], x2[m2[0].index()]);
    let (u1, u2) = if min1 == min2 {
        let u2 = pick(&m2, draws.0);
        let paired = n1.iter().zip(phi).find(|&(w, &fw)| fw == u2 && m1.contains(w)).map(|(&w, _)| w);
        (paired.unwrap_or_else(|| pick(&m1, draws.1)), u2)
    } else if min1 > min2 {
        (pick(&m1, draws.1), pick(&m2, draws.0))
    } else {
        return Err(Error::CouplingIntegrity(format!("first minimum {min1} below second minimum {min2}")));
    };
    for (w, fw) in n1.iter().zip(phi) {
        let lhs = x1[w.index()] + (u1 == *w) as u32;
        let rhs = x2[fw.index()] + (u2 == *fw) as u32;
        if lhs < rhs {
            return Err(Error::CouplingIntegrity(format!("placement breaks dominance at {w} -> {fw}")));
        }
    }
    Ok((u1, u2))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingConfig {
    /// Events of the merged stream to process.
    pub events: u64,
    pub seed: u64,
    #[serde(default)]
    pub tail_ks: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub event: u64,
    pub time: f64,
    /// Source server and its image.
    pub server: ServerId,
    pub image: ServerId,
    pub x1: u32,
    pub x2: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub events: u64,
    pub sim_time: f64,
    /// Number of dominance checks that failed; the run stops at the first.
    pub violations: u64,
    pub first_violation: Option<Violation>,
    /// Arrivals per dispatcher in each system.
    pub arrivals1: Vec<u64>,
    pub arrivals2: Vec<u64>,
}

#[derive(Clone, Debug)]
pub struct CoupledRun {
    pub transformed: CompatGraph,
    pub map: ServerMap,
    pub metrics1: OccupancyMetrics,
    pub metrics2: OccupancyMetrics,
    pub report: DominanceReport,
}

/// Checks `x1(w) >= x2(image)` over every source server and every `phi_d`.
fn find_violation(map: &ServerMap, x1: &[u32], x2: &[u32]) -> Option<(ServerId, ServerId)> {
    for (w, img) in map.servers.iter().enumerate() {
        if x1[w] < x2[img.index()] {
            return Some((ServerId(w as u32), *img));
        }
    }
    for row in &map.phi {
        for &(w, img) in row {
            if x1[w.index()] < x2[img.index()] {
                return Some((w, img));
            }
        }
    }
    None
}

/// Runs `g1` and its transform under `ops` on one coupled event stream,
/// checking dominance after every event. New servers start empty.
pub fn coupled_simulate(g1: &CompatGraph, ops: &[TransformOp], x0: &QueueState, cfg: &CouplingConfig) -> Result<CoupledRun> {
    if x0.occupancy.len() != g1.num_servers() {
        return Err(Error::domain("initial state must cover the source network"));
    }
    let (g2, map) = apply_all(g1, ops)?;
    let mut x2_0 = vec![0u32; g2.num_servers()];
    for (w, img) in map.servers.iter().enumerate() {
        x2_0[img.index()] = x0.occupancy[w];
    }
    if let Some((w, img)) = find_violation(&map, &x0.occupancy, &x2_0) {
        return Err(Error::domain(format!("initial state violates dominance at {w} -> {img}")));
    }

    let nd = g1.num_dispatchers();
    let nb1 = g1.blocks().len();
    let nb2 = g2.blocks().len();
    // sources: dispatchers of g1, then blocks of g2
    let rates: Vec<f64> = g1.arrival_rates().iter().copied().chain((0..nb2).map(|b| g2.block_rate(b))).collect();
    let mut rngs: Vec<ChaCha8Rng> = (0..rates.len() as u64).map(|i| stream(cfg.seed, i)).collect();
    let clocks: Vec<Option<Exp<f64>>> = rates.iter().map(|&r| (r > 0.0).then(|| Exp::new(r).expect("positive rate"))).collect();
    let mut heap = BinaryHeap::new();
    for (i, c) in clocks.iter().enumerate() {
        if let Some(exp) = c {
            heap.push(Reverse(Clock { t: exp.sample(&mut rngs[i]), source: i as u32 }));
        }
    }
    let mut sel = stream(cfg.seed, SELECTION_STREAM);

    let mut r1 = Recorder::new(g1, x0.occupancy.clone(), cfg.tail_ks.clone(), 0.0, None, 0, None);
    let mut r2 = Recorder::new(&g2, x2_0, cfg.tail_ks.clone(), 0.0, None, 0, None);
    let (mut c1, mut c2) = (Counters::default(), Counters::default());
    let mut report = DominanceReport {
        events: 0,
        sim_time: 0.0,
        violations: 0,
        first_violation: None,
        arrivals1: vec![0; nd],
        arrivals2: vec![0; nd],
    };
    let phis: Vec<Vec<ServerId>> = map.phi.iter().map(|row| row.iter().map(|&(_, img)| img).collect()).collect();
    let mut mins = Vec::new();

    while report.events < cfg.events {
        let Some(Reverse(Clock { t, source })) = heap.pop() else { break };
        let src = source as usize;
        let mark: f64 = rngs[src].random();
        if src < nd {
            let d = DispatcherId(source);
            let accept2 = mark * g1.arrival_rate(d) < g2.arrival_rate(d);
            let draws: (f64, f64) = (sel.random(), sel.random());
            let n1 = g1.nbrs(src);
            if accept2 {
                let (u1, u2) = joint_dispatch(n1, r1.state(), g2.nbrs(src), r2.state(), &phis[src], draws)?;
                r1.inc(u1.index(), t);
                r2.inc(u2.index(), t);
                report.arrivals2[src] += 1;
                c2.arrivals += 1;
            } else {
                minimizers(n1, r1.state(), &mut mins);
                r1.inc(pick(&mins, draws.0).index(), t);
            }
            report.arrivals1[src] += 1;
            c1.arrivals += 1;
        } else {
            let b = src - nd;
            for &u in &g2.blocks()[b] {
                if r2.state()[u.index()] > 0 {
                    r2.dec(u.index(), t);
                    c2.departures += 1;
                }
            }
            if b < nb1 && mark * g2.block_rate(b) < g1.block_rate(b) {
                for &u in &g1.blocks()[b] {
                    if r1.state()[u.index()] > 0 {
                        r1.dec(u.index(), t);
                        c1.departures += 1;
                    }
                }
            }
        }
        report.events += 1;
        report.sim_time = t;
        if let Some((w, img)) = find_violation(&map, r1.state(), r2.state()) {
            report.violations += 1;
            report.first_violation = Some(Violation {
                event: report.events,
                time: t,
                server: w,
                image: img,
                x1: r1.state()[w.index()],
                x2: r2.state()[img.index()],
            });
            break;
        }
        let exp = clocks[src].as_ref().expect("scheduled clocks have positive rate");
        heap.push(Reverse(Clock { t: t + exp.sample(&mut rngs[src]), source }));
    }
    c1.events = report.events;
    c2.events = report.events;
    let end = report.sim_time;
    Ok(CoupledRun {
        metrics1: r1.finish(end, c1),
        metrics2: r2.finish(end, c2),
        transformed: g2,
        map,
        report,
    })
}

#[cfg(test)]
mod tests;
