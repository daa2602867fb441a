//! Reduction of a skewed core to an isolated dandelion by monotone
//! transformations.

use serde::{Deserialize, Serialize};

use super::{apply_all, TransformOp};
use crate::error::{Error, Result};
use crate::generators::DandelionSpec;
use crate::graph::{CompatGraph, DispatcherId, ServerId, SkewParams};

/// Target rates of the reduced component. `None` picks `0.99 lambda_min`
/// and `1.01 mu_max`, lowering `lambda` below `(a - c) mu` when needed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundRates {
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
}

/// The dandelion component left after the pipeline, in transformed ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DandelionComponent {
    pub centers: Vec<ServerId>,
    pub dispatchers: Vec<DispatcherId>,
    /// Boundary servers of each dispatcher, aligned with `dispatchers`.
    pub boundary: Vec<Vec<ServerId>>,
    pub a: usize,
    pub lambda: f64,
    pub mu: f64,
}

impl DandelionComponent {
    pub fn spec(&self) -> DandelionSpec {
        DandelionSpec::new(self.dispatchers.len(), self.a - self.centers.len(), self.centers.len(), self.lambda, self.mu)
    }

    /// Copies the component out of `g` as a standalone graph numbered like
    /// [`crate::generators::dandelion`]: centers first, then each
    /// dispatcher's boundary in order.
    pub fn extract(&self, g: &CompatGraph) -> Result<CompatGraph> {
        let mut new_id = vec![u32::MAX; g.num_servers()];
        let order = self.centers.iter().chain(self.boundary.iter().flatten());
        for (k, &u) in order.enumerate() {
            if !g.contains_server(u) {
                return Err(Error::domain(format!("component server {u} missing from the graph")));
            }
            new_id[u.index()] = k as u32;
        }
        let ns = self.centers.len() + self.boundary.iter().map(Vec::len).sum::<usize>();
        let mut edges = Vec::new();
        let mut lambda = Vec::new();
        for (k, &d) in self.dispatchers.iter().enumerate() {
            for &u in g.neighborhood_of_dispatcher(d)? {
                let id = new_id[u.index()];
                if id == u32::MAX {
                    return Err(Error::domain(format!("{d} reaches {u} outside the component")));
                }
                edges.push((k as u32, id));
            }
            lambda.push(g.arrival_rate(d));
        }
        let mut mu = vec![0.0; ns];
        for (u, &id) in new_id.iter().enumerate() {
            if id != u32::MAX {
                mu[id as usize] = g.service_rate(ServerId(u as u32));
            }
        }
        CompatGraph::builder(self.dispatchers.len(), ns).edges(edges).arrival_rates(lambda).service_rates(mu).build()
    }

    /// Checks that the component is isolated in `g`, has the dandelion
    /// shape and rates, and that no two of its servers share a clock.
    pub fn verify(&self, g: &CompatGraph) -> Result<()> {
        let fail = |what: String| Err(Error::CouplingIntegrity(format!("dandelion component: {what}")));
        let c = self.centers.len();
        let mut servers: Vec<ServerId> = self.centers.iter().chain(self.boundary.iter().flatten()).copied().collect();
        servers.sort_unstable();
        let total = servers.len();
        servers.dedup();
        if servers.len() != total {
            return fail("boundaries overlap each other or the centers".into());
        }
        let Some(&first) = self.dispatchers.first() else {
            return fail("no dispatchers".into());
        };
        let comps = g.connected_components();
        let Some((ds, ss)) = comps.iter().find(|(ds, _)| ds.contains(&first)) else {
            return fail(format!("{first} not in the graph"));
        };
        let mut want_d = self.dispatchers.clone();
        want_d.sort_unstable();
        if *ds != want_d || *ss != servers {
            return fail("component is not isolated".into());
        }
        for (&d, b) in self.dispatchers.iter().zip(&self.boundary) {
            if b.len() + c != self.a {
                return fail(format!("{d} has degree {} instead of {}", b.len() + c, self.a));
            }
            let mut want: Vec<ServerId> = self.centers.iter().chain(b).copied().collect();
            want.sort_unstable();
            if g.neighborhood_of_dispatcher(d)? != want.as_slice() {
                return fail(format!("neighborhood of {d} is not centers plus its boundary"));
            }
            if g.arrival_rate(d) != self.lambda {
                return fail(format!("{d} has arrival rate {}", g.arrival_rate(d)));
            }
        }
        let mut seen = vec![false; g.blocks().len()];
        for &u in &servers {
            if g.service_rate(u) != self.mu {
                return fail(format!("{u} has service rate {}", g.service_rate(u)));
            }
            let b = g.block_of(u);
            if std::mem::replace(&mut seen[b], true) {
                return fail(format!("{u} shares a departure clock with another component server"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LowerBound {
    /// `|U| = a`: nothing to transform.
    pub trivial: bool,
    pub ops: Vec<TransformOp>,
    pub transformed: CompatGraph,
    pub component: DandelionComponent,
}

/// Builds the transformation pipeline that turns the neighborhood of a
/// skewed core `(centers, dispatchers)` into an isolated dandelion with
/// lower arrival and higher service rates:
///
/// 1. lower every core dispatcher's rate to `lambda` and raise every server
///    they reach to `mu`;
/// 2. simplify away every edge from an outside dispatcher to such a server;
/// 3. attach fresh servers until each core dispatcher has degree `a`.
///
/// The core must lie in the joint skewed neighborhood of `centers`, and two
/// core dispatchers may only share servers in `centers`.
pub fn build_dandelion_lower_bound(
    g: &CompatGraph,
    centers: &[ServerId],
    dispatchers: &[DispatcherId],
    alpha: &SkewParams,
    rates: LowerBoundRates,
) -> Result<LowerBound> {
    let mut centers = centers.to_vec();
    centers.sort_unstable();
    centers.dedup();
    let mut core = dispatchers.to_vec();
    core.sort_unstable();
    core.dedup();
    if core.is_empty() {
        return Err(Error::domain("the core needs at least one dispatcher"));
    }
    let joint = g.n_alpha_joint(&centers, alpha)?;
    if let Some(d) = core.iter().find(|d| !joint.contains(d)) {
        return Err(Error::domain(format!("{d} is outside the joint skewed neighborhood of the centers")));
    }
    for (i, &d) in core.iter().enumerate() {
        for &e in &core[i + 1..] {
            if let Some(u) = g.nbrs(d.index()).iter().find(|&&u| g.has_edge(e, u) && !centers.contains(&u)) {
                return Err(Error::domain(format!("{d} and {e} share {u} outside the centers")));
            }
        }
    }
    let (a, c) = (alpha.a, centers.len());
    if c == a {
        let boundary = vec![Vec::new(); core.len()];
        return Ok(LowerBound {
            trivial: true,
            ops: Vec::new(),
            transformed: g.clone(),
            component: DandelionComponent { centers, dispatchers: core, boundary, a, lambda: alpha.lambda_min, mu: alpha.mu_max },
        });
    }

    let mu = rates.mu.unwrap_or(1.01 * alpha.mu_max);
    if !(mu >= alpha.mu_max && mu.is_finite()) {
        return Err(Error::domain(format!("mu = {mu} must be at least mu_max = {}", alpha.mu_max)));
    }
    let room = (a - c) as f64 * mu;
    let lambda = match rates.lambda {
        Some(l) => l,
        None => (0.99 * alpha.lambda_min).min(0.99 * room),
    };
    if !(lambda > 0.0 && lambda <= alpha.lambda_min) {
        return Err(Error::domain(format!("lambda = {lambda} must lie in (0, lambda_min = {}]", alpha.lambda_min)));
    }
    if !(lambda < room) {
        return Err(Error::domain(format!("lambda = {lambda} must be below (a - c) mu = {room}")));
    }

    let mut touched: Vec<ServerId> = core.iter().flat_map(|d| g.nbrs(d.index()).iter().copied()).collect();
    touched.sort_unstable();
    touched.dedup();

    let mut ops: Vec<TransformOp> = core.iter().map(|&d| TransformOp::DecreaseArrival { d, lambda }).collect();
    ops.extend(touched.iter().map(|&u| TransformOp::IncreaseService { u, mu }));
    let mut next = g.num_servers() as u32;
    for &u in &touched {
        for &e in g.server_nbrs(u.index()) {
            if core.binary_search(&e).is_err() {
                ops.push(TransformOp::EdgeSimplify { d: e, u, v_new: Some(ServerId(next)) });
                next += 1;
            }
        }
    }
    let mut boundary = Vec::with_capacity(core.len());
    for &d in &core {
        let mut b: Vec<ServerId> = g.nbrs(d.index()).iter().copied().filter(|u| !centers.contains(u)).collect();
        while b.len() + c < a {
            ops.push(TransformOp::AddServer { d, mu, u_new: Some(ServerId(next)) });
            b.push(ServerId(next));
            next += 1;
        }
        boundary.push(b);
    }

    let (transformed, _) = apply_all(g, &ops)?;
    let component = DandelionComponent { centers, dispatchers: core, boundary, a, lambda, mu };
    component.verify(&transformed).map_err(|e| Error::domain(e.to_string()))?;
    Ok(LowerBound { trivial: false, ops, transformed, component })
}
