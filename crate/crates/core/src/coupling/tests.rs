use super::*;
use crate::generators::{dandelion, DandelionSpec};
use crate::graph::SkewParams;
use crate::stats::chi_squared_uniform_p;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn s(ids: &[u32]) -> Vec<ServerId> {
    ids.iter().map(|&i| ServerId(i)).collect()
}

fn pair() -> CompatGraph {
    CompatGraph::builder(1, 2).edges([(0, 0), (0, 1)]).arrival(0, 1.5).service(0, 1.0).service(1, 0.8).build().unwrap()
}

fn cfg(events: u64, seed: u64) -> CouplingConfig {
    CouplingConfig { events, seed, tail_ks: vec![1] }
}

fn empty(g: &CompatGraph) -> QueueState {
    QueueState::empty(g.num_servers())
}

#[test]
fn edge_simplify_moves_the_edge_and_shares_the_clock() {
    let g = pair();
    let op = TransformOp::EdgeSimplify { d: DispatcherId(0), u: ServerId(0), v_new: Some(ServerId(2)) };
    let (h, map) = apply_transform(&g, &op).unwrap();
    assert_eq!(h.neighborhood_of_dispatcher(DispatcherId(0)).unwrap(), s(&[1, 2]).as_slice());
    assert_eq!(h.block_of(ServerId(0)), h.block_of(ServerId(2)));
    assert_eq!(h.service_rate(ServerId(2)), 1.0);
    assert_eq!(&h.service_rates()[..2], g.service_rates());
    assert_eq!(h.arrival_rates(), g.arrival_rates());
    assert_eq!(map.servers, s(&[0, 1]));
    assert_eq!(map.phi_of(DispatcherId(0), ServerId(0)), Some(ServerId(2)));
    assert_eq!(map.phi_of(DispatcherId(0), ServerId(1)), Some(ServerId(1)));
}

#[test]
fn unchanged_arrival_rate_is_identity() {
    let g = pair();
    let (h, map) = apply_transform(&g, &TransformOp::DecreaseArrival { d: DispatcherId(0), lambda: 1.5 }).unwrap();
    assert_eq!(h, g);
    assert_eq!(map, ServerMap::identity(&g));
}

#[test]
fn increase_service_raises_whole_block() {
    let g = CompatGraph::builder(1, 3)
        .edges([(0, 0), (0, 1), (0, 2)])
        .partition(vec![s(&[0, 2]), s(&[1])])
        .build()
        .unwrap();
    let (h, _) = apply_transform(&g, &TransformOp::IncreaseService { u: ServerId(2), mu: 3.0 }).unwrap();
    assert_eq!(h.service_rates(), &[3.0, 1.0, 3.0]);
}

#[test]
fn invalid_ops_are_domain_errors() {
    let g = pair();
    let bad = [
        TransformOp::EdgeSimplify { d: DispatcherId(0), u: ServerId(5), v_new: None },
        TransformOp::EdgeSimplify { d: DispatcherId(0), u: ServerId(0), v_new: Some(ServerId(7)) },
        TransformOp::AddServer { d: DispatcherId(1), mu: 1.0, u_new: None },
        TransformOp::AddServer { d: DispatcherId(0), mu: 0.0, u_new: None },
        TransformOp::DecreaseArrival { d: DispatcherId(0), lambda: 2.0 },
        TransformOp::DecreaseArrival { d: DispatcherId(0), lambda: 0.0 },
        TransformOp::IncreaseService { u: ServerId(1), mu: 0.5 },
    ];
    for op in bad {
        assert!(matches!(apply_transform(&g, &op), Err(Error::Domain(_))), "{op:?}");
    }
}

#[test]
fn ops_round_trip_as_tagged_json() {
    let ops = vec![
        TransformOp::EdgeSimplify { d: DispatcherId(0), u: ServerId(1), v_new: None },
        TransformOp::AddServer { d: DispatcherId(2), mu: 1.5, u_new: Some(ServerId(9)) },
    ];
    let text = serde_json::to_string(&ops).unwrap();
    assert_eq!(text, r#"[{"op":"edge_simplify","d":0,"u":1},{"op":"add_server","d":2,"mu":1.5,"u_new":9}]"#);
    assert_eq!(serde_json::from_str::<Vec<TransformOp>>(&text).unwrap(), ops);
}

#[test]
fn forced_choice() {
    let (u1, u2) = joint_dispatch(&s(&[0, 1]), &[0, 3], &s(&[0, 2]), &[0, 0, 1], &s(&[0, 2]), (0.9, 0.9)).unwrap();
    assert_eq!((u1, u2), (ServerId(0), ServerId(0)));
}

#[test]
fn precondition_violation_is_integrity_error() {
    let r = joint_dispatch(&s(&[0]), &[0], &s(&[0]), &[1], &s(&[0]), (0.1, 0.1));
    assert!(matches!(r, Err(Error::CouplingIntegrity(_))));
    let r = joint_dispatch(&s(&[0]), &[1], &s(&[1]), &[0, 0], &s(&[0]), (0.1, 0.1));
    assert!(matches!(r, Err(Error::CouplingIntegrity(_))));
}

/// Draws `n` joint placements and returns the per-server counts of each side.
fn marginals(n1: &[ServerId], x1: &[u32], n2: &[ServerId], x2: &[u32], phi: &[ServerId], draws: usize) -> (Vec<u64>, Vec<u64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (mut c1, mut c2) = (vec![0u64; x1.len()], vec![0u64; x2.len()]);
    for _ in 0..draws {
        let (u1, u2) = joint_dispatch(n1, x1, n2, x2, phi, (rng.random(), rng.random())).unwrap();
        c1[u1.index()] += 1;
        c2[u2.index()] += 1;
    }
    (c1, c2)
}

fn on(counts: &[u64], set: &[u32]) -> Vec<u64> {
    assert_eq!(counts.iter().sum::<u64>(), set.iter().map(|&i| counts[i as usize]).sum::<u64>());
    set.iter().map(|&i| counts[i as usize]).collect()
}

#[test]
fn marginals_uniform_equal_minima_matched() {
    // phi(M1) = M2
    let (c1, c2) = marginals(&s(&[0, 1, 2]), &[1, 1, 2], &s(&[0, 1, 2]), &[1, 1, 2], &s(&[1, 0, 2]), 100_000);
    assert!(chi_squared_uniform_p(&on(&c1, &[0, 1])) > 1e-3);
    assert!(chi_squared_uniform_p(&on(&c2, &[0, 1])) > 1e-3);
}

#[test]
fn marginals_uniform_equal_minima_fallback() {
    // M2 holds servers outside phi(M1), so the second draw is used
    let (c1, c2) = marginals(&s(&[0, 1, 2]), &[0, 0, 3], &s(&[0, 1, 2, 3, 4]), &[0, 0, 2, 0, 0], &s(&[0, 1, 2]), 100_000);
    assert!(chi_squared_uniform_p(&on(&c1, &[0, 1])) > 1e-3);
    assert!(chi_squared_uniform_p(&on(&c2, &[0, 1, 3, 4])) > 1e-3);
}

#[test]
fn marginals_uniform_strict_minima() {
    let (c1, c2) = marginals(&s(&[0, 1, 2]), &[2, 2, 2], &s(&[0, 1, 2, 3]), &[1, 2, 1, 1], &s(&[0, 1, 2]), 100_000);
    assert!(chi_squared_uniform_p(&on(&c1, &[0, 1, 2])) > 1e-3);
    assert!(chi_squared_uniform_p(&on(&c2, &[0, 2, 3])) > 1e-3);
}

#[test]
fn empty_pipeline_gives_identical_paths() {
    let g = dandelion(&DandelionSpec::new(3, 2, 1, 1.5, 1.0)).unwrap();
    let run = coupled_simulate(&g, &[], &empty(&g), &cfg(10_000, 4)).unwrap();
    assert_eq!(run.report.violations, 0);
    assert_eq!(run.metrics1.mean_queue, run.metrics2.mean_queue);
    assert_eq!(run.metrics1.final_state, run.metrics2.final_state);
    assert_eq!(run.report.arrivals1, run.report.arrivals2);
}

#[test]
fn single_edge_simplify_dominates() {
    let g = pair();
    let ops = [TransformOp::EdgeSimplify { d: DispatcherId(0), u: ServerId(0), v_new: None }];
    for seed in 0..10 {
        let run = coupled_simulate(&g, &ops, &empty(&g), &cfg(10_000, seed)).unwrap();
        assert_eq!(run.report.violations, 0, "{:?}", run.report.first_violation);
        assert_eq!(run.report.events, 10_000);
        // time-averaged consequence of X1(u) >= X2(v)
        assert!(run.metrics1.mean_queue[0] >= run.metrics2.mean_queue[2]);
    }
}

#[test]
fn mixed_pipeline_dominates() {
    let g = dandelion(&DandelionSpec::new(3, 2, 1, 1.5, 1.0)).unwrap();
    let ops = [
        TransformOp::DecreaseArrival { d: DispatcherId(1), lambda: 1.0 },
        TransformOp::AddServer { d: DispatcherId(0), mu: 0.5, u_new: None },
        TransformOp::IncreaseService { u: ServerId(0), mu: 1.4 },
        TransformOp::EdgeSimplify { d: DispatcherId(2), u: ServerId(0), v_new: None },
    ];
    for seed in 0..20 {
        let run = coupled_simulate(&g, &ops, &empty(&g), &cfg(10_000, seed)).unwrap();
        assert_eq!(run.report.violations, 0, "{:?}", run.report.first_violation);
    }
}

#[test]
fn thinned_arrivals_have_target_rate() {
    let g = pair();
    let ops = [TransformOp::DecreaseArrival { d: DispatcherId(0), lambda: 0.6 }];
    let run = coupled_simulate(&g, &ops, &empty(&g), &cfg(200_000, 8)).unwrap();
    let t = run.report.sim_time;
    let expected = 0.6 * t;
    let got = run.report.arrivals2[0] as f64;
    assert!((got - expected).abs() < 3.0 * expected.sqrt(), "{got} vs {expected}");
}

#[test]
fn initial_state_must_cover_source() {
    let g = pair();
    assert!(coupled_simulate(&g, &[], &QueueState::empty(3), &cfg(10, 0)).is_err());
}

/// Five dispatchers sharing `s0`, each with two private servers, plus one
/// heavy outside dispatcher touching the center and two private servers.
fn five_core() -> CompatGraph {
    let mut b = CompatGraph::builder(6, 15);
    for k in 0..5u32 {
        b = b.edges([(k, 0), (k, 1 + 2 * k), (k, 2 + 2 * k)]).arrival(k, 1.0 + 0.1 * k as f64);
    }
    b = b.edges([(5, 0), (5, 1), (5, 3), (5, 11), (5, 12), (5, 13), (5, 14)]).arrival(5, 2.0);
    for u in 1..=10 {
        b = b.service(u, 0.8);
    }
    b.build().unwrap()
}

fn five_alpha() -> SkewParams {
    SkewParams::new(4, 1.0, 1.0).unwrap()
}

fn core_ids() -> Vec<DispatcherId> {
    (0..5).map(DispatcherId).collect()
}

#[test]
fn five_dispatcher_core_reduces_to_dandelion() {
    let g = five_core();
    let lb = build_dandelion_lower_bound(&g, &s(&[0]), &core_ids(), &five_alpha(), LowerBoundRates::default()).unwrap();
    assert!(!lb.trivial);
    let count = |f: fn(&TransformOp) -> bool| lb.ops.iter().filter(|o| f(o)).count();
    assert_eq!(count(|o| matches!(o, TransformOp::DecreaseArrival { .. })), 5);
    assert_eq!(count(|o| matches!(o, TransformOp::IncreaseService { .. })), 11);
    assert_eq!(count(|o| matches!(o, TransformOp::EdgeSimplify { .. })), 3);
    assert_eq!(count(|o| matches!(o, TransformOp::AddServer { .. })), 5);
    let comp = &lb.component;
    assert_eq!(comp.dispatchers.len(), 5);
    let spec = comp.spec();
    assert_eq!((spec.n, spec.b, spec.c), (5, 3, 1));
    assert!((comp.lambda - 0.99).abs() < 1e-15 && (comp.mu - 1.01).abs() < 1e-15);
    let extracted = comp.extract(&lb.transformed).unwrap();
    let reference = dandelion(&spec).unwrap();
    assert_eq!(extracted.edge_list(), reference.edge_list());
    assert_eq!(extracted.arrival_rates(), reference.arrival_rates());
    assert_eq!(extracted.service_rates(), reference.service_rates());
}

#[test]
fn lower_bound_pipeline_dominates() {
    let g = five_core();
    let lb = build_dandelion_lower_bound(&g, &s(&[0]), &core_ids(), &five_alpha(), LowerBoundRates::default()).unwrap();
    for seed in 0..10 {
        let run = coupled_simulate(&g, &lb.ops, &empty(&g), &cfg(10_000, seed)).unwrap();
        assert_eq!(run.report.violations, 0, "{:?}", run.report.first_violation);
        assert_eq!(run.transformed, lb.transformed);
    }
}

#[test]
fn dandelion_is_a_fixed_point() {
    let spec = DandelionSpec::new(4, 2, 2, 1.2, 1.0);
    let g = dandelion(&spec).unwrap();
    let alpha = SkewParams::new(4, 1.2, 1.0).unwrap();
    let rates = LowerBoundRates { lambda: Some(1.2), mu: Some(1.0) };
    let core: Vec<DispatcherId> = g.dispatchers().collect();
    let lb = build_dandelion_lower_bound(&g, &spec.central().collect::<Vec<_>>(), &core, &alpha, rates).unwrap();
    assert!(lb
        .ops
        .iter()
        .all(|o| matches!(o, TransformOp::DecreaseArrival { .. } | TransformOp::IncreaseService { .. })));
    assert_eq!(lb.transformed, g);
    assert_eq!(lb.component.spec(), spec);
}

#[test]
fn full_center_is_trivial() {
    let g = CompatGraph::builder(3, 2).edges((0..3).flat_map(|d| [(d, 0), (d, 1)])).build().unwrap();
    let alpha = SkewParams::new(2, 1.0, 1.0).unwrap();
    let core: Vec<DispatcherId> = g.dispatchers().collect();
    let lb = build_dandelion_lower_bound(&g, &s(&[0, 1]), &core, &alpha, LowerBoundRates::default()).unwrap();
    assert!(lb.trivial && lb.ops.is_empty());
}

#[test]
fn shared_private_server_is_rejected() {
    let g = five_core().to_builder().edge(0, 3).build().unwrap();
    let alpha = SkewParams::new(4, 1.0, 1.0).unwrap();
    let r = build_dandelion_lower_bound(&g, &s(&[0]), &core_ids(), &alpha, LowerBoundRates::default());
    assert!(matches!(r, Err(Error::Domain(_))), "{r:?}");
}

#[test]
fn rate_overrides_are_checked() {
    let g = five_core();
    let bad = [
        LowerBoundRates { lambda: Some(1.1), mu: None },
        LowerBoundRates { lambda: None, mu: Some(0.9) },
        LowerBoundRates { lambda: Some(0.9), mu: Some(0.2) },
    ];
    for rates in bad {
        assert!(build_dandelion_lower_bound(&g, &s(&[0]), &core_ids(), &five_alpha(), rates).is_err(), "{rates:?}");
    }
}

fn arb_graph() -> impl Strategy<Value = CompatGraph> {
    (1usize..4, 1usize..5).prop_flat_map(|(nd, ns)| {
        (
            proptest::collection::vec(proptest::collection::vec(any::<bool>(), ns), nd),
            proptest::collection::vec(0.2f64..2.0, nd),
            proptest::collection::vec(0.5f64..1.5, ns),
            any::<bool>(),
        )
            .prop_map(move |(adj, lam, mut mu, share)| {
                let mut edges = Vec::new();
                for (d, row) in adj.iter().enumerate() {
                    for (u, &e) in row.iter().enumerate() {
                        if e || u == d % ns {
                            edges.push((d as u32, u as u32));
                        }
                    }
                }
                let mut b = CompatGraph::builder(nd, ns).edges(edges).arrival_rates(lam);
                if share && ns >= 2 {
                    mu[1] = mu[0];
                    let mut blocks = vec![vec![ServerId(0), ServerId(1)]];
                    blocks.extend((2..ns as u32).map(|u| vec![ServerId(u)]));
                    b = b.partition(blocks);
                }
                b.service_rates(mu).build().unwrap()
            })
    })
}

/// Turns raw draws into ops that are valid along the pipeline.
fn realize(g: &CompatGraph, raw: &[(u8, u32, u32, f64)]) -> Vec<TransformOp> {
    let mut cur = g.clone();
    let mut ops = Vec::new();
    for &(kind, i, j, f) in raw {
        let d = DispatcherId(i % cur.num_dispatchers() as u32);
        let nbrs = cur.neighborhood_of_dispatcher(d).unwrap();
        let u = nbrs[j as usize % nbrs.len()];
        let op = match kind % 4 {
            0 => TransformOp::EdgeSimplify { d, u, v_new: None },
            1 => TransformOp::AddServer { d, mu: 0.3 + f, u_new: None },
            2 => TransformOp::DecreaseArrival { d, lambda: cur.arrival_rate(d) * (0.1 + 0.9 * f) },
            _ => TransformOp::IncreaseService { u, mu: cur.service_rate(u) * (1.0 + f) },
        };
        cur = apply_transform(&cur, &op).unwrap().0;
        ops.push(op);
    }
    ops
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn random_pipelines_never_violate_dominance(
        g in arb_graph(),
        raw in proptest::collection::vec((any::<u8>(), any::<u32>(), any::<u32>(), 0.0f64..1.0), 0..6),
        seed in any::<u64>(),
    ) {
        let ops = realize(&g, &raw);
        let run = coupled_simulate(&g, &ops, &empty(&g), &cfg(3_000, seed)).unwrap();
        prop_assert_eq!(run.report.violations, 0, "{:?}", run.report.first_violation);
        for (w, img) in run.map.servers.iter().enumerate() {
            prop_assert!(run.metrics1.final_state.occupancy[w] >= run.metrics2.final_state.occupancy[img.index()]);
        }
    }

    #[test]
    fn edge_simplify_keeps_original_rates(g in arb_graph(), i in any::<u32>(), j in any::<u32>()) {
        let d = DispatcherId(i % g.num_dispatchers() as u32);
        let nbrs = g.neighborhood_of_dispatcher(d).unwrap();
        let u = nbrs[j as usize % nbrs.len()];
        let (h, _) = apply_transform(&g, &TransformOp::EdgeSimplify { d, u, v_new: None }).unwrap();
        prop_assert_eq!(h.arrival_rates(), g.arrival_rates());
        prop_assert_eq!(&h.service_rates()[..g.num_servers()], g.service_rates());
        let cap1: f64 = g.service_rates().iter().sum();
        let cap2: f64 = h.service_rates()[..g.num_servers()].iter().sum();
        prop_assert_eq!(cap1, cap2);
    }

    #[test]
    fn placement_preserves_dominance(
        x1 in proptest::collection::vec(0u32..4, 4),
        dx in proptest::collection::vec(0u32..4, 4),
        extra in 0u32..3,
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
    ) {
        // x2 sits below x1 on the images, plus one new server
        let mut x2: Vec<u32> = x1.iter().zip(&dx).map(|(&v, &d)| v.saturating_sub(d)).collect();
        x2.push(extra.min(*x1.iter().min().unwrap()));
        let n1 = s(&[0, 1, 2, 3]);
        let n2 = s(&[0, 1, 2, 3, 4]);
        let phi = s(&[1, 0, 2, 3]);
        let x2: Vec<u32> = vec![x2[1], x2[0], x2[2], x2[3], x2[4]];
        let (u1, u2) = joint_dispatch(&n1, &x1, &n2, &x2, &phi, (a, b)).unwrap();
        prop_assert!(n1.contains(&u1) && n2.contains(&u2));
    }
}
