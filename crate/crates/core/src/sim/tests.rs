use super::*;
use crate::generators::{dandelion, DandelionSpec};
use crate::stats::{sigma_interval, t_interval};
use proptest::prelude::*;

fn mm1(lambda: f64, mu: f64) -> CompatGraph {
    CompatGraph::builder(1, 1).edge(0, 0).arrival(0, lambda).service(0, mu).build().unwrap()
}

fn run(g: &CompatGraph, policy: Policy, cfg: &SimConfig) -> OccupancyMetrics {
    simulate(g, policy, &QueueState::empty(g.num_servers()), cfg).unwrap()
}

#[test]
fn policy_strings() {
    assert_eq!("jsq".parse::<Policy>().unwrap(), Policy::Jsq);
    assert_eq!("pod:2".parse::<Policy>().unwrap(), Policy::PowerOfD(2));
    assert_eq!(Policy::PowerOfD(3).to_string(), "pod:3");
    assert!("pod:0".parse::<Policy>().is_err());
    assert!("random".parse::<Policy>().is_err());
}

#[test]
fn mm1_mean_queue() {
    let cfg = SimConfig { horizon: 4e4, seed: 3, ..SimConfig::default() };
    let m = run(&mm1(0.5, 1.0), Policy::Jsq, &cfg);
    let ci = sigma_interval(&m.batch_mean_queue[0], 3.0);
    assert!(ci.contains(1.0), "{ci:?}");
    // P(X >= k) = rho^k
    let t5 = m.tail[0][1];
    assert!((t5 - 0.5f64.powi(5)).abs() < 0.01, "{t5}");
}

#[test]
fn no_arrivals_no_tasks() {
    let g = dandelion(&DandelionSpec::new(3, 2, 1, 0.0, 1.0)).unwrap();
    for policy in [Policy::Jsq, Policy::PowerOfD(2)] {
        let m = run(&g, policy, &SimConfig::with_horizon(100.0));
        assert!(m.mean_queue.iter().all(|&q| q == 0.0));
        assert!(m.tail.iter().flatten().all(|&p| p == 0.0));
        assert_eq!(m.arrivals, 0);
    }
}

#[test]
fn identical_inputs_identical_metrics() {
    let g = dandelion(&DandelionSpec::new(4, 3, 4, 2.85, 1.0)).unwrap();
    let cfg = SimConfig { horizon: 500.0, seed: 9, trace_interval: Some(10.0), ..SimConfig::default() };
    let a = run(&g, Policy::Jsq, &cfg);
    let b = run(&g, Policy::Jsq, &cfg);
    assert_eq!(a, b);
    let c = run(&g, Policy::Jsq, &cfg.clone().seed(10));
    assert_ne!(a.mean_queue, c.mean_queue);
}

#[test]
fn event_cap_flags_partial() {
    let cfg = SimConfig { horizon: 1e6, max_events: Some(1000), ..SimConfig::default() };
    let m = run(&mm1(0.5, 1.0), Policy::Jsq, &cfg);
    assert!(m.partial);
    assert_eq!(m.events, 1000);
    assert!(m.sim_time < 1e6);
    let full = run(&mm1(0.5, 1.0), Policy::Jsq, &SimConfig::with_horizon(10.0));
    assert!(!full.partial);
}

#[test]
fn invalid_configs() {
    let g = mm1(0.5, 1.0);
    let x0 = QueueState::empty(1);
    assert!(simulate(&g, Policy::Jsq, &x0, &SimConfig::with_horizon(0.0)).is_err());
    let bad_ks = SimConfig { tail_ks: vec![5, 1], ..SimConfig::default() };
    assert!(simulate(&g, Policy::Jsq, &x0, &bad_ks).is_err());
    assert!(simulate(&g, Policy::Jsq, &QueueState::empty(2), &SimConfig::default()).is_err());
}

#[derive(Default)]
struct Audit {
    x: Vec<u32>,
    bad_placements: usize,
    ticks: Vec<Vec<f64>>,
}

impl Observer for Audit {
    fn arrival(&mut self, _t: f64, _d: DispatcherId, candidates: &[ServerId], chosen: ServerId, state: &[u32]) {
        let min = candidates.iter().map(|u| state[u.index()]).min().unwrap();
        if !candidates.contains(&chosen) || state[chosen.index()] != min {
            self.bad_placements += 1;
        }
        self.x[chosen.index()] += 1;
    }

    fn departure_tick(&mut self, t: f64, _block: usize, servers: &[ServerId]) {
        for u in servers {
            self.ticks[u.index()].push(t);
            self.x[u.index()] = self.x[u.index()].saturating_sub(1);
        }
    }
}

#[test]
fn placements_and_shared_clocks() {
    let g = CompatGraph::builder(2, 4)
        .edges([(0, 0), (0, 1), (0, 2), (1, 2), (1, 3)])
        .arrival_rates(vec![1.5, 1.0])
        .service_rates(vec![1.0, 1.0, 2.0, 2.0])
        .partition(vec![vec![ServerId(0), ServerId(1)], vec![ServerId(2), ServerId(3)]])
        .build()
        .unwrap();
    for policy in [Policy::Jsq, Policy::PowerOfD(2)] {
        let mut audit = Audit { x: vec![0; 4], ticks: vec![Vec::new(); 4], ..Audit::default() };
        let m = simulate_observed(&g, policy, &QueueState::empty(4), &SimConfig::with_horizon(2000.0), &mut audit).unwrap();
        assert_eq!(audit.bad_placements, 0);
        assert_eq!(audit.ticks[0], audit.ticks[1]);
        assert_eq!(audit.ticks[2], audit.ticks[3]);
        assert!(!audit.ticks[0].is_empty());
        assert_eq!(audit.x, m.final_state.occupancy);
    }
}

#[test]
fn power_of_d_samples_are_subsets_of_size_d() {
    struct Sizes(Vec<usize>);
    impl Observer for Sizes {
        fn arrival(&mut self, _: f64, _: DispatcherId, c: &[ServerId], _: ServerId, _: &[u32]) {
            self.0.push(c.len());
        }
    }
    let g = dandelion(&DandelionSpec::new(2, 3, 4, 2.0, 1.0)).unwrap();
    let mut sizes = Sizes(Vec::new());
    simulate_observed(&g, Policy::PowerOfD(2), &QueueState::empty(g.num_servers()), &SimConfig::with_horizon(50.0), &mut sizes).unwrap();
    assert!(sizes.0.iter().all(|&s| s == 2));
    let mut sizes = Sizes(Vec::new());
    simulate_observed(&g, Policy::PowerOfD(50), &QueueState::empty(g.num_servers()), &SimConfig::with_horizon(50.0), &mut sizes).unwrap();
    assert!(sizes.0.iter().all(|&s| s == 7));
}

#[test]
fn sweep_matches_single_runs() {
    let cfg = SimConfig { horizon: 200.0, seed: 4, ..SimConfig::default() };
    let ns = [2usize, 4];
    let build = |n: &usize| dandelion(&DandelionSpec::new(*n, 3, 4, 2.85, 1.0));
    let out = sweep(&ns, build, Policy::Jsq, &cfg, 2).unwrap();
    for (i, n) in ns.iter().enumerate() {
        let single = run(&build(n).unwrap(), Policy::Jsq, &cfg.clone().seed(4 + i as u64));
        assert_eq!(out[i], single);
    }
    assert!(sweep::<usize, _>(&[], build, Policy::Jsq, &cfg, 0).is_err());
}

#[test]
fn disjoint_seed_batches_agree() {
    let g = dandelion(&DandelionSpec::new(4, 2, 1, 1.5, 1.0)).unwrap();
    let cfg = SimConfig { horizon: 4000.0, ..SimConfig::default() };
    let a = replicate(&g, Policy::Jsq, &cfg.clone().seed(0), 10, 0).unwrap();
    let b = replicate(&g, Policy::Jsq, &cfg.clone().seed(1000), 10, 0).unwrap();
    for k in 0..cfg.tail_ks.len() {
        for u in 0..g.num_servers() {
            let ea = t_interval(&a.iter().map(|m| m.tail[u][k]).collect::<Vec<_>>(), 0.999);
            let eb = t_interval(&b.iter().map(|m| m.tail[u][k]).collect::<Vec<_>>(), 0.999);
            assert!(ea.overlaps(&eb), "server {u}, k index {k}: {ea:?} vs {eb:?}");
        }
    }
}

/// Replays a run through the observer hooks and integrates the state
/// directly, as an oracle for the lazy accounting.
struct Replay {
    x: Vec<u32>,
    last: f64,
    start: f64,
    area: Vec<f64>,
    min_area: f64,
    groups: Vec<Vec<usize>>,
    group_min_area: Vec<f64>,
    arrivals: u64,
    departures: u64,
}

impl Replay {
    fn step(&mut self, t: f64) {
        let t0 = self.last.max(self.start);
        if t > t0 {
            for (u, &x) in self.x.iter().enumerate() {
                self.area[u] += (t - t0) * x as f64;
            }
            self.min_area += (t - t0) * *self.x.iter().min().unwrap() as f64;
            for (gi, members) in self.groups.iter().enumerate() {
                let m = members.iter().map(|&u| self.x[u]).min().unwrap();
                self.group_min_area[gi] += (t - t0) * m as f64;
            }
        }
        self.last = t;
    }
}

impl Observer for Replay {
    fn arrival(&mut self, t: f64, _: DispatcherId, _: &[ServerId], chosen: ServerId, _: &[u32]) {
        self.step(t);
        self.x[chosen.index()] += 1;
        self.arrivals += 1;
    }

    fn departure_tick(&mut self, t: f64, _: usize, servers: &[ServerId]) {
        self.step(t);
        for u in servers {
            if self.x[u.index()] > 0 {
                self.x[u.index()] -= 1;
                self.departures += 1;
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn lazy_accounting_matches_replay(n in 1usize..5, b in 1usize..4, c in 0usize..3, lam in 0.2f64..3.0, seed in any::<u64>(), init in 0u32..4, warm in 0.0f64..0.9) {
        let g = dandelion(&DandelionSpec::new(n, b, c, lam, 1.0)).unwrap();
        let ns = g.num_servers();
        let x0 = QueueState { occupancy: (0..ns as u32).map(|u| (u * 7 + init) % 4).collect() };
        let cfg = SimConfig { horizon: 60.0, warmup_fraction: warm, seed, batches: 4, ..SimConfig::default() };
        let names = g.group_names();
        let groups: Vec<Vec<usize>> = names.iter().map(|l| g.servers_in_group(l).map(|u| u.index()).collect()).collect();
        let mut replay = Replay {
            x: x0.occupancy.clone(), last: 0.0, start: cfg.warmup_end(), area: vec![0.0; ns], min_area: 0.0,
            group_min_area: vec![0.0; groups.len()], groups, arrivals: 0, departures: 0,
        };
        let m = simulate_observed(&g, Policy::Jsq, &x0, &cfg, &mut replay).unwrap();
        replay.step(cfg.horizon);
        let len = cfg.horizon - cfg.warmup_end();
        for u in 0..ns {
            prop_assert!((m.mean_queue[u] - replay.area[u] / len).abs() < 1e-9);
            let batch_avg: f64 = m.batch_mean_queue[u].iter().sum::<f64>() / 4.0;
            prop_assert!((batch_avg - m.mean_queue[u]).abs() < 1e-9);
            for w in m.tail[u].windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
            prop_assert!(m.tail[u].iter().all(|&p| (0.0..=1.0 + 1e-12).contains(&p)));
        }
        for (gi, name) in names.iter().enumerate() {
            let gm = m.group(name).unwrap();
            prop_assert!((gm.instant_min - replay.group_min_area[gi] / len).abs() < 1e-9);
            prop_assert!(gm.instant_min <= gm.min_of_means + 1e-9);
            prop_assert!(gm.instant_max + 1e-9 >= gm.max_of_means);
        }
        // conservation on the path
        prop_assert_eq!(m.arrivals, replay.arrivals);
        prop_assert_eq!(m.departures, replay.departures);
        prop_assert_eq!(m.arrivals as i64 - m.departures as i64, m.final_state.total() as i64 - x0.total() as i64);
    }
}
