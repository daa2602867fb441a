use std::fs;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use skewnet::coupling::{coupled_simulate, CouplingConfig, TransformOp, Violation};
use skewnet::sim::QueueState;
use skewnet::{CompatGraph, Error, Result};

use crate::output::emit_json;

#[derive(Args, Debug)]
pub struct CoupleArgs {
    #[arg(short = 'g', long)]
    pub graph: PathBuf,
    /// JSON array of tagged transform records, applied in order.
    #[arg(long)]
    pub ops: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub events: u64,
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    /// First seed; run `i` uses `seed + i`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Serialize)]
struct SeedSummary {
    seed: u64,
    events: u64,
    sim_time: f64,
    violations: u64,
    arrivals1: u64,
    arrivals2: u64,
    first_violation: Option<Violation>,
}

#[derive(Serialize)]
struct CoupleReport {
    violations: u64,
    events: u64,
    ops: usize,
    source_servers: usize,
    transformed_servers: usize,
    seeds: Vec<SeedSummary>,
}

pub fn run(args: CoupleArgs) -> Result<i32> {
    let g = CompatGraph::load(&args.graph)?;
    let text = fs::read_to_string(&args.ops)?;
    let ops: Vec<TransformOp> =
        serde_json::from_str(&text).map_err(|e| Error::Domain(format!("{}: {e}", args.ops.display())))?;
    if args.seeds == 0 {
        return Err(Error::Domain("--seeds: must be at least 1".into()));
    }
    let x0 = QueueState::empty(g.num_servers());
    let mut seeds = Vec::new();
    let mut transformed_servers = 0;
    for i in 0..args.seeds {
        let seed = args.seed.wrapping_add(i);
        let cfg = CouplingConfig { events: args.events, seed, tail_ks: Vec::new() };
        let run = coupled_simulate(&g, &ops, &x0, &cfg)?;
        transformed_servers = run.transformed.num_servers();
        let r = run.report;
        seeds.push(SeedSummary {
            seed,
            events: r.events,
            sim_time: r.sim_time,
            violations: r.violations,
            arrivals1: r.arrivals1.iter().sum(),
            arrivals2: r.arrivals2.iter().sum(),
            first_violation: r.first_violation,
        });
    }
    let report = CoupleReport {
        violations: seeds.iter().map(|s| s.violations).sum(),
        events: seeds.iter().map(|s| s.events).sum(),
        ops: ops.len(),
        source_servers: g.num_servers(),
        transformed_servers,
        seeds,
    };
    emit_json(args.output.as_deref(), &report)?;
    if report.violations > 0 {
        eprintln!("error: dominance violated in {} run(s)", report.seeds.iter().filter(|s| s.violations > 0).count());
        return Ok(3);
    }
    Ok(0)
}
