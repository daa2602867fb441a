use std::path::PathBuf;

use clap::Args;
use serde_json::json;
use skewnet::experiment::{write_server_rows, RunRow, Sidecar};
use skewnet::sim::{simulate, Policy, QueueState, SimConfig};
use skewnet::{CompatGraph, Result};

use crate::output::{emit_json, emit_with_sidecar};
use crate::params::list;

/// Run-length flags shared by `simulate` and `sweep`.
#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// `jsq` or `pod:<d>`.
    #[arg(long, default_value = "jsq")]
    pub policy: Policy,
    #[arg(long, default_value_t = 1e4)]
    pub horizon: f64,
    /// Leading fraction of the horizon left out of the averages.
    #[arg(long, default_value_t = 0.25)]
    pub warmup: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "1,5,10")]
    pub tail_k: String,
    #[arg(long)]
    pub max_events: Option<u64>,
    #[arg(long, default_value_t = 20)]
    pub batches: usize,
}

impl RunArgs {
    pub fn config(&self) -> Result<SimConfig> {
        let cfg = SimConfig {
            horizon: self.horizon,
            max_events: self.max_events,
            warmup_fraction: self.warmup,
            seed: self.seed,
            tail_ks: list("--tail-k", &self.tail_k)?,
            batches: self.batches,
            trace_interval: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(short = 'g', long)]
    pub graph: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
    /// Per-server CSV; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Full metrics, including group statistics, as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

pub fn run(args: SimulateArgs) -> Result<i32> {
    let g = CompatGraph::load(&args.graph)?;
    let cfg = args.run.config()?;
    let m = simulate(&g, args.run.policy, &QueueState::empty(g.num_servers()), &cfg)?;
    let row = RunRow {
        run_id: 0,
        params: vec![("seed".into(), cfg.seed.to_string()), ("policy".into(), args.run.policy.to_string())],
        graph: &g,
        metrics: &m,
    };
    let mut bytes = Vec::new();
    write_server_rows(&mut bytes, &[row])?;
    let config = json!({ "graph": args.graph, "provenance": g.provenance(), "sim": cfg });
    let sidecar = Sidecar::new("simulate", cfg.seed, Some(args.run.policy.to_string()), config)?;
    emit_with_sidecar(args.output.as_deref(), &bytes, &sidecar)?;
    if let Some(path) = &args.json {
        emit_json(Some(path), &m)?;
    }
    if m.partial {
        eprintln!("warning: event cap reached at t = {}; metrics cover a partial run", m.sim_time);
    }
    Ok(0)
}
