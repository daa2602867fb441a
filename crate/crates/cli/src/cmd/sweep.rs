use std::path::PathBuf;

use clap::Args;
use serde_json::json;
use skewnet::experiment::{write_server_rows, RunRow, Sidecar};
use skewnet::sim::sweep;
use skewnet::{CompatGraph, Error, Result};

use super::generate::{build, Family};
use super::simulate::RunArgs;
use crate::output::emit_with_sidecar;
use crate::params::Params;

#[derive(Args, Debug)]
pub struct SweepArgs {
    pub family: Family,
    /// Fixed generator parameters as `key=value,...`.
    #[arg(long, default_value = "")]
    pub params: String,
    /// Swept parameter as `key=v1,v2,...`.
    #[arg(long)]
    pub vary: String,
    #[arg(long, default_value_t = 1)]
    pub replicas: usize,
    /// Seed of the random graph families; defaults to `--seed`.
    #[arg(long)]
    pub graph_seed: Option<u64>,
    /// Source graph for the transforming families.
    #[arg(short = 'g', long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

pub fn run(args: SweepArgs) -> Result<i32> {
    let (key, values) = args
        .vary
        .split_once('=')
        .ok_or_else(|| Error::Domain("--vary: expected key=v1,v2,...".into()))?;
    let values: Vec<String> = values.split(',').map(|v| v.trim().to_owned()).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(Error::Domain("--vary: no values".into()));
    }
    if args.replicas == 0 {
        return Err(Error::Domain("--replicas: must be at least 1".into()));
    }
    let cfg = args.run.config()?;
    let graph_seed = args.graph_seed.unwrap_or(cfg.seed);
    let base = Params::parse(&args.params)?;
    let graphs: Vec<CompatGraph> = values
        .iter()
        .map(|v| {
            let mut p = base.clone();
            p.set(key, v.clone());
            build(args.family, &mut p, graph_seed, args.input.as_ref())
        })
        .collect::<Result<_>>()?;
    let points: Vec<(usize, usize)> =
        (0..values.len()).flat_map(|i| (0..args.replicas).map(move |r| (i, r))).collect();
    let metrics = sweep(&points, |&(i, _)| Ok(graphs[i].clone()), args.run.policy, &cfg, args.jobs)?;
    let rows: Vec<RunRow<'_>> = points
        .iter()
        .zip(&metrics)
        .enumerate()
        .map(|(run_id, (&(i, r), m))| RunRow {
            run_id,
            params: vec![
                (key.to_owned(), values[i].clone()),
                ("replica".into(), r.to_string()),
                ("seed".into(), cfg.seed.wrapping_add(run_id as u64).to_string()),
            ],
            graph: &graphs[i],
            metrics: m,
        })
        .collect();
    let mut bytes = Vec::new();
    write_server_rows(&mut bytes, &rows)?;
    let config = json!({
        "family": format!("{:?}", args.family),
        "params": base.to_json(),
        "vary": { key: values },
        "replicas": args.replicas,
        "graph_seed": graph_seed,
        "sim": cfg,
    });
    let sidecar = Sidecar::new("sweep", cfg.seed, Some(args.run.policy.to_string()), config)?;
    emit_with_sidecar(args.output.as_deref(), &bytes, &sidecar)?;
    Ok(0)
}
