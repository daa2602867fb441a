use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use skewnet::experiment::{detect_skew, SkewDetection};
use skewnet::graph::{CoreSearch, SkewParams, SkewedCore};
use skewnet::{CompatGraph, Result, ServerId};

use crate::output::{emit_json, emit_text};

#[derive(Args, Debug)]
pub struct DetectSkewArgs {
    #[arg(short = 'g', long)]
    pub graph: PathBuf,
    /// Degree cap of qualifying dispatchers.
    #[arg(long)]
    pub a: usize,
    #[arg(long)]
    pub lambda_min: f64,
    #[arg(long)]
    pub mu_max: f64,
    /// Grow the core from this server instead of the largest neighborhood.
    #[arg(long)]
    pub server: Option<u32>,
    #[arg(long, default_value_t = CoreSearch::default().drop_fraction)]
    pub drop_fraction: f64,
    /// JSON report; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Per-server table of degree and skewed-neighborhood size.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct SkewReport<'a> {
    #[serde(flatten)]
    detection: &'a SkewDetection,
    #[serde(skip_serializing_if = "Option::is_none")]
    seeded_core: Option<SkewedCore>,
}

pub fn run(args: DetectSkewArgs) -> Result<i32> {
    let g = CompatGraph::load(&args.graph)?;
    let alpha = SkewParams::new(args.a, args.lambda_min, args.mu_max)?;
    let search = CoreSearch { drop_fraction: args.drop_fraction };
    let detection = detect_skew(&g, &alpha, search)?;
    let seeded_core = args.server.map(|u| g.find_skewed_core(ServerId(u), &alpha, search)).transpose()?;
    if let Some(path) = &args.csv {
        let mut text = String::from("server_id,group,degree,skew_size\n");
        for u in g.servers() {
            let line = format!("{},{},{},{}\n", u.0, g.group(u), g.server_degree(u), detection.sizes[u.index()]);
            text.push_str(&line);
        }
        emit_text(Some(path), &text)?;
    }
    emit_json(args.output.as_deref(), &SkewReport { detection: &detection, seeded_core })?;
    Ok(0)
}
