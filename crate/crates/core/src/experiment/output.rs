use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use super::VERSION;
use crate::error::Result;
use crate::graph::CompatGraph;
use crate::sim::OccupancyMetrics;

/// One simulated run to be written as per-server rows.
pub struct RunRow<'a> {
    pub run_id: usize,
    /// Parameter columns, identical names across the rows of one table.
    pub params: Vec<(String, String)>,
    pub graph: &'a CompatGraph,
    pub metrics: &'a OccupancyMetrics,
}

/// Long-format table: one row per server per run.
pub fn write_server_rows<W: Write>(out: W, runs: &[RunRow<'_>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = runs.first() else {
        w.flush()?;
        return Ok(());
    };
    let mut header = vec!["run_id".to_owned()];
    header.extend(first.params.iter().map(|(k, _)| k.clone()));
    header.extend(["server_id", "group", "mean_queue"].map(String::from));
    header.extend(first.metrics.tail_ks.iter().map(|k| format!("p_ge_{k}")));
    header.extend(["sim_time", "events"].map(String::from));
    w.write_record(&header)?;
    for run in runs {
        let m = run.metrics;
        for u in run.graph.servers() {
            let i = u.index();
            let mut rec = vec![run.run_id.to_string()];
            rec.extend(run.params.iter().map(|(_, v)| v.clone()));
            rec.push(u.0.to_string());
            rec.push(run.graph.group(u).to_owned());
            rec.push(m.mean_queue[i].to_string());
            rec.extend(m.tail[i].iter().map(f64::to_string));
            rec.push(m.sim_time.to_string());
            rec.push(m.events.to_string());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Provenance written beside every output table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Sidecar {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub policy: Option<String>,
    pub config: Value,
}

impl Sidecar {
    pub fn new(command: impl Into<String>, seed: u64, policy: Option<String>, config: impl Serialize) -> Result<Self> {
        Ok(Sidecar {
            tool: "skewnet",
            version: VERSION,
            command: command.into(),
            seed,
            policy,
            config: serde_json::to_value(config)?,
        })
    }
}

/// Writes `sidecar` to `<table>.json` and returns that path.
pub fn write_sidecar(table: &Path, sidecar: &Sidecar) -> Result<PathBuf> {
    let mut name = table.file_name().unwrap_or_default().to_os_string();
    name.push(".json");
    let path = table.with_file_name(name);
    fs::write(&path, serde_json::to_string_pretty(sidecar)? + "\n")?;
    Ok(path)
}
