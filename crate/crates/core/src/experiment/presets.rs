use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    detect_skew, write_server_rows, write_sidecar, CdnConfig, DandelionSweepConfig, ExperimentConfig, Preset, RunRow,
    Sidecar, SkewGrowthConfig,
};
use crate::error::{Error, Result};
use crate::exact::basic_jsq_stationary;
use crate::generators::{
    cdn_network, dandelion, er_network, random_bipartite, to_bipartite, CdnSpec, DandelionSpec, ErSpec,
    RandomBipartiteSpec, GROUP_BOUNDARY, GROUP_CENTRAL, GROUP_EDGE, GROUP_ORIGIN,
};
use crate::graph::{CompatGraph, CoreSearch, SkewParams};
use crate::sim::{replicate, sweep, with_pool, GroupMetrics, OccupancyMetrics, Policy, SimConfig};
use crate::stats::{mean, median};

fn group_or_nan(m: &OccupancyMetrics, name: &str, f: impl Fn(&GroupMetrics) -> f64) -> f64 {
    m.group(name).map(f).unwrap_or(f64::NAN)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DandelionPoint {
    pub n: usize,
    pub replica: usize,
    pub seed: u64,
    pub boundary_mean: f64,
    /// Time average of the smallest central queue.
    pub central_min: f64,
    /// Smallest per-server time average over the central servers.
    pub central_min_of_means: f64,
    pub central_mean: f64,
    pub sim_time: f64,
    pub events: u64,
    pub partial: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DandelionSummary {
    pub n: usize,
    pub boundary_mean: f64,
    pub central_min: f64,
    pub central_mean: f64,
    /// Exact mean queue of one server of the isolated one-dispatcher system.
    pub basic_reference: f64,
}

#[derive(Clone, Debug)]
pub struct DandelionSweepResult {
    pub points: Vec<DandelionPoint>,
    pub summary: Vec<DandelionSummary>,
    pub reference_mean: f64,
    pub reference_boundary_mass: f64,
    pub metrics: Vec<OccupancyMetrics>,
}

/// Simulates `dandelion(n, b, c)` for every `n` and replica, seeds
/// `seed + index` in `(n, replica)` order, and solves the basic process
/// exactly for the reference line.
pub fn dandelion_sweep(cfg: &DandelionSweepConfig, seed: u64, jobs: usize) -> Result<DandelionSweepResult> {
    let basic = basic_jsq_stationary(cfg.b, cfg.lambda, cfg.mu, cfg.reference_cap)?;
    let radix = cfg.reference_cap as usize + 1;
    let reference_mean = basic.pi.iter().enumerate().map(|(i, p)| p * (i % radix) as f64).sum();

    let points: Vec<(usize, usize)> = cfg.ns.iter().flat_map(|&n| (0..cfg.replicas).map(move |r| (n, r))).collect();
    let sim = SimConfig { horizon: cfg.horizon, warmup_fraction: cfg.warmup_fraction, seed, ..SimConfig::default() };
    let family = |&(n, _): &(usize, usize)| dandelion(&DandelionSpec::new(n, cfg.b, cfg.c, cfg.lambda, cfg.mu));
    let metrics = sweep(&points, family, cfg.policy, &sim, jobs)?;

    let rows: Vec<DandelionPoint> = points
        .iter()
        .zip(&metrics)
        .enumerate()
        .map(|(i, (&(n, replica), m))| DandelionPoint {
            n,
            replica,
            seed: seed.wrapping_add(i as u64),
            boundary_mean: group_or_nan(m, GROUP_BOUNDARY, |g| g.mean_of_means),
            central_min: group_or_nan(m, GROUP_CENTRAL, |g| g.instant_min),
            central_min_of_means: group_or_nan(m, GROUP_CENTRAL, |g| g.min_of_means),
            central_mean: group_or_nan(m, GROUP_CENTRAL, |g| g.mean_of_means),
            sim_time: m.sim_time,
            events: m.events,
            partial: m.partial,
        })
        .collect();
    let summary = cfg
        .ns
        .iter()
        .map(|&n| {
            let at: Vec<&DandelionPoint> = rows.iter().filter(|p| p.n == n).collect();
            let avg = |f: fn(&DandelionPoint) -> f64| mean(&at.iter().map(|p| f(p)).collect::<Vec<_>>());
            DandelionSummary {
                n,
                boundary_mean: avg(|p| p.boundary_mean),
                central_min: avg(|p| p.central_min),
                central_mean: avg(|p| p.central_mean),
                basic_reference: reference_mean,
            }
        })
        .collect();
    Ok(DandelionSweepResult {
        points: rows,
        summary,
        reference_mean,
        reference_boundary_mass: basic.boundary_mass,
        metrics,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdnReplica {
    pub replica: usize,
    pub seed: u64,
    pub edge_mean: f64,
    pub origin_mean: f64,
    /// Time averages of the instantaneous origin minimum and maximum.
    pub origin_min: f64,
    pub origin_max: f64,
    /// Time fraction with every origin server at or above the floor.
    pub origin_floor_fraction: f64,
    pub ratio: f64,
    pub partial: bool,
}

#[derive(Clone, Debug)]
pub struct CdnResult {
    pub graph: CompatGraph,
    pub replicas: Vec<CdnReplica>,
    pub metrics: Vec<OccupancyMetrics>,
}

impl CdnConfig {
    pub fn spec(&self) -> CdnSpec {
        CdnSpec {
            clusters: self.clusters,
            edge_per_cluster: self.edge_per_cluster,
            origin_count: self.origin_count,
            rho: self.rho,
            tier1_rate_multiplier: self.tier1_rate_multiplier,
            mu: self.mu,
        }
    }

    fn tail_ks(&self) -> Vec<u32> {
        let mut ks = vec![1, 5, 10, self.origin_floor];
        ks.sort_unstable();
        ks.dedup();
        ks.retain(|&k| k > 0);
        ks
    }
}

pub fn cdn_experiment(cfg: &CdnConfig, seed: u64, jobs: usize) -> Result<CdnResult> {
    let graph = cdn_network(&cfg.spec())?;
    let tail_ks = cfg.tail_ks();
    let floor_at = tail_ks.iter().position(|&k| k == cfg.origin_floor);
    let sim = SimConfig {
        horizon: cfg.horizon,
        warmup_fraction: cfg.warmup_fraction,
        seed,
        tail_ks,
        trace_interval: (cfg.trace_interval > 0.0).then_some(cfg.trace_interval),
        ..SimConfig::default()
    };
    let metrics = replicate(&graph, Policy::Jsq, &sim, cfg.replicas, jobs)?;
    let replicas = metrics
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let edge_mean = group_or_nan(m, GROUP_EDGE, |g| g.mean_of_means);
            let origin_mean = group_or_nan(m, GROUP_ORIGIN, |g| g.mean_of_means);
            CdnReplica {
                replica: i,
                seed: seed.wrapping_add(i as u64),
                edge_mean,
                origin_mean,
                origin_min: group_or_nan(m, GROUP_ORIGIN, |g| g.instant_min),
                origin_max: group_or_nan(m, GROUP_ORIGIN, |g| g.instant_max),
                origin_floor_fraction: match floor_at {
                    Some(k) => group_or_nan(m, GROUP_ORIGIN, |g| g.min_tail[k]),
                    None => 1.0,
                },
                ratio: origin_mean / edge_mean,
                partial: m.partial,
            }
        })
        .collect();
    Ok(CdnResult { graph, replicas, metrics })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkewFamily {
    RandomBipartite,
    Er,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewGrowthRow {
    pub family: SkewFamily,
    pub n: usize,
    pub replica: usize,
    pub seed: u64,
    /// Server with the largest skewed neighborhood.
    pub u_max: u32,
    pub skew_size: usize,
    pub max_degree_server: u32,
    pub max_degree: usize,
    pub max_degree_skew_size: usize,
    pub core_size: usize,
    pub core_dispatchers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewGrowthSummary {
    pub family: SkewFamily,
    pub n: usize,
    pub median_skew_size: f64,
    pub median_max_degree_skew_size: f64,
}

#[derive(Clone, Debug)]
pub struct SkewGrowthResult {
    pub rows: Vec<SkewGrowthRow>,
    pub summary: Vec<SkewGrowthSummary>,
}

/// Generates `replicas` graphs per size with seeds `seed + index` and
/// measures the largest skewed neighborhood of each.
pub fn skew_growth(family: SkewFamily, cfg: &SkewGrowthConfig, seed: u64, jobs: usize) -> Result<SkewGrowthResult> {
    let alpha = SkewParams::new(cfg.a, cfg.lambda, cfg.mu)?;
    let points: Vec<(usize, usize)> = cfg.ns.iter().flat_map(|&n| (0..cfg.replicas).map(move |r| (n, r))).collect();
    let rows = with_pool(jobs, || {
        points
            .par_iter()
            .enumerate()
            .map(|(i, &(n, replica))| {
                let s = seed.wrapping_add(i as u64);
                let g = match family {
                    SkewFamily::RandomBipartite => {
                        let mean_degree = cfg
                            .mean_degree
                            .ok_or_else(|| Error::domain("random_bipartite.mean_degree: required"))?;
                        let spec = RandomBipartiteSpec { n, mean_degree, lambda: cfg.lambda, mu: cfg.mu, stabilize: false };
                        random_bipartite(&spec, s)?
                    }
                    SkewFamily::Er => to_bipartite(&er_network(&ErSpec { n, lambda: cfg.lambda, mu: cfg.mu }, s)?)?,
                };
                let det = detect_skew(&g, &alpha, CoreSearch::default())?;
                Ok(SkewGrowthRow {
                    family,
                    n,
                    replica,
                    seed: s,
                    u_max: det.u_max.0,
                    skew_size: det.max_size,
                    max_degree_server: det.max_degree_server.0,
                    max_degree: g.server_degree(det.max_degree_server),
                    max_degree_skew_size: det.max_degree_size,
                    core_size: det.core.servers.len(),
                    core_dispatchers: det.core.dispatchers.len(),
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let summary = cfg
        .ns
        .iter()
        .map(|&n| {
            let at: Vec<&SkewGrowthRow> = rows.iter().filter(|r| r.n == n).collect();
            SkewGrowthSummary {
                family,
                n,
                median_skew_size: median(&at.iter().map(|r| r.skew_size as f64).collect::<Vec<_>>()),
                median_max_degree_skew_size: median(&at.iter().map(|r| r.max_degree_skew_size as f64).collect::<Vec<_>>()),
            }
        })
        .collect();
    Ok(SkewGrowthResult { rows, summary })
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

struct Outputs<'a> {
    dir: &'a Path,
    sidecar: Sidecar,
    files: Vec<PathBuf>,
}

impl Outputs<'_> {
    fn table<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let path = self.dir.join(name);
        write_rows(&path, rows)?;
        self.finish(path)
    }

    fn servers(&mut self, name: &str, runs: &[RunRow<'_>]) -> Result<()> {
        let path = self.dir.join(name);
        write_server_rows(BufWriter::new(File::create(&path)?), runs)?;
        self.finish(path)
    }

    fn finish(&mut self, path: PathBuf) -> Result<()> {
        let side = write_sidecar(&path, &self.sidecar)?;
        self.files.push(path);
        self.files.push(side);
        Ok(())
    }
}

#[derive(Serialize)]
struct TraceRow<'a> {
    replica: usize,
    time: f64,
    group: &'a str,
    min: u32,
    mean: f64,
    max: u32,
}

/// Runs the configured preset and writes its tables; returns the paths
/// written, sidecars included.
pub fn run_preset(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let cfg = cfg.resolved();
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let preset = serde_json::to_value(cfg.preset)?;
    let command = format!("preset {}", preset.as_str().unwrap_or_default());
    let policy = match cfg.preset {
        Preset::DandelionSweep => Some(cfg.dandelion.policy.to_string()),
        Preset::Cdn => Some(Policy::Jsq.to_string()),
        Preset::Custom => cfg.custom.as_ref().map(|c| c.policy.to_string()),
        _ => None,
    };
    let mut out = Outputs { dir: &cfg.output_dir, sidecar: Sidecar::new(command, cfg.seed, policy, &cfg)?, files: Vec::new() };
    match cfg.preset {
        Preset::DandelionSweep => {
            let d = &cfg.dandelion;
            let res = dandelion_sweep(d, cfg.seed, cfg.jobs)?;
            out.table("dandelion_sweep.csv", &res.points)?;
            out.table("dandelion_summary.csv", &res.summary)?;
            let graphs: Vec<CompatGraph> = d
                .ns
                .iter()
                .map(|&n| dandelion(&DandelionSpec::new(n, d.b, d.c, d.lambda, d.mu)))
                .collect::<Result<_>>()?;
            let runs: Vec<RunRow<'_>> = res
                .points
                .iter()
                .zip(&res.metrics)
                .enumerate()
                .map(|(i, (p, m))| RunRow {
                    run_id: i,
                    params: vec![("n".into(), p.n.to_string()), ("replica".into(), p.replica.to_string()), ("seed".into(), p.seed.to_string())],
                    graph: &graphs[i / d.replicas],
                    metrics: m,
                })
                .collect();
            out.servers("dandelion_servers.csv", &runs)?;
        }
        Preset::Cdn => {
            let res = cdn_experiment(&cfg.cdn, cfg.seed, cfg.jobs)?;
            out.table("cdn.csv", &res.replicas)?;
            let trace: Vec<TraceRow<'_>> = res
                .metrics
                .iter()
                .enumerate()
                .flat_map(|(r, m)| {
                    m.trace.iter().filter(|p| p.group == GROUP_EDGE || p.group == GROUP_ORIGIN).map(move |p| TraceRow {
                        replica: r,
                        time: p.time,
                        group: &p.group,
                        min: p.min,
                        mean: p.mean,
                        max: p.max,
                    })
                })
                .collect();
            out.table("cdn_trace.csv", &trace)?;
            let runs: Vec<RunRow<'_>> = res
                .replicas
                .iter()
                .zip(&res.metrics)
                .map(|(r, m)| RunRow {
                    run_id: r.replica,
                    params: vec![("seed".into(), r.seed.to_string())],
                    graph: &res.graph,
                    metrics: m,
                })
                .collect();
            out.servers("cdn_servers.csv", &runs)?;
        }
        Preset::RandomBipartiteSkew | Preset::ErSkew => {
            let (family, sc) = if cfg.preset == Preset::ErSkew {
                (SkewFamily::Er, &cfg.er)
            } else {
                (SkewFamily::RandomBipartite, &cfg.random_bipartite)
            };
            let res = skew_growth(family, sc, cfg.seed, cfg.jobs)?;
            out.table("skew_growth.csv", &res.rows)?;
            out.table("skew_growth_summary.csv", &res.summary)?;
        }
        Preset::Custom => {
            let c = cfg.custom.as_ref().expect("validated");
            let g = CompatGraph::load(&c.graph)?;
            let sim = SimConfig { seed: cfg.seed, ..c.sim.clone() };
            let metrics = replicate(&g, c.policy, &sim, c.replicas, cfg.jobs)?;
            let runs: Vec<RunRow<'_>> = metrics
                .iter()
                .enumerate()
                .map(|(i, m)| RunRow {
                    run_id: i,
                    params: vec![("seed".into(), cfg.seed.wrapping_add(i as u64).to_string())],
                    graph: &g,
                    metrics: m,
                })
                .collect();
            out.servers("custom_servers.csv", &runs)?;
        }
    }
    Ok(out.files)
}
