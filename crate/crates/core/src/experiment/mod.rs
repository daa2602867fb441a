//! Experiment presets and their file outputs.
//!
//! An [`ExperimentConfig`] names a preset and carries the parameters of every
//! preset, each with defaults, so one file can be edited and rerun. Running a
//! preset writes CSV tables into the output directory together with a JSON
//! sidecar per table holding the resolved configuration, seed and version.

mod output;
mod presets;
mod skew;

pub use output::{write_server_rows, write_sidecar, RunRow, Sidecar};
pub use presets::{
    cdn_experiment, dandelion_sweep, run_preset, skew_growth, CdnReplica, CdnResult, DandelionPoint, DandelionSummary,
    DandelionSweepResult, SkewFamily, SkewGrowthResult, SkewGrowthRow, SkewGrowthSummary,
};
pub use skew::{detect_skew, SkewDetection};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Policy;

/// Version string recorded in every sidecar.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    DandelionSweep,
    Cdn,
    RandomBipartiteSkew,
    ErSkew,
    Custom,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tier {
    #[default]
    Default,
    /// Full-scale sizes; hours rather than minutes.
    Long,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Preset,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub jobs: usize,
    #[serde(default)]
    pub tier: Tier,
    #[serde(default)]
    pub dandelion: DandelionSweepConfig,
    #[serde(default)]
    pub cdn: CdnConfig,
    #[serde(default = "SkewGrowthConfig::random_bipartite")]
    pub random_bipartite: SkewGrowthConfig,
    #[serde(default = "SkewGrowthConfig::er")]
    pub er: SkewGrowthConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<CustomConfig>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DandelionSweepConfig {
    pub ns: Vec<usize>,
    pub b: usize,
    pub c: usize,
    pub lambda: f64,
    pub mu: f64,
    pub replicas: usize,
    pub horizon: f64,
    pub warmup_fraction: f64,
    pub policy: Policy,
    /// Truncation level of the exact basic-process reference.
    pub reference_cap: u32,
}

impl Default for DandelionSweepConfig {
    fn default() -> Self {
        DandelionSweepConfig {
            ns: vec![4, 8, 16, 32, 64],
            b: 3,
            c: 4,
            lambda: 2.85,
            mu: 1.0,
            replicas: 5,
            horizon: 2e4,
            warmup_fraction: 0.25,
            policy: Policy::Jsq,
            reference_cap: 80,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CdnConfig {
    pub clusters: usize,
    pub edge_per_cluster: usize,
    pub origin_count: usize,
    pub rho: f64,
    pub tier1_rate_multiplier: f64,
    pub mu: f64,
    pub replicas: usize,
    pub horizon: f64,
    pub warmup_fraction: f64,
    /// Spacing of the origin/edge trace; 0 disables it.
    pub trace_interval: f64,
    /// Threshold for the time fraction with every origin server at or above it.
    pub origin_floor: u32,
}

impl Default for CdnConfig {
    fn default() -> Self {
        CdnConfig {
            clusters: 50,
            edge_per_cluster: 10,
            origin_count: 10,
            rho: 0.9,
            tier1_rate_multiplier: 5.0,
            mu: 1.0,
            replicas: 3,
            horizon: 2000.0,
            warmup_fraction: 0.25,
            trace_interval: 10.0,
            origin_floor: 7,
        }
    }
}

impl CdnConfig {
    /// 1000 clusters of 10 edge servers, 100 origins, averaged over
    /// `[150, 200]`.
    pub fn long() -> Self {
        CdnConfig {
            clusters: 1000,
            origin_count: 100,
            replicas: 1,
            horizon: 200.0,
            warmup_fraction: 0.75,
            trace_interval: 1.0,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkewGrowthConfig {
    pub ns: Vec<usize>,
    pub replicas: usize,
    /// Degree cap of the skew threshold.
    pub a: usize,
    pub lambda: f64,
    pub mu: f64,
    /// Mean dispatcher degree; random bipartite graphs only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_degree: Option<f64>,
}

impl SkewGrowthConfig {
    pub fn random_bipartite() -> Self {
        SkewGrowthConfig { ns: vec![100, 1000, 10_000], replicas: 20, a: 3, lambda: 1.0, mu: 1.0, mean_degree: Some(2.0) }
    }

    pub fn er() -> Self {
        SkewGrowthConfig { ns: vec![1000, 10_000, 100_000], replicas: 20, a: 2, lambda: 1.0, mu: 1.0, mean_degree: None }
    }
}

/// Replicated simulation of a graph file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CustomConfig {
    pub graph: PathBuf,
    #[serde(default = "default_policy")]
    pub policy: Policy,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(flatten)]
    pub sim: crate::sim::SimConfig,
}

fn default_policy() -> Policy {
    Policy::Jsq
}

fn default_replicas() -> usize {
    1
}

impl ExperimentConfig {
    pub fn new(preset: Preset) -> Self {
        ExperimentConfig {
            preset,
            seed: 0,
            output_dir: default_output_dir(),
            jobs: 0,
            tier: Tier::Default,
            dandelion: DandelionSweepConfig::default(),
            cdn: CdnConfig::default(),
            random_bipartite: SkewGrowthConfig::random_bipartite(),
            er: SkewGrowthConfig::er(),
            custom: None,
        }
    }

    /// Applies the tier: the long tier swaps in the full-scale CDN.
    pub fn resolved(&self) -> ExperimentConfig {
        let mut cfg = self.clone();
        if cfg.tier == Tier::Long && cfg.cdn == CdnConfig::default() {
            cfg.cdn = CdnConfig::long();
        }
        cfg
    }

    /// Checks the section the preset reads, naming the offending field.
    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, why: &str| Err(Error::domain(format!("{path}: {why}")));
        let positive = |x: f64| x > 0.0 && x.is_finite();
        let fraction = |x: f64| (0.0..1.0).contains(&x);
        match self.preset {
            Preset::DandelionSweep => {
                let d = &self.dandelion;
                if d.ns.is_empty() || d.ns.contains(&0) {
                    return bad("dandelion.ns", "must be a nonempty list of positive counts");
                }
                if d.b == 0 {
                    return bad("dandelion.b", "must be at least 1");
                }
                if !positive(d.lambda) {
                    return bad("dandelion.lambda", "must be positive");
                }
                if !positive(d.mu) {
                    return bad("dandelion.mu", "must be positive");
                }
                if d.lambda >= d.b as f64 * d.mu {
                    return bad("dandelion.lambda", "must be below b * mu for the reference to exist");
                }
                if d.replicas == 0 {
                    return bad("dandelion.replicas", "must be at least 1");
                }
                if !positive(d.horizon) {
                    return bad("dandelion.horizon", "must be positive");
                }
                if !fraction(d.warmup_fraction) {
                    return bad("dandelion.warmup_fraction", "must lie in [0, 1)");
                }
                if d.reference_cap == 0 {
                    return bad("dandelion.reference_cap", "must be at least 1");
                }
            }
            Preset::Cdn => {
                let c = &self.cdn;
                if c.clusters == 0 {
                    return bad("cdn.clusters", "must be at least 1");
                }
                if c.edge_per_cluster == 0 {
                    return bad("cdn.edge_per_cluster", "must be at least 1");
                }
                if !positive(c.rho) {
                    return bad("cdn.rho", "must be positive");
                }
                if !positive(c.tier1_rate_multiplier) {
                    return bad("cdn.tier1_rate_multiplier", "must be positive");
                }
                if !positive(c.mu) {
                    return bad("cdn.mu", "must be positive");
                }
                if c.replicas == 0 {
                    return bad("cdn.replicas", "must be at least 1");
                }
                if !positive(c.horizon) {
                    return bad("cdn.horizon", "must be positive");
                }
                if !fraction(c.warmup_fraction) {
                    return bad("cdn.warmup_fraction", "must lie in [0, 1)");
                }
                if !(c.trace_interval >= 0.0 && c.trace_interval.is_finite()) {
                    return bad("cdn.trace_interval", "must be nonnegative");
                }
            }
            Preset::RandomBipartiteSkew | Preset::ErSkew => {
                let (name, s) = if self.preset == Preset::ErSkew {
                    ("er", &self.er)
                } else {
                    ("random_bipartite", &self.random_bipartite)
                };
                if s.ns.is_empty() {
                    return bad(&format!("{name}.ns"), "must be nonempty");
                }
                if s.replicas == 0 {
                    return bad(&format!("{name}.replicas"), "must be at least 1");
                }
                if s.a == 0 {
                    return bad(&format!("{name}.a"), "must be at least 1");
                }
                if !positive(s.lambda) {
                    return bad(&format!("{name}.lambda"), "must be positive");
                }
                if !positive(s.mu) {
                    return bad(&format!("{name}.mu"), "must be positive");
                }
                if self.preset == Preset::RandomBipartiteSkew && !s.mean_degree.is_some_and(positive) {
                    return bad("random_bipartite.mean_degree", "must be given and positive");
                }
            }
            Preset::Custom => {
                let Some(c) = &self.custom else {
                    return bad("custom", "section required for the custom preset");
                };
                if c.replicas == 0 {
                    return bad("custom.replicas", "must be at least 1");
                }
                c.sim.validate().map_err(|e| Error::domain(format!("custom: {e}")))?;
            }
        }
        Ok(())
    }
}
