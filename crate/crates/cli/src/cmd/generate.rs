use std::path::PathBuf;

use clap::{Args, ValueEnum};
use skewnet::generators::{
    cdn_network, dandelion, er_network, pod_expand, random_bipartite, remove_central, to_bipartite, CdnSpec, DandelionSpec,
    ErSpec, RandomBipartiteSpec,
};
use skewnet::graph::Provenance;
use skewnet::{CompatGraph, Error, Result};

use crate::output::emit_text;
use crate::params::Params;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Dandelion,
    Cdn,
    RandomBipartite,
    Er,
    /// Power-of-d expansion of `--input`.
    PodExpand,
    /// `--input` dandelion with its central servers removed.
    RemoveCentral,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    pub family: Family,
    /// Generator parameters as `key=value,...`.
    #[arg(long, default_value = "")]
    pub params: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Source graph for the transforming families.
    #[arg(short = 'g', long)]
    pub input: Option<PathBuf>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// Builds a graph of `family` from `params`, consuming every key.
pub fn build(family: Family, params: &mut Params, seed: u64, input: Option<&PathBuf>) -> Result<CompatGraph> {
    let source = || -> Result<CompatGraph> {
        let path = input.ok_or_else(|| Error::Domain("this family needs an input graph (-g)".into()))?;
        CompatGraph::load(path)
    };
    let g = match family {
        Family::Dandelion => {
            let b = params.or("b", 3usize)?;
            let mut spec = DandelionSpec::new(
                params.require("n")?,
                b,
                params.or("c", 4usize)?,
                params.or("lambda", 0.95 * b as f64)?,
                params.or("mu", 1.0)?,
            );
            spec.strict_ergodic = params.or("strict", false)?;
            dandelion(&spec)?
        }
        Family::Cdn => {
            let d = CdnSpec::scaled(50, 10);
            cdn_network(&CdnSpec {
                clusters: params.or("clusters", d.clusters)?,
                edge_per_cluster: params.or("edge", d.edge_per_cluster)?,
                origin_count: params.or("origin", d.origin_count)?,
                rho: params.or("rho", d.rho)?,
                tier1_rate_multiplier: params.or("multiplier", d.tier1_rate_multiplier)?,
                mu: params.or("mu", d.mu)?,
            })?
        }
        Family::RandomBipartite => {
            let spec = RandomBipartiteSpec {
                n: params.require("n")?,
                mean_degree: params.or("b", 2.0)?,
                lambda: params.or("lambda", 1.0)?,
                mu: params.or("mu", 1.0)?,
                stabilize: params.or("stabilize", false)?,
            };
            random_bipartite(&spec, seed)?
        }
        Family::Er => {
            let spec = ErSpec { n: params.require("n")?, lambda: params.or("lambda", 1.0)?, mu: params.or("mu", 1.0)? };
            let provenance = Provenance { family: "er".into(), params: serde_json::to_value(spec)?, seed: Some(seed) };
            to_bipartite(&er_network(&spec, seed)?)?.to_builder().provenance(provenance).build()?
        }
        Family::PodExpand => pod_expand(&source()?, params.require("d")?)?,
        Family::RemoveCentral => remove_central(&source()?)?,
    };
    params.finish()?;
    Ok(g)
}

pub fn run(args: GenerateArgs) -> Result<i32> {
    let mut params = Params::parse(&args.params)?;
    let g = build(args.family, &mut params, args.seed, args.input.as_ref())?;
    emit_text(args.output.as_deref(), &(g.to_json()? + "\n"))?;
    Ok(0)
}
