use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use skewnet::experiment::{run_preset, ExperimentConfig, Preset, Tier};
use skewnet::{Error, Result};

#[derive(Args, Debug)]
pub struct PresetArgs {
    /// TOML config, or JSON when the extension is `.json`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Preset to run; overrides the file.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides the file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub tier: Option<String>,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Print the resolved config as TOML and exit.
    #[arg(long)]
    pub print_config: bool,
}

fn parse_enum<T: serde::de::DeserializeOwned>(flag: &str, value: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(value.to_owned()))
        .map_err(|_| Error::Domain(format!("{flag}: unknown value `{value}`")))
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text).map_err(|e| Error::Domain(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| Error::Domain(format!("{}: {e}", path.display())))
    }
}

pub fn resolve(args: &PresetArgs) -> Result<ExperimentConfig> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => load_config(path)?,
        (None, Some(name)) => ExperimentConfig::new(parse_enum::<Preset>("--preset", name)?),
        (None, None) => return Err(Error::Domain("give --config or --preset".into())),
    };
    if let Some(name) = &args.preset {
        cfg.preset = parse_enum("--preset", name)?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if let Some(tier) = &args.tier {
        cfg.tier = parse_enum::<Tier>("--tier", tier)?;
    }
    if let Some(jobs) = args.jobs {
        cfg.jobs = jobs;
    }
    Ok(cfg)
}

pub fn run(args: PresetArgs) -> Result<i32> {
    let cfg = resolve(&args)?;
    if args.print_config {
        let text = toml::to_string(&cfg.resolved()).map_err(|e| Error::Domain(e.to_string()))?;
        print!("{text}");
        return Ok(0);
    }
    for path in run_preset(&cfg)? {
        println!("{}", path.display());
    }
    Ok(0)
}
