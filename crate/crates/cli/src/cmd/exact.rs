use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Serialize;
use skewnet::exact::{
    build_generator_with, check_min_rate_inequality, check_theorem2_convergence, check_zero_mean_drift, central_minimizer_check,
    center_count_check, random_bounded_functions, stationary_with, CentralMinimizerRow, CenterCountCheck, MinRateCheck, SolveMethod,
    SolverOptions, ConvergenceRow, DEFAULT_STATE_CAP,
};
use skewnet::generators::dandelion_spec_of;
use skewnet::sim::Policy;
use skewnet::{CompatGraph, Error, Result};

use crate::output::emit_json;
use crate::params::list;

/// Largest zero-mean-drift residual accepted as a pass.
const DRIFT_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Check {
    Drift,
    Minrate,
    Central,
    CenterCount,
    Thm2,
}

#[derive(Args, Debug)]
pub struct ExactArgs {
    #[arg(short = 'g', long)]
    pub graph: PathBuf,
    /// Per-server occupancy cap.
    #[arg(short = 'K', long = "cap")]
    pub cap: u32,
    #[arg(long, value_delimiter = ',', default_value = "drift,minrate")]
    pub checks: Vec<Check>,
    #[arg(long, default_value = "jsq")]
    pub policy: Policy,
    #[arg(long, default_value = "auto")]
    pub solver: Solver,
    /// Required infinity-norm residual of the stationary solve.
    #[arg(long, default_value_t = SolverOptions::default().tolerance)]
    pub tolerance: f64,
    #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
    pub state_cap: usize,
    /// Number of random bounded test functions for the drift check.
    #[arg(long, default_value_t = 20)]
    pub functions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dispatcher counts compared by the convergence check.
    #[arg(long, default_value = "2,3,4")]
    pub thm2_ns: String,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Solver {
    Auto,
    Direct,
    Iterative,
}

#[derive(Serialize)]
struct DriftReport {
    functions: usize,
    residuals: Vec<f64>,
    max_residual: f64,
    tolerance: f64,
    holds: bool,
}

#[derive(Serialize)]
struct Thm2Report {
    rows: Vec<ConvergenceRow>,
    marginal_decreasing: bool,
    joint_decreasing: bool,
}

#[derive(Serialize)]
struct ExactReport {
    states: usize,
    transitions: usize,
    cap: u32,
    policy: String,
    solver: SolveMethod,
    iterations: usize,
    residual: f64,
    residual_l1: f64,
    boundary_mass: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    drift: Option<DriftReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    minrate: Option<Vec<MinRateCheck>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    central: Option<Vec<CentralMinimizerRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    center_count: Option<CenterCountCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    thm2: Option<Thm2Report>,
    holds: bool,
}

fn decreasing(xs: impl Iterator<Item = f64>) -> bool {
    let xs: Vec<f64> = xs.collect();
    xs.windows(2).all(|w| w[1] < w[0])
}

pub fn run(args: ExactArgs) -> Result<i32> {
    let g = CompatGraph::load(&args.graph)?;
    let chain = build_generator_with(&g, args.cap, args.policy, args.state_cap)?;
    let method = match args.solver {
        Solver::Auto => SolveMethod::Auto,
        Solver::Direct => SolveMethod::Direct,
        Solver::Iterative => SolveMethod::Iterative,
    };
    let pi = stationary_with(&chain, &SolverOptions { method, tolerance: args.tolerance, ..SolverOptions::default() })?;
    let mut report = ExactReport {
        states: chain.num_states(),
        transitions: chain.num_transitions(),
        cap: args.cap,
        policy: args.policy.to_string(),
        solver: pi.method,
        iterations: pi.iterations,
        residual: pi.residual,
        residual_l1: pi.residual_l1,
        boundary_mass: pi.boundary_mass,
        drift: None,
        minrate: None,
        central: None,
        center_count: None,
        thm2: None,
        holds: true,
    };
    for check in &args.checks {
        match check {
            Check::Drift => {
                let fs = random_bounded_functions(args.functions, g.num_servers(), args.seed);
                let residuals: Vec<f64> = fs.iter().map(|f| check_zero_mean_drift(&chain, &pi, |x| f.eval(x))).collect();
                let max_residual = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
                let holds = max_residual <= DRIFT_TOLERANCE;
                report.holds &= holds;
                report.drift =
                    Some(DriftReport { functions: fs.len(), residuals, max_residual, tolerance: DRIFT_TOLERANCE, holds });
            }
            Check::Minrate => {
                let rows = g.servers().map(|u| check_min_rate_inequality(&chain, &pi, u)).collect::<Result<Vec<_>>>()?;
                report.holds &= rows.iter().all(|r| r.holds);
                report.minrate = Some(rows);
            }
            Check::Central => {
                let rows = central_minimizer_check(&chain, &pi)?;
                report.holds &= rows.iter().all(|r| r.holds);
                report.central = Some(rows);
            }
            Check::CenterCount => {
                let l6 = center_count_check(&chain, &pi)?;
                report.holds &= l6.holds;
                report.center_count = Some(l6);
            }
            Check::Thm2 => {
                let spec = dandelion_spec_of(&g)?;
                let ns: Vec<usize> = list("--thm2-ns", &args.thm2_ns)?;
                if ns.is_empty() {
                    return Err(Error::Domain("--thm2-ns: no values".into()));
                }
                let rows = check_theorem2_convergence(&ns, spec.b, spec.c, spec.lambda, spec.mu, args.cap)?;
                let marginal_decreasing = decreasing(rows.iter().map(|r| r.marginal_tv));
                let joint_decreasing = decreasing(rows.iter().filter_map(|r| r.joint_tv));
                report.holds &= marginal_decreasing && joint_decreasing;
                report.thm2 = Some(Thm2Report { rows, marginal_decreasing, joint_decreasing });
            }
        }
    }
    emit_json(args.output.as_deref(), &report)?;
    if !report.holds {
        eprintln!("error: at least one exact check failed");
        return Ok(3);
    }
    Ok(0)
}
