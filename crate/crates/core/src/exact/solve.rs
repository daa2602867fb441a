//! Stationary solvers: banded GTH state reduction for narrow chains and
//! level-aggregated Gauss–Seidel for the rest.

use serde::{Deserialize, Serialize};

use super::TruncatedChain;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    /// Pick by cost estimate.
    Auto,
    /// Banded Grassmann–Taksar–Heyman elimination.
    Direct,
    /// Gauss–Seidel sweeps with aggregation over the total-occupancy level.
    Iterative,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub method: SolveMethod,
    /// Required infinity-norm of `pi A`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Direct elimination is used under Auto when `n * bandwidth^2` is below this.
    pub direct_work_limit: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { method: SolveMethod::Auto, tolerance: 1e-10, max_iterations: 20_000, direct_work_limit: 4e9 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryDist {
    pub pi: Vec<f64>,
    /// Mass of states with some server at the cap.
    pub boundary_mass: f64,
    /// Infinity norm of `pi A`.
    pub residual: f64,
    /// One norm of `pi A`.
    pub residual_l1: f64,
    pub method: SolveMethod,
    pub iterations: usize,
}

pub fn stationary(chain: &TruncatedChain) -> Result<StationaryDist> {
    stationary_with(chain, &SolverOptions::default())
}

pub fn stationary_with(chain: &TruncatedChain, opts: &SolverOptions) -> Result<StationaryDist> {
    let n = chain.num_states();
    let bandwidth = chain.strides().last().copied().unwrap_or(1);
    let method = match opts.method {
        SolveMethod::Auto => {
            let work = n as f64 * (bandwidth as f64).powi(2);
            if work <= opts.direct_work_limit && n as f64 * (2 * bandwidth + 1) as f64 <= 2e8 {
                SolveMethod::Direct
            } else {
                SolveMethod::Iterative
            }
        }
        m => m,
    };
    let (mut pi, iterations) = match method {
        SolveMethod::Direct => (gth_banded(chain, bandwidth), 0),
        _ => aggregated_gauss_seidel(chain, opts)?,
    };
    normalize(&mut pi);
    let (residual, residual_l1) = residuals(chain, &pi);
    if !(residual <= opts.tolerance) {
        return Err(Error::Numeric { residual, iterations });
    }
    let cap = chain.cap();
    let mut x = vec![0; chain.graph().num_servers()];
    let boundary_mass = (0..n)
        .filter(|&i| {
            chain.decode(i, &mut x);
            x.contains(&cap)
        })
        .map(|i| pi[i])
        .sum();
    Ok(StationaryDist { pi, boundary_mass, residual, residual_l1, method, iterations })
}

fn normalize(pi: &mut [f64]) {
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= s);
}

/// Returns the infinity and one norms of `pi A`.
pub(crate) fn residuals(chain: &TruncatedChain, pi: &[f64]) -> (f64, f64) {
    let n = chain.num_states();
    let mut r: Vec<f64> = (0..n).map(|i| -pi[i] * chain.exit_rate(i)).collect();
    for (i, &p) in pi.iter().enumerate() {
        for (j, rate) in chain.row(i) {
            r[j] += p * rate;
        }
    }
    let inf = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let l1 = r.iter().map(|v| v.abs()).sum();
    (inf, l1)
}

/// GTH state reduction restricted to the band `|i - j| <= bw`. Every state
/// above 0 can move to a lower index by a departure, so the pivots are
/// positive.
fn gth_banded(chain: &TruncatedChain, bw: usize) -> Vec<f64> {
    let n = chain.num_states();
    let width = 2 * bw + 1;
    // a[i * width + (j + bw - i)] holds q(i, j)
    let mut a = vec![0.0f64; n * width];
    let at = |i: usize, j: usize| i * width + j + bw - i;
    for i in 0..n {
        for (j, r) in chain.row(i) {
            a[at(i, j)] += r;
        }
    }
    let mut pivot = vec![0.0f64; n];
    for k in (1..n).rev() {
        let lo = k.saturating_sub(bw);
        let s: f64 = (lo..k).map(|j| a[at(k, j)]).sum();
        pivot[k] = s;
        if s == 0.0 {
            continue;
        }
        for i in lo..k {
            let f = a[at(i, k)];
            if f == 0.0 {
                continue;
            }
            let f = f / s;
            let (row_k, row_i) = (at(k, lo), at(i, lo));
            for off in 0..k - lo {
                let v = a[row_k + off];
                if v != 0.0 {
                    a[row_i + off] += f * v;
                }
            }
        }
    }
    let mut pi = vec![0.0f64; n];
    pi[0] = 1.0;
    for k in 1..n {
        if pivot[k] == 0.0 {
            continue;
        }
        let lo = k.saturating_sub(bw);
        let inflow: f64 = (lo..k).map(|i| pi[i] * a[at(i, k)]).sum();
        pi[k] = inflow / pivot[k];
    }
    pi
}

/// Gauss–Seidel on `pi A = 0` alternated with an exact solve of the
/// birth–death chain obtained by lumping states by total occupancy.
fn aggregated_gauss_seidel(chain: &TruncatedChain, opts: &SolverOptions) -> Result<(Vec<f64>, usize)> {
    let n = chain.num_states();
    let ns = chain.graph().num_servers();
    let mut x = vec![0u32; ns];
    let mut level = vec![0u32; n];
    for (i, l) in level.iter_mut().enumerate() {
        chain.decode(i, &mut x);
        *l = x.iter().sum();
    }
    let levels = ns * chain.cap() as usize + 1;

    // incoming transitions, and each state's rate up and down one level
    let mut in_ptr = vec![0usize; n + 1];
    for i in 0..n {
        for (j, _) in chain.row(i) {
            in_ptr[j + 1] += 1;
        }
    }
    for j in 0..n {
        in_ptr[j + 1] += in_ptr[j];
    }
    let mut fill = in_ptr.clone();
    let mut in_from = vec![0u32; in_ptr[n]];
    let mut in_rate = vec![0.0f64; in_ptr[n]];
    let mut up = vec![0.0f64; n];
    let mut down = vec![0.0f64; n];
    for i in 0..n {
        for (j, r) in chain.row(i) {
            in_from[fill[j]] = i as u32;
            in_rate[fill[j]] = r;
            fill[j] += 1;
            if level[j] > level[i] {
                up[i] += r;
            } else {
                down[i] += r;
            }
        }
    }

    let mut pi = vec![1.0 / n as f64; n];
    let mut mass = vec![0.0f64; levels];
    let mut up_l = vec![0.0f64; levels];
    let mut down_l = vec![0.0f64; levels];
    let mut p = vec![0.0f64; levels];
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    for iter in 1..=opts.max_iterations {
        // forward then backward sweep
        let sweep = |pi: &mut [f64], j: usize| {
            let e = chain.exit_rate(j);
            if e > 0.0 {
                let s: f64 = (in_ptr[j]..in_ptr[j + 1]).map(|k| pi[in_from[k] as usize] * in_rate[k]).sum();
                pi[j] = s / e;
            }
        };
        for j in 0..n {
            sweep(&mut pi, j);
        }
        for j in (0..n).rev() {
            sweep(&mut pi, j);
        }

        // lump by level and rescale to the lumped birth-death law
        mass.iter_mut().for_each(|v| *v = 0.0);
        up_l.iter_mut().for_each(|v| *v = 0.0);
        down_l.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let l = level[i] as usize;
            mass[l] += pi[i];
            up_l[l] += pi[i] * up[i];
            down_l[l] += pi[i] * down[i];
        }
        p[0] = 1.0;
        let mut total = 1.0;
        for l in 1..levels {
            p[l] = if mass[l] > 0.0 && down_l[l] > 0.0 && mass[l - 1] > 0.0 {
                p[l - 1] * (up_l[l - 1] / mass[l - 1]) / (down_l[l] / mass[l])
            } else {
                0.0
            };
            total += p[l];
        }
        for i in 0..n {
            let l = level[i] as usize;
            if mass[l] > 0.0 {
                pi[i] *= p[l] / total / mass[l];
            }
        }

        let (inf, _) = residuals(chain, &pi);
        if inf < 1e-3 * opts.tolerance {
            return Ok((pi, iter));
        }
        if inf < best * 0.999 {
            best = inf;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= 25 {
                return Ok((pi, iter));
            }
        }
    }
    Ok((pi, opts.max_iterations))
}
