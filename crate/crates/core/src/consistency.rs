//! Repeated-observation experiments: MAP estimates `u_n` of `I_n` for a
//! growing number `n` of i.i.d. observations of a fixed truth.
//!
//! Each `(n, replicate)` cell draws its own data from a seed derived from the
//! base seed and the cell coordinates, so cells can run in any order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::besov::{BesovParams, CoefficientField};
use crate::error::{invalid, Error, Result};
use crate::forward::{ForwardProblem, NoiseMode, Observation};
use crate::rng::cell_seed;
use crate::solver::{solve_map, SolverConfig};

/// Slack allowed between consecutive medians by the monotonicity verdict.
pub const MONOTONE_SLACK: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencySchedule {
    pub n_values: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
}

impl ConsistencySchedule {
    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() {
            return Err(Error::Empty("schedule"));
        }
        if self.n_values[0] == 0 {
            return Err(invalid("schedule", "observation counts must be positive"));
        }
        if self.n_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("schedule", "observation counts must be strictly increasing"));
        }
        if self.replicates == 0 {
            return Err(invalid("replicates", "need at least one replicate"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub n: usize,
    pub replicate: usize,
    /// `|Σ^{-1/2}(G(u_n) - G(u†))|²`.
    pub residual_sq: f64,
    /// `‖u_n‖_{B^s_1}`.
    pub penalty: f64,
    /// `‖u_n - u_ref‖_{B^{s-1/2}_1}` with `u_ref` the same replicate's largest-`n` estimate.
    pub drift: f64,
    pub converged: bool,
}

/// Order of the norm in which drift is measured.
pub fn drift_order(prior: &BesovParams) -> f64 {
    prior.s - 0.5
}

pub fn run_consistency(
    truth: &CoefficientField,
    problem: &ForwardProblem,
    prior: &BesovParams,
    schedule: &ConsistencySchedule,
    solver: &SolverConfig,
    noise: NoiseMode,
) -> Result<Vec<ConsistencyRow>> {
    schedule.validate()?;
    solver.validate()?;
    if truth.params.n != prior.n || problem.model.input_dim() != prior.n {
        return Err(Error::DimensionMismatch {
            expected: prior.n,
            got: truth.params.n,
            context: "truth / forward model vs prior",
        });
    }
    let clean = problem.model.apply(&truth.coeffs)?;
    let cells: Vec<(usize, usize)> = schedule
        .n_values
        .iter()
        .flat_map(|&n| (0..schedule.replicates).map(move |r| (n, r)))
        .collect();
    let solved: Vec<(usize, usize, CoefficientField, bool)> = cells
        .par_iter()
        .map(|&(n, r)| {
            let seed = cell_seed(schedule.seed, n as u64, r as u64);
            let ys = problem.generate_observations(truth, n, seed, noise)?;
            let obs = Observation::from_repeated(problem, &ys)?;
            let result = solve_map(&obs, prior, solver)?;
            Ok((n, r, result.u_hat, result.converged))
        })
        .collect::<Result<_>>()?;

    let largest = *schedule.n_values.last().expect("validated non-empty");
    let reference: Vec<&CoefficientField> = (0..schedule.replicates)
        .map(|r| {
            solved
                .iter()
                .find(|(n, rep, _, _)| *n == largest && *rep == r)
                .map(|(_, _, u, _)| u)
                .expect("every cell solved")
        })
        .collect();
    let order = drift_order(prior);
    solved
        .iter()
        .map(|(n, r, u, converged)| {
            let misfit = problem.noise.whiten(&(problem.model.apply(&u.coeffs)? - &clean));
            Ok(ConsistencyRow {
                n: *n,
                replicate: *r,
                residual_sq: misfit.norm_squared(),
                penalty: u.prior_norm(),
                drift: u.sub(reference[*r])?.besov_norm(order, 1.0),
                converged: *converged,
            })
        })
        .collect()
}

/// Upper bound for the median penalty: `‖u†‖_{B^s_1} + 2·E|Σ^{-1/2}ξ|² + 0.5`.
pub fn penalty_bound(truth: &CoefficientField, problem: &ForwardProblem) -> f64 {
    truth.prior_norm() + 2.0 * problem.noise.expected_whitened_sq() + 0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub n: usize,
    pub count: usize,
    pub median_residual: f64,
    pub q1_residual: f64,
    pub q3_residual: f64,
    pub mean_residual: f64,
    /// Standard error of `mean_residual` across replicates.
    pub mean_residual_se: f64,
    pub median_penalty: f64,
    pub median_drift: f64,
    pub all_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencySummary {
    pub levels: Vec<LevelSummary>,
    /// Consecutive medians never grow by more than [`MONOTONE_SLACK`] and the
    /// last median is below the first.
    pub monotone: bool,
    /// First median residual over last median residual.
    pub decay_factor: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

pub fn consistency_summary(rows: &[ConsistencyRow]) -> Result<ConsistencySummary> {
    if rows.is_empty() {
        return Err(Error::Empty("consistency table"));
    }
    let mut ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let levels: Vec<LevelSummary> = ns
        .iter()
        .map(|&n| {
            let cell: Vec<&ConsistencyRow> = rows.iter().filter(|r| r.n == n).collect();
            let count = cell.len();
            let residuals = sorted(cell.iter().map(|r| r.residual_sq).collect());
            let mean = residuals.iter().sum::<f64>() / count as f64;
            let var = if count > 1 {
                residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (count - 1) as f64
            } else {
                0.0
            };
            LevelSummary {
                n,
                count,
                median_residual: quantile(&residuals, 0.5),
                q1_residual: quantile(&residuals, 0.25),
                q3_residual: quantile(&residuals, 0.75),
                mean_residual: mean,
                mean_residual_se: (var / count as f64).sqrt(),
                median_penalty: quantile(&sorted(cell.iter().map(|r| r.penalty).collect()), 0.5),
                median_drift: quantile(&sorted(cell.iter().map(|r| r.drift).collect()), 0.5),
                all_converged: cell.iter().all(|r| r.converged),
            }
        })
        .collect();
    let medians: Vec<f64> = levels.iter().map(|l| l.median_residual).collect();
    let first = medians[0];
    let last = *medians.last().expect("non-empty");
    let stepwise = medians.windows(2).all(|w| w[1] <= MONOTONE_SLACK * w[0]);
    Ok(ConsistencySummary {
        monotone: stepwise && (medians.len() == 1 || last < first),
        decay_factor: first / last,
        levels,
    })
}
