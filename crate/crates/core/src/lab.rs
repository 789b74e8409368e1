//! Monte Carlo estimation of small-ball probabilities under the prior and
//! the posterior, and the limit experiments built on them.
//!
//! Balls are open balls of the weighted-ℓ1 norm `Σ ℓ^{t'/d-1/2} |x_ℓ|`,
//! by default of the ambient order `t' = t`. Posterior probabilities are
//! self-normalised importance sampling estimates with the prior as proposal
//! and weights `e^{-Φ}`.
//!
//! Every estimate walks the same deterministic sample stream: draw `i` comes
//! from stream `i` of the seed, draws are processed in fixed blocks and block
//! sums are combined by pairwise summation, so results are independent of
//! thread count. All centers of one experiment share the draws (common
//! random numbers).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::besov::{ensure_same, log_rn_derivative, weighted_l1, BesovParams, CoefficientField, PriorSampler};
use crate::error::{invalid, Error, Result};
use crate::forward::{check_misfit_dim, Misfit};
use crate::sum::pairwise_columns;

const BLOCK: u64 = 8192;

/// Minimum effective sample size before a weighted estimate is flagged.
pub const MIN_EFFECTIVE_SAMPLES: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BallSpec {
    pub center: CoefficientField,
    pub radius: f64,
    pub norm_order: f64,
}

impl BallSpec {
    /// Ball in the ambient order `t` of the center's prior.
    pub fn new(center: CoefficientField, radius: f64) -> Result<Self> {
        let order = center.params.t;
        Self::with_order(center, radius, order)
    }

    pub fn with_order(center: CoefficientField, radius: f64, norm_order: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(invalid("radius", format!("ball radius must be positive, got {radius}")));
        }
        Ok(Self {
            center,
            radius,
            norm_order,
        })
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        let weights = self.center.params.norm_weights(self.norm_order);
        distance(&weights, u, &self.center.coeffs) < self.radius
    }
}

#[inline]
fn distance(weights: &[f64], u: &[f64], center: &[f64]) -> f64 {
    weights
        .iter()
        .zip(u.iter().zip(center))
        .map(|(w, (a, b))| w * (a - b).abs())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedEstimate {
    pub estimate: MonteCarloEstimate,
    pub effective_sample_size: f64,
    /// Effective sample size below [`MIN_EFFECTIVE_SAMPLES`].
    pub low_ess: bool,
}

/// The measure whose balls are estimated.
#[derive(Clone, Copy)]
pub enum Measure<'a> {
    Prior,
    /// Posterior with data misfit `Φ`.
    Posterior(&'a dyn Misfit),
}

/// Sums `f(draw_i, acc)` over draws `0..n` in fixed blocks.
fn reduce_draws<F>(sampler: &PriorSampler, n: u64, width: usize, f: F) -> Vec<f64>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let blocks = n.div_ceil(BLOCK);
    let partial: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![0.0; width];
            let mut draw = vec![0.0; sampler.dim()];
            for i in b * BLOCK..((b + 1) * BLOCK).min(n) {
                sampler.draw_into(i, &mut draw);
                f(&draw, &mut acc);
            }
            acc
        })
        .collect();
    pairwise_columns(&partial, width)
}

fn min_potential(sampler: &PriorSampler, n: u64, misfit: &dyn Misfit) -> f64 {
    (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut draw = vec![0.0; sampler.dim()];
            let mut best = f64::INFINITY;
            for i in b * BLOCK..((b + 1) * BLOCK).min(n) {
                sampler.draw_into(i, &mut draw);
                best = best.min(misfit.potential(&draw));
            }
            best
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// Per-draw importance weight closure: `e^{-(Φ - Φ_min)}`, or 1 for the prior.
fn weight_fn<'a>(measure: Measure<'a>, sampler: &PriorSampler, n: u64) -> impl Fn(&[f64]) -> f64 + Sync + 'a {
    let (misfit, shift) = match measure {
        Measure::Prior => (None, 0.0),
        Measure::Posterior(m) => (Some(m), min_potential(sampler, n, m)),
    };
    move |u: &[f64]| match misfit {
        None => 1.0,
        Some(m) => (-(m.potential(u) - shift)).exp(),
    }
}

fn check_samples(n_samples: u64) -> Result<()> {
    if n_samples == 0 {
        return Err(invalid("n_samples", "need at least one sample"));
    }
    Ok(())
}

fn check_center(center: &CoefficientField, prior: &BesovParams) -> Result<()> {
    if center.params.n != prior.n || center.params.d != prior.d || center.params.s != prior.s {
        return Err(Error::ParamsMismatch);
    }
    Ok(())
}

/// Unbiased estimate of `λ(B)` with binomial standard error.
pub fn estimate_prior_ball(
    spec: &BallSpec,
    prior: &BesovParams,
    n_samples: u64,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    check_samples(n_samples)?;
    check_center(&spec.center, prior)?;
    let sampler = PriorSampler::new(prior, seed);
    let weights = prior.norm_weights(spec.norm_order);
    let sums = reduce_draws(&sampler, n_samples, 1, |u, acc| {
        if distance(&weights, u, &spec.center.coeffs) < spec.radius {
            acc[0] += 1.0;
        }
    });
    let n = n_samples as f64;
    let p = sums[0] / n;
    Ok(MonteCarloEstimate {
        value: p,
        std_error: (p * (1.0 - p) / n).sqrt(),
        n_samples,
        seed,
    })
}

/// Running sums of one self-normalised indicator estimate.
#[derive(Debug, Clone, Copy)]
struct WeightedSums {
    total_w: f64,
    total_w2: f64,
    hit_w: f64,
    hit_w2: f64,
}

impl WeightedSums {
    fn finish(self, n_samples: u64, seed: u64) -> WeightedEstimate {
        let p = self.hit_w / self.total_w;
        let var = self.hit_w2 * (1.0 - 2.0 * p) + p * p * self.total_w2;
        let ess = self.total_w * self.total_w / self.total_w2;
        WeightedEstimate {
            estimate: MonteCarloEstimate {
                value: p,
                std_error: var.max(0.0).sqrt() / self.total_w,
                n_samples,
                seed,
            },
            effective_sample_size: ess,
            low_ess: ess < MIN_EFFECTIVE_SAMPLES,
        }
    }
}

/// Self-normalised estimate of `μ^y(B)` with delta-method standard error.
pub fn estimate_posterior_ball(
    spec: &BallSpec,
    misfit: &dyn Misfit,
    prior: &BesovParams,
    n_samples: u64,
    seed: u64,
) -> Result<WeightedEstimate> {
    let rows = weighted_ball_table(
        std::slice::from_ref(&spec.center),
        &[spec.radius],
        spec.norm_order,
        misfit,
        prior,
        n_samples,
        seed,
    )?;
    Ok(rows[0][0])
}

/// Posterior ball estimates for every `(radius, center)` pair on shared draws.
fn weighted_ball_table(
    centers: &[CoefficientField],
    radii: &[f64],
    norm_order: f64,
    misfit: &dyn Misfit,
    prior: &BesovParams,
    n_samples: u64,
    seed: u64,
) -> Result<Vec<Vec<WeightedEstimate>>> {
    check_samples(n_samples)?;
    check_misfit_dim(misfit, prior)?;
    for c in centers {
        check_center(c, prior)?;
    }
    if let Some(r) = radii.iter().find(|r| !(**r > 0.0)) {
        return Err(invalid("eps", format!("radius must be positive, got {r}")));
    }
    let sampler = PriorSampler::new(prior, seed);
    let weights = prior.norm_weights(norm_order);
    let weight = weight_fn(Measure::Posterior(misfit), &sampler, n_samples);
    let cells = radii.len() * centers.len();
    let sums = reduce_draws(&sampler, n_samples, 2 + 2 * cells, |u, acc| {
        let w = weight(u);
        acc[0] += w;
        acc[1] += w * w;
        for (ci, c) in centers.iter().enumerate() {
            let dist = distance(&weights, u, &c.coeffs);
            for (ri, r) in radii.iter().enumerate() {
                if dist < *r {
                    let k = 2 + 2 * (ri * centers.len() + ci);
                    acc[k] += w;
                    acc[k + 1] += w * w;
                }
            }
        }
    });
    Ok((0..radii.len())
        .map(|ri| {
            (0..centers.len())
                .map(|ci| {
                    let k = 2 + 2 * (ri * centers.len() + ci);
                    WeightedSums {
                        total_w: sums[0],
                        total_w2: sums[1],
                        hit_w: sums[k],
                        hit_w2: sums[k + 1],
                    }
                    .finish(n_samples, seed)
                })
                .collect()
        })
        .collect())
}

/// One radius of a ball-ratio experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub eps: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub theory: f64,
    /// `estimate / theory - 1`.
    pub ratio_error: f64,
    pub numerator_hits: u64,
    pub denominator_hits: u64,
    /// A ball received no draws; the estimate is undefined.
    pub degenerate: bool,
}

/// Estimates `m(B_ε(num))/m(B_ε(den))` for each `ε` on shared draws.
#[allow(clippy::too_many_arguments)]
fn ball_ratio(
    numerator: &CoefficientField,
    denominator: &CoefficientField,
    eps_grid: &[f64],
    measure: Measure<'_>,
    prior: &BesovParams,
    n_samples: u64,
    seed: u64,
    theory: f64,
) -> Result<Vec<RatioRow>> {
    check_samples(n_samples)?;
    check_center(numerator, prior)?;
    check_center(denominator, prior)?;
    if eps_grid.is_empty() {
        return Err(Error::Empty("eps grid"));
    }
    if let Some(e) = eps_grid.iter().find(|e| !(**e > 0.0)) {
        return Err(invalid("eps", format!("radius must be positive, got {e}")));
    }
    if let Measure::Posterior(m) = measure {
        check_misfit_dim(m, prior)?;
    }
    let sampler = PriorSampler::new(prior, seed);
    let weights = prior.norm_weights(prior.t);
    let weight = weight_fn(measure, &sampler, n_samples);
    const W: usize = 7;
    let sums = reduce_draws(&sampler, n_samples, W * eps_grid.len(), |u, acc| {
        let d_num = distance(&weights, u, &numerator.coeffs);
        let d_den = distance(&weights, u, &denominator.coeffs);
        let max_eps = eps_grid.iter().cloned().fold(0.0, f64::max);
        if d_num >= max_eps && d_den >= max_eps {
            return;
        }
        let w = weight(u);
        for (k, eps) in eps_grid.iter().enumerate() {
            let x = if d_num < *eps { w } else { 0.0 };
            let y = if d_den < *eps { w } else { 0.0 };
            let a = &mut acc[W * k..W * (k + 1)];
            a[0] += x;
            a[1] += y;
            a[2] += x * x;
            a[3] += x * y;
            a[4] += y * y;
            a[5] += f64::from(u8::from(d_num < *eps));
            a[6] += f64::from(u8::from(d_den < *eps));
        }
    });
    Ok(eps_grid
        .iter()
        .enumerate()
        .map(|(k, &eps)| {
            let a = &sums[W * k..W * (k + 1)];
            let degenerate = a[5] == 0.0 || a[6] == 0.0;
            let (estimate, std_error) = if a[1] > 0.0 {
                let r = a[0] / a[1];
                let var = a[2] - 2.0 * r * a[3] + r * r * a[4];
                (r, var.max(0.0).sqrt() / a[1])
            } else {
                (f64::NAN, f64::NAN)
            };
            RatioRow {
                eps,
                estimate,
                std_error,
                theory,
                ratio_error: estimate / theory - 1.0,
                numerator_hits: a[5] as u64,
                denominator_hits: a[6] as u64,
                degenerate,
            }
        })
        .collect())
}

/// Onsager–Machlup ratio `m(B_ε(z2))/m(B_ε(z1))` against its small-ball
/// limit `exp(I(z1) - I(z2))`, with `I = ‖·‖_{B^s_1}` for the prior and
/// `I = Φ + ‖·‖_{B^s_1}` for the posterior.
pub fn om_ratio_experiment(
    z1: &CoefficientField,
    z2: &CoefficientField,
    eps_grid: &[f64],
    measure: Measure<'_>,
    n_samples: u64,
    seed: u64,
) -> Result<Vec<RatioRow>> {
    ensure_same(z1, z2)?;
    let functional = |z: &CoefficientField| match measure {
        Measure::Prior => z.prior_norm(),
        Measure::Posterior(m) => m.potential(&z.coeffs) + z.prior_norm(),
    };
    let theory = (functional(z1) - functional(z2)).exp();
    ball_ratio(z2, z1, eps_grid, measure, &z1.params, n_samples, seed, theory)
}

/// Shifted-to-unshifted ball ratio `λ_h(B_ε(u))/λ(B_ε(u)) = λ(B_ε(u-h))/λ(B_ε(u))`
/// against the Radon–Nikodym derivative `R_h(u)`.
pub fn rn_limit_experiment(
    u: &CoefficientField,
    h: &CoefficientField,
    eps_grid: &[f64],
    n_samples: u64,
    seed: u64,
) -> Result<Vec<RatioRow>> {
    let theory = log_rn_derivative(h, u)?.exp();
    let shifted = u.sub(h)?;
    ball_ratio(
        &shifted,
        u,
        eps_grid,
        Measure::Prior,
        &u.params,
        n_samples,
        seed,
        theory,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AndersonRow {
    pub shift_index: usize,
    /// `λ(B_ε(0) + x)`.
    pub shifted: MonteCarloEstimate,
    /// Standard error of the paired difference `1_{B+x} - 1_B`.
    pub diff_std_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AndersonReport {
    pub centered: MonteCarloEstimate,
    pub rows: Vec<AndersonRow>,
    pub passed: bool,
}

/// Checks `λ(B_ε(0) + x) ≤ λ(B_ε(0)) + 3·SE` for each shift, on shared draws.
pub fn anderson_check(
    eps: f64,
    prior: &BesovParams,
    shifts: &[CoefficientField],
    n_samples: u64,
    seed: u64,
) -> Result<AndersonReport> {
    check_samples(n_samples)?;
    if !(eps > 0.0) {
        return Err(invalid("eps", format!("radius must be positive, got {eps}")));
    }
    for x in shifts {
        check_center(x, prior)?;
    }
    let sampler = PriorSampler::new(prior, seed);
    let weights = prior.norm_weights(prior.t);
    let s = shifts.len();
    let sums = reduce_draws(&sampler, n_samples, 1 + 2 * s, |u, acc| {
        let inside0 = weighted_l1(&weights, u) < eps;
        if inside0 {
            acc[0] += 1.0;
        }
        for (k, x) in shifts.iter().enumerate() {
            let inside = distance(&weights, u, &x.coeffs) < eps;
            if inside {
                acc[1 + k] += 1.0;
            }
            if inside != inside0 {
                acc[1 + s + k] += 1.0;
            }
        }
    });
    let n = n_samples as f64;
    let binomial = |hits: f64| {
        let p = hits / n;
        MonteCarloEstimate {
            value: p,
            std_error: (p * (1.0 - p) / n).sqrt(),
            n_samples,
            seed,
        }
    };
    let centered = binomial(sums[0]);
    let rows: Vec<AndersonRow> = (0..s)
        .map(|k| {
            let shifted = binomial(sums[1 + k]);
            let mean = (sums[1 + k] - sums[0]) / n;
            let second = sums[1 + s + k] / n;
            let diff_std_error = ((second - mean * mean).max(0.0) / n).sqrt();
            AndersonRow {
                shift_index: k,
                shifted,
                diff_std_error,
                passed: shifted.value <= centered.value + 3.0 * diff_std_error,
            }
        })
        .collect();
    Ok(AndersonReport {
        centered,
        passed: rows.iter().all(|r| r.passed),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub argmax: usize,
    pub runner_up: Option<usize>,
    /// The best two candidates have overlapping 3-SE intervals.
    pub tie: bool,
    pub estimates: Vec<WeightedEstimate>,
}

/// For each radius, the candidate center with the largest posterior ball mass.
pub fn mode_sweep(
    eps_grid: &[f64],
    candidates: &[CoefficientField],
    misfit: &dyn Misfit,
    prior: &BesovParams,
    n_samples: u64,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if candidates.is_empty() {
        return Err(Error::Empty("candidate grid"));
    }
    if eps_grid.is_empty() {
        return Err(Error::Empty("eps grid"));
    }
    let table = weighted_ball_table(candidates, eps_grid, prior.t, misfit, prior, n_samples, seed)?;
    Ok(eps_grid
        .iter()
        .zip(table)
        .map(|(&eps, estimates)| {
            let mut order: Vec<usize> = (0..estimates.len()).collect();
            order.sort_by(|&a, &b| {
                estimates[b]
                    .estimate
                    .value
                    .total_cmp(&estimates[a].estimate.value)
                    .then(a.cmp(&b))
            });
            let argmax = order[0];
            let runner_up = order.get(1).copied();
            let tie = runner_up.is_some_and(|r| {
                let (best, next) = (estimates[argmax].estimate, estimates[r].estimate);
                best.value - 3.0 * best.std_error <= next.value + 3.0 * next.std_error
            });
            SweepRow {
                eps,
                argmax,
                runner_up,
                tie,
                estimates,
            }
        })
        .collect())
}
