//! The truncated `B^s_1` Besov prior.
//!
//! With `α_ℓ = ℓ^{s/d-1/2}` the prior is the product of the Laplace laws
//! `ρ_ℓ(dx) = (α_ℓ/2) e^{-α_ℓ|x|} dx`, `ℓ = 1..N`. Densities are handled in
//! log space throughout; `α_ℓ` grows polynomially and products of densities
//! overflow long before `N = 1024`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{laplace_inverse_cdf, open_unit, restream, stream_rng};
use crate::wavelet::{self, GridFunction};

/// Smoothness, dimension, truncation and ambient order of the prior.
///
/// Integrability is fixed to `p = 1`. The ambient order `t` is the order of
/// the weighted-ℓ1 norm in which small balls are measured and must satisfy
/// `t < s - d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesovParams {
    pub s: f64,
    pub d: usize,
    pub n: usize,
    pub t: f64,
}

impl BesovParams {
    /// Parameters with the default ambient order `t = s - d - 0.1`.
    pub fn new(s: f64, d: usize, n: usize) -> Result<Self> {
        Self::with_ambient(s, d, n, Self::default_ambient(s, d))
    }

    pub fn with_ambient(s: f64, d: usize, n: usize, t: f64) -> Result<Self> {
        if !(s.is_finite() && s > 0.0) {
            return Err(invalid("s", format!("smoothness must be positive, got {s}")));
        }
        if d != 1 && d != 2 {
            return Err(invalid("d", format!("dimension must be 1 or 2, got {d}")));
        }
        if n == 0 {
            return Err(invalid("N", "truncation must be at least 1"));
        }
        if wavelet::complete_levels(n, d).is_none() {
            return Err(invalid(
                "N",
                format!("truncation {n} does not complete a wavelet level (need N = 2^(d·J))"),
            ));
        }
        if !(t.is_finite() && t < s - d as f64) {
            return Err(invalid(
                "t",
                format!("ambient order must satisfy t < s - d = {}, got {t}", s - d as f64),
            ));
        }
        Ok(Self { s, d, n, t })
    }

    pub fn default_ambient(s: f64, d: usize) -> f64 {
        s - d as f64 - 0.1
    }

    /// `α_ℓ = ℓ^{s/d - 1/2}`, the rate of the ℓ-th Laplace factor.
    pub fn alpha(&self, ell: usize) -> f64 {
        (ell as f64).powf(self.s / self.d as f64 - 0.5)
    }

    pub fn alphas(&self) -> Vec<f64> {
        (1..=self.n).map(|l| self.alpha(l)).collect()
    }

    /// Weights `ℓ^{order/d - 1/2}` of the weighted-ℓ1 norm of the given order.
    pub fn norm_weights(&self, order: f64) -> Vec<f64> {
        (1..=self.n).map(|l| besov_weight(l, self.d, order, 1.0)).collect()
    }

    /// Returns a copy with a different truncation.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        Self::with_ambient(self.s, self.d, n, self.t)
    }
}

/// `ℓ^{p(order/d + 1/2) - 1}`.
pub fn besov_weight(ell: usize, d: usize, order: f64, p: f64) -> f64 {
    (ell as f64).powf(p * (order / d as f64 + 0.5) - 1.0)
}

/// `(Σ_ℓ w_ℓ |c_ℓ|^p)^{1/p}` on raw coefficients.
pub fn besov_norm_of(coeffs: &[f64], d: usize, order: f64, p: f64) -> f64 {
    let sum: f64 = coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| besov_weight(i + 1, d, order, p) * c.abs().powf(p))
        .sum();
    if p == 1.0 {
        sum
    } else {
        sum.powf(1.0 / p)
    }
}

/// `Σ w_ℓ |x_ℓ|` for precomputed weights.
#[inline]
pub fn weighted_l1(weights: &[f64], x: &[f64]) -> f64 {
    weights.iter().zip(x).map(|(w, v)| w * v.abs()).sum()
}

/// Finite coefficient vector `(c_ℓ)_{ℓ≤N}` tied to the prior it lives under.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    pub params: BesovParams,
    pub coeffs: Vec<f64>,
}

impl CoefficientField {
    pub fn new(params: BesovParams, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != params.n {
            return Err(Error::DimensionMismatch {
                expected: params.n,
                got: coeffs.len(),
                context: "coefficient field",
            });
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(invalid("coeffs", "all coefficients must be finite"));
        }
        Ok(Self { params, coeffs })
    }

    pub fn zeros(params: BesovParams) -> Self {
        Self {
            params,
            coeffs: vec![0.0; params.n],
        }
    }

    /// Unit vector `e_ℓ` (1-based).
    pub fn unit(params: BesovParams, ell: usize) -> Self {
        let mut f = Self::zeros(params);
        f.coeffs[ell - 1] = 1.0;
        f
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `‖·‖_{B^{order}_p}` of the field.
    pub fn besov_norm(&self, order: f64, p: f64) -> f64 {
        besov_norm_of(&self.coeffs, self.params.d, order, p)
    }

    /// `‖·‖_{B^s_1} = Σ α_ℓ |c_ℓ|`, the Onsager–Machlup functional of the prior.
    pub fn prior_norm(&self) -> f64 {
        self.besov_norm(self.params.s, 1.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            params: self.params,
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        ensure_same(self, other)?;
        Ok(Self {
            params: self.params,
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        ensure_same(self, other)?;
        Ok(Self {
            params: self.params,
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn synthesize(&self, grid_size: usize) -> Result<GridFunction> {
        wavelet::synthesize(&self.coeffs, self.params.d, grid_size)
    }

    pub fn analyze(f: &GridFunction, params: BesovParams) -> Result<Self> {
        if f.dim != params.d {
            return Err(Error::DimensionMismatch {
                expected: params.d,
                got: f.dim,
                context: "grid function dimension",
            });
        }
        Self::new(params, wavelet::analyze(f, params.n)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldRepr {
    s: f64,
    d: usize,
    #[serde(rename = "N")]
    n: usize,
    coeffs: Vec<f64>,
}

impl Serialize for CoefficientField {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        FieldRepr {
            s: self.params.s,
            d: self.params.d,
            n: self.params.n,
            coeffs: self.coeffs.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CoefficientField {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = FieldRepr::deserialize(deserializer)?;
        let params = BesovParams::new(repr.s, repr.d, repr.n).map_err(serde::de::Error::custom)?;
        CoefficientField::new(params, repr.coeffs).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn ensure_same(a: &CoefficientField, b: &CoefficientField) -> Result<()> {
    if a.params.n != b.params.n || a.params.d != b.params.d || a.params.s != b.params.s {
        return Err(Error::ParamsMismatch);
    }
    Ok(())
}

/// Per-coordinate scales `ℓ^{-(s/d-1/2)} = 1/α_ℓ` of prior draws.
pub(crate) fn prior_scales(params: &BesovParams) -> Vec<f64> {
    params.alphas().iter().map(|a| 1.0 / a).collect()
}

/// A reusable source of prior draws; draw `i` depends only on `(seed, i)`.
#[derive(Clone)]
pub struct PriorSampler {
    scales: Vec<f64>,
    base: ChaCha8Rng,
}

impl PriorSampler {
    pub fn new(params: &BesovParams, seed: u64) -> Self {
        Self {
            scales: prior_scales(params),
            base: stream_rng(seed, 0),
        }
    }

    pub fn dim(&self) -> usize {
        self.scales.len()
    }

    /// Writes draw number `index` into `out`.
    pub fn draw_into(&self, index: u64, out: &mut [f64]) {
        let mut rng = restream(&self.base, index);
        for (o, scale) in out.iter_mut().zip(&self.scales) {
            *o = scale * laplace_inverse_cdf(open_unit(&mut rng));
        }
    }

    pub fn draw(&self, index: u64) -> Vec<f64> {
        let mut out = vec![0.0; self.scales.len()];
        self.draw_into(index, &mut out);
        out
    }
}

/// `count` independent prior draws. Output depends only on `(params, seed, count)`.
pub fn sample_prior(params: &BesovParams, seed: u64, count: usize) -> Vec<CoefficientField> {
    let sampler = PriorSampler::new(params, seed);
    (0..count as u64)
        .into_par_iter()
        .map(|i| CoefficientField {
            params: *params,
            coeffs: sampler.draw(i),
        })
        .collect()
}

/// Unnormalised log prior density `-Σ α_ℓ |u_ℓ|`.
pub fn log_prior_density(u: &CoefficientField) -> f64 {
    -u.prior_norm()
}

/// `log dλ_h/dλ (u) = Σ_ℓ (-α_ℓ|h_ℓ - u_ℓ| + α_ℓ|u_ℓ|)`.
pub fn log_rn_derivative(h: &CoefficientField, u: &CoefficientField) -> Result<f64> {
    ensure_same(h, u)?;
    Ok(log_rn_with(&h.params.alphas(), &h.coeffs, &u.coeffs))
}

#[inline]
pub(crate) fn log_rn_with(alphas: &[f64], h: &[f64], u: &[f64]) -> f64 {
    alphas
        .iter()
        .zip(h.iter().zip(u))
        .map(|(a, (hl, ul))| a * (ul.abs() - (hl - ul).abs()))
        .sum()
}

/// Hellinger affinity `∫ √(ρ_h ρ)` of a Laplace factor of rate `alpha` and
/// its shift by `h`: `e^{-α|h|/2}(1 + α|h|/2)`.
pub fn hellinger_factor(h: f64, alpha: f64) -> f64 {
    let x = 0.5 * alpha * h.abs();
    (-x).exp() * (1.0 + x)
}

/// Kakutani product of the per-coordinate Hellinger factors.
pub fn hellinger_integral(h: &CoefficientField) -> f64 {
    let log: f64 = h
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, hl)| hellinger_factor(*hl, h.params.alpha(i + 1)).ln())
        .sum();
    log.exp()
}

/// `Σ ℓ^{2s/d-1} h_ℓ²`; finite exactly for shifts that keep the prior equivalent.
pub fn quasi_invariance_diagnostic(h: &CoefficientField) -> f64 {
    h.coeffs
        .iter()
        .enumerate()
        .map(|(i, hl)| h.params.alpha(i + 1).powi(2) * hl * hl)
        .sum()
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Logarithmic derivative along `h`: `β_h(u) = -Σ α_ℓ sign(u_ℓ) h_ℓ`, with `sign(0) = 0`.
pub fn log_derivative(h: &CoefficientField, u: &CoefficientField) -> Result<f64> {
    ensure_same(h, u)?;
    Ok(h.coeffs
        .iter()
        .zip(&u.coeffs)
        .enumerate()
        .map(|(i, (hl, ul))| -h.params.alpha(i + 1) * sign(*ul) * hl)
        .sum())
}

/// Log Radon–Nikodym derivative recovered by integrating the logarithmic
/// derivative along the segment from `u` to `u - h`.
///
/// Along that segment `log ρ(u - σh)` has derivative `-β_h(u - σh)` in `σ`, so
/// `log R_h(u) = -∫₀¹ β_h(u - σh) dσ`. Each coordinate is piecewise constant
/// in `σ` with at most one break at `σ = u_ℓ/h_ℓ`, which makes the integral
/// exact.
pub fn log_rn_via_logderivative(h: &CoefficientField, u: &CoefficientField) -> Result<f64> {
    ensure_same(h, u)?;
    let mut total = 0.0;
    for (i, (&hl, &ul)) in h.coeffs.iter().zip(&u.coeffs).enumerate() {
        if hl == 0.0 {
            continue;
        }
        let alpha = h.params.alpha(i + 1);
        let crossing = ul / hl;
        let mut pieces = [(0.0, 1.0), (1.0, 1.0)];
        let count = if crossing > 0.0 && crossing < 1.0 {
            pieces = [(0.0, crossing), (crossing, 1.0)];
            2
        } else {
            1
        };
        let mut integral = 0.0;
        for &(lo, hi) in &pieces[..count] {
            let mid = 0.5 * (lo + hi);
            // β_{h_ℓ}(x) = -α sign(x) h_ℓ on this piece
            integral += (hi - lo) * (-alpha * sign(ul - mid * hl) * hl);
        }
        total -= integral;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogConcavityReport {
    pub passed: bool,
    /// Minimum of `log π(λa+(1-λ)b) - λ log π(a) - (1-λ) log π(b)` over the grid.
    pub min_slack: f64,
}

/// Checks midpoint log-concavity of the prior density along the segment `[b, a]`.
pub fn log_concavity_check(
    a: &CoefficientField,
    b: &CoefficientField,
    lambda_grid: &[f64],
) -> Result<LogConcavityReport> {
    ensure_same(a, b)?;
    if lambda_grid.is_empty() {
        return Err(Error::Empty("lambda grid"));
    }
    if let Some(bad) = lambda_grid.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(invalid("lambda_grid", format!("{bad} outside [0, 1]")));
    }
    let (la, lb) = (log_prior_density(a), log_prior_density(b));
    let mut min_slack = f64::INFINITY;
    for &lambda in lambda_grid {
        let mix = CoefficientField {
            params: a.params,
            coeffs: a
                .coeffs
                .iter()
                .zip(&b.coeffs)
                .map(|(x, y)| lambda * x + (1.0 - lambda) * y)
                .collect(),
        };
        let slack = log_prior_density(&mix) - lambda * la - (1.0 - lambda) * lb;
        min_slack = min_slack.min(slack);
    }
    Ok(LogConcavityReport {
        passed: min_slack >= -1e-12,
        min_slack,
    })
}

/// Random field with i.i.d. standard normal coefficients; test and CLI helper.
pub fn gaussian_field<R: Rng + ?Sized>(params: BesovParams, rng: &mut R) -> CoefficientField {
    use rand_distr::{Distribution, StandardNormal};
    CoefficientField {
        params,
        coeffs: (0..params.n).map(|_| StandardNormal.sample(rng)).collect(),
    }
}
