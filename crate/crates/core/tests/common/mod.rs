//! Independent oracles shared by the integration tests: deterministic
//! quadrature, closed-form Laplace probabilities and a cyclic
//! coordinate-descent solver. None of this goes through the library's
//! sampling or optimisation code.

#![allow(dead_code)]

use besovmap::forward::{ForwardModel, ForwardProblem, ModelKind, NoiseCovariance};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn simpson(a: f64, fa: f64, fm: f64, b: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &impl Fn(f64) -> f64,
    a: f64,
    fa: f64,
    m: f64,
    fm: f64,
    b: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, fa, flm, m, fm);
    let right = simpson(m, fm, frm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, fa, lm, flm, m, fm, left, 0.5 * tol, depth - 1)
        + adaptive(f, m, fm, rm, frm, b, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature on `[a, b]`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(a, fa, fm, b, fb);
    adaptive(&f, a, fa, m, fm, b, fb, whole, tol, 50)
}

/// Quadrature over `[a, b]` split at the given interior kinks.
pub fn integrate_piecewise(f: impl Fn(f64) -> f64, a: f64, b: f64, kinks: &[f64], tol: f64) -> f64 {
    let mut points = vec![a];
    let mut inner: Vec<f64> = kinks.iter().copied().filter(|k| *k > a && *k < b).collect();
    inner.sort_by(f64::total_cmp);
    points.extend(inner);
    points.push(b);
    let pieces = (points.len() - 1) as f64;
    points.windows(2).map(|w| integrate(&f, w[0], w[1], tol / pieces)).sum()
}

/// CDF of the Laplace law with density `(α/2)e^{-α|x|}`.
pub fn laplace_cdf(x: f64, alpha: f64) -> f64 {
    if x < 0.0 {
        0.5 * (alpha * x).exp()
    } else {
        1.0 - 0.5 * (-alpha * x).exp()
    }
}

pub fn laplace_pdf(x: f64, alpha: f64) -> f64 {
    0.5 * alpha * (-alpha * x.abs()).exp()
}

/// Mass of `(c - r, c + r)` under the Laplace law of rate `alpha`.
pub fn interval_mass(c: f64, r: f64, alpha: f64) -> f64 {
    laplace_cdf(c + r, alpha) - laplace_cdf(c - r, alpha)
}

/// Mass of `{w1|x1 - z1| + w2|x2 - z2| < eps}` under the product of two
/// Laplace laws with rates `alphas`, by quadrature in `x1` and the exact CDF
/// in `x2`.
pub fn ball_mass_2d(center: [f64; 2], eps: f64, weights: [f64; 2], alphas: [f64; 2]) -> f64 {
    let half = eps / weights[0];
    let (lo, hi) = (center[0] - half, center[0] + half);
    let inner = |x1: f64| {
        let rest = eps - weights[0] * (x1 - center[0]).abs();
        if rest <= 0.0 {
            return 0.0;
        }
        laplace_pdf(x1, alphas[0]) * interval_mass(center[1], rest / weights[1], alphas[1])
    };
    integrate_piecewise(inner, lo, hi, &[0.0, center[0]], 1e-13)
}

/// Hellinger affinity of the Laplace law of rate `alpha` and its shift by `h`.
pub fn hellinger_quadrature(alpha: f64, h: f64) -> f64 {
    let f = |x: f64| (laplace_pdf(x - h, alpha) * laplace_pdf(x, alpha)).sqrt();
    // tails beyond L carry less than e^{-αL/2}·(stuff) ≪ 1e-14
    let reach = 80.0 / alpha + h.abs();
    integrate_piecewise(f, -reach, reach, &[0.0, h], 1e-14)
}

/// Cyclic coordinate descent for `½(y-Au)ᵀW(y-Au) + Σ α|u|` with a
/// symmetric positive definite weight matrix `W`.
pub fn coordinate_descent(a: &DMatrix<f64>, w: &DMatrix<f64>, y: &[f64], alphas: &[f64]) -> Vec<f64> {
    let n = a.ncols();
    let yv = nalgebra::DVector::from_column_slice(y);
    let q = a.transpose() * w * a;
    let b = a.transpose() * w * yv;
    let mut u = vec![0.0; n];
    for _sweep in 0..200_000 {
        let mut change: f64 = 0.0;
        for l in 0..n {
            let mut partial = b[l];
            for k in 0..n {
                if k != l {
                    partial -= q[(l, k)] * u[k];
                }
            }
            let new = if partial > alphas[l] {
                (partial - alphas[l]) / q[(l, l)]
            } else if partial < -alphas[l] {
                (partial + alphas[l]) / q[(l, l)]
            } else {
                0.0
            };
            change = change.max((new - u[l]).abs());
            u[l] = new;
        }
        if change < 1e-15 {
            break;
        }
    }
    u
}

/// `½(y-Au)ᵀW(y-Au) + Σ α|u|` evaluated directly.
pub fn lasso_objective(a: &DMatrix<f64>, w: &DMatrix<f64>, y: &[f64], alphas: &[f64], u: &[f64]) -> f64 {
    let r = nalgebra::DVector::from_column_slice(y) - a * nalgebra::DVector::from_column_slice(u);
    0.5 * r.dot(&(w * &r)) + u.iter().zip(alphas).map(|(x, a)| a * x.abs()).sum::<f64>()
}

/// A random well-posed linear problem with correlated noise.
pub fn random_linear_problem(n: usize, j: usize, seed: u64) -> ForwardProblem {
    let mut r = rng(seed);
    let a = DMatrix::from_fn(j, n, |_, _| r.random_range(-1.0..1.0));
    let b = DMatrix::from_fn(j, j, |_, _| r.random_range(-0.2..0.2));
    let sigma = &b * b.transpose() + DMatrix::identity(j, j) * 0.3;
    ForwardProblem::new(
        ForwardModel::new(ModelKind::LinearConv, a).unwrap(),
        NoiseCovariance::new(sigma).unwrap(),
    )
    .unwrap()
}

pub fn identity_problem(n: usize, variance: f64) -> ForwardProblem {
    ForwardProblem::new(
        ForwardModel::new(ModelKind::LinearConv, DMatrix::identity(n, n)).unwrap(),
        NoiseCovariance::scaled_identity(n, variance).unwrap(),
    )
    .unwrap()
}

/// Mean and standard error of a sample.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
