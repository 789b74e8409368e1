//! Forward maps, Gaussian observation noise and the data misfit
//! `Φ(u; y) = ½|Σ^{-1/2}(y - G(u))|²`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::besov::{BesovParams, CoefficientField};
use crate::error::{invalid, Error, Result};
use crate::rng::stream_rng;
use crate::wavelet::{self, GridFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// `G(u) = A u`.
    LinearConv,
    /// `G_j(u) = m_j + m_j³/3` with `m = A u`.
    NonlinearCubic,
}

/// A forward map `R^N → R^J` built on a fixed matrix `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardModel {
    pub kind: ModelKind,
    matrix: DMatrix<f64>,
}

/// Periodic box filter covering `width` of each axis, normalised to unit sum.
pub fn box_kernel(grid_size: usize, d: usize, width: f64) -> Result<GridFunction> {
    if !(width > 0.0 && width <= 1.0) {
        return Err(invalid("width", format!("box width must lie in (0, 1], got {width}")));
    }
    let taps = ((width * grid_size as f64).round() as usize).max(1);
    let total = grid_size.pow(d as u32);
    let mut values = vec![0.0; total];
    let norm = 1.0 / (taps.pow(d as u32)) as f64;
    for (i, v) in values.iter_mut().enumerate() {
        let (r, c) = if d == 1 { (0, i) } else { (i / grid_size, i % grid_size) };
        if r < taps && c < taps {
            *v = norm;
        }
    }
    GridFunction::new(values, grid_size, d)
}

fn circular_convolve(kernel: &GridFunction, f: &GridFunction) -> Vec<f64> {
    let m = f.grid_size;
    let mut out = vec![0.0; f.values.len()];
    let taps: Vec<(usize, f64)> = kernel
        .values
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, k)| *k != 0.0)
        .collect();
    if f.dim == 1 {
        for (i, o) in out.iter_mut().enumerate() {
            *o = taps.iter().map(|&(k, w)| w * f.values[(i + m - k) % m]).sum();
        }
    } else {
        for (i, o) in out.iter_mut().enumerate() {
            let (r, c) = (i / m, i % m);
            *o = taps
                .iter()
                .map(|&(k, w)| {
                    let (kr, kc) = (k / m, k % m);
                    w * f.values[((r + m - kr) % m) * m + (c + m - kc) % m]
                })
                .sum();
        }
    }
    out
}

/// Grid indices at which the `J` observations are taken.
pub fn sample_points(total: usize, obs_dim: usize) -> Vec<usize> {
    (0..obs_dim).map(|j| j * total / obs_dim).collect()
}

/// The `J × N` matrix of "synthesise, convolve with `kernel`, sample".
pub fn convolution_matrix(kernel: &GridFunction, params: &BesovParams, obs_dim: usize) -> Result<DMatrix<f64>> {
    if kernel.dim != params.d {
        return Err(Error::DimensionMismatch {
            expected: params.d,
            got: kernel.dim,
            context: "kernel dimension",
        });
    }
    let total = kernel.values.len();
    if obs_dim == 0 || obs_dim > total {
        return Err(invalid("obs_dim", format!("need 1 ≤ J ≤ {total}, got {obs_dim}")));
    }
    let points = sample_points(total, obs_dim);
    let mut a = DMatrix::zeros(obs_dim, params.n);
    for ell in 1..=params.n {
        let psi = wavelet::basis_function(ell, params.d, kernel.grid_size)?;
        let conv = circular_convolve(kernel, &psi);
        for (j, &p) in points.iter().enumerate() {
            a[(j, ell - 1)] = conv[p];
        }
    }
    Ok(a)
}

impl ForwardModel {
    pub fn new(kind: ModelKind, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::Empty("forward matrix"));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(invalid("matrix", "entries must be finite"));
        }
        Ok(Self { kind, matrix })
    }

    pub fn from_kernel(kind: ModelKind, kernel: &GridFunction, params: &BesovParams, obs_dim: usize) -> Result<Self> {
        Self::new(kind, convolution_matrix(kernel, params, obs_dim)?)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn obs_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.matrix.ncols()
    }

    fn check_input(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: u.len(),
                context: "forward map input",
            });
        }
        Ok(())
    }

    fn linear_part(&self, u: &[f64]) -> DVector<f64> {
        &self.matrix * DVector::from_column_slice(u)
    }

    pub fn apply(&self, u: &[f64]) -> Result<DVector<f64>> {
        self.check_input(u)?;
        Ok(self.apply_unchecked(u))
    }

    pub(crate) fn apply_unchecked(&self, u: &[f64]) -> DVector<f64> {
        let m = self.linear_part(u);
        match self.kind {
            ModelKind::LinearConv => m,
            ModelKind::NonlinearCubic => m.map(|v| v + v * v * v / 3.0),
        }
    }

    /// `G(to) - G(from)`, accurate to the size of the difference rather than
    /// of `G` itself.
    pub(crate) fn apply_difference(&self, from: &[f64], to: &[f64]) -> DVector<f64> {
        let step: Vec<f64> = to.iter().zip(from).map(|(t, f)| t - f).collect();
        let dm = self.linear_part(&step);
        match self.kind {
            ModelKind::LinearConv => dm,
            ModelKind::NonlinearCubic => {
                let (mf, mt) = (self.linear_part(from), self.linear_part(to));
                DVector::from_fn(dm.len(), |j, _| {
                    dm[j] * (1.0 + (mt[j] * mt[j] + mt[j] * mf[j] + mf[j] * mf[j]) / 3.0)
                })
            }
        }
    }

    pub fn jacobian(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        self.check_input(u)?;
        Ok(match self.kind {
            ModelKind::LinearConv => self.matrix.clone(),
            ModelKind::NonlinearCubic => {
                let m = self.linear_part(u);
                let mut jac = self.matrix.clone();
                for (j, mut row) in jac.row_iter_mut().enumerate() {
                    row *= 1.0 + m[j] * m[j];
                }
                jac
            }
        })
    }

    /// Lipschitz constant of `G` on the weighted-`order` ℓ1 ball of `radius`,
    /// relative to that norm: `K(1 + 3R'²)` for the cubic model (`K` for the
    /// linear one) with `K` the operator norm of `A` and `R' = K·radius`.
    pub fn lipschitz_bound(&self, params: &BesovParams, order: f64, radius: f64) -> f64 {
        let weights = params.norm_weights(order);
        let k = self
            .matrix
            .column_iter()
            .zip(&weights)
            .map(|(col, w)| col.norm() / w)
            .fold(0.0, f64::max);
        match self.kind {
            ModelKind::LinearConv => k,
            ModelKind::NonlinearCubic => {
                let r = k * radius;
                k * (1.0 + 3.0 * r * r)
            }
        }
    }
}

/// Symmetric positive definite noise covariance with cached square roots.
#[derive(Debug, Clone)]
pub struct NoiseCovariance {
    sigma: DMatrix<f64>,
    sqrt: DMatrix<f64>,
    inv_sqrt: DMatrix<f64>,
    cholesky: Cholesky<f64, nalgebra::Dyn>,
}

impl NoiseCovariance {
    pub fn new(sigma: DMatrix<f64>) -> Result<Self> {
        if !sigma.is_square() || sigma.nrows() == 0 {
            return Err(Error::NotPositiveDefinite("matrix must be square and non-empty".into()));
        }
        let scale = sigma.amax().max(f64::MIN_POSITIVE);
        if (&sigma - sigma.transpose()).amax() > 1e-12 * scale {
            return Err(Error::NotPositiveDefinite("matrix is not symmetric".into()));
        }
        let eig = SymmetricEigen::new(sigma.clone());
        let min = eig.eigenvalues.min();
        if !(min > 0.0) {
            return Err(Error::NotPositiveDefinite(format!("smallest eigenvalue {min}")));
        }
        let q = &eig.eigenvectors;
        let sqrt = q * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * q.transpose();
        let inv_sqrt = q * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt())) * q.transpose();
        let cholesky = Cholesky::new(sigma.clone())
            .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorisation failed".into()))?;
        Ok(Self {
            sigma,
            sqrt,
            inv_sqrt,
            cholesky,
        })
    }

    pub fn scaled_identity(dim: usize, variance: f64) -> Result<Self> {
        Self::new(DMatrix::identity(dim, dim) * variance)
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// `Σ^{-1/2} r` via the cached eigendecomposition.
    pub fn whiten(&self, r: &DVector<f64>) -> DVector<f64> {
        &self.inv_sqrt * r
    }

    /// `Σ^{1/2} ξ`.
    pub fn color(&self, xi: &DVector<f64>) -> DVector<f64> {
        &self.sqrt * xi
    }

    /// `Σ^{-1} r` via Cholesky.
    pub fn solve(&self, r: &DVector<f64>) -> DVector<f64> {
        self.cholesky.solve(r)
    }

    /// `rᵀ Σ^{-1} r` via Cholesky; equals `|Σ^{-1/2} r|²`.
    pub fn mahalanobis_sq(&self, r: &DVector<f64>) -> f64 {
        r.dot(&self.solve(r))
    }

    /// `E|Σ^{-1/2} ξ|² = J` for `ξ ~ N(0, Σ)`.
    pub fn expected_whitened_sq(&self) -> f64 {
        self.dim() as f64
    }
}

/// The data model `y = G(u) + ξ`, `ξ ~ N(0, Σ)`.
#[derive(Debug, Clone)]
pub struct ForwardProblem {
    pub model: ForwardModel,
    pub noise: NoiseCovariance,
}

/// How the noise of synthetic observations is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseMode {
    #[default]
    Gaussian,
    /// `ξ ≡ 0`; noiseless data for tests.
    Zero,
}

impl ForwardProblem {
    pub fn new(model: ForwardModel, noise: NoiseCovariance) -> Result<Self> {
        if model.obs_dim() != noise.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.obs_dim(),
                got: noise.dim(),
                context: "noise covariance vs observation dimension",
            });
        }
        Ok(Self { model, noise })
    }

    pub fn obs_dim(&self) -> usize {
        self.model.obs_dim()
    }

    /// `y_j = G(u†) + Σ^{1/2} ξ_j`, `ξ_j` drawn from stream `j` of `seed`.
    pub fn generate_observations(
        &self,
        truth: &CoefficientField,
        n: usize,
        seed: u64,
        mode: NoiseMode,
    ) -> Result<Vec<DVector<f64>>> {
        if n == 0 {
            return Err(invalid("n", "need at least one observation"));
        }
        let clean = self.model.apply(&truth.coeffs)?;
        let j_dim = self.obs_dim();
        Ok((0..n as u64)
            .into_par_iter()
            .map(|j| match mode {
                NoiseMode::Zero => clean.clone(),
                NoiseMode::Gaussian => {
                    let mut rng = stream_rng(seed, j);
                    let xi = DVector::from_fn(j_dim, |_, _| StandardNormal.sample(&mut rng));
                    &clean + self.noise.color(&xi)
                }
            })
            .collect())
    }
}

/// Smooth data term of the MAP objective.
pub trait Misfit: Sync {
    fn input_dim(&self) -> usize;
    fn potential(&self, u: &[f64]) -> f64;
    fn gradient(&self, u: &[f64]) -> Vec<f64>;

    /// `Φ(to) - Φ(from)`. Implementations should keep this accurate when the
    /// two points are close, where the plain difference of potentials is
    /// dominated by rounding.
    fn potential_change(&self, from: &[f64], to: &[f64]) -> f64 {
        self.potential(to) - self.potential(from)
    }
}

/// `n` observations summarised by their mean `ȳ`.
///
/// The potential is `(n/2)|Σ^{-1/2}(ȳ - G(u))|²`, which differs from the
/// summed misfit over the individual `y_j` only by a `u`-independent constant.
#[derive(Debug, Clone)]
pub struct Observation<'a> {
    pub problem: &'a ForwardProblem,
    pub y: DVector<f64>,
    pub n: usize,
}

/// On-disk form `{"y": [...], "n": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationData {
    pub y: Vec<f64>,
    #[serde(default = "one")]
    pub n: usize,
}

fn one() -> usize {
    1
}

/// On-disk form `{"ys": [[...], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepeatedData {
    pub ys: Vec<Vec<f64>>,
}

impl<'a> Observation<'a> {
    pub fn new(problem: &'a ForwardProblem, y: Vec<f64>) -> Result<Self> {
        Self::with_count(problem, y, 1)
    }

    pub fn with_count(problem: &'a ForwardProblem, y: Vec<f64>, n: usize) -> Result<Self> {
        if y.len() != problem.obs_dim() {
            return Err(Error::DimensionMismatch {
                expected: problem.obs_dim(),
                got: y.len(),
                context: "observation",
            });
        }
        if n == 0 {
            return Err(invalid("n", "observation count must be positive"));
        }
        Ok(Self {
            problem,
            y: DVector::from_vec(y),
            n,
        })
    }

    /// Reduces repeated observations to their mean and count.
    pub fn from_repeated(problem: &'a ForwardProblem, ys: &[DVector<f64>]) -> Result<Self> {
        if ys.is_empty() {
            return Err(Error::Empty("observation list"));
        }
        let mut mean = DVector::zeros(problem.obs_dim());
        for y in ys {
            if y.len() != problem.obs_dim() {
                return Err(Error::DimensionMismatch {
                    expected: problem.obs_dim(),
                    got: y.len(),
                    context: "observation",
                });
            }
            mean += y;
        }
        mean /= ys.len() as f64;
        Ok(Self {
            problem,
            y: mean,
            n: ys.len(),
        })
    }

    pub fn from_data(problem: &'a ForwardProblem, data: &ObservationData) -> Result<Self> {
        Self::with_count(problem, data.y.clone(), data.n)
    }

    pub fn from_repeated_data(problem: &'a ForwardProblem, data: &RepeatedData) -> Result<Self> {
        let ys: Vec<DVector<f64>> = data.ys.iter().map(|y| DVector::from_column_slice(y)).collect();
        Self::from_repeated(problem, &ys)
    }

    pub fn to_data(&self) -> ObservationData {
        ObservationData {
            y: self.y.as_slice().to_vec(),
            n: self.n,
        }
    }

    pub fn residual(&self, u: &[f64]) -> DVector<f64> {
        &self.y - self.problem.model.apply_unchecked(u)
    }

    /// Potential evaluated through a Cholesky solve instead of `Σ^{-1/2}`.
    pub fn potential_by_solve(&self, u: &[f64]) -> f64 {
        0.5 * self.n as f64 * self.problem.noise.mahalanobis_sq(&self.residual(u))
    }
}

impl Misfit for Observation<'_> {
    fn input_dim(&self) -> usize {
        self.problem.model.input_dim()
    }

    fn potential(&self, u: &[f64]) -> f64 {
        0.5 * self.n as f64 * self.problem.noise.whiten(&self.residual(u)).norm_squared()
    }

    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let r = self.residual(u);
        let jac = self.problem.model.jacobian(u).expect("dimension checked by caller");
        let g = jac.transpose() * self.problem.noise.solve(&r) * (-(self.n as f64));
        g.as_slice().to_vec()
    }

    fn potential_change(&self, from: &[f64], to: &[f64]) -> f64 {
        // |r - δ|² - |r|² = |δ|² - 2δ·r in whitened coordinates
        let noise = &self.problem.noise;
        let r = noise.whiten(&self.residual(from));
        let delta = noise.whiten(&self.problem.model.apply_difference(from, to));
        0.5 * self.n as f64 * (delta.norm_squared() - 2.0 * delta.dot(&r))
    }
}

/// The summed misfit `½Σ_j|Σ^{-1/2}(y_j - G(u))|²` without reduction.
#[derive(Debug, Clone)]
pub struct RepeatedObservations<'a> {
    pub problem: &'a ForwardProblem,
    pub ys: Vec<DVector<f64>>,
}

impl Misfit for RepeatedObservations<'_> {
    fn input_dim(&self) -> usize {
        self.problem.model.input_dim()
    }

    fn potential(&self, u: &[f64]) -> f64 {
        let g = self.problem.model.apply_unchecked(u);
        0.5 * self
            .ys
            .iter()
            .map(|y| self.problem.noise.whiten(&(y - &g)).norm_squared())
            .sum::<f64>()
    }

    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let g = self.problem.model.apply_unchecked(u);
        let jac = self.problem.model.jacobian(u).expect("dimension checked by caller");
        let mut total = DVector::zeros(jac.ncols());
        for y in &self.ys {
            total -= jac.transpose() * self.problem.noise.solve(&(y - &g));
        }
        total.as_slice().to_vec()
    }

    fn potential_change(&self, from: &[f64], to: &[f64]) -> f64 {
        let noise = &self.problem.noise;
        let g = self.problem.model.apply_unchecked(from);
        let delta = noise.whiten(&self.problem.model.apply_difference(from, to));
        let d2 = delta.norm_squared();
        0.5 * self
            .ys
            .iter()
            .map(|y| d2 - 2.0 * delta.dot(&noise.whiten(&(y - &g))))
            .sum::<f64>()
    }
}

/// `Φ ≡ 0`; turns the posterior into the prior.
#[derive(Debug, Clone, Copy)]
pub struct NoMisfit {
    pub dim: usize,
}

impl Misfit for NoMisfit {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn potential(&self, _u: &[f64]) -> f64 {
        0.0
    }

    fn gradient(&self, _u: &[f64]) -> Vec<f64> {
        vec![0.0; self.dim]
    }
}

pub(crate) fn check_misfit_dim(misfit: &dyn Misfit, params: &BesovParams) -> Result<()> {
    if misfit.input_dim() != params.n {
        return Err(Error::DimensionMismatch {
            expected: params.n,
            got: misfit.input_dim(),
            context: "misfit input vs prior truncation",
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn identity_problem(n: usize, kind: ModelKind, var: f64) -> ForwardProblem {
        ForwardProblem::new(
            ForwardModel::new(kind, DMatrix::identity(n, n)).unwrap(),
            NoiseCovariance::scaled_identity(n, var).unwrap(),
        )
        .unwrap()
    }

    fn random_problem(kind: ModelKind, n: usize, j: usize, seed: u64) -> ForwardProblem {
        let mut rng = stream_rng(seed, 0);
        let a = DMatrix::from_fn(j, n, |_, _| rng.random_range(-1.0..1.0) / (n as f64).sqrt());
        let b = DMatrix::from_fn(j, j, |_, _| rng.random_range(-0.3..0.3));
        let sigma = &b * b.transpose() + DMatrix::identity(j, j) * 0.5;
        ForwardProblem::new(
            ForwardModel::new(kind, a).unwrap(),
            NoiseCovariance::new(sigma).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let params = BesovParams::new(1.5, 1, 8).unwrap();
        let kernel = box_kernel(8, 1, 0.125).unwrap();
        for kind in [ModelKind::LinearConv, ModelKind::NonlinearCubic] {
            let model = ForwardModel::from_kernel(kind, &kernel, &params, 8).unwrap();
            assert!(model.apply(&[0.0; 8]).unwrap().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn identity_kernel_reproduces_synthesis_matrix() {
        let params = BesovParams::new(1.5, 1, 8).unwrap();
        let mut delta = vec![0.0; 8];
        delta[0] = 1.0;
        let kernel = GridFunction::new(delta, 8, 1).unwrap();
        let model = ForwardModel::from_kernel(ModelKind::LinearConv, &kernel, &params, 8).unwrap();
        for ell in 1..=8 {
            let col = model.apply(&CoefficientField::unit(params, ell).coeffs).unwrap();
            let psi = wavelet::basis_function(ell, 1, 8).unwrap();
            assert_eq!(col.as_slice(), psi.values.as_slice());
        }
    }

    #[test]
    fn convolution_2d_shifts_rows_and_columns() {
        let params = BesovParams::new(2.5, 2, 16).unwrap();
        let kernel = box_kernel(4, 2, 0.5).unwrap();
        let model = ForwardModel::from_kernel(ModelKind::LinearConv, &kernel, &params, 16).unwrap();
        // the constant function is invariant under a unit-sum kernel
        let out = model.apply(&CoefficientField::unit(params, 1).coeffs).unwrap();
        assert!(out.iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn box_kernel_has_unit_mass() {
        let k = box_kernel(64, 1, 0.125).unwrap();
        assert_eq!(k.values.iter().filter(|v| **v > 0.0).count(), 8);
        assert_abs_diff_eq!(k.values.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        let k2 = box_kernel(16, 2, 0.125).unwrap();
        assert_abs_diff_eq!(k2.values.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn jacobian_special_cases() {
        let p = random_problem(ModelKind::LinearConv, 6, 4, 3);
        let u = [0.3, -0.1, 0.0, 2.0, 1.0, -1.0];
        assert_eq!(&p.model.jacobian(&u).unwrap(), p.model.matrix());
        let c = ForwardModel::new(ModelKind::NonlinearCubic, p.model.matrix().clone()).unwrap();
        assert_eq!(&c.jacobian(&[0.0; 6]).unwrap(), p.model.matrix());
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let p = random_problem(ModelKind::NonlinearCubic, 8, 5, 9);
        let mut rng = stream_rng(10, 0);
        let u: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let jac = p.model.jacobian(&u).unwrap();
        let step = 1e-5;
        for l in 0..8 {
            let (mut up, mut dn) = (u.clone(), u.clone());
            up[l] += step;
            dn[l] -= step;
            let fd = (p.model.apply(&up).unwrap() - p.model.apply(&dn).unwrap()) / (2.0 * step);
            let col = jac.column(l);
            let err = (&fd - col).norm() / col.norm().max(1e-12);
            assert!(err <= 1e-6, "column {l}: {err}");
        }
    }

    #[test]
    fn potential_examples() {
        let p = identity_problem(4, ModelKind::LinearConv, 1.0);
        let u = [1.0, 2.0, 3.0, 4.0];
        let obs = Observation::new(&p, u.to_vec()).unwrap();
        assert_eq!(obs.potential(&u), 0.0);
        assert!(obs.gradient(&u).iter().all(|g| *g == 0.0));
        let obs = Observation::new(&p, vec![3.0, 2.0, 3.0, 4.0]).unwrap();
        assert_abs_diff_eq!(obs.potential(&u), 2.0, epsilon = 1e-15);

        let p4 = identity_problem(4, ModelKind::LinearConv, 4.0);
        let obs = Observation::new(&p4, vec![1.0; 4]).unwrap();
        assert_abs_diff_eq!(obs.potential(&[0.0; 4]), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn linear_gradient_closed_form() {
        let p = random_problem(ModelKind::LinearConv, 6, 6, 4);
        let y = vec![0.5, -1.0, 0.2, 0.0, 1.5, 0.3];
        let obs = Observation::new(&p, y.clone()).unwrap();
        let u = [0.1, 0.2, -0.3, 0.4, 0.0, -0.7];
        let a = p.model.matrix();
        let r = a * DVector::from_column_slice(&u) - DVector::from_vec(y);
        let expected = a.transpose() * p.noise.solve(&r);
        for (g, e) in obs.gradient(&u).iter().zip(expected.iter()) {
            assert_abs_diff_eq!(g, e, epsilon = 1e-13);
        }
    }

    #[test]
    fn whitened_routes_agree() {
        let p = random_problem(ModelKind::NonlinearCubic, 8, 6, 5);
        let obs = Observation::new(&p, vec![1.0, -2.0, 0.5, 0.1, 0.0, 3.0]).unwrap();
        let u = [0.2; 8];
        assert_abs_diff_eq!(obs.potential(&u), obs.potential_by_solve(&u), epsilon = 1e-12);
    }

    #[test]
    fn covariance_validation() {
        assert!(NoiseCovariance::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0])).is_err());
        assert!(NoiseCovariance::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
        let c = NoiseCovariance::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
        let r = DVector::from_vec(vec![0.3, -1.2]);
        assert_abs_diff_eq!(c.whiten(&r).norm_squared(), c.mahalanobis_sq(&r), epsilon = 1e-14);
        let back = c.whiten(&c.color(&r));
        assert_abs_diff_eq!((back - r).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn observation_generation() {
        let params = BesovParams::new(1.5, 1, 4).unwrap();
        let p = identity_problem(4, ModelKind::LinearConv, 1.0);
        let truth = CoefficientField::new(params, vec![1.0, -1.0, 0.5, 0.0]).unwrap();
        let a = p.generate_observations(&truth, 3, 8, NoiseMode::Gaussian).unwrap();
        let b = p.generate_observations(&truth, 3, 8, NoiseMode::Gaussian).unwrap();
        assert_eq!(a, b);
        let clean = p.generate_observations(&truth, 1, 8, NoiseMode::Zero).unwrap();
        assert_eq!(clean[0].as_slice(), truth.coeffs.as_slice());
        assert!(p.generate_observations(&truth, 0, 8, NoiseMode::Gaussian).is_err());
    }

    #[test]
    fn repeated_and_reduced_potentials_differ_by_constant() {
        let p = random_problem(ModelKind::NonlinearCubic, 4, 3, 6);
        let params = BesovParams::new(1.5, 1, 4).unwrap();
        let truth = CoefficientField::new(params, vec![0.5, 0.0, -0.5, 0.2]).unwrap();
        let ys = p.generate_observations(&truth, 7, 1, NoiseMode::Gaussian).unwrap();
        let reduced = Observation::from_repeated(&p, &ys).unwrap();
        let full = RepeatedObservations { problem: &p, ys };
        let (u, v) = ([0.1, 0.2, 0.3, 0.4], [-1.0, 0.5, 0.0, 0.0]);
        let c1 = full.potential(&u) - reduced.potential(&u);
        let c2 = full.potential(&v) - reduced.potential(&v);
        assert_abs_diff_eq!(c1, c2, epsilon = 1e-10);
        for (a, b) in full.gradient(&u).iter().zip(reduced.gradient(&u)) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn lipschitz_witness() {
        let params = BesovParams::new(1.5, 1, 8).unwrap();
        let kernel = box_kernel(8, 1, 0.25).unwrap();
        let radius = 2.0;
        let weights = params.norm_weights(params.t);
        let mut rng = stream_rng(77, 0);
        for kind in [ModelKind::LinearConv, ModelKind::NonlinearCubic] {
            let model = ForwardModel::from_kernel(kind, &kernel, &params, 8).unwrap();
            let bound = model.lipschitz_bound(&params, params.t, radius);
            let mut in_ball = || {
                let v: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
                let norm = crate::besov::weighted_l1(&weights, &v);
                let target = radius * rng.random::<f64>();
                v.iter().map(|x| x * target / norm).collect::<Vec<_>>()
            };
            for _ in 0..500 {
                let (u, v) = (in_ball(), in_ball());
                let diff: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
                let num = (model.apply(&u).unwrap() - model.apply(&v).unwrap()).norm();
                let den = crate::besov::weighted_l1(&weights, &diff);
                assert!(num <= bound * den * (1.0 + 1e-12));
            }
        }
    }
}
