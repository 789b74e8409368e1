//! Fixtures shared by the benchmarks.

use besovmap::besov::{sample_prior, BesovParams, CoefficientField};
use besovmap::forward::{box_kernel, ForwardModel, ForwardProblem, ModelKind, NoiseCovariance, NoiseMode};

/// Box-blur deconvolution with `n` coefficients and `n` point observations.
pub fn conv_problem(n: usize, variance: f64) -> (BesovParams, ForwardProblem) {
    let params = BesovParams::new(1.5, 1, n).expect("valid prior");
    let kernel = box_kernel(n.max(8), 1, 0.125).expect("valid kernel");
    let model = ForwardModel::from_kernel(ModelKind::LinearConv, &kernel, &params, n).expect("valid model");
    let noise = NoiseCovariance::scaled_identity(n, variance).expect("valid noise");
    (params, ForwardProblem::new(model, noise).expect("consistent problem"))
}

/// A prior draw and `count` noisy observations of it.
pub fn synthetic_data(
    params: &BesovParams,
    problem: &ForwardProblem,
    count: usize,
    seed: u64,
) -> (CoefficientField, Vec<Vec<f64>>) {
    let truth = sample_prior(params, seed, 1).remove(0);
    let ys = problem
        .generate_observations(&truth, count, seed + 1, NoiseMode::Gaussian)
        .expect("observations")
        .into_iter()
        .map(|y| y.as_slice().to_vec())
        .collect();
    (truth, ys)
}
