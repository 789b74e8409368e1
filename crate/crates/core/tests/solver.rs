mod common;

use besovmap::besov::{BesovParams, CoefficientField};
use besovmap::forward::{
    ForwardModel, ForwardProblem, Misfit, ModelKind, NoiseCovariance, NoiseMode, Observation, RepeatedObservations,
};
use besovmap::solver::{
    objective, optimality_residual, prox_weighted_l1, random_directions, solve_map, wmap_certificate, SolverConfig,
};
use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn tight() -> SolverConfig {
    SolverConfig {
        tol: 1e-12,
        max_iter: 200_000,
        ..SolverConfig::default()
    }
}

fn random_data(j: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..j).map(|_| 3.0 * r.sample::<f64, _>(StandardNormal)).collect()
}

#[test]
fn matches_coordinate_descent_in_objective_and_minimiser() {
    for k in 0..30u64 {
        let n = [1, 2, 4, 8, 16][k as usize % 5];
        let j = n + 2;
        let problem = random_linear_problem(n, j, 100 + k);
        let y = random_data(j, 200 + k);
        let params = BesovParams::new(1.2 + 0.05 * k as f64, 1, n).unwrap();
        let obs = Observation::new(&problem, y.clone()).unwrap();
        let result = solve_map(&obs, &params, &tight()).unwrap();
        assert!(result.converged, "instance {k}");
        let w = problem.noise.matrix().clone().try_inverse().unwrap();
        let alphas = params.alphas();
        let oracle = coordinate_descent(problem.model.matrix(), &w, &y, &alphas);
        let f_oracle = lasso_objective(problem.model.matrix(), &w, &y, &alphas, &oracle);
        assert!(
            (result.objective - f_oracle).abs() <= 1e-8 * f_oracle.abs(),
            "instance {k}"
        );
        let gap = result
            .u_hat
            .coeffs
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(gap <= 1e-6, "instance {k}: û differs by {gap}");
    }
}

#[test]
fn objective_field_matches_recomputation() {
    let problem = random_linear_problem(8, 10, 3);
    let obs = Observation::new(&problem, random_data(10, 4)).unwrap();
    let params = BesovParams::new(1.5, 1, 8).unwrap();
    let result = solve_map(&obs, &params, &SolverConfig::default()).unwrap();
    let direct = obs.potential(&result.u_hat.coeffs) + result.u_hat.prior_norm();
    assert!((result.objective - direct).abs() <= 1e-12 * direct.max(1.0));
    assert_eq!(result.converged, result.optimality_residual <= 1e-8);
}

#[test]
fn converged_solutions_pass_the_certificate() {
    let cfg = SolverConfig::default();
    for k in 0..20u64 {
        let n = [2, 4, 8, 16][k as usize % 4];
        let problem = random_linear_problem(n, n + 1, 300 + k);
        let obs = Observation::new(&problem, random_data(n + 1, 400 + k)).unwrap();
        let params = BesovParams::new(1.5, 1, n).unwrap();
        let result = solve_map(&obs, &params, &cfg).unwrap();
        assert!(result.converged);
        let dirs = random_directions(&params, 100, params.s + 1.0, 1.0, k);
        let report = wmap_certificate(&result.u_hat, &obs, &dirs, 10.0 * cfg.tol).unwrap();
        assert!(report.passed, "instance {k}: {report:?}");
    }
}

#[test]
fn perturbed_point_fails_the_certificate() {
    let problem = identity_problem(1, 1.0);
    let obs = Observation::new(&problem, vec![3.0]).unwrap();
    let params = BesovParams::new(1.5, 1, 1).unwrap();
    let off = CoefficientField::new(params, vec![1.0]).unwrap();
    let toward = CoefficientField::new(params, vec![-0.5]).unwrap();
    let report = wmap_certificate(&off, &obs, &[toward], 1e-9).unwrap();
    assert!(!report.passed);
    assert!((report.worst_violation - 0.375).abs() < 1e-12);
}

#[test]
fn minimiser_is_a_prox_fixed_point() {
    let problem = random_linear_problem(16, 12, 7);
    let obs = Observation::new(&problem, random_data(12, 8)).unwrap();
    let params = BesovParams::new(1.5, 1, 16).unwrap();
    let result = solve_map(&obs, &params, &tight()).unwrap();
    assert!(result.converged);
    let u = &result.u_hat.coeffs;
    let g = obs.gradient(u);
    let step = 0.01;
    let trial: Vec<f64> = u.iter().zip(&g).map(|(a, b)| a - step * b).collect();
    let fixed = prox_weighted_l1(&trial, &params.alphas(), step);
    assert!(fixed.iter().zip(u).all(|(a, b)| (a - b).abs() <= 1e-10));
}

fn diagonal_problem(scale: f64) -> ForwardProblem {
    let a = [2.0, -1.0, 0.5, 3.0, 1.5, -0.7, 1.0, 0.2];
    let var = [1.0, 0.5, 2.0, 0.1, 1.0, 0.3, 4.0, 1.0];
    ForwardProblem::new(
        ForwardModel::new(
            ModelKind::LinearConv,
            DMatrix::from_diagonal(&DVector::from_row_slice(&a)),
        )
        .unwrap(),
        NoiseCovariance::new(DMatrix::from_diagonal(&DVector::from_iterator(
            8,
            var.iter().map(|v| v * scale),
        )))
        .unwrap(),
    )
    .unwrap()
}

#[test]
fn support_shrinks_as_the_penalty_grows() {
    // scaling Σ by c is the same as scaling every α_ℓ by c
    let y = vec![3.0, -2.0, 0.1, 5.0, -4.0, 1.0, 0.4, 2.0];
    let params = BesovParams::new(1.5, 1, 8).unwrap();
    let mut previous: Option<Vec<bool>> = None;
    for c in [0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 20.0, 100.0] {
        let problem = diagonal_problem(c);
        let obs = Observation::new(&problem, y.clone()).unwrap();
        let support: Vec<bool> = solve_map(&obs, &params, &tight())
            .unwrap()
            .u_hat
            .coeffs
            .iter()
            .map(|v| *v != 0.0)
            .collect();
        if let Some(prev) = &previous {
            assert!(support.iter().zip(prev).all(|(now, before)| !now || *before), "c={c}");
        }
        previous = Some(support);
    }
    assert!(previous.unwrap().iter().all(|s| !s));
}

#[test]
fn plain_proximal_gradient_trace_never_increases() {
    let cfg = SolverConfig {
        acceleration: false,
        ..tight()
    };
    for k in 0..10u64 {
        let problem = random_linear_problem(8, 6, 500 + k);
        let obs = Observation::new(&problem, random_data(6, 600 + k)).unwrap();
        let params = BesovParams::new(1.5, 1, 8).unwrap();
        let result = solve_map(&obs, &params, &cfg).unwrap();
        assert!(result.objective_trace.windows(2).all(|w| w[1] <= w[0]), "instance {k}");
    }
}

#[test]
fn sufficient_statistic_gives_the_same_minimiser() {
    for k in 0..8u64 {
        let n = [1, 2, 4, 8][k as usize % 4];
        let problem = random_linear_problem(n, n + 1, 700 + k);
        let params = BesovParams::new(1.5, 1, n).unwrap();
        let truth = CoefficientField::new(params, random_data(n, 800 + k)).unwrap();
        let ys = problem
            .generate_observations(&truth, 25, 900 + k, NoiseMode::Gaussian)
            .unwrap();
        let reduced = Observation::from_repeated(&problem, &ys).unwrap();
        let full = RepeatedObservations { problem: &problem, ys };
        let a = solve_map(&reduced, &params, &tight()).unwrap();
        let b = solve_map(&full, &params, &tight()).unwrap();
        assert!(
            a.converged && b.converged,
            "instance {k}: {} {}",
            a.optimality_residual,
            b.optimality_residual
        );
        let gap = a
            .u_hat
            .coeffs
            .iter()
            .zip(&b.u_hat.coeffs)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(gap <= 1e-10, "instance {k}: {gap}");
    }
}

#[test]
fn cubic_model_reaches_a_stationary_point() {
    let mut r = rng(10);
    let a = DMatrix::from_fn(6, 8, |_, _| r.random_range(-0.5..0.5));
    let problem = ForwardProblem::new(
        ForwardModel::new(ModelKind::NonlinearCubic, a).unwrap(),
        NoiseCovariance::scaled_identity(6, 0.1).unwrap(),
    )
    .unwrap();
    let obs = Observation::new(&problem, random_data(6, 11)).unwrap();
    let params = BesovParams::new(1.5, 1, 8).unwrap();
    let result = solve_map(&obs, &params, &SolverConfig::default()).unwrap();
    assert!(result.converged);
    assert!(optimality_residual(&result.u_hat, &obs).unwrap() <= 1e-8);
    assert!(result.objective <= objective(&obs, &params.alphas(), &[0.0; 8]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scalar_solution_is_soft_thresholding(y in -10.0..10.0f64, variance in 0.1..5.0f64, count in 1usize..50) {
        let problem = identity_problem(1, variance);
        let obs = Observation::with_count(&problem, vec![y], count).unwrap();
        let params = BesovParams::new(1.5, 1, 1).unwrap();
        let result = solve_map(&obs, &params, &tight()).unwrap();
        let expected = y.signum() * (y.abs() - variance / count as f64).max(0.0);
        prop_assert!((result.u_hat.coeffs[0] - expected).abs() <= 1e-10);
    }

    #[test]
    fn prox_is_nonexpansive(v in prop::collection::vec(-5.0..5.0f64, 6), w in prop::collection::vec(-5.0..5.0f64, 6),
                            weights in prop::collection::vec(0.0..3.0f64, 6), step in 0.01..2.0f64) {
        let pv = prox_weighted_l1(&v, &weights, step);
        let pw = prox_weighted_l1(&w, &weights, step);
        for ((a, b), (x, y)) in pv.iter().zip(&pw).zip(v.iter().zip(&w)) {
            prop_assert!((a - b).abs() <= (x - y).abs() + 1e-15);
        }
    }
}
