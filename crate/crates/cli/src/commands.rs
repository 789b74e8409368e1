use std::path::Path;

use anyhow::Result;
use besovmap::besov::{log_derivative, log_rn_derivative, log_rn_via_logderivative, sample_prior, BesovParams};
use besovmap::config::ExperimentConfig;
use besovmap::consistency::{consistency_summary, penalty_bound, run_consistency, ConsistencySchedule};
use besovmap::forward::NoiseMode;
use besovmap::lab::{anderson_check, om_ratio_experiment, rn_limit_experiment, Measure, RatioRow};
use besovmap::solver::solve_map;
use serde_json::{json, Value};

use crate::inputs::{parse_list, read_field, read_fields, read_observation};
use crate::output::{config_hash, sidecar_path, write_json, Csv};

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Agreement required between the two sides of `verify logderivative`.
const LOGDERIVATIVE_TOL: f64 = 1e-12;

pub struct Context {
    cfg: ExperimentConfig,
    params: BesovParams,
    hash: String,
}

fn num(x: f64) -> String {
    format!("{x}")
}

impl Context {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let params = cfg.params()?;
        let hash = config_hash(&cfg);
        Ok(Self { cfg, params, hash })
    }

    fn sidecar(&self, command: &str, seed: u64, n_samples: u64, flags: Value, extra: Value) -> Value {
        json!({
            "command": command,
            "version": VERSION,
            "config_hash": self.hash,
            "seed": seed,
            "n_samples": n_samples,
            "flags": flags,
            "details": extra,
        })
    }

    fn eps_grid(&self, eps: Option<&str>) -> Result<Vec<f64>> {
        let grid = match eps {
            Some(text) => parse_list(text, "eps")?,
            None => self.cfg.lab.eps_grid.clone(),
        };
        if grid.iter().any(|e: &f64| !(*e > 0.0 && e.is_finite())) {
            anyhow::bail!("radii must be positive and finite");
        }
        Ok(grid)
    }

    fn samples(&self, samples: Option<u64>) -> Result<u64> {
        let n = samples.unwrap_or(self.cfg.lab.n_samples);
        anyhow::ensure!(n > 0, "--samples must be positive");
        Ok(n)
    }

    pub fn sample_prior(&self, seed: u64, count: usize, out: &Path) -> Result<bool> {
        anyhow::ensure!(count > 0, "--count must be positive");
        let draws: Vec<Vec<f64>> = sample_prior(&self.params, seed, count)
            .into_iter()
            .map(|f| f.coeffs)
            .collect();
        write_json(
            out,
            &json!({
                "config_hash": self.hash,
                "seed": seed,
                "count": count,
                "s": self.params.s,
                "d": self.params.d,
                "N": self.params.n,
                "draws": draws,
            }),
        )?;
        Ok(true)
    }

    pub fn solve_map(&self, data: &Path, out: &Path, trace: bool) -> Result<bool> {
        let problem = self.cfg.problem()?;
        let obs = read_observation(data, &problem)?;
        let result = solve_map(&obs, &self.params, &self.cfg.solver)?;
        let mut doc = json!({
            "config_hash": self.hash,
            "u_hat": result.u_hat.coeffs,
            "objective": result.objective,
            "optimality_residual": result.optimality_residual,
            "iterations": result.iterations,
            "converged": result.converged,
        });
        if trace {
            doc["objective_trace"] = json!(result.objective_trace);
        }
        write_json(out, &doc)?;
        if !result.converged {
            eprintln!(
                "warning: solver stopped after {} iterations with optimality residual {:e}",
                result.iterations, result.optimality_residual
            );
        }
        Ok(result.converged)
    }

    fn write_ratio(
        &self,
        command: &str,
        rows: &[RatioRow],
        seed: u64,
        n: u64,
        out: &Path,
        extra: Value,
    ) -> Result<bool> {
        let mut csv = Csv::new(&["eps", "estimate", "std_error", "theory", "ratio_error"]);
        for r in rows {
            csv.row(&[
                num(r.eps),
                num(r.estimate),
                num(r.std_error),
                num(r.theory),
                num(r.ratio_error),
            ]);
        }
        let degenerate: Vec<f64> = rows.iter().filter(|r| r.degenerate).map(|r| r.eps).collect();
        let hits: Vec<Value> = rows
            .iter()
            .map(|r| json!({"eps": r.eps, "numerator_hits": r.numerator_hits, "denominator_hits": r.denominator_hits}))
            .collect();
        csv.write(out)?;
        write_json(
            &sidecar_path(out),
            &self.sidecar(
                command,
                seed,
                n,
                json!({ "degenerate_eps": degenerate }),
                json!({"hits": hits, "inputs": extra}),
            ),
        )?;
        if !degenerate.is_empty() {
            eprintln!("warning: no draws landed in a ball at eps = {degenerate:?}");
        }
        Ok(degenerate.is_empty())
    }

    #[allow(clippy::too_many_arguments)]
    pub fn om_ratio(
        &self,
        z1: &Path,
        z2: &Path,
        data: Option<&Path>,
        eps: Option<&str>,
        samples: Option<u64>,
        seed: u64,
        out: &Path,
    ) -> Result<bool> {
        let a = read_field(z1, &self.params)?;
        let b = read_field(z2, &self.params)?;
        let grid = self.eps_grid(eps)?;
        let n = self.samples(samples)?;
        let rows = match data {
            Some(path) => {
                let problem = self.cfg.problem()?;
                let obs = read_observation(path, &problem)?;
                om_ratio_experiment(&a, &b, &grid, Measure::Posterior(&obs), n, seed)?
            }
            None => om_ratio_experiment(&a, &b, &grid, Measure::Prior, n, seed)?,
        };
        let measure = if data.is_some() { "posterior" } else { "prior" };
        self.write_ratio("verify om-ratio", &rows, seed, n, out, json!({ "measure": measure }))
    }

    pub fn rn(
        &self,
        u: &Path,
        h: &Path,
        eps: Option<&str>,
        samples: Option<u64>,
        seed: u64,
        out: &Path,
    ) -> Result<bool> {
        let u = read_field(u, &self.params)?;
        let h = read_field(h, &self.params)?;
        let grid = self.eps_grid(eps)?;
        let n = self.samples(samples)?;
        let rows = rn_limit_experiment(&u, &h, &grid, n, seed)?;
        self.write_ratio("verify rn", &rows, seed, n, out, json!({}))
    }

    pub fn anderson(&self, eps: f64, shifts: &Path, samples: Option<u64>, seed: u64, out: &Path) -> Result<bool> {
        let shifts = read_fields(shifts, &self.params)?;
        let n = self.samples(samples)?;
        let report = anderson_check(eps, &self.params, &shifts, n, seed)?;
        let mut csv = Csv::new(&["shift", "estimate", "std_error", "centered", "diff_std_error", "passed"]);
        for r in &report.rows {
            csv.row(&[
                r.shift_index.to_string(),
                num(r.shifted.value),
                num(r.shifted.std_error),
                num(report.centered.value),
                num(r.diff_std_error),
                r.passed.to_string(),
            ]);
        }
        csv.write(out)?;
        let failed: Vec<usize> = report
            .rows
            .iter()
            .filter(|r| !r.passed)
            .map(|r| r.shift_index)
            .collect();
        write_json(
            &sidecar_path(out),
            &self.sidecar(
                "verify anderson",
                seed,
                n,
                json!({ "passed": report.passed, "failed_shifts": failed }),
                json!({ "eps": eps, "centered_std_error": report.centered.std_error }),
            ),
        )?;
        if !report.passed {
            eprintln!("warning: Anderson inequality violated for shifts {failed:?}");
        }
        Ok(report.passed)
    }

    pub fn logderivative(&self, u: &Path, h: &Path) -> Result<bool> {
        let u = read_field(u, &self.params)?;
        let h = read_field(h, &self.params)?;
        let direct = log_rn_derivative(&h, &u)?;
        let integrated = log_rn_via_logderivative(&h, &u)?;
        let beta = log_derivative(&h, &u)?;
        let diff = (direct - integrated).abs();
        let ok = diff <= LOGDERIVATIVE_TOL * direct.abs().max(1.0);
        println!("log_rn_direct = {direct}");
        println!("log_rn_integrated = {integrated}");
        println!("abs_difference = {diff:e}");
        println!("beta_h(u) = {beta}");
        println!("agree = {ok}");
        Ok(ok)
    }

    pub fn consistency(&self, truth: &Path, schedule: &str, replicates: usize, seed: u64, out: &Path) -> Result<bool> {
        let truth = read_field(truth, &self.params)?;
        let problem = self.cfg.problem()?;
        let schedule = ConsistencySchedule {
            n_values: parse_list(schedule, "schedule")?,
            replicates,
            seed,
        };
        schedule.validate()?;
        let rows = run_consistency(
            &truth,
            &problem,
            &self.params,
            &schedule,
            &self.cfg.solver,
            NoiseMode::Gaussian,
        )?;
        let mut csv = Csv::new(&["n", "replicate", "residual_sq", "penalty", "drift", "converged"]);
        for r in &rows {
            csv.row(&[
                r.n.to_string(),
                r.replicate.to_string(),
                num(r.residual_sq),
                num(r.penalty),
                num(r.drift),
                r.converged.to_string(),
            ]);
        }
        csv.write(out)?;
        let summary = consistency_summary(&rows)?;
        let unconverged = rows.iter().filter(|r| !r.converged).count();
        write_json(
            &sidecar_path(out),
            &self.sidecar(
                "consistency",
                seed,
                (replicates * schedule.n_values.len()) as u64,
                json!({ "unconverged": unconverged, "monotone": summary.monotone }),
                json!({
                    "schedule": schedule.n_values,
                    "replicates": replicates,
                    "penalty_bound": penalty_bound(&truth, &problem),
                    "summary": summary,
                }),
            ),
        )?;
        if unconverged > 0 {
            eprintln!("warning: {unconverged} of {} solves did not converge", rows.len());
        }
        Ok(unconverged == 0)
    }

    pub fn info(&self) -> Result<bool> {
        println!("besovmap {VERSION}");
        println!("config_hash = {}", self.hash);
        println!("config = {}", serde_json::to_string_pretty(&self.cfg)?);
        println!("t = {}", self.params.t);
        for ell in 1..=self.params.n.min(10) {
            println!("alpha_{ell} = {}", self.params.alpha(ell));
        }
        Ok(true)
    }
}
