//! Experiment configuration.
//!
//! ```json
//! {
//!   "prior":   {"s": 1.5, "d": 1, "N": 64, "t": 0.4, "p": 1},
//!   "forward": {"type": "linear_conv", "obs_dim": 32, "kernel": [...]},
//!   "noise_cov": 0.01,
//!   "solver":  {"max_iter": 10000, "tol": 1e-8},
//!   "lab":     {"eps_grid": [0.5, 0.25, 0.125], "n_samples": 100000}
//! }
//! ```
//!
//! `forward` may carry either a `kernel` (grid values, `M^d` of them), an
//! explicit `matrix` (`J` rows of `N` entries), or neither, in which case a
//! periodic box filter of width `kernel_width` (default 1/8) is used.
//! `noise_cov` is a variance (meaning `σ²·I`) or a full `J × J` matrix.
//! Unknown keys are rejected everywhere.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::besov::BesovParams;
use crate::error::{invalid, Error, Result};
use crate::forward::{box_kernel, ForwardModel, ForwardProblem, ModelKind, NoiseCovariance};
use crate::solver::SolverConfig;
use crate::wavelet::GridFunction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub s: f64,
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default = "default_p")]
    pub p: f64,
}

fn default_p() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardConfig {
    #[serde(rename = "type")]
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obs_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseConfig {
    Variance(f64),
    Matrix(Vec<Vec<f64>>),
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::Variance(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabConfig {
    pub eps_grid: Vec<f64>,
    pub n_samples: u64,
}

impl Default for LabConfig {
    fn default() -> Self {
        Self {
            eps_grid: vec![0.5, 0.25, 0.125],
            n_samples: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub prior: PriorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forward: Option<ForwardConfig>,
    #[serde(default)]
    pub noise_cov: NoiseConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub lab: LabConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            prior: PriorConfig {
                s: 1.5,
                d: 1,
                n: 64,
                t: Some(BesovParams::default_ambient(1.5, 1)),
                p: 1.0,
            },
            forward: None,
            noise_cov: NoiseConfig::default(),
            solver: SolverConfig::default(),
            lab: LabConfig::default(),
        }
    }
}

fn smallest_grid(n: usize, d: usize, at_least: usize) -> usize {
    let mut m = 1usize;
    while m.pow(d as u32) < n.max(at_least) || m < 8 {
        m *= 2;
    }
    m
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut cfg: Self = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.prior
            .t
            .get_or_insert(BesovParams::default_ambient(cfg.prior.s, cfg.prior.d));
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a configuration file, filling defaults.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.prior.p != 1.0 {
            return Err(invalid("prior.p", format!("p=1 only (got {})", self.prior.p)));
        }
        self.params()?;
        self.solver.validate()?;
        if self.lab.eps_grid.is_empty() || self.lab.eps_grid.iter().any(|e| !(*e > 0.0)) {
            return Err(invalid("lab.eps_grid", "radii must be positive and non-empty"));
        }
        if self.lab.n_samples == 0 {
            return Err(invalid("lab.n_samples", "must be positive"));
        }
        if self.forward.is_some() {
            self.problem()?;
        }
        Ok(())
    }

    pub fn params(&self) -> Result<BesovParams> {
        let p = &self.prior;
        let t = p.t.unwrap_or_else(|| BesovParams::default_ambient(p.s, p.d));
        BesovParams::with_ambient(p.s, p.d, p.n, t)
    }

    pub fn forward_model(&self) -> Result<ForwardModel> {
        let params = self.params()?;
        let fwd = self
            .forward
            .as_ref()
            .ok_or_else(|| invalid("forward", "this command needs a forward model section"))?;
        if let Some(rows) = &fwd.matrix {
            if fwd.kernel.is_some() {
                return Err(invalid("forward.matrix", "give either a kernel or a matrix, not both"));
            }
            let j = rows.len();
            if j == 0 || rows.iter().any(|r| r.len() != params.n) {
                return Err(invalid(
                    "forward.matrix",
                    format!("need J rows of N = {} entries", params.n),
                ));
            }
            if fwd.obs_dim.is_some_and(|o| o != j) {
                return Err(invalid("forward.obs_dim", "does not match the number of matrix rows"));
            }
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            return ForwardModel::new(fwd.kind, DMatrix::from_row_slice(j, params.n, &flat));
        }
        let obs_dim = fwd
            .obs_dim
            .ok_or_else(|| invalid("forward.obs_dim", "required with a kernel"))?;
        let kernel = match &fwd.kernel {
            Some(values) => {
                let m = (values.len() as f64).powf(1.0 / params.d as f64).round() as usize;
                if m.pow(params.d as u32) != values.len() {
                    return Err(invalid("forward.kernel", "length must be M^d"));
                }
                GridFunction::new(values.clone(), m, params.d)?
            }
            None => {
                let m = fwd
                    .grid_size
                    .unwrap_or_else(|| smallest_grid(params.n, params.d, obs_dim));
                box_kernel(m, params.d, fwd.kernel_width.unwrap_or(0.125))?
            }
        };
        ForwardModel::from_kernel(fwd.kind, &kernel, &params, obs_dim)
    }

    pub fn noise(&self, obs_dim: usize) -> Result<NoiseCovariance> {
        match &self.noise_cov {
            NoiseConfig::Variance(v) => {
                if !(*v > 0.0) {
                    return Err(invalid("noise_cov", "variance must be positive"));
                }
                NoiseCovariance::scaled_identity(obs_dim, *v)
            }
            NoiseConfig::Matrix(rows) => {
                if rows.len() != obs_dim || rows.iter().any(|r| r.len() != obs_dim) {
                    return Err(invalid("noise_cov", format!("need a {obs_dim}×{obs_dim} matrix")));
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                NoiseCovariance::new(DMatrix::from_row_slice(obs_dim, obs_dim, &flat))
            }
        }
    }

    pub fn problem(&self) -> Result<ForwardProblem> {
        let model = self.forward_model()?;
        let noise = self.noise(model.obs_dim())?;
        ForwardProblem::new(model, noise)
    }
}
