//! Variational EM for the OSBM: lower bound, block updates, initialization
//! and the outer fitting loop.

pub mod ahc;
pub mod bound;
pub mod fit;
pub mod optim;
pub mod updates;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{domain, OsbmError, Result};
use crate::model::{matrix_rows, LatentMatrix, OsbmParams};

pub use ahc::{ahc_starts, init_tau_ahc, Profile};
pub use bound::{grad_tau, grad_w_tilde, jj_lambda, logit_second_moment, lower_bound, moment_matrices};
pub use fit::{argmax_assign, fit, fit_from, map_assign};
pub use updates::{estep_tau, mstep_alpha, mstep_w, update_xi, WStepReport};

/// Factorized posterior `tau` (N x Q) and local bound parameters `xi` (N x N).
#[derive(Clone, Debug, PartialEq)]
pub struct VariationalState {
    tau: DMatrix<f64>,
    xi: DMatrix<f64>,
}

impl VariationalState {
    pub fn new(tau: DMatrix<f64>, xi: DMatrix<f64>) -> Result<Self> {
        let n = tau.nrows();
        if xi.nrows() != n || xi.ncols() != n {
            return domain(format!("xi must be {n} x {n}, got {} x {}", xi.nrows(), xi.ncols()));
        }
        if let Some(t) = tau.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return domain(format!("tau entry {t} outside [0, 1]"));
        }
        if let Some(x) = xi.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return domain(format!("xi entry {x} is not a finite non-negative real"));
        }
        Ok(Self { tau, xi })
    }

    pub(crate) fn from_parts(tau: DMatrix<f64>, xi: DMatrix<f64>) -> Self {
        Self { tau, xi }
    }

    pub fn tau(&self) -> &DMatrix<f64> {
        &self.tau
    }

    pub fn xi(&self) -> &DMatrix<f64> {
        &self.xi
    }

    pub fn n(&self) -> usize {
        self.tau.nrows()
    }

    pub fn q(&self) -> usize {
        self.tau.ncols()
    }

    pub fn into_tau(self) -> DMatrix<f64> {
        self.tau
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_outer_iters: usize,
    pub inner_tau_sweeps: usize,
    pub bound_tol: f64,
    pub tau_tol: f64,
    pub w_init_sigma2: f64,
    pub map_threshold: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_outer_iters: 200,
            inner_tau_sweeps: 50,
            bound_tol: 1e-4,
            tau_tol: 1e-4,
            w_init_sigma2: 0.5,
            map_threshold: 0.5,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let invalid = |field: &str, message: &str| {
            Err(OsbmError::InvalidField {
                field: field.into(),
                message: message.into(),
            })
        };
        if !(self.bound_tol > 0.0 && self.bound_tol.is_finite()) {
            return invalid("bound_tol", "must be a positive real");
        }
        if !(self.tau_tol > 0.0 && self.tau_tol.is_finite()) {
            return invalid("tau_tol", "must be a positive real");
        }
        if !(self.w_init_sigma2 >= 0.0 && self.w_init_sigma2.is_finite()) {
            return invalid("w_init_sigma2", "must be a non-negative real");
        }
        if !(self.map_threshold > 0.0 && self.map_threshold < 1.0) {
            return invalid("map_threshold", "must lie strictly between 0 and 1");
        }
        if self.max_outer_iters == 0 {
            return invalid("max_outer_iters", "must be at least 1");
        }
        if self.inner_tau_sweeps == 0 {
            return invalid("inner_tau_sweeps", "must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub params: OsbmParams,
    pub state: VariationalState,
    pub bound_trace: Vec<f64>,
    pub z_map: LatentMatrix,
    pub iterations: usize,
    pub converged: bool,
    /// Outer iterations in which the `Wt` line search gave up early.
    pub w_step_warnings: usize,
}

#[derive(Serialize)]
struct FitResultFile<'a> {
    params: serde_json::Value,
    tau: Vec<Vec<f64>>,
    bound_trace: &'a [f64],
    z_map: Vec<Vec<u8>>,
    converged: bool,
    iterations: usize,
}

impl FitResult {
    pub fn final_bound(&self) -> f64 {
        self.bound_trace.last().copied().unwrap_or(f64::NEG_INFINITY)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = FitResultFile {
            params: serde_json::from_str(&self.params.to_json())?,
            tau: matrix_rows(self.state.tau()),
            bound_trace: &self.bound_trace,
            z_map: (0..self.z_map.n()).map(|i| self.z_map.row(i).to_vec()).collect(),
            converged: self.converged,
            iterations: self.iterations,
        };
        let mut s = serde_json::to_string_pretty(&file)?;
        s.push('\n');
        Ok(s)
    }
}
