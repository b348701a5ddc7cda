//! The four coordinate blocks of the variational EM loop.

use log::warn;
use nalgebra::{DMatrix, DVector};

use super::bound::{check_state, logit, logit_second_moment_from, Moments, VertexObjective, WObjective};
use super::optim::{bfgs_maximize, BfgsOptions};
use super::{FitConfig, VariationalState};
use crate::error::{OsbmError, Result};
use crate::graph::Graph;
use crate::model::{sigmoid, OsbmParams};

/// Radicands in `[-XI_RADICAND_SLACK, 0)` are rounding noise and clamp to zero.
const XI_RADICAND_SLACK: f64 = 1e-12;

/// `alpha` is kept inside `[ALPHA_CLAMP, 1 - ALPHA_CLAMP]` during fitting.
pub const ALPHA_CLAMP: f64 = 1e-6;

/// Interior box for free `tau` coordinates in the E-step.
pub const TAU_FLOOR: f64 = 1e-10;

/// Stopping rule of the `Wt` step.
pub const W_GRAD_TOL: f64 = 1e-5;
pub const W_MAX_ITERS: usize = 200;

const VERTEX_MAX_ITERS: usize = 50;
const VERTEX_STEP_TOL: f64 = 1e-10;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

/// Sets every `xi_ij` to `sqrt(E_q[a_ij^2])`, the maximizer of the bound in `xi`.
pub fn update_xi(s: &VariationalState, p: &OsbmParams) -> Result<VariationalState> {
    let n = s.tau().nrows();
    if s.tau().ncols() != p.q() {
        return Err(OsbmError::Domain("tau and parameters disagree on Q".into()));
    }
    let moments = Moments::new(s.tau());
    let wt = p.w_tilde();
    let mut xi = DMatrix::zeros(n, n);
    for i in 0..n {
        let a_i = wt.transpose() * &moments.seconds[i] * wt;
        for j in 0..n {
            if i == j {
                continue;
            }
            let r = logit_second_moment_from(&a_i, &moments.seconds[j]);
            if r < -XI_RADICAND_SLACK {
                return Err(OsbmError::Numerical(format!(
                    "negative second moment {r} for pair ({i}, {j})"
                )));
            }
            xi[(i, j)] = r.max(0.0).sqrt();
        }
    }
    Ok(VariationalState::from_parts(s.tau().clone(), xi))
}

/// Column means of `tau`.
pub fn mstep_alpha(s: &VariationalState) -> Vec<f64> {
    let n = s.tau().nrows() as f64;
    s.tau().column_iter().map(|c| c.sum() / n).collect()
}

pub(crate) fn clamp_alpha(alpha: &mut [f64]) {
    for a in alpha {
        *a = a.clamp(ALPHA_CLAMP, 1.0 - ALPHA_CLAMP);
    }
}

/// Diagnostics of one `Wt` step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WStepReport {
    pub iterations: usize,
    pub grad_max_norm: f64,
    pub bound_before: f64,
    pub bound_after: f64,
    pub line_search_failed: bool,
}

/// Maximizes the bound in `Wt` by BFGS with the closed-form gradient; the
/// returned parameters never have a lower bound than the incoming ones.
pub fn mstep_w(g: &Graph, s: &VariationalState, p: &OsbmParams) -> Result<(OsbmParams, WStepReport)> {
    check_state(g, s, p)?;
    let k = p.q() + 1;
    let objective = WObjective::new(g, s, p);
    let to_matrix = |x: &DVector<f64>| DMatrix::from_column_slice(k, k, x.as_slice());
    let f = |x: &DVector<f64>| {
        let (v, grad) = objective.value_and_gradient(&to_matrix(x));
        (v, DVector::from_column_slice(grad.as_slice()))
    };
    let x0 = DVector::from_column_slice(p.w_tilde().as_slice());
    let (bound_before, _) = f(&x0);
    let out = bfgs_maximize(
        f,
        x0,
        BfgsOptions {
            grad_tol: W_GRAD_TOL,
            max_iters: W_MAX_ITERS,
        },
    );
    if out.line_search_failed {
        warn!(
            "Wt line search failed after {} iterations (gradient max-norm {:.3e})",
            out.iterations, out.grad_max_norm
        );
    }
    let mut next = p.clone();
    next.set_w_tilde_unchecked(to_matrix(&out.x));
    Ok((
        next,
        WStepReport {
            iterations: out.iterations,
            grad_max_norm: out.grad_max_norm,
            bound_before,
            bound_after: out.value,
            line_search_failed: out.line_search_failed,
        },
    ))
}

/// Cyclic E-step: each row `tau_i` is improved by projected gradient ascent on
/// the box with the other rows fixed, sweeping until the largest change in a
/// sweep is at most `cfg.tau_tol` or `cfg.inner_tau_sweeps` sweeps have run.
pub fn estep_tau(g: &Graph, s: &VariationalState, p: &OsbmParams, cfg: &FitConfig) -> Result<VariationalState> {
    Ok(estep_tau_counted(g, s, p, cfg)?.0)
}

pub(crate) fn estep_tau_counted(
    g: &Graph,
    s: &VariationalState,
    p: &OsbmParams,
    cfg: &FitConfig,
) -> Result<(VariationalState, usize)> {
    check_state(g, s, p)?;
    let n = g.n_vertices();
    let q = p.q();
    let alpha = p.alpha();
    let logit_alpha: Vec<f64> = alpha.iter().map(|&a| logit(a)).collect();
    let mut tau = s.tau().clone();
    let mut moments = Moments::new(&tau);
    let mut sweeps = 0;
    while sweeps < cfg.inner_tau_sweeps {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for i in 0..n {
            let objective = VertexObjective::new(g, s.xi(), p.w_tilde(), &moments, i);
            let row: Vec<f64> = tau.row(i).iter().copied().collect();
            let new_row = optimize_row(&objective, &row, alpha, &logit_alpha);
            for r in 0..q {
                max_change = max_change.max((new_row[r] - row[r]).abs());
                tau[(i, r)] = new_row[r];
            }
            moments.update_row(i, &new_row);
        }
        if max_change <= cfg.tau_tol {
            break;
        }
    }
    Ok((VariationalState::from_parts(tau, s.xi().clone()), sweeps))
}

/// Projected ascent on one row. The search direction is
/// `d_q = g(h_q) - tau_q`, a positive rescaling of the gradient
/// `h_q - logit(tau_q)`, so a full step lands on the coordinatewise optimum.
fn optimize_row(obj: &VertexObjective, row: &[f64], alpha: &[f64], logit_alpha: &[f64]) -> Vec<f64> {
    let q = row.len();
    // coordinates with a degenerate prior have a single feasible value
    let pinned: Vec<Option<f64>> = alpha
        .iter()
        .map(|&a| match a {
            a if a <= 0.0 => Some(0.0),
            a if a >= 1.0 => Some(1.0),
            _ => None,
        })
        .collect();
    let mut tau: Vec<f64> = row
        .iter()
        .zip(&pinned)
        .map(|(&t, pin)| pin.unwrap_or(t))
        .collect();
    let mut value = obj.value(&tau, alpha);
    if !value.is_finite() {
        // a finite start is always available strictly inside the box
        tau = tau
            .iter()
            .zip(&pinned)
            .map(|(&t, pin)| pin.unwrap_or(t.clamp(TAU_FLOOR, 1.0 - TAU_FLOOR)))
            .collect();
        value = obj.value(&tau, alpha);
    }
    for _ in 0..VERTEX_MAX_ITERS {
        let fields = obj.fields(&tau, logit_alpha);
        let mut dir = vec![0.0; q];
        let mut slope = 0.0;
        for r in 0..q {
            if pinned[r].is_some() {
                continue;
            }
            let tc = tau[r].clamp(TAU_FLOOR, 1.0 - TAU_FLOOR);
            let target = sigmoid(fields[r]).clamp(TAU_FLOOR, 1.0 - TAU_FLOOR);
            dir[r] = target - tau[r];
            slope += (fields[r] - logit(tc)) * dir[r];
        }
        if dir.iter().all(|d| d.abs() <= VERTEX_STEP_TOL) {
            break;
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let candidate: Vec<f64> = tau
                .iter()
                .zip(&dir)
                .map(|(&t, &d)| (t + step * d).clamp(0.0, 1.0))
                .collect();
            let cv = obj.value(&candidate, alpha);
            if cv >= value + ARMIJO * step * slope.max(0.0) {
                let moved = candidate.iter().zip(&tau).any(|(a, b)| a != b);
                tau = candidate;
                value = cv;
                accepted = moved;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    tau
}
