//! Outer variational EM loop and MAP extraction.

use log::debug;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ahc::ahc_starts;
use super::bound::lower_bound;
use super::updates::{clamp_alpha, estep_tau, mstep_alpha, mstep_w, update_xi};
use super::{FitConfig, FitResult, VariationalState};
use crate::error::{domain, OsbmError, Result};
use crate::graph::Graph;
use crate::identifiability::{invert, InversionVector};
use crate::model::{LatentMatrix, OsbmParams};

/// Fits a `q`-class OSBM to `g`. The EM loop runs from every AHC start of
/// [`ahc_starts`], all sharing one `Wt` draw from `cfg.seed`, and the run with
/// the highest final bound is kept (the earliest start on ties).
/// Classes with `alpha_q > 1/2` are reported inverted, which leaves the bound
/// unchanged.
pub fn fit(g: &Graph, q: usize, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let n = g.n_vertices();
    if n < 2 {
        return domain("fitting needs at least two vertices");
    }
    if q == 0 || q > n {
        return domain(format!("q = {q} must lie in 1..={n}"));
    }
    let w0 = initial_w_tilde(q, cfg)?;
    let starts = ahc_starts(g, q)?;
    let mut best: Option<FitResult> = None;
    for (k, tau) in starts.into_iter().enumerate() {
        let params = OsbmParams::new(clamped_means(&tau), w0.clone())?;
        let r = fit_from(g, cfg, tau, params)?;
        debug!("start {k}: bound {:.6} after {} iterations", r.final_bound(), r.iterations);
        if best.as_ref().is_none_or(|b| r.final_bound() > b.final_bound()) {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one start"))
}

/// Runs the EM loop from a given `tau` and parameters.
pub fn fit_from(g: &Graph, cfg: &FitConfig, tau: DMatrix<f64>, params: OsbmParams) -> Result<FitResult> {
    cfg.validate()?;
    let n = g.n_vertices();
    let mut params = params;
    let mut state = VariationalState::new(tau, DMatrix::zeros(n, n))?;
    super::bound::check_state(g, &state, &params)?;

    let mut trace = Vec::new();
    let mut converged = false;
    let mut warnings = 0;
    for it in 0..cfg.max_outer_iters {
        state = update_xi(&state, &params)?;
        let mut alpha = mstep_alpha(&state);
        clamp_alpha(&mut alpha);
        params.set_alpha_unchecked(alpha);
        let (next, report) = mstep_w(g, &state, &params)?;
        params = next;
        if report.line_search_failed {
            warnings += 1;
        }
        state = estep_tau(g, &state, &params, cfg)?;
        let bound = lower_bound(g, &state, &params)?;
        if !bound.is_finite() {
            return Err(OsbmError::Numerical(format!("bound is {bound} at iteration {}", it + 1)));
        }
        debug!("iteration {}: bound {bound:.6}", it + 1);
        let previous = trace.last().copied();
        trace.push(bound);
        if previous.is_some_and(|prev: f64| (bound - prev).abs() <= cfg.bound_tol) {
            converged = true;
            break;
        }
    }
    let (params, state) = uninvert(params, state)?;
    let z_map = map_assign(state.tau(), cfg.map_threshold);
    Ok(FitResult {
        params,
        iterations: trace.len(),
        bound_trace: trace,
        z_map,
        converged,
        state,
        w_step_warnings: warnings,
    })
}

fn initial_w_tilde(q: usize, cfg: &FitConfig) -> Result<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, cfg.w_init_sigma2.sqrt())
        .map_err(|e| OsbmError::Domain(format!("initial weight distribution: {e}")))?;
    let mut wt = DMatrix::zeros(q + 1, q + 1);
    // row-major draws so the layout matches the JSON row order
    for a in 0..=q {
        for b in 0..=q {
            wt[(a, b)] = normal.sample(&mut rng);
        }
    }
    Ok(wt)
}

/// Flips every class with `alpha_q > 1/2` to its complement.
fn uninvert(params: OsbmParams, state: VariationalState) -> Result<(OsbmParams, VariationalState)> {
    let bits: Vec<u8> = params.alpha().iter().map(|&a| (a > 0.5) as u8).collect();
    if bits.iter().all(|&b| b == 0) {
        return Ok((params, state));
    }
    let flipped = invert(&params, &InversionVector::new(bits.clone())?)?;
    let mut tau = state.tau().clone();
    for (q, &b) in bits.iter().enumerate() {
        if b == 1 {
            tau.column_mut(q).apply(|t| *t = 1.0 - *t);
        }
    }
    Ok((flipped, VariationalState::from_parts(tau, state.xi().clone())))
}

fn clamped_means(tau: &DMatrix<f64>) -> Vec<f64> {
    let mut alpha = mstep_alpha(&VariationalState::from_parts(tau.clone(), DMatrix::zeros(0, 0)));
    clamp_alpha(&mut alpha);
    alpha
}

/// `Z_iq = 1` iff `tau_iq >= threshold`: all-zero rows are outliers, rows with
/// several ones are overlaps.
pub fn map_assign(tau: &DMatrix<f64>, threshold: f64) -> LatentMatrix {
    let mut z = LatentMatrix::zeros(tau.nrows(), tau.ncols());
    for i in 0..tau.nrows() {
        for q in 0..tau.ncols() {
            if tau[(i, q)] >= threshold {
                z.set(i, q, true);
            }
        }
    }
    z
}

/// Single-membership reading of `tau`: one class per vertex, the first maximizer.
pub fn argmax_assign(tau: &DMatrix<f64>) -> LatentMatrix {
    let mut z = LatentMatrix::zeros(tau.nrows(), tau.ncols());
    for i in 0..tau.nrows() {
        let best = (0..tau.ncols()).fold(0, |best, q| if tau[(i, q)] > tau[(i, best)] { q } else { best });
        if tau.ncols() > 0 {
            z.set(i, best, true);
        }
    }
    z
}
