//! Small dense BFGS maximizer with backtracking line search.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, Debug)]
pub(crate) struct BfgsOptions {
    pub grad_tol: f64,
    pub max_iters: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct BfgsOutcome {
    pub x: DVector<f64>,
    pub value: f64,
    pub grad_max_norm: f64,
    pub iterations: usize,
    pub line_search_failed: bool,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

/// Maximizes `f`, which returns the value and gradient at a point. Only
/// improving steps are accepted, so `value >= f(x0)`.
pub(crate) fn bfgs_maximize<F>(f: F, x0: DVector<f64>, opts: BfgsOptions) -> BfgsOutcome
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>),
{
    let n = x0.len();
    let mut x = x0;
    let (mut fx, mut gx) = f(&x);
    let mut inv_hessian: Option<DMatrix<f64>> = None;
    let mut iterations = 0;
    let mut line_search_failed = false;

    while iterations < opts.max_iters && gx.amax() > opts.grad_tol {
        iterations += 1;
        // ascent direction d = H g, with H approximating -(Hessian)^-1
        let mut dir = match &inv_hessian {
            Some(h) => h * &gx,
            None => &gx / gx.norm(),
        };
        let mut slope = gx.dot(&dir);
        if !(slope > 0.0) {
            inv_hessian = None;
            dir = &gx / gx.norm();
            slope = gx.dot(&dir);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let candidate = &x + &dir * step;
            let (fc, gc) = f(&candidate);
            if fc.is_finite() && fc >= fx + ARMIJO * step * slope {
                accepted = Some((candidate, fc, gc));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            if inv_hessian.is_some() {
                // retry from a steepest-ascent step before giving up
                inv_hessian = None;
                continue;
            }
            line_search_failed = true;
            break;
        };
        let s = &x_new - &x;
        // y is the gradient change of the minimized function -f
        let y = &gx - &g_new;
        let sy = s.dot(&y);
        if sy > 1e-300 {
            let h = inv_hessian.get_or_insert_with(|| DMatrix::identity(n, n) * (sy / y.dot(&y)));
            let rho = 1.0 / sy;
            let hy = &*h * &y;
            let yhy = y.dot(&hy);
            // H+ = H - rho (s hy' + hy s') + (rho^2 yHy + rho) s s'
            *h -= (&s * hy.transpose() + &hy * s.transpose()) * rho;
            *h += (&s * s.transpose()) * (rho * rho * yhy + rho);
        }
        x = x_new;
        fx = f_new;
        gx = g_new;
    }

    BfgsOutcome {
        grad_max_norm: gx.amax(),
        x,
        value: fx,
        iterations,
        line_search_failed,
    }
}
