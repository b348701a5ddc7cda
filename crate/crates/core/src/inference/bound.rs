//! The doubly-relaxed lower bound `L(q; alpha, Wt, xi)` and its gradients.
//!
//! With `Et_i = E_q[Zt_i Zt_i']` and `Sigma_j = Cov_q[Zt_j]`, the second moment of
//! the logit is `E_q[a_ij^2] = Tr(Wt' Et_i Wt Et_j)` where `Et_j = Sigma_j + tt_j tt_j'`,
//! which is the same as `Tr(Wt' Et_i Wt Sigma_j) + tt_j' Wt' Et_i Wt tt_j`.

use nalgebra::{DMatrix, DVector};

use super::VariationalState;
use crate::error::{domain, Result};
use crate::graph::Graph;
use crate::model::{ln_bernoulli, ln_sigmoid, OsbmParams};

/// Below this `xi`, [`jj_lambda`] switches to its Taylor expansion.
const LAMBDA_SERIES_CUTOFF: f64 = 1e-4;

/// Curvature of the quadratic logistic bound, `(g(xi) - 1/2) / (2 xi)`, with
/// `lambda(0) = 1/8`.
pub fn jj_lambda(xi: f64) -> Result<f64> {
    if !(xi >= 0.0) {
        return domain(format!("xi must be non-negative, got {xi}"));
    }
    Ok(lambda_unchecked(xi))
}

#[inline]
pub(crate) fn lambda_unchecked(xi: f64) -> f64 {
    let xi = xi.abs();
    if xi < LAMBDA_SERIES_CUTOFF {
        0.125 - xi * xi / 96.0
    } else {
        // g(x) - 1/2 = tanh(x/2) / 2
        (0.5 * xi).tanh() / (4.0 * xi)
    }
}

/// `Et_i = E[Zt_i Zt_i']` and `Sigma_i = Cov[Zt_i]` under independent
/// `Bernoulli(tau_iq)` coordinates, both `(Q+1) x (Q+1)`.
pub fn moment_matrices(tau_i: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if let Some(t) = tau_i.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return domain(format!("tau entry {t} outside [0, 1]"));
    }
    let q = tau_i.len();
    let mut sigma = DMatrix::zeros(q + 1, q + 1);
    for (c, &t) in tau_i.iter().enumerate() {
        sigma[(c, c)] = t * (1.0 - t);
    }
    Ok((second_moment(tau_i), sigma))
}

pub(crate) fn augmented_mean(tau_i: &[f64]) -> DVector<f64> {
    DVector::from_iterator(tau_i.len() + 1, tau_i.iter().copied().chain(std::iter::once(1.0)))
}

pub(crate) fn second_moment(tau_i: &[f64]) -> DMatrix<f64> {
    let tt = augmented_mean(tau_i);
    let mut e = &tt * tt.transpose();
    for (c, &t) in tau_i.iter().enumerate() {
        e[(c, c)] = t;
    }
    e
}

/// `E_q[(Zt_i' Wt Zt_j)^2]` for `i != j`.
pub fn logit_second_moment(tau_i: &[f64], tau_j: &[f64], w_tilde: &DMatrix<f64>) -> Result<f64> {
    let (e_i, _) = moment_matrices(tau_i)?;
    let (_, sigma_j) = moment_matrices(tau_j)?;
    let tt_j = augmented_mean(tau_j);
    let a = w_tilde.transpose() * &e_i * w_tilde;
    Ok((&a * &sigma_j).trace() + (tt_j.transpose() * &a * &tt_j)[(0, 0)])
}

/// `Tr(A_i Et_j)` with `A_i = Wt' Et_i Wt` precomputed.
#[inline]
pub(crate) fn logit_second_moment_from(a_i: &DMatrix<f64>, e_j: &DMatrix<f64>) -> f64 {
    frobenius(a_i, e_j)
}

/// Per-vertex moments shared by the bound, the gradients and the updates.
pub(crate) struct Moments {
    pub means: Vec<DVector<f64>>,
    pub seconds: Vec<DMatrix<f64>>,
}

impl Moments {
    pub fn new(tau: &DMatrix<f64>) -> Self {
        let rows: Vec<Vec<f64>> = tau.row_iter().map(|r| r.iter().copied().collect()).collect();
        Self {
            means: rows.iter().map(|r| augmented_mean(r)).collect(),
            seconds: rows.iter().map(|r| second_moment(r)).collect(),
        }
    }

    pub fn update_row(&mut self, i: usize, tau_i: &[f64]) {
        self.means[i] = augmented_mean(tau_i);
        self.seconds[i] = second_moment(tau_i);
    }
}

#[inline]
fn add_scaled(acc: &mut DMatrix<f64>, s: f64, m: &DMatrix<f64>) {
    acc.zip_apply(m, |a, b| *a += s * b);
}

#[inline]
pub(crate) fn frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub(crate) fn check_state(g: &Graph, s: &VariationalState, p: &OsbmParams) -> Result<()> {
    let n = g.n_vertices();
    if s.tau().nrows() != n || s.xi().nrows() != n || s.tau().ncols() != p.q() {
        return domain("graph, variational state and parameters disagree on N or Q");
    }
    Ok(())
}

/// Prior and entropy contributions: `sum tau ln alpha + (1 - tau) ln(1 - alpha)`
/// minus `sum tau ln tau + (1 - tau) ln(1 - tau)`.
pub(crate) fn latent_terms(tau: &DMatrix<f64>, alpha: &[f64]) -> f64 {
    let mut prior = 0.0;
    let mut entropy = 0.0;
    for i in 0..tau.nrows() {
        for (q, &a) in alpha.iter().enumerate() {
            let t = tau[(i, q)];
            prior += ln_bernoulli(t, a);
            entropy -= ln_bernoulli(t, t);
        }
    }
    if prior == f64::NEG_INFINITY {
        prior
    } else {
        prior + entropy
    }
}

/// `xi`-dependent part of one edge term, `ln g(xi) - xi/2 + lambda(xi) xi^2`.
#[inline]
pub(crate) fn xi_terms(xi: f64, lambda: f64) -> f64 {
    ln_sigmoid(xi) - 0.5 * xi + lambda * xi * xi
}

/// Evaluates `L(q; alpha, Wt, xi)`. Returns `-inf` when `tau` puts mass on a
/// pattern that a degenerate `alpha` forbids.
pub fn lower_bound(g: &Graph, s: &VariationalState, p: &OsbmParams) -> Result<f64> {
    check_state(g, s, p)?;
    let latent = latent_terms(s.tau(), p.alpha());
    if latent == f64::NEG_INFINITY {
        return Ok(latent);
    }
    let moments = Moments::new(s.tau());
    Ok(latent + edge_terms(g, s.xi(), p.w_tilde(), &moments))
}

pub(crate) fn edge_terms(g: &Graph, xi: &DMatrix<f64>, wt: &DMatrix<f64>, m: &Moments) -> f64 {
    let n = g.n_vertices();
    let w_means: Vec<DVector<f64>> = m.means.iter().map(|t| wt * t).collect();
    let mut total = 0.0;
    for i in 0..n {
        let a_i = wt.transpose() * &m.seconds[i] * wt;
        for j in 0..n {
            if i == j {
                continue;
            }
            let mean = m.means[i].dot(&w_means[j]);
            let second = logit_second_moment_from(&a_i, &m.seconds[j]);
            let x = xi[(i, j)];
            let lam = lambda_unchecked(x);
            total += (g.x(i, j) - 0.5) * mean + xi_terms(x, lam) - lam * second;
        }
    }
    total
}

/// The bound as a function of `Wt` with `tau` and `xi` held fixed:
/// `<Wt, B> - sum_i Tr(Wt' Et_i Wt F_i) + const`, with
/// `B = sum_{i != j} (X_ij - 1/2) tt_i tt_j'` and `F_i = sum_{j != i} lambda_ij Et_j`.
pub(crate) struct WObjective {
    pub linear: DMatrix<f64>,
    pub seconds: Vec<DMatrix<f64>>,
    pub weighted: Vec<DMatrix<f64>>,
    pub constant: f64,
}

impl WObjective {
    pub fn new(g: &Graph, s: &VariationalState, p: &OsbmParams) -> Self {
        let n = g.n_vertices();
        let k = p.q() + 1;
        let m = Moments::new(s.tau());
        let mut linear = DMatrix::zeros(k, k);
        let mut weighted = Vec::with_capacity(n);
        let mut constant = latent_terms(s.tau(), p.alpha());
        for i in 0..n {
            let mut out_sum = DVector::zeros(k);
            let mut f_i = DMatrix::zeros(k, k);
            for j in 0..n {
                if i == j {
                    continue;
                }
                out_sum.axpy(g.x(i, j) - 0.5, &m.means[j], 1.0);
                let x = s.xi()[(i, j)];
                let lam = lambda_unchecked(x);
                add_scaled(&mut f_i, lam, &m.seconds[j]);
                constant += xi_terms(x, lam);
            }
            linear += &m.means[i] * out_sum.transpose();
            weighted.push(f_i);
        }
        Self {
            linear,
            seconds: m.seconds,
            weighted,
            constant,
        }
    }

    /// Bound value and gradient at `wt`.
    pub fn value_and_gradient(&self, wt: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
        let mut quad = DMatrix::zeros(wt.nrows(), wt.ncols());
        for (e, f) in self.seconds.iter().zip(&self.weighted) {
            quad += e * wt * f;
        }
        let value = self.constant + frobenius(wt, &self.linear) - frobenius(wt, &quad);
        let grad = &self.linear - quad * 2.0;
        (value, grad)
    }
}

/// `dL/dWt` with `tau` and `xi` held fixed.
pub fn grad_w_tilde(g: &Graph, s: &VariationalState, p: &OsbmParams) -> Result<DMatrix<f64>> {
    check_state(g, s, p)?;
    Ok(WObjective::new(g, s, p).value_and_gradient(p.w_tilde()).1)
}

/// The bound restricted to one row `tau_i`, others fixed:
/// `tt_i' c - Tr(Et_i M) + prior(tau_i) + entropy(tau_i) + const`.
pub(crate) struct VertexObjective {
    pub c: DVector<f64>,
    pub m: DMatrix<f64>,
}

impl VertexObjective {
    pub fn new(g: &Graph, xi: &DMatrix<f64>, wt: &DMatrix<f64>, moments: &Moments, i: usize) -> Self {
        let n = g.n_vertices();
        let k = wt.nrows();
        let mut out_sum = DVector::zeros(k);
        let mut in_sum = DVector::zeros(k);
        let mut out_weighted = DMatrix::zeros(k, k);
        let mut in_weighted = DMatrix::zeros(k, k);
        for j in 0..n {
            if i == j {
                continue;
            }
            out_sum.axpy(g.x(i, j) - 0.5, &moments.means[j], 1.0);
            in_sum.axpy(g.x(j, i) - 0.5, &moments.means[j], 1.0);
            add_scaled(&mut out_weighted, lambda_unchecked(xi[(i, j)]), &moments.seconds[j]);
            add_scaled(&mut in_weighted, lambda_unchecked(xi[(j, i)]), &moments.seconds[j]);
        }
        let c = wt * out_sum + wt.transpose() * in_sum;
        let m = wt * out_weighted * wt.transpose() + wt.transpose() * in_weighted * wt;
        Self { c, m }
    }

    /// Local field `h_q` with `dL/dtau_q = h_q - logit(tau_q)`. The diagonal of
    /// `Et_i` is linear in `tau_q`, so `h_q` does not depend on `tau_q` itself.
    pub fn fields(&self, tau_i: &[f64], logit_alpha: &[f64]) -> Vec<f64> {
        let q = tau_i.len();
        (0..q)
            .map(|r| {
                let mut cross = 0.0;
                for (l, &t) in tau_i.iter().enumerate() {
                    if l != r {
                        cross += t * self.m[(r, l)];
                    }
                }
                self.c[r] - self.m[(r, r)] - 2.0 * cross - 2.0 * self.m[(r, q)] + logit_alpha[r]
            })
            .collect()
    }

    /// The tau_i-dependent part of the bound.
    pub fn value(&self, tau_i: &[f64], alpha: &[f64]) -> f64 {
        let tt = augmented_mean(tau_i);
        let e = second_moment(tau_i);
        let mut v = tt.dot(&self.c) - frobenius(&e, &self.m);
        for (&t, &a) in tau_i.iter().zip(alpha) {
            v += ln_bernoulli(t, a) - ln_bernoulli(t, t);
        }
        v
    }
}

#[inline]
pub(crate) fn logit(p: f64) -> f64 {
    p.ln() - (-p).ln_1p()
}

/// `dL/dtau` for every row, `N x Q`. Entries at `tau in {0, 1}` are infinite.
pub fn grad_tau(g: &Graph, s: &VariationalState, p: &OsbmParams) -> Result<DMatrix<f64>> {
    check_state(g, s, p)?;
    let n = g.n_vertices();
    let q = p.q();
    let moments = Moments::new(s.tau());
    let logit_alpha: Vec<f64> = p.alpha().iter().map(|&a| logit(a)).collect();
    let mut out = DMatrix::zeros(n, q);
    for i in 0..n {
        let row: Vec<f64> = s.tau().row(i).iter().copied().collect();
        let obj = VertexObjective::new(g, s.xi(), p.w_tilde(), &moments, i);
        for (r, h) in obj.fields(&row, &logit_alpha).into_iter().enumerate() {
            out[(i, r)] = h - logit(row[r]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{complete_log_likelihood, LatentMatrix};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lambda_limits_and_monotonicity() {
        assert_eq!(jj_lambda(0.0).unwrap(), 0.125);
        assert_abs_diff_eq!(jj_lambda(1e-9).unwrap(), 0.125, epsilon = 1e-15);
        assert!(jj_lambda(-1.0).is_err());
        assert!(jj_lambda(f64::NAN).is_err());
        // the two branches meet at the cutoff
        let x = LAMBDA_SERIES_CUTOFF;
        let series = 0.125 - x * x / 96.0;
        let direct = (crate::model::sigmoid(x) - 0.5) / (2.0 * x);
        assert_abs_diff_eq!(series, direct, epsilon = 1e-12);
        let grid: Vec<f64> = (0..4000).map(|k| k as f64 * 0.01).collect();
        for w in grid.windows(2) {
            let (a, b) = (jj_lambda(w[0]).unwrap(), jj_lambda(w[1]).unwrap());
            assert!(a > b && b > 0.0, "lambda({}) = {a}, lambda({}) = {b}", w[0], w[1]);
        }
    }

    #[test]
    fn logistic_bound_holds_and_is_tight() {
        for &xi in &[0.0, 0.3, 1.0, 4.0, 12.0] {
            let lam = jj_lambda(xi).unwrap();
            for k in -80..=80 {
                let a = k as f64 * 0.25;
                let bound = ln_sigmoid(xi) - (a + xi) / 2.0 - lam * (a * a - xi * xi);
                assert!(ln_sigmoid(-a) >= bound - 1e-12);
            }
            let tight = ln_sigmoid(xi) - xi;
            assert_abs_diff_eq!(ln_sigmoid(-xi), tight, epsilon = 1e-12);
        }
    }

    #[test]
    fn moment_matrix_cases() {
        let (e, s) = moment_matrices(&[0.5]).unwrap();
        assert_eq!(e, DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 1.0]));
        assert_eq!(s, DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.0, 0.0]));
        let z = [1.0, 0.0, 1.0];
        let (e, s) = moment_matrices(&z).unwrap();
        let zt = augmented_mean(&z);
        assert_eq!(e, &zt * zt.transpose());
        assert_eq!(s, DMatrix::zeros(4, 4));
        assert!(moment_matrices(&[1.2]).is_err());
    }

    fn random_state(n: usize, q: usize, rng: &mut ChaCha8Rng) -> VariationalState {
        let tau = DMatrix::from_fn(n, q, |_, _| rng.random_range(0.05..0.95));
        let xi = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { rng.random_range(0.0..3.0) });
        VariationalState::new(tau, xi).unwrap()
    }

    fn random_params(q: usize, rng: &mut ChaCha8Rng) -> OsbmParams {
        let alpha = (0..q).map(|_| rng.random_range(0.1..0.9)).collect();
        let wt = DMatrix::from_fn(q + 1, q + 1, |_, _| rng.random_range(-2.0..2.0));
        OsbmParams::new(alpha, wt).unwrap()
    }

    fn random_graph(n: usize, rng: &mut ChaCha8Rng) -> Graph {
        let mut g = Graph::empty(n);
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.random_bool(0.4) {
                    g.set_edge(i, j, true);
                }
            }
        }
        g
    }

    #[test]
    fn hand_value_two_vertices() {
        // Wt = 0 and xi = 0: each edge term is ln(1/2); prior and entropy cancel.
        let p = OsbmParams::new(vec![0.5], DMatrix::zeros(2, 2)).unwrap();
        let s = VariationalState::new(DMatrix::from_element(2, 1, 0.5), DMatrix::zeros(2, 2)).unwrap();
        for g in [Graph::empty(2), Graph::from_edges(2, [(0, 1)]).unwrap()] {
            assert_abs_diff_eq!(lower_bound(&g, &s, &p).unwrap(), -2.0 * 2f64.ln(), epsilon = 1e-14);
        }
    }

    #[test]
    fn tight_at_zero_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g = random_graph(4, &mut rng);
        let p = random_params(2, &mut rng).with_w_tilde(DMatrix::zeros(3, 3)).unwrap();
        let z = LatentMatrix::from_rows(&[[1u8, 0], [0, 0], [1, 1], [0, 1]]).unwrap();
        let tau = DMatrix::from_fn(4, 2, |i, q| z.get(i, q) as f64);
        let s = VariationalState::new(tau, DMatrix::zeros(4, 4)).unwrap();
        assert_abs_diff_eq!(
            lower_bound(&g, &s, &p).unwrap(),
            complete_log_likelihood(&g, &z, &p).unwrap(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn degenerate_alpha_gives_neg_infinity() {
        let p = OsbmParams::new(vec![1.0], DMatrix::zeros(2, 2)).unwrap();
        let s = VariationalState::new(DMatrix::from_element(2, 1, 0.5), DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(lower_bound(&Graph::empty(2), &s, &p).unwrap(), f64::NEG_INFINITY);
        let s1 = VariationalState::new(DMatrix::from_element(2, 1, 1.0), DMatrix::zeros(2, 2)).unwrap();
        assert!(lower_bound(&Graph::empty(2), &s1, &p).unwrap().is_finite());
    }

    #[test]
    fn bound_invariant_under_class_relabeling() {
        use crate::identifiability::{permute, Permutation};
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let g = random_graph(5, &mut rng);
        let p = random_params(3, &mut rng);
        let s = random_state(5, 3, &mut rng);
        let base = lower_bound(&g, &s, &p).unwrap();
        for sigma in Permutation::all(3) {
            let tau = DMatrix::from_fn(5, 3, |i, q| s.tau()[(i, sigma.as_slice()[q])]);
            let s2 = VariationalState::new(tau, s.xi().clone()).unwrap();
            let v = lower_bound(&g, &s2, &permute(&p, &sigma).unwrap()).unwrap();
            assert!((v - base).abs() < 1e-12 * base.abs().max(1.0));
        }
    }

    #[test]
    fn w_objective_matches_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let g = random_graph(6, &mut rng);
        let p = random_params(2, &mut rng);
        let s = random_state(6, 2, &mut rng);
        let obj = WObjective::new(&g, &s, &p);
        for _ in 0..5 {
            let wt = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-2.0..2.0));
            let direct = lower_bound(&g, &s, &p.with_w_tilde(wt.clone()).unwrap()).unwrap();
            assert_abs_diff_eq!(obj.value_and_gradient(&wt).0, direct, epsilon = 1e-10);
        }
    }

    #[test]
    fn vertex_objective_tracks_bound_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let g = random_graph(6, &mut rng);
        let p = random_params(3, &mut rng);
        let s = random_state(6, 3, &mut rng);
        let moments = Moments::new(s.tau());
        let obj = VertexObjective::new(&g, s.xi(), p.w_tilde(), &moments, 2);
        let base_row: Vec<f64> = s.tau().row(2).iter().copied().collect();
        let base = lower_bound(&g, &s, &p).unwrap();
        for _ in 0..5 {
            let row: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
            let mut tau = s.tau().clone();
            for (q, &t) in row.iter().enumerate() {
                tau[(2, q)] = t;
            }
            let changed = lower_bound(&g, &VariationalState::new(tau, s.xi().clone()).unwrap(), &p).unwrap();
            let predicted = obj.value(&row, p.alpha()) - obj.value(&base_row, p.alpha());
            assert_abs_diff_eq!(changed - base, predicted, epsilon = 1e-10);
        }
    }
}
