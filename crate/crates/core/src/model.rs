//! OSBM parameters, latent memberships, sampling, and exact likelihoods.
//!
//! Each vertex `i` carries a binary membership row `Z_i` with independent
//! `Bernoulli(alpha_q)` coordinates. The edge `i -> j` is present with
//! probability `g(a_ij)` where
//!
//! ```text
//! a_ij = Z_i' W Z_j + Z_i' U + V' Z_j + W*  =  Zt_i' Wt Zt_j,   Zt = (Z, 1)
//! ```
//!
//! and `Wt = [[W, U], [V', W*]]` is the `(Q+1) x (Q+1)` augmented weight matrix.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, OsbmError, Result};
use crate::graph::Graph;

/// Largest `N * Q` accepted by [`exact_log_likelihood`].
pub const MAX_ENUMERATION_BITS: usize = 20;

/// Logistic sigmoid, stable for either sign of `x`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)`, linearized for large arguments.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else if x < -35.0 {
        x.exp()
    } else {
        x.max(0.0) + (-x.abs()).exp().ln_1p()
    }
}

/// `ln g(x) = -softplus(-x)`.
#[inline]
pub fn ln_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// `z ln p + (1 - z) ln(1 - p)` with `0 ln 0 = 0`; `-inf` when `z` is
/// impossible under a degenerate `p`.
#[inline]
pub fn ln_bernoulli(z: f64, p: f64) -> f64 {
    let on = if z == 0.0 { 0.0 } else { z * p.ln() };
    let off = if z == 1.0 { 0.0 } else { (1.0 - z) * (-p).ln_1p() };
    on + off
}

/// Numerically stable `ln sum exp(x)`; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for v in values {
        if v == f64::NEG_INFINITY {
            continue;
        }
        if v > max {
            sum = sum * (max - v).exp() + 1.0;
            max = v;
        } else {
            sum += (v - max).exp();
        }
    }
    if max == f64::NEG_INFINITY {
        max
    } else {
        max + sum.ln()
    }
}

/// Class probabilities and augmented weight matrix of an OSBM with `Q` classes.
#[derive(Clone, Debug, PartialEq)]
pub struct OsbmParams {
    alpha: Vec<f64>,
    w_tilde: DMatrix<f64>,
}

impl OsbmParams {
    pub fn new(alpha: Vec<f64>, w_tilde: DMatrix<f64>) -> Result<Self> {
        let q = alpha.len();
        if q == 0 {
            return domain("at least one class is required");
        }
        if w_tilde.nrows() != q + 1 || w_tilde.ncols() != q + 1 {
            return domain(format!(
                "w_tilde must be {}x{}, got {}x{}",
                q + 1,
                q + 1,
                w_tilde.nrows(),
                w_tilde.ncols()
            ));
        }
        if let Some(a) = alpha.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return domain(format!("alpha entry {a} outside [0, 1]"));
        }
        if w_tilde.iter().any(|w| !w.is_finite()) {
            return domain("w_tilde entries must be finite");
        }
        Ok(Self { alpha, w_tilde })
    }

    /// Assembles `Wt = [[W, U], [V', W*]]` from its blocks.
    pub fn from_blocks(
        alpha: Vec<f64>,
        w: &DMatrix<f64>,
        u: &DVector<f64>,
        v: &DVector<f64>,
        w_star: f64,
    ) -> Result<Self> {
        let q = alpha.len();
        if w.nrows() != q || w.ncols() != q || u.len() != q || v.len() != q {
            return domain("block shapes do not match the number of classes");
        }
        let mut wt = DMatrix::zeros(q + 1, q + 1);
        wt.view_mut((0, 0), (q, q)).copy_from(w);
        wt.view_mut((0, q), (q, 1)).copy_from(u);
        wt.view_mut((q, 0), (1, q)).copy_from(&v.transpose());
        wt[(q, q)] = w_star;
        Self::new(alpha, wt)
    }

    pub fn q(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn w_tilde(&self) -> &DMatrix<f64> {
        &self.w_tilde
    }

    /// Interaction block `W`.
    pub fn w(&self) -> DMatrix<f64> {
        let q = self.q();
        self.w_tilde.view((0, 0), (q, q)).into_owned()
    }

    /// Sender effects `U` (last column of `Wt`).
    pub fn u(&self) -> DVector<f64> {
        let q = self.q();
        self.w_tilde.view((0, q), (q, 1)).column(0).into_owned()
    }

    /// Receiver effects `V` (last row of `Wt`).
    pub fn v(&self) -> DVector<f64> {
        let q = self.q();
        self.w_tilde.view((q, 0), (1, q)).row(0).transpose()
    }

    /// Sparsity bias `W*`.
    pub fn w_star(&self) -> f64 {
        let q = self.q();
        self.w_tilde[(q, q)]
    }

    pub fn with_alpha(&self, alpha: Vec<f64>) -> Result<Self> {
        Self::new(alpha, self.w_tilde.clone())
    }

    pub fn with_w_tilde(&self, w_tilde: DMatrix<f64>) -> Result<Self> {
        Self::new(self.alpha.clone(), w_tilde)
    }

    pub(crate) fn set_w_tilde_unchecked(&mut self, w_tilde: DMatrix<f64>) {
        debug_assert_eq!(w_tilde.shape(), self.w_tilde.shape());
        self.w_tilde = w_tilde;
    }

    pub(crate) fn set_alpha_unchecked(&mut self, alpha: Vec<f64>) {
        debug_assert_eq!(alpha.len(), self.alpha.len());
        self.alpha = alpha;
    }

    /// Max-norm distance over `alpha` and `w_tilde`; infinite on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.q() != other.q() {
            return f64::INFINITY;
        }
        let da = self
            .alpha
            .iter()
            .zip(&other.alpha)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let dw = (&self.w_tilde - &other.w_tilde).amax();
        da.max(dw)
    }

    pub fn to_json(&self) -> String {
        let file = ParamsFile {
            q: self.q(),
            alpha: self.alpha.clone(),
            w_tilde: matrix_rows(&self.w_tilde),
        };
        serde_json::to_string_pretty(&file).expect("params serialize") + "\n"
    }

    /// Parses `{"q": Q, "alpha": [...], "w_tilde": [[...]]}` (row-major).
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ParamsFile = serde_json::from_str(text)?;
        file.into_params()
    }
}

#[derive(Serialize, Deserialize)]
pub(crate) struct ParamsFile {
    pub q: usize,
    pub alpha: Vec<f64>,
    pub w_tilde: Vec<Vec<f64>>,
}

impl ParamsFile {
    pub(crate) fn into_params(self) -> Result<OsbmParams> {
        let bad = |field: &str, message: String| OsbmError::InvalidField {
            field: field.to_string(),
            message,
        };
        if self.q == 0 {
            return Err(bad("q", "must be at least 1".into()));
        }
        if self.alpha.len() != self.q {
            return Err(bad(
                "alpha",
                format!("expected {} entries, got {}", self.q, self.alpha.len()),
            ));
        }
        if let Some(a) = self.alpha.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(bad("alpha", format!("entry {a} outside [0, 1]")));
        }
        let k = self.q + 1;
        if self.w_tilde.len() != k || self.w_tilde.iter().any(|r| r.len() != k) {
            return Err(bad("w_tilde", format!("expected a {k}x{k} matrix")));
        }
        let wt = DMatrix::from_fn(k, k, |r, c| self.w_tilde[r][c]);
        if wt.iter().any(|w| !w.is_finite()) {
            return Err(bad("w_tilde", "entries must be finite".into()));
        }
        OsbmParams::new(self.alpha, wt)
    }
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Binary `N x Q` membership table. Rows may be all-zero (null component) or
/// contain several ones (overlap).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LatentFile", into = "LatentFile")]
pub struct LatentMatrix {
    n: usize,
    q: usize,
    z: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct LatentFile {
    z: Vec<Vec<u8>>,
}

impl TryFrom<LatentFile> for LatentMatrix {
    type Error = OsbmError;

    fn try_from(f: LatentFile) -> Result<Self> {
        LatentMatrix::from_rows(&f.z)
    }
}

impl From<LatentMatrix> for LatentFile {
    fn from(m: LatentMatrix) -> Self {
        LatentFile {
            z: (0..m.n).map(|i| m.row(i).to_vec()).collect(),
        }
    }
}

impl LatentMatrix {
    pub fn zeros(n: usize, q: usize) -> Self {
        Self {
            n,
            q,
            z: vec![0; n * q],
        }
    }

    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let q = rows.first().map_or(0, |r| r.as_ref().len());
        let mut z = Vec::with_capacity(n * q);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != q {
                return domain(format!("row {i} has {} entries, expected {q}", r.len()));
            }
            if r.iter().any(|&v| v > 1) {
                return domain(format!("row {i} has a non-binary entry"));
            }
            z.extend_from_slice(r);
        }
        Ok(Self { n, q, z })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    #[inline]
    pub fn get(&self, i: usize, q: usize) -> u8 {
        self.z[i * self.q + q]
    }

    pub fn set(&mut self, i: usize, q: usize, value: bool) {
        self.z[i * self.q + q] = value as u8;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u8] {
        &self.z[i * self.q..(i + 1) * self.q]
    }

    /// `Zt_i = (Z_i, 1)` as a float vector.
    pub fn augmented_row(&self, i: usize) -> DVector<f64> {
        augment(self.row(i))
    }

    /// Row as an integer class code, bit `q` = `Z_iq`.
    pub fn row_code(&self, i: usize) -> usize {
        self.row(i)
            .iter()
            .enumerate()
            .fold(0, |acc, (q, &b)| acc | ((b as usize) << q))
    }

    /// Vertices in no class.
    pub fn outlier_count(&self) -> usize {
        (0..self.n).filter(|&i| self.row(i).iter().all(|&b| b == 0)).count()
    }

    /// Vertices in two or more classes.
    pub fn overlap_count(&self) -> usize {
        (0..self.n)
            .filter(|&i| self.row(i).iter().filter(|&&b| b == 1).count() >= 2)
            .count()
    }

    pub fn column_means(&self) -> Vec<f64> {
        (0..self.q)
            .map(|q| (0..self.n).map(|i| self.get(i, q) as f64).sum::<f64>() / self.n as f64)
            .collect()
    }

    /// Reorders columns: column `q` of the result is column `perm[q]` of `self`.
    pub fn permute_columns(&self, perm: &[usize]) -> Self {
        let mut out = Self::zeros(self.n, self.q);
        for i in 0..self.n {
            for (q, &src) in perm.iter().enumerate() {
                out.z[i * self.q + q] = self.get(i, src);
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("latent serialize") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub(crate) fn augment(z: &[u8]) -> DVector<f64> {
    DVector::from_iterator(
        z.len() + 1,
        z.iter().map(|&b| b as f64).chain(std::iter::once(1.0)),
    )
}

/// `a = z_i' W z_j + z_i' U + V' z_j + W*`.
pub fn edge_logit(z_i: &[u8], z_j: &[u8], p: &OsbmParams) -> Result<f64> {
    let q = p.q();
    if z_i.len() != q || z_j.len() != q {
        return domain(format!(
            "membership vectors must have length {q}, got {} and {}",
            z_i.len(),
            z_j.len()
        ));
    }
    Ok(edge_logit_unchecked(z_i, z_j, p.w_tilde()))
}

#[inline]
pub(crate) fn edge_logit_unchecked(z_i: &[u8], z_j: &[u8], wt: &DMatrix<f64>) -> f64 {
    let q = z_i.len();
    let mut a = wt[(q, q)];
    for (r, &zr) in z_i.iter().enumerate() {
        if zr == 1 {
            a += wt[(r, q)];
            for (c, &zc) in z_j.iter().enumerate() {
                if zc == 1 {
                    a += wt[(r, c)];
                }
            }
        }
    }
    for (c, &zc) in z_j.iter().enumerate() {
        if zc == 1 {
            a += wt[(q, c)];
        }
    }
    a
}

/// The same logit in augmented form, `Zt_i' Wt Zt_j`.
pub fn augmented_logit(z_i: &[u8], z_j: &[u8], p: &OsbmParams) -> Result<f64> {
    let q = p.q();
    if z_i.len() != q || z_j.len() != q {
        return domain("membership vectors have the wrong length");
    }
    Ok((augment(z_i).transpose() * p.w_tilde() * augment(z_j))[(0, 0)])
}

/// Samples `Z` with independent `Bernoulli(alpha_q)` entries, row-major.
pub fn sample_latent<R: Rng + ?Sized>(p: &OsbmParams, n: usize, rng: &mut R) -> Result<LatentMatrix> {
    if n == 0 {
        return domain("need at least one vertex");
    }
    let q = p.q();
    let mut z = LatentMatrix::zeros(n, q);
    for i in 0..n {
        for (c, &a) in p.alpha().iter().enumerate() {
            let u: f64 = rng.random();
            z.set(i, c, u < a);
        }
    }
    Ok(z)
}

/// Samples every off-diagonal `X_ij ~ Bernoulli(g(a_ij))`, row-major.
pub fn sample_graph<R: Rng + ?Sized>(z: &LatentMatrix, p: &OsbmParams, rng: &mut R) -> Result<Graph> {
    if z.q() != p.q() {
        return domain("latent matrix and parameters disagree on Q");
    }
    let table = logit_table(p);
    let n = z.n();
    let codes: Vec<usize> = (0..n).map(|i| z.row_code(i)).collect();
    let mut g = Graph::empty(n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let prob = table.probability(codes[i], codes[j]);
            let u: f64 = rng.random();
            if u < prob {
                g.set_edge(i, j, true);
            }
        }
    }
    Ok(g)
}

/// Logits for every pair of class codes, `2^Q x 2^Q`.
pub(crate) struct LogitTable {
    size: usize,
    logits: Vec<f64>,
}

impl LogitTable {
    #[inline]
    pub(crate) fn logit(&self, c: usize, d: usize) -> f64 {
        self.logits[c * self.size + d]
    }

    #[inline]
    pub(crate) fn probability(&self, c: usize, d: usize) -> f64 {
        sigmoid(self.logit(c, d))
    }
}

pub(crate) fn code_bits(code: usize, q: usize) -> Vec<u8> {
    (0..q).map(|b| ((code >> b) & 1) as u8).collect()
}

pub(crate) fn logit_table(p: &OsbmParams) -> LogitTable {
    let q = p.q();
    let size = 1usize << q;
    let bits: Vec<Vec<u8>> = (0..size).map(|c| code_bits(c, q)).collect();
    let mut logits = Vec::with_capacity(size * size);
    for c in &bits {
        for d in &bits {
            logits.push(edge_logit_unchecked(c, d, p.w_tilde()));
        }
    }
    LogitTable { size, logits }
}

fn check_dims(g: &Graph, z: &LatentMatrix, p: &OsbmParams) -> Result<()> {
    if z.n() != g.n_vertices() || z.q() != p.q() {
        return domain("graph, latent matrix and parameters disagree on N or Q");
    }
    Ok(())
}

/// `ln p(Z | alpha)`; `-inf` for impossible configurations.
pub fn latent_log_prior(z: &LatentMatrix, p: &OsbmParams) -> f64 {
    let mut total = 0.0;
    for i in 0..z.n() {
        for (q, &a) in p.alpha().iter().enumerate() {
            total += ln_bernoulli(z.get(i, q) as f64, a);
        }
    }
    total
}

/// `ln p(X, Z | alpha, Wt)`.
pub fn complete_log_likelihood(g: &Graph, z: &LatentMatrix, p: &OsbmParams) -> Result<f64> {
    check_dims(g, z, p)?;
    let prior = latent_log_prior(z, p);
    if prior == f64::NEG_INFINITY {
        return Ok(prior);
    }
    let table = logit_table(p);
    let codes: Vec<usize> = (0..z.n()).map(|i| z.row_code(i)).collect();
    Ok(prior + edge_log_likelihood(g, &codes, &table))
}

fn edge_log_likelihood(g: &Graph, codes: &[usize], table: &LogitTable) -> f64 {
    let n = g.n_vertices();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let a = table.logit(codes[i], codes[j]);
                total += g.x(i, j) * a - softplus(a);
            }
        }
    }
    total
}

/// `ln p(X | alpha, Wt)` by summing over all `2^(NQ)` latent matrices.
pub fn exact_log_likelihood(g: &Graph, p: &OsbmParams) -> Result<f64> {
    let n = g.n_vertices();
    let q = p.q();
    let bits = n * q;
    if bits > MAX_ENUMERATION_BITS {
        return Err(OsbmError::Capacity(format!(
            "exhaustive enumeration over 2^{bits} configurations (limit 2^{MAX_ENUMERATION_BITS})"
        )));
    }
    let table = logit_table(p);
    let classes = 1usize << q;
    let row_prior: Vec<f64> = (0..classes)
        .map(|c| {
            p.alpha()
                .iter()
                .enumerate()
                .map(|(b, &a)| ln_bernoulli(((c >> b) & 1) as f64, a))
                .sum()
        })
        .collect();
    let mask = classes - 1;
    let mut codes = vec![0usize; n];
    let terms = (0..(1usize << bits)).map(|config| {
        let mut prior = 0.0;
        for (i, code) in codes.iter_mut().enumerate() {
            *code = (config >> (i * q)) & mask;
            prior += row_prior[*code];
        }
        if prior == f64::NEG_INFINITY {
            prior
        } else {
            prior + edge_log_likelihood(g, &codes, &table)
        }
    });
    Ok(log_sum_exp(terms.collect::<Vec<_>>()))
}
