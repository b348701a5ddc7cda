//! Symmetries of the OSBM parameter space.
//!
//! [`phi`] maps an OSBM with `Q` classes onto an ordinary SBM with `2^Q`
//! classes, one per membership pattern. Two OSBM parameters generate the same
//! random graph model when they differ by a class permutation ([`permute`])
//! followed by an inversion ([`invert`]) of some coordinates. [`canonicalize`]
//! picks the representative with `alpha_1 <= ... <= alpha_Q <= 1/2`.
//!
//! Class patterns `C in {0,1}^Q` are indexed by the integer whose bit `q` is
//! `C_q`.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{domain, OsbmError, Result};
use crate::model::{ln_bernoulli, logit_table, matrix_rows, sigmoid, OsbmParams};

/// Largest `Q` for which [`equivalent`] runs its exhaustive search.
pub const MAX_EQUIVALENCE_Q: usize = 8;

/// Parameters of a non-overlapping SBM over all `2^Q` membership patterns.
#[derive(Clone, Debug, PartialEq)]
pub struct SbmParams {
    q: usize,
    gamma: Vec<f64>,
    pi: DMatrix<f64>,
}

impl SbmParams {
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n_classes(&self) -> usize {
        self.gamma.len()
    }

    /// Class proportions indexed by pattern code.
    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// Connection probabilities `pi[(C, D)]`.
    pub fn pi(&self) -> &DMatrix<f64> {
        &self.pi
    }

    /// Applies a relabeling of patterns: the result has
    /// `gamma'_C = gamma_{nu(C)}` and `pi'_{C,D} = pi_{nu(C), nu(D)}`.
    pub fn relabel(&self, nu: impl Fn(usize) -> usize) -> Self {
        let m = self.n_classes();
        let map: Vec<usize> = (0..m).map(nu).collect();
        Self {
            q: self.q,
            gamma: map.iter().map(|&c| self.gamma[c]).collect(),
            pi: DMatrix::from_fn(m, m, |c, d| self.pi[(map[c], map[d])]),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.q != other.q {
            return f64::INFINITY;
        }
        let dg = self
            .gamma
            .iter()
            .zip(&other.gamma)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        dg.max((&self.pi - &other.pi).amax())
    }

    pub fn to_json(&self) -> String {
        let file = SbmFile {
            q: self.q,
            gamma: self.gamma.clone(),
            pi: matrix_rows(&self.pi),
        };
        serde_json::to_string_pretty(&file).expect("sbm serialize") + "\n"
    }
}

#[derive(Serialize, Deserialize)]
struct SbmFile {
    q: usize,
    gamma: Vec<f64>,
    pi: Vec<Vec<f64>>,
}

/// Binary vector `A` selecting the coordinates to invert.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InversionVector(Vec<u8>);

impl InversionVector {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return domain("inversion vector entries must be 0 or 1");
        }
        Ok(Self(bits))
    }

    pub fn none(q: usize) -> Self {
        Self(vec![0; q])
    }

    /// Vector with bit `q` equal to bit `q` of `code`.
    pub fn from_code(code: usize, q: usize) -> Self {
        Self((0..q).map(|b| ((code >> b) & 1) as u8).collect())
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|&b| b == 0)
    }

    /// Pattern code with bit `q` set where `A_q = 1`.
    pub fn mask(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .fold(0, |acc, (q, &b)| acc | ((b as usize) << q))
    }

    /// The augmented congruence matrix `M_A = [[I - 2 diag(A), A], [0, 1]]`.
    pub fn congruence_matrix(&self) -> DMatrix<f64> {
        let q = self.len();
        let mut m = DMatrix::identity(q + 1, q + 1);
        for (j, &a) in self.0.iter().enumerate() {
            if a == 1 {
                m[(j, j)] = -1.0;
                m[(j, q)] = 1.0;
            }
        }
        m
    }
}

/// A permutation `sigma` of the classes, stored 0-based as `sigma[q] = sigma(q)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; map.len()];
        for &s in &map {
            if s >= map.len() || std::mem::replace(&mut seen[s], true) {
                return domain(format!("{map:?} is not a bijection"));
            }
        }
        Ok(Self(map))
    }

    pub fn identity(q: usize) -> Self {
        Self((0..q).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(q, &s)| q == s)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (q, &s) in self.0.iter().enumerate() {
            inv[s] = q;
        }
        Self(inv)
    }

    /// Relabeling of patterns matching this class permutation:
    /// `nu(C)_r = C_{sigma^-1(r)}`, i.e. bit `q` of `C` moves to bit `sigma(q)`.
    pub fn pattern_map(&self, code: usize) -> usize {
        self.0
            .iter()
            .enumerate()
            .fold(0, |acc, (q, &s)| acc | (((code >> q) & 1) << s))
    }

    /// All `Q!` permutations in lexicographic order.
    pub fn all(q: usize) -> Vec<Self> {
        let mut out = Vec::new();
        let mut cur: Vec<usize> = (0..q).collect();
        loop {
            out.push(Self(cur.clone()));
            // next lexicographic permutation
            let Some(i) = (1..q).rev().find(|&i| cur[i - 1] < cur[i]) else {
                break;
            };
            let j = (i..q).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
            cur.swap(i - 1, j);
            cur[i..].reverse();
        }
        out
    }
}

/// Embeds OSBM parameters into SBM parameter space.
pub fn phi(p: &OsbmParams) -> SbmParams {
    let q = p.q();
    let m = 1usize << q;
    let gamma = (0..m)
        .map(|c| {
            p.alpha()
                .iter()
                .enumerate()
                .map(|(b, &a)| ln_bernoulli(((c >> b) & 1) as f64, a).exp())
                .product()
        })
        .collect();
    let table = logit_table(p);
    let pi = DMatrix::from_fn(m, m, |c, d| sigmoid(table.logit(c, d)));
    SbmParams { q, gamma, pi }
}

/// Class permutation: `alpha'_q = alpha_{sigma(q)}`, `Wt'_{q,l} = Wt_{sigma(q), sigma(l)}`,
/// with the augmented index held fixed.
pub fn permute(p: &OsbmParams, sigma: &Permutation) -> Result<OsbmParams> {
    let q = p.q();
    if sigma.len() != q {
        return domain(format!("permutation of length {} for Q={q}", sigma.len()));
    }
    let ext = |k: usize| if k == q { q } else { sigma.0[k] };
    let alpha = sigma.0.iter().map(|&s| p.alpha()[s]).collect();
    let wt = DMatrix::from_fn(q + 1, q + 1, |r, c| p.w_tilde()[(ext(r), ext(c))]);
    OsbmParams::new(alpha, wt)
}

/// Coordinate inversion: flips `alpha_j -> 1 - alpha_j` where `A_j = 1` and
/// maps `Wt -> M_A' Wt M_A`.
pub fn invert(p: &OsbmParams, a: &InversionVector) -> Result<OsbmParams> {
    if a.len() != p.q() {
        return domain(format!("inversion vector of length {} for Q={}", a.len(), p.q()));
    }
    let alpha = p
        .alpha()
        .iter()
        .zip(a.bits())
        .map(|(&al, &b)| if b == 1 { 1.0 - al } else { al })
        .collect();
    let m = a.congruence_matrix();
    let wt = m.transpose() * p.w_tilde() * &m;
    OsbmParams::new(alpha, wt)
}

/// `sigma^-1(A)`: the inversion `B` with `I_A . P_sigma = P_sigma . I_B`,
/// given by `B_{sigma(q)} = A_q`.
pub fn conjugate_inversion(a: &InversionVector, sigma: &Permutation) -> InversionVector {
    let mut b = vec![0; a.len()];
    for (q, &s) in sigma.0.iter().enumerate() {
        b[s] = a.0[q];
    }
    InversionVector(b)
}

/// Canonical representative together with its witness.
///
/// `params == permute(invert(original, inversion), permutation)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Canonical {
    pub params: OsbmParams,
    pub permutation: Permutation,
    pub inversion: InversionVector,
}

/// Inverts every coordinate with `alpha_q > 1/2`, then sorts classes by
/// increasing `alpha`.
///
/// Ties in `alpha` are broken by a per-class key that does not depend on the
/// labeling of the other classes: the diagonal weight `W_qq`, then `U_q`,
/// `V_q`, then the sorted off-diagonal row entries and sorted column entries.
/// Remaining ties keep their current order, which makes the function
/// idempotent.
pub fn canonicalize(p: &OsbmParams) -> Canonical {
    let q = p.q();
    let inversion = InversionVector(p.alpha().iter().map(|&a| (a > 0.5) as u8).collect());
    let flipped = invert(p, &inversion).expect("inversion length matches");
    let keys: Vec<Vec<f64>> = (0..q).map(|c| class_key(&flipped, c)).collect();
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&x, &y| compare_keys(&keys[x], &keys[y]));
    let permutation = Permutation(order);
    let params = permute(&flipped, &permutation).expect("permutation length matches");
    Canonical {
        params,
        permutation,
        inversion,
    }
}

fn class_key(p: &OsbmParams, c: usize) -> Vec<f64> {
    let q = p.q();
    let wt = p.w_tilde();
    let mut row: Vec<f64> = (0..q).filter(|&l| l != c).map(|l| wt[(c, l)]).collect();
    let mut col: Vec<f64> = (0..q).filter(|&l| l != c).map(|l| wt[(l, c)]).collect();
    row.sort_by(f64::total_cmp);
    col.sort_by(f64::total_cmp);
    let mut key = vec![p.alpha()[c], wt[(c, c)], wt[(c, q)], wt[(q, c)]];
    key.extend(row);
    key.extend(col);
    key
}

fn compare_keys(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Whether `p2 = I_A(P_sigma(p))` for some `(sigma, A)`, up to `tol` in max-norm.
pub fn equivalent(p: &OsbmParams, p2: &OsbmParams, tol: f64) -> Result<bool> {
    Ok(find_equivalence(p, p2, tol)?.is_some())
}

/// The first `(sigma, A)` with `I_A(P_sigma(p))` within `tol` of `p2`.
pub fn find_equivalence(
    p: &OsbmParams,
    p2: &OsbmParams,
    tol: f64,
) -> Result<Option<(Permutation, InversionVector)>> {
    let q = p.q();
    if q > MAX_EQUIVALENCE_Q {
        return Err(OsbmError::Capacity(format!(
            "equivalence search over Q!*2^Q candidates for Q={q} (limit {MAX_EQUIVALENCE_Q})"
        )));
    }
    if p2.q() != q {
        return Ok(None);
    }
    for sigma in Permutation::all(q) {
        let permuted = permute(p, &sigma)?;
        for code in 0..(1usize << q) {
            let a = InversionVector::from_code(code, q);
            let alpha_ok = permuted
                .alpha()
                .iter()
                .zip(a.bits())
                .zip(p2.alpha())
                .all(|((&x, &b), &y)| {
                    let x = if b == 1 { 1.0 - x } else { x };
                    (x - y).abs() <= tol
                });
            if alpha_ok && invert(&permuted, &a)?.max_abs_diff(p2) <= tol {
                return Ok(Some((sigma, a)));
            }
        }
    }
    Ok(None)
}
