//! Simulation benchmark: planted community and star topologies, the
//! pair-matrix recovery distance, and replicate summaries.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, OsbmError, Result};
use crate::graph::Graph;
use crate::inference::{argmax_assign, fit, FitConfig};
use crate::model::{sample_graph, sample_latent, LatentMatrix, OsbmParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Community,
    Stars,
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Topology::Community => "community",
            Topology::Stars => "stars",
        })
    }
}

impl FromStr for Topology {
    type Err = OsbmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "community" => Ok(Topology::Community),
            "stars" => Ok(Topology::Stars),
            other => Err(OsbmError::InvalidField {
                field: "topology".into(),
                message: format!("expected community or stars, got {other:?}"),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub topology: Topology,
    pub q: usize,
    pub lambda: f64,
    pub eps: f64,
    pub w_star: f64,
    pub alpha_value: f64,
    pub n_vertices: usize,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            topology: Topology::Community,
            q: 4,
            lambda: 4.0,
            eps: 1.0,
            w_star: -5.5,
            alpha_value: 0.25,
            n_vertices: 100,
            replicates: 20,
            seed: 0,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        let invalid = |field: &str, message: String| {
            Err(OsbmError::InvalidField {
                field: field.into(),
                message,
            })
        };
        if self.replicates == 0 {
            return invalid("replicates", "must be at least 1".into());
        }
        if self.q == 0 {
            return invalid("q", "must be at least 1".into());
        }
        if self.topology == Topology::Stars && self.q % 2 == 1 {
            return invalid("q", format!("stars topology pairs classes, so q must be even (got {})", self.q));
        }
        if self.n_vertices < 2 || self.n_vertices < self.q {
            return invalid("n_vertices", format!("need at least max(2, q) vertices, got {}", self.n_vertices));
        }
        if !(self.lambda.is_finite() && self.eps.is_finite() && self.w_star.is_finite()) {
            return invalid("lambda", "lambda, eps and w_star must be finite".into());
        }
        if !(0.0..=1.0).contains(&self.alpha_value) {
            return invalid("alpha_value", format!("{} is not a probability", self.alpha_value));
        }
        Ok(())
    }

    /// Planted parameters: topology `W`, `U = V = eps`, bias `w_star`, constant `alpha`.
    pub fn params(&self) -> Result<OsbmParams> {
        self.validate()?;
        let w = match self.topology {
            Topology::Community => community_w(self.q, self.lambda, self.eps),
            Topology::Stars => stars_w(self.q, self.lambda, self.eps)?,
        };
        let (u, v) = planted_uv(self.q, self.eps);
        OsbmParams::from_blocks(vec![self.alpha_value; self.q], &w, &u, &v, self.w_star)
    }
}

/// `lambda` on the diagonal, `-eps` elsewhere.
pub fn community_w(q: usize, lambda: f64, eps: f64) -> DMatrix<f64> {
    DMatrix::from_fn(q, q, |a, b| if a == b { lambda } else { -eps })
}

/// Classes come in (community, star) pairs: the community block is
/// `[[lambda, lambda], [-eps, -lambda]]`, every other entry is `-eps`.
pub fn stars_w(q: usize, lambda: f64, eps: f64) -> Result<DMatrix<f64>> {
    if q % 2 == 1 {
        return domain(format!("stars topology needs an even number of classes, got {q}"));
    }
    let mut w = DMatrix::from_element(q, q, -eps);
    for k in (0..q).step_by(2) {
        w[(k, k)] = lambda;
        w[(k, k + 1)] = lambda;
        w[(k + 1, k)] = -eps;
        w[(k + 1, k + 1)] = -lambda;
    }
    Ok(w)
}

/// `U = V = (eps, ..., eps)`.
pub fn planted_uv(q: usize, eps: f64) -> (DVector<f64>, DVector<f64>) {
    let u = DVector::from_element(q, eps);
    (u.clone(), u)
}

/// `P = Z Z'`: number of classes shared by each pair of vertices.
pub fn pair_matrix(z: &LatentMatrix) -> DMatrix<u32> {
    let n = z.n();
    DMatrix::from_fn(n, n, |i, j| {
        z.row(i)
            .iter()
            .zip(z.row(j))
            .map(|(&a, &b)| (a & b) as u32)
            .sum()
    })
}

/// Sum of squared entrywise differences, diagonal included.
pub fn l2_distance(p1: &DMatrix<u32>, p2: &DMatrix<u32>) -> Result<f64> {
    squared_distance(p1, p2, true)
}

/// As [`l2_distance`] but over `i != j` only.
pub fn l2_distance_off_diagonal(p1: &DMatrix<u32>, p2: &DMatrix<u32>) -> Result<f64> {
    squared_distance(p1, p2, false)
}

fn squared_distance(p1: &DMatrix<u32>, p2: &DMatrix<u32>, diagonal: bool) -> Result<f64> {
    if p1.shape() != p2.shape() {
        return domain(format!("pair matrices differ in shape: {:?} vs {:?}", p1.shape(), p2.shape()));
    }
    let mut d = 0.0;
    for j in 0..p1.ncols() {
        for i in 0..p1.nrows() {
            if i != j || diagonal {
                let diff = p1[(i, j)] as f64 - p2[(i, j)] as f64;
                d += diff * diff;
            }
        }
    }
    Ok(d)
}

/// What an estimator hands back for one replicate.
#[derive(Clone, Debug)]
pub struct Estimate {
    pub z: LatentMatrix,
    /// One class per vertex, for the single-membership comparison.
    pub z_single: LatentMatrix,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub d: f64,
    pub d_off_diagonal: f64,
    pub d_single_membership: f64,
    pub iterations: usize,
    pub converged: bool,
    pub outliers: usize,
    pub overlaps: usize,
    pub within_density: f64,
    pub between_density: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        Some(Self {
            mean: sorted.iter().sum::<f64>() / n as f64,
            median,
            min: sorted[0],
            max: sorted[n - 1],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: BenchmarkConfig,
    pub outcomes: Vec<ReplicateOutcome>,
    /// `(replicate, message)` for every replicate whose fit errored.
    pub failures: Vec<(usize, String)>,
    pub d: Option<Summary>,
    pub d_off_diagonal: Option<Summary>,
    pub d_single_membership: Option<Summary>,
}

impl BenchmarkReport {
    pub fn d_values(&self) -> Vec<f64> {
        self.outcomes.iter().map(|o| o.d).collect()
    }

    pub fn single_membership_values(&self) -> Vec<f64> {
        self.outcomes.iter().map(|o| o.d_single_membership).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Mean / Median / Min / Max table, one row per distance variant.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} topology, Q={}, N={}, {} replicates ({} failed)",
            self.config.topology,
            self.config.q,
            self.config.n_vertices,
            self.config.replicates,
            self.failures.len()
        );
        let _ = writeln!(out, "{:<24}{:>10}{:>10}{:>10}{:>10}", "", "Mean", "Median", "Min", "Max");
        let rows = [
            ("OSBM", &self.d),
            ("OSBM off-diagonal", &self.d_off_diagonal),
            ("single membership", &self.d_single_membership),
        ];
        for (name, summary) in rows {
            match summary {
                Some(s) => {
                    let _ = writeln!(
                        out,
                        "{name:<24}{:>10.2}{:>10.2}{:>10.2}{:>10.2}",
                        s.mean, s.median, s.min, s.max
                    );
                }
                None => {
                    let _ = writeln!(out, "{name:<24}{:>10}{:>10}{:>10}{:>10}", "-", "-", "-", "-");
                }
            }
        }
        out
    }
}

/// Empirical edge densities over ordered pairs that share a class and over
/// pairs of non-outliers that share none.
pub fn within_between_density(g: &Graph, z: &LatentMatrix) -> (f64, f64) {
    let p = pair_matrix(z);
    let (mut within, mut nw, mut between, mut nb) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..g.n_vertices() {
        for j in 0..g.n_vertices() {
            if i == j {
                continue;
            }
            if p[(i, j)] > 0 {
                within += g.x(i, j);
                nw += 1;
            } else if p[(i, i)] > 0 && p[(j, j)] > 0 {
                between += g.x(i, j);
                nb += 1;
            }
        }
    }
    let ratio = |s: f64, c: usize| if c == 0 { f64::NAN } else { s / c as f64 };
    (ratio(within, nw), ratio(between, nb))
}

/// The generating stream of replicate `r`: ChaCha8 seeded with the master seed
/// on stream `r`.
pub fn replicate_rng(seed: u64, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    rng
}

/// Runs the benchmark with the variational EM fit as estimator.
pub fn run_benchmark(cfg: &BenchmarkConfig, fit_cfg: &FitConfig) -> Result<BenchmarkReport> {
    fit_cfg.validate()?;
    let q = cfg.q;
    run_benchmark_with(cfg, |g, _truth, seed| {
        let cfg = FitConfig { seed, ..fit_cfg.clone() };
        let r = fit(g, q, &cfg)?;
        Ok(Estimate {
            z_single: argmax_assign(r.state.tau()),
            z: r.z_map,
            iterations: r.iterations,
            converged: r.converged,
        })
    })
}

/// Runs the benchmark with any estimator. Each replicate samples `Z` then `X`
/// from its own stream and draws the estimator seed from the same stream;
/// replicates run in parallel and are reported in index order.
pub fn run_benchmark_with<F>(cfg: &BenchmarkConfig, estimator: F) -> Result<BenchmarkReport>
where
    F: Fn(&Graph, &LatentMatrix, u64) -> Result<Estimate> + Sync,
{
    let params = cfg.params()?;
    let results: Vec<(usize, Result<ReplicateOutcome>)> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| (r, run_replicate(&params, cfg, r, &estimator)))
        .collect();
    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in results {
        match res {
            Ok(o) => outcomes.push(o),
            Err(e) => failures.push((r, e.to_string())),
        }
    }
    let collect = |f: fn(&ReplicateOutcome) -> f64| Summary::of(&outcomes.iter().map(f).collect::<Vec<_>>());
    Ok(BenchmarkReport {
        config: cfg.clone(),
        d: collect(|o| o.d),
        d_off_diagonal: collect(|o| o.d_off_diagonal),
        d_single_membership: collect(|o| o.d_single_membership),
        outcomes,
        failures,
    })
}

fn run_replicate<F>(params: &OsbmParams, cfg: &BenchmarkConfig, r: usize, estimator: &F) -> Result<ReplicateOutcome>
where
    F: Fn(&Graph, &LatentMatrix, u64) -> Result<Estimate>,
{
    let mut rng = replicate_rng(cfg.seed, r);
    let z = sample_latent(params, cfg.n_vertices, &mut rng)?;
    let g = sample_graph(&z, params, &mut rng)?;
    let estimate = estimator(&g, &z, rng.random())?;
    let truth = pair_matrix(&z);
    let fitted = pair_matrix(&estimate.z);
    let (within_density, between_density) = within_between_density(&g, &z);
    Ok(ReplicateOutcome {
        replicate: r,
        d: l2_distance(&truth, &fitted)?,
        d_off_diagonal: l2_distance_off_diagonal(&truth, &fitted)?,
        d_single_membership: l2_distance(&truth, &pair_matrix(&estimate.z_single))?,
        iterations: estimate.iterations,
        converged: estimate.converged,
        outliers: estimate.z.outlier_count(),
        overlaps: estimate.z.overlap_count(),
        within_density,
        between_density,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn community_matrix() {
        assert_eq!(community_w(2, 4.0, 1.0), DMatrix::from_row_slice(2, 2, &[4.0, -1.0, -1.0, 4.0]));
        assert_eq!(community_w(1, 4.0, 1.0), DMatrix::from_element(1, 1, 4.0));
        let w = community_w(5, 3.0, 0.5);
        assert_eq!(w, w.transpose());
    }

    #[test]
    fn stars_matrix() {
        let w = stars_w(2, 4.0, 1.0).unwrap();
        assert_eq!(w, DMatrix::from_row_slice(2, 2, &[4.0, 4.0, -1.0, -4.0]));
        assert_eq!(w.row(0).sum(), 8.0);
        let w = stars_w(4, 4.0, 1.0).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                if a / 2 != b / 2 {
                    assert_eq!(w[(a, b)], -1.0);
                }
            }
        }
        assert_eq!(w.view((2, 2), (2, 2)), DMatrix::from_row_slice(2, 2, &[4.0, 4.0, -1.0, -4.0]));
        assert!(stars_w(3, 4.0, 1.0).is_err());
    }

    #[test]
    fn uv_vectors() {
        let (u, v) = planted_uv(4, 1.0);
        assert_eq!(u, DVector::from_element(4, 1.0));
        assert_eq!(u, v);
        let (u, v) = planted_uv(1, 0.0);
        assert_eq!((u[0], v[0]), (0.0, 0.0));
    }

    #[test]
    fn pair_matrix_cases() {
        let z = LatentMatrix::from_rows(&[[1u8, 0], [1, 0]]).unwrap();
        assert_eq!(pair_matrix(&z), DMatrix::from_element(2, 2, 1));
        let z = LatentMatrix::from_rows(&[[1u8, 1], [0, 1]]).unwrap();
        let p = pair_matrix(&z);
        assert_eq!((p[(0, 1)], p[(0, 0)]), (1, 2));
    }

    #[test]
    fn distance_hand_value() {
        let p = pair_matrix(&LatentMatrix::from_rows(&[[1u8, 0], [0, 1]]).unwrap());
        let ph = pair_matrix(&LatentMatrix::from_rows(&[[1u8, 0], [1, 0]]).unwrap());
        assert_eq!(l2_distance(&p, &ph).unwrap(), 2.0);
        assert_eq!(l2_distance(&ph, &p).unwrap(), 2.0);
        assert_eq!(l2_distance(&p, &p).unwrap(), 0.0);
        assert!(l2_distance(&p, &DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn off_diagonal_drops_membership_counts() {
        let p = pair_matrix(&LatentMatrix::from_rows(&[[1u8, 1], [0, 0]]).unwrap());
        let ph = pair_matrix(&LatentMatrix::from_rows(&[[1u8, 0], [0, 0]]).unwrap());
        assert_eq!(l2_distance(&p, &ph).unwrap(), 1.0);
        assert_eq!(l2_distance_off_diagonal(&p, &ph).unwrap(), 0.0);
    }

    #[test]
    fn summary_statistics() {
        let s = Summary::of(&[3.0, 1.0, 4.0, 0.0]).unwrap();
        assert_eq!(s, Summary { mean: 2.0, median: 2.0, min: 0.0, max: 4.0 });
        assert_eq!(Summary::of(&[5.0]).unwrap().median, 5.0);
        assert!(Summary::of(&[]).is_none());
    }

    #[test]
    fn oracle_estimate_scores_zero() {
        let cfg = BenchmarkConfig {
            replicates: 1,
            n_vertices: 30,
            ..Default::default()
        };
        let report = run_benchmark_with(&cfg, |_, z, _| {
            Ok(Estimate {
                z: z.clone(),
                z_single: z.clone(),
                iterations: 0,
                converged: true,
            })
        })
        .unwrap();
        assert_eq!(report.d_values(), vec![0.0]);
        assert_eq!(report.d, Some(Summary { mean: 0.0, median: 0.0, min: 0.0, max: 0.0 }));
    }

    #[test]
    fn failures_are_counted_not_summarized() {
        let cfg = BenchmarkConfig {
            replicates: 3,
            n_vertices: 20,
            ..Default::default()
        };
        let report = run_benchmark_with(&cfg, |_, z, seed| {
            if seed % 2 == 0 {
                Err(OsbmError::Numerical("synthetic".into()))
            } else {
                Ok(Estimate {
                    z: z.clone(),
                    z_single: z.clone(),
                    iterations: 0,
                    converged: true,
                })
            }
        })
        .unwrap();
        assert_eq!(report.outcomes.len() + report.failures.len(), 3);
    }

    #[test]
    fn planted_communities_are_denser_inside() {
        let cfg = BenchmarkConfig {
            replicates: 5,
            ..Default::default()
        };
        let params = cfg.params().unwrap();
        for r in 0..cfg.replicates {
            let mut rng = replicate_rng(cfg.seed, r);
            let z = sample_latent(&params, cfg.n_vertices, &mut rng).unwrap();
            let g = sample_graph(&z, &params, &mut rng).unwrap();
            let (within, between) = within_between_density(&g, &z);
            assert!(within > between, "replicate {r}: {within} <= {between}");
        }
    }

    #[test]
    fn config_validation() {
        let stars_odd = BenchmarkConfig {
            topology: Topology::Stars,
            q: 3,
            ..Default::default()
        };
        assert!(matches!(stars_odd.validate(), Err(OsbmError::InvalidField { field, .. }) if field == "q"));
        let none = BenchmarkConfig {
            replicates: 0,
            ..Default::default()
        };
        assert!(none.validate().is_err());
        assert_eq!("stars".parse::<Topology>().unwrap(), Topology::Stars);
        assert!("ring".parse::<Topology>().is_err());
    }

    proptest! {
        #[test]
        fn distance_ignores_common_column_permutation(
            rows in proptest::collection::vec(proptest::collection::vec(0u8..2, 3), 1..8),
            rows2 in proptest::collection::vec(proptest::collection::vec(0u8..2, 3), 8),
            perm in Just(vec![0usize, 1, 2]).prop_shuffle(),
            perm2 in Just(vec![0usize, 1, 2]).prop_shuffle(),
        ) {
            let z = LatentMatrix::from_rows(&rows).unwrap();
            let zh = LatentMatrix::from_rows(&rows2[..rows.len()]).unwrap();
            let d = l2_distance(&pair_matrix(&z), &pair_matrix(&zh)).unwrap();
            let dp = l2_distance(
                &pair_matrix(&z.permute_columns(&perm)),
                &pair_matrix(&zh.permute_columns(&perm2)),
            )
            .unwrap();
            prop_assert_eq!(d, dp);
            prop_assert_eq!(d == 0.0, pair_matrix(&z) == pair_matrix(&zh));
        }
    }
}
