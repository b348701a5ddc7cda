//! Agglomerative (Ward) initialization of `tau` from connection profiles.

use kodama::{linkage, Method};
use nalgebra::DMatrix;

use crate::error::{domain, Result};
use crate::graph::Graph;

pub const AHC_HIGH: f64 = 0.9;
pub const AHC_LOW: f64 = 0.1;

/// Vertex features fed to the clustering.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    /// Row `i` and column `i` of the adjacency matrix, length 2N.
    Adjacency,
    /// Row `i` of `X X'` and of `X' X` (common out- and in-neighbors) with the
    /// diagonal zeroed, length 2N.
    SharedNeighbors,
}

pub fn profiles(g: &Graph, kind: Profile) -> DMatrix<f64> {
    let n = g.n_vertices();
    let x = DMatrix::from_fn(n, n, |i, j| g.x(i, j));
    let mut out = DMatrix::zeros(n, 2 * n);
    match kind {
        Profile::Adjacency => {
            out.view_mut((0, 0), (n, n)).copy_from(&x);
            out.view_mut((0, n), (n, n)).copy_from(&x.transpose());
        }
        Profile::SharedNeighbors => {
            let mut co_out = &x * x.transpose();
            let mut co_in = x.transpose() * &x;
            co_out.fill_diagonal(0.0);
            co_in.fill_diagonal(0.0);
            out.view_mut((0, 0), (n, n)).copy_from(&co_out);
            out.view_mut((0, n), (n, n)).copy_from(&co_in);
        }
    }
    out
}

/// Hard labels in `0..k` from Ward clustering of the rows of `features` under
/// Euclidean distance, numbered by first appearance.
pub fn ward_labels(features: &DMatrix<f64>, k: usize) -> Result<Vec<usize>> {
    let n = features.nrows();
    if k == 0 {
        return domain("the number of clusters must be at least 1");
    }
    if n < k {
        return domain(format!("cannot cut {n} vertices into {k} clusters"));
    }
    if n == 1 {
        return Ok(vec![0]);
    }
    let mut condensed = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            condensed.push((features.row(i) - features.row(j)).norm());
        }
    }
    let dendrogram = linkage(&mut condensed, n, Method::Ward);

    // replay the first n - k merges; cluster ids >= n name earlier merges
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (step_index, step) in dendrogram.steps().iter().take(n - k).enumerate() {
        let merged = n + step_index;
        let a = find(&mut parent, step.cluster1);
        let b = find(&mut parent, step.cluster2);
        parent[a] = merged;
        parent[b] = merged;
    }
    let mut names: Vec<Option<usize>> = vec![None; 2 * n - 1];
    let mut next = 0;
    let labels = (0..n)
        .map(|i| {
            let root = find(&mut parent, i);
            *names[root].get_or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect();
    Ok(labels)
}

/// Ward labels of the adjacency profiles cut at `q` clusters.
pub fn ahc_labels(g: &Graph, q: usize) -> Result<Vec<usize>> {
    ward_labels(&profiles(g, Profile::Adjacency), q)
}

/// Soft start: `tau_iq = 0.9` for the vertex's cluster and `0.1` elsewhere.
pub fn init_tau_ahc(g: &Graph, q: usize) -> Result<DMatrix<f64>> {
    Ok(soft_labels(&ahc_labels(g, q)?, q))
}

/// Start that reserves a cluster for the null component: cut at `q + 1`
/// clusters, give the cluster with the lowest mean degree `0.1` everywhere and
/// map the others to classes in order of first appearance. `None` when
/// `q + 1 > N`.
pub fn init_tau_ahc_null(g: &Graph, q: usize, kind: Profile) -> Result<Option<DMatrix<f64>>> {
    let n = g.n_vertices();
    if q == 0 {
        return domain("q must be at least 1");
    }
    if q + 1 > n {
        return Ok(None);
    }
    let labels = ward_labels(&profiles(g, kind), q + 1)?;
    let mut degree = vec![0.0; q + 1];
    let mut size = vec![0usize; q + 1];
    for (i, &l) in labels.iter().enumerate() {
        degree[l] += (g.out_degree(i) + g.in_degree(i)) as f64;
        size[l] += 1;
    }
    let null = (0..=q)
        .min_by(|&a, &b| (degree[a] / size[a] as f64).total_cmp(&(degree[b] / size[b] as f64)))
        .expect("at least one cluster");
    Ok(Some(DMatrix::from_fn(n, q, |i, r| {
        let l = labels[i];
        let class = if l > null { l - 1 } else { l };
        if l != null && class == r {
            AHC_HIGH
        } else {
            AHC_LOW
        }
    })))
}

/// Start from the cross-tabulation of two separate clusterings, of the
/// out-profiles and of the in-profiles, each cut at `k` clusters. The `q`
/// largest cells other than the cell of lowest mean degree become classes;
/// every other vertex starts in the null component.
pub fn init_tau_cross(g: &Graph, q: usize, k: usize) -> Result<Option<DMatrix<f64>>> {
    let n = g.n_vertices();
    if k > n {
        return Ok(None);
    }
    let full = profiles(g, Profile::Adjacency);
    let out_labels = ward_labels(&full.columns(0, n).into_owned(), k)?;
    let in_labels = ward_labels(&full.columns(n, n).into_owned(), k)?;
    let cell: Vec<usize> = out_labels.iter().zip(&in_labels).map(|(&a, &b)| a * k + b).collect();
    let mut size = vec![0usize; k * k];
    let mut degree = vec![0.0; k * k];
    for (i, &c) in cell.iter().enumerate() {
        size[c] += 1;
        degree[c] += (g.out_degree(i) + g.in_degree(i)) as f64;
    }
    let occupied: Vec<usize> = (0..k * k).filter(|&c| size[c] > 0).collect();
    if occupied.len() < q + 1 {
        return Ok(None);
    }
    let null = *occupied
        .iter()
        .min_by(|&&a, &&b| (degree[a] / size[a] as f64).total_cmp(&(degree[b] / size[b] as f64)))
        .expect("occupied cells");
    let mut ranked: Vec<usize> = occupied.into_iter().filter(|&c| c != null).collect();
    // largest first, ties by first appearance
    let first_seen = |c: usize| cell.iter().position(|&x| x == c).unwrap_or(n);
    ranked.sort_by_key(|&c| (std::cmp::Reverse(size[c]), first_seen(c)));
    ranked.truncate(q);
    ranked.sort_by_key(|&c| first_seen(c));
    Ok(Some(DMatrix::from_fn(n, q, |i, r| if cell[i] == ranked[r] { AHC_HIGH } else { AHC_LOW })))
}

/// Every start tried by the fit, the plain `q`-cluster adjacency start first:
/// then the null-cluster cuts of the adjacency and shared-neighbor profiles,
/// and the cross-tabulated starts for `k = 3..=q + 2`.
pub fn ahc_starts(g: &Graph, q: usize) -> Result<Vec<DMatrix<f64>>> {
    let mut starts = vec![init_tau_ahc(g, q)?];
    starts.extend(init_tau_ahc_null(g, q, Profile::Adjacency)?);
    starts.extend(init_tau_ahc_null(g, q, Profile::SharedNeighbors)?);
    for k in 3..=q + 2 {
        starts.extend(init_tau_cross(g, q, k)?);
    }
    Ok(starts)
}

fn soft_labels(labels: &[usize], q: usize) -> DMatrix<f64> {
    DMatrix::from_fn(labels.len(), q, |i, r| if labels[i] == r { AHC_HIGH } else { AHC_LOW })
}
