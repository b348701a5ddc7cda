//! Dense directed binary graphs and the `n=<N>` edge-list text format.
//!
//! ```text
//! # comment
//! n=3
//! 0 1
//! 1 2
//! ```
//!
//! Vertex ids are 0-based. Duplicate edges are accepted and collapse to a
//! single edge; self-loops are rejected.

use std::fmt::Write as _;

use crate::error::{domain, OsbmError, Result};

/// A directed graph without self-loops, stored as a dense adjacency table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    adjacency: Vec<bool>,
}

impl Graph {
    /// Graph on `n` vertices with no edges.
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            adjacency: vec![false; n * n],
        }
    }

    /// Builds a graph from an edge iterator. Fails on out-of-range ids and self-loops.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Self::empty(n);
        for (line, (i, j)) in edges.into_iter().enumerate() {
            g.check_pair(line + 1, i, j)?;
            g.adjacency[i * n + j] = true;
        }
        Ok(g)
    }

    fn check_pair(&self, line: usize, i: usize, j: usize) -> Result<()> {
        for id in [i, j] {
            if id >= self.n {
                return Err(OsbmError::VertexRange { line, id, n: self.n });
            }
        }
        if i == j {
            return Err(OsbmError::SelfLoop { line, vertex: i });
        }
        Ok(())
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    /// Whether the edge `i -> j` is present. The diagonal is always `false`.
    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n + j]
    }

    /// Edge indicator as `0.0` / `1.0`.
    #[inline]
    pub fn x(&self, i: usize, j: usize) -> f64 {
        if self.has_edge(i, j) {
            1.0
        } else {
            0.0
        }
    }

    /// Sets or clears `i -> j`. Panics on `i == j` or out-of-range ids.
    pub fn set_edge(&mut self, i: usize, j: usize, present: bool) {
        assert!(i < self.n && j < self.n, "vertex id out of range");
        assert_ne!(i, j, "self-loops are not allowed");
        self.adjacency[i * self.n + j] = present;
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().filter(|&&e| e).count()
    }

    /// Edges in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n;
        self.adjacency
            .iter()
            .enumerate()
            .filter(|(_, &e)| e)
            .map(move |(k, _)| (k / n, k % n))
    }

    pub fn out_degree(&self, i: usize) -> usize {
        (0..self.n).filter(|&j| self.has_edge(i, j)).count()
    }

    pub fn in_degree(&self, j: usize) -> usize {
        (0..self.n).filter(|&i| self.has_edge(i, j)).count()
    }

    /// Fraction of the `N(N-1)` possible directed edges that are present.
    pub fn density(&self) -> Result<f64> {
        if self.n < 2 {
            return domain(format!("density needs at least 2 vertices, got {}", self.n));
        }
        Ok(self.edge_count() as f64 / (self.n * (self.n - 1)) as f64)
    }

    /// Simultaneous row/column relabeling: vertex `i` of the result is vertex
    /// `perm[i]` of `self`.
    pub fn permute_vertices(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return domain("permutation length does not match vertex count");
        }
        let mut seen = vec![false; self.n];
        for &p in perm {
            if p >= self.n || std::mem::replace(&mut seen[p], true) {
                return domain("not a permutation");
            }
        }
        let mut g = Self::empty(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                g.adjacency[i * self.n + j] = self.has_edge(perm[i], perm[j]);
            }
        }
        Ok(g)
    }

    /// Parses the edge-list format.
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut graph: Option<Graph> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("n=") {
                if graph.is_some() {
                    return Err(parse_err(line_no, "duplicate `n=` header"));
                }
                let n = rest
                    .trim()
                    .parse::<usize>()
                    .map_err(|e| parse_err(line_no, format!("bad vertex count: {e}")))?;
                graph = Some(Graph::empty(n));
                continue;
            }
            let g = graph
                .as_mut()
                .ok_or_else(|| parse_err(line_no, "edge before `n=<N>` header"))?;
            let mut fields = line.split_whitespace();
            let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(parse_err(line_no, "expected `<i> <j>`"));
            };
            let i = parse_id(line_no, a)?;
            let j = parse_id(line_no, b)?;
            g.check_pair(line_no, i, j)?;
            let n = g.n;
            g.adjacency[i * n + j] = true;
        }
        graph.ok_or_else(|| parse_err(0, "missing `n=<N>` header"))
    }

    /// Serializes to the edge-list format, edges in row-major order.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("n={}\n", self.n);
        for (i, j) in self.edges() {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> OsbmError {
    OsbmError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_id(line: usize, field: &str) -> Result<usize> {
    field
        .parse::<usize>()
        .map_err(|e| parse_err(line, format!("bad vertex id `{field}`: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn load_small_graph() {
        let g = Graph::from_edge_list("n=3\n0 1\n1 2").unwrap();
        assert_eq!(g.n_vertices(), 3);
        let edges: Vec<_> = g.edges().collect();
        assert_eq!(edges, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn load_empty_graph() {
        let g = Graph::from_edge_list("n=2\n").unwrap();
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.density().unwrap(), 0.0);
    }

    #[test]
    fn rejects_self_loop() {
        let err = Graph::from_edge_list("n=2\n0 0").unwrap_err();
        assert!(matches!(err, OsbmError::SelfLoop { line: 2, vertex: 0 }));
    }

    #[test]
    fn rejects_out_of_range_and_garbage() {
        assert!(matches!(
            Graph::from_edge_list("n=2\n0 2").unwrap_err(),
            OsbmError::VertexRange { line: 2, id: 2, n: 2 }
        ));
        assert!(matches!(
            Graph::from_edge_list("n=2\n# c\n0 x").unwrap_err(),
            OsbmError::Parse { line: 3, .. }
        ));
        assert!(matches!(
            Graph::from_edge_list("n=3\n0 1 2").unwrap_err(),
            OsbmError::Parse { line: 2, .. }
        ));
        assert!(Graph::from_edge_list("0 1\n").is_err());
        assert!(Graph::from_edge_list("").is_err());
    }

    #[test]
    fn duplicates_and_comments() {
        let g = Graph::from_edge_list("# header\nn=3\n0 1\n\n0 1\n# again\n2 0\n").unwrap();
        assert_eq!(g.edge_count(), 2);
        assert!(g.has_edge(2, 0));
    }

    #[test]
    fn write_format() {
        let g = Graph::from_edges(2, [(0, 1)]).unwrap();
        assert_eq!(g.to_edge_list(), "n=2\n0 1\n");
        assert_eq!(Graph::empty(3).to_edge_list(), "n=3\n");
    }

    #[test]
    fn density_cases() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        assert_eq!(g.density().unwrap(), 2.0 / 6.0);
        let full: Vec<_> = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .collect();
        assert_eq!(Graph::from_edges(3, full).unwrap().density().unwrap(), 1.0);
        assert!(Graph::empty(1).density().is_err());
    }

    fn arb_graph() -> impl Strategy<Value = Graph> {
        (2usize..9).prop_flat_map(|n| {
            proptest::collection::vec(any::<bool>(), n * n).prop_map(move |bits| {
                let mut g = Graph::empty(n);
                for i in 0..n {
                    for j in 0..n {
                        if i != j && bits[i * n + j] {
                            g.set_edge(i, j, true);
                        }
                    }
                }
                g
            })
        })
    }

    proptest! {
        #[test]
        fn edge_list_round_trip(g in arb_graph()) {
            let back = Graph::from_edge_list(&g.to_edge_list()).unwrap();
            prop_assert_eq!(back, g);
        }

        #[test]
        fn density_permutation_invariant(g in arb_graph(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut perm: Vec<usize> = (0..g.n_vertices()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let h = g.permute_vertices(&perm).unwrap();
            prop_assert_eq!(h.density().unwrap(), g.density().unwrap());
        }
    }
}
