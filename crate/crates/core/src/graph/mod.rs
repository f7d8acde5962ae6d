//! Weighted digraphs and the spectral certificates of consensus.
//!
//! Entry `(i, j)` of the weight matrix is the weight `a^{i,j}` with which
//! agent `i` listens to agent `j`: information flows along the edge `j -> i`.

mod io;

pub use io::{parse_edge_list, write_edge_list};

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::linalg;
use crate::{Error, Result};

/// Default absolute tolerance for the balanced-graph test.
pub const BALANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDigraph {
    weights: DMatrix<f64>,
}

impl WeightedDigraph {
    /// Validates a square, finite, nonnegative weight matrix with zero diagonal.
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        if weights.nrows() != weights.ncols() {
            return Err(Error::InvalidGraph(format!(
                "weight matrix is {}x{}, expected square",
                weights.nrows(),
                weights.ncols()
            )));
        }
        if weights.nrows() == 0 {
            return Err(Error::InvalidGraph("graph has no nodes".into()));
        }
        let n = weights.nrows();
        for i in 0..n {
            for j in 0..n {
                let w = weights[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::InvalidGraph(format!("weight ({i},{j}) = {w} is not a nonnegative real")));
                }
                if i == j && w != 0.0 {
                    return Err(Error::InvalidGraph(format!("self-loop on node {i}")));
                }
            }
        }
        Ok(Self { weights })
    }

    /// Builds a graph from `(to, from, weight)` triples with 0-based ids.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut weights = DMatrix::zeros(n, n);
        for (to, from, w) in edges {
            if to >= n || from >= n {
                return Err(Error::InvalidGraph(format!("edge ({to},{from}) out of range for n = {n}")));
            }
            weights[(to, from)] += w;
        }
        Self::new(weights)
    }

    /// Unit-weight complete graph.
    pub fn complete(n: usize) -> Result<Self> {
        Self::new(DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 }))
    }

    /// Unit-weight directed cycle `0 -> 1 -> ... -> n-1 -> 0`.
    pub fn directed_cycle(n: usize) -> Result<Self> {
        Self::from_edges(n, (0..n).map(|i| ((i + 1) % n, i, 1.0)))
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn weight(&self, to: usize, from: usize) -> f64 {
        self.weights[(to, from)]
    }

    /// Weighted in-degree `d^i`, the i-th row sum.
    pub fn in_degree(&self, i: usize) -> f64 {
        self.weights.row(i).iter().sum()
    }

    pub fn out_degree(&self, j: usize) -> f64 {
        self.weights.column(j).iter().sum()
    }

    pub fn in_degrees(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.in_degree(i)).collect()
    }

    pub fn d_max(&self) -> f64 {
        self.in_degrees().into_iter().fold(0.0, f64::max)
    }

    pub fn edge_count(&self) -> usize {
        self.weights.iter().filter(|w| **w > 0.0).count()
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        linalg::laplacian_of(&self.weights)
    }

    /// True iff some node reaches all others along directed edges.
    pub fn has_spanning_tree(&self) -> bool {
        self.spanning_tree_root().is_some()
    }

    pub fn spanning_tree_root(&self) -> Option<usize> {
        linalg::spanning_tree_root(&self.weights)
    }

    pub fn is_balanced(&self, tol: f64) -> bool {
        (0..self.n()).all(|i| (self.in_degree(i) - self.out_degree(i)).abs() <= tol)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.n();
        (0..n).all(|i| (0..i).all(|j| (self.weights[(i, j)] - self.weights[(j, i)]).abs() <= tol))
    }

    /// Longest shortest-path hop count over the support, or `None` if some
    /// pair is unreachable.
    pub fn hop_diameter(&self) -> Option<usize> {
        let n = self.n();
        let mut diam = 0;
        for src in 0..n {
            let mut dist = vec![usize::MAX; n];
            dist[src] = 0;
            let mut queue = VecDeque::from([src]);
            while let Some(j) = queue.pop_front() {
                for i in 0..n {
                    if dist[i] == usize::MAX && self.weights[(i, j)] > 0.0 {
                        dist[i] = dist[j] + 1;
                        queue.push_back(i);
                    }
                }
            }
            diam = diam.max(dist.into_iter().max().unwrap_or(0));
        }
        (diam != usize::MAX).then_some(diam)
    }

    pub fn volume(&self) -> f64 {
        self.in_degrees().iter().sum()
    }

    pub fn spectral_report(&self, tol: f64) -> Result<SpectralReport> {
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
        }
        if self.n() < 2 {
            return Err(Error::InvalidArgument("spectral report needs at least two nodes".into()));
        }
        let eigenvalues = linalg::sorted_eigenvalues(&self.laplacian())?;
        Ok(SpectralReport {
            lambda2: eigenvalues[1],
            eigenvalues,
            d_max: self.d_max(),
            spanning_tree: self.has_spanning_tree(),
            balanced: self.is_balanced(tol),
        })
    }

    /// Bounds on the real part of the Fiedler eigenvalue.
    ///
    /// The upper bound `n/(n-1) * min_i d^i` is always returned. The lower
    /// bound `1/(diam * vol)` is only produced for connected undirected
    /// graphs; it is a certificate for unit weights (and, by monotonicity,
    /// for weights that are all at least one).
    pub fn fiedler_bounds(&self) -> FiedlerBounds {
        let n = self.n() as f64;
        let min_degree = self.in_degrees().into_iter().fold(f64::INFINITY, f64::min);
        let upper = n / (n - 1.0) * min_degree;
        let lower = if self.is_symmetric(0.0) {
            self.hop_diameter().filter(|&d| d > 0).map(|d| 1.0 / (d as f64 * self.volume()))
        } else {
            None
        };
        FiedlerBounds { lower, upper }
    }

    /// Perron matrix `I - L(alpha A)` of the synchronous iteration.
    pub fn perron_matrix(&self, alpha: f64) -> DMatrix<f64> {
        DMatrix::identity(self.n(), self.n()) - self.laplacian() * alpha
    }

    /// Consensus value `z^T x0 / z^T 1` reached by `x <- (I - L(alpha A)) x`,
    /// where `z` is the left eigenvector of the Perron matrix at 1.
    pub fn perron_consensus_value(&self, alpha: f64, x0: &[f64]) -> Result<f64> {
        if x0.len() != self.n() {
            return Err(Error::InvalidArgument(format!(
                "initial state has {} entries, graph has {} nodes",
                x0.len(),
                self.n()
            )));
        }
        let d_max = self.d_max();
        if !(alpha > 0.0) || alpha * d_max >= 1.0 {
            return Err(Error::StepSizeTooLarge { alpha, limit: 1.0 / d_max });
        }
        if !self.has_spanning_tree() {
            return Err(Error::NoSpanningTree);
        }
        let z = self.left_eigenvector()?;
        Ok(z.dot(&DVector::from_column_slice(x0)))
    }

    /// Left eigenvector of the Laplacian at 0, normalised to sum to one.
    pub fn left_eigenvector(&self) -> Result<DVector<f64>> {
        linalg::left_null_vector(&self.laplacian())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    /// Laplacian eigenvalues, ascending by real part then imaginary part.
    pub eigenvalues: Vec<Complex64>,
    pub lambda2: Complex64,
    pub d_max: f64,
    pub spanning_tree: bool,
    pub balanced: bool,
}

impl SpectralReport {
    /// Every eigenvalue inside the disc centred at `(d_max, 0)` of radius `d_max`.
    pub fn within_gershgorin_disc(&self, slack: f64) -> bool {
        self.eigenvalues.iter().all(|l| (l - Complex64::new(self.d_max, 0.0)).norm() <= self.d_max + slack)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiedlerBounds {
    pub lower: Option<f64>,
    pub upper: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> WeightedDigraph {
        WeightedDigraph::from_edges(3, [(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0)]).unwrap()
    }

    #[test]
    fn two_node_laplacian() {
        let g = WeightedDigraph::from_edges(2, [(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        assert_eq!(g.laplacian(), DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn complete_graph_spectrum() {
        let g = WeightedDigraph::complete(3).unwrap();
        let l = g.laplacian();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(l[(i, j)], if i == j { 2.0 } else { -1.0 });
            }
        }
        let r = g.spectral_report(BALANCE_TOL).unwrap();
        let re: Vec<f64> = r.eigenvalues.iter().map(|c| c.re).collect();
        assert!(re[0].abs() < 1e-12 && (re[1] - 3.0).abs() < 1e-12 && (re[2] - 3.0).abs() < 1e-12);
        for n in 2..8 {
            let r = WeightedDigraph::complete(n).unwrap().spectral_report(BALANCE_TOL).unwrap();
            assert!((r.lambda2.re - n as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn directed_four_cycle_spectrum() {
        let r = WeightedDigraph::directed_cycle(4).unwrap().spectral_report(BALANCE_TOL).unwrap();
        let expect =
            [Complex64::new(0.0, 0.0), Complex64::new(1.0, -1.0), Complex64::new(1.0, 1.0), Complex64::new(2.0, 0.0)];
        for (got, want) in r.eigenvalues.iter().zip(expect) {
            assert!((got - want).norm() < 1e-10, "{got} vs {want}");
        }
        assert!((r.lambda2.re - 1.0).abs() < 1e-10);
        assert!(r.balanced && r.spanning_tree);
    }

    #[test]
    fn spanning_tree_simple_cases() {
        let path = WeightedDigraph::from_edges(3, [(1, 0, 1.0), (2, 1, 1.0)]).unwrap();
        assert!(path.has_spanning_tree());
        assert_eq!(path.spanning_tree_root(), Some(0));
        let isolated = WeightedDigraph::new(DMatrix::zeros(2, 2)).unwrap();
        assert!(!isolated.has_spanning_tree());
        // two roots feeding one sink: no single root
        let v = WeightedDigraph::from_edges(3, [(2, 0, 1.0), (2, 1, 1.0)]).unwrap();
        assert!(!v.has_spanning_tree());
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(WeightedDigraph::new(DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 0.0, 0.0])).is_err());
        assert!(WeightedDigraph::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).is_err());
        assert!(WeightedDigraph::new(DMatrix::from_row_slice(2, 2, &[0.0, f64::NAN, 0.0, 0.0])).is_err());
        assert!(WeightedDigraph::new(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn fiedler_bounds_small_cases() {
        let k3 = WeightedDigraph::complete(3).unwrap().fiedler_bounds();
        assert!((k3.upper - 3.0).abs() < 1e-15);
        let p = path3();
        let b = p.fiedler_bounds();
        assert_eq!(b.lower, Some(0.125));
        // path Laplacian eigenvalues are 0, 1, 3
        let l2 = p.spectral_report(BALANCE_TOL).unwrap().lambda2.re;
        assert!((l2 - 1.0).abs() < 1e-12);
        assert!(b.lower.unwrap() <= l2 && l2 <= b.upper);
        let directed = WeightedDigraph::from_edges(3, [(1, 0, 1.0), (2, 1, 1.0)]).unwrap();
        let d = directed.fiedler_bounds();
        assert_eq!(d.lower, None);
        assert_eq!(d.upper, 0.0);
    }

    #[test]
    fn perron_value_cases() {
        let g = WeightedDigraph::from_edges(2, [(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        assert!((g.perron_consensus_value(0.25, &[0.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);
        let h = WeightedDigraph::from_edges(3, [(1, 0, 2.0), (2, 1, 1.0), (0, 2, 0.5)]).unwrap();
        assert!((h.perron_consensus_value(0.2, &[3.5, 3.5, 3.5]).unwrap() - 3.5).abs() < 1e-12);
    }

    #[test]
    fn perron_value_preconditions() {
        let g = WeightedDigraph::from_edges(2, [(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        assert!(matches!(g.perron_consensus_value(1.0, &[0.0, 1.0]), Err(Error::StepSizeTooLarge { .. })));
        let msg = g.perron_consensus_value(2.0, &[0.0, 1.0]).unwrap_err().to_string();
        assert!(msg.contains("alpha < 1/d_max"), "{msg}");
        let split = WeightedDigraph::from_edges(3, [(2, 0, 1.0), (2, 1, 1.0)]).unwrap();
        assert!(matches!(split.perron_consensus_value(0.1, &[0.0, 1.0, 2.0]), Err(Error::NoSpanningTree)));
    }

    #[test]
    fn star_listening_to_hub_agrees_on_hub_value() {
        // every leaf listens to hub 0; the hub listens to nobody
        let n = 5;
        let g = WeightedDigraph::from_edges(n, (1..n).map(|leaf| (leaf, 0, 1.0))).unwrap();
        let x0 = [4.0, -1.0, 2.0, 7.0, 0.5];
        let alpha = 0.5;
        let value = g.perron_consensus_value(alpha, &x0).unwrap();
        // independent route: iterate the Perron matrix to convergence
        let p = g.perron_matrix(alpha);
        let mut x = DVector::from_column_slice(&x0);
        for _ in 0..200 {
            x = &p * x;
        }
        assert!((value - 4.0).abs() < 1e-12);
        assert!(x.iter().all(|v| (v - value).abs() < 1e-12));
    }
}
