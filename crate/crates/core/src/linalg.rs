//! Dense helpers shared by the graph and averaged-model code.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

/// `D(A) - A`, with `D(A)` the diagonal of row sums.
pub fn laplacian_of(adjacency: &DMatrix<f64>) -> DMatrix<f64> {
    let n = adjacency.nrows();
    let mut lap = -adjacency.clone();
    for i in 0..n {
        let degree: f64 = adjacency.row(i).iter().sum();
        lap[(i, i)] += degree;
    }
    lap
}

/// All eigenvalues of a general real square matrix, sorted ascending by real
/// part with ties broken by imaginary part.
pub fn sorted_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let max_iter = 10_000 + 200 * n;
    // The QR sweep can stall at machine epsilon on highly structured
    // integer matrices; a slightly looser deflation threshold unsticks it.
    let schur = [f64::EPSILON, 1e-15, 1e-14, 1e-12]
        .into_iter()
        .find_map(|eps| m.clone().try_schur(eps, max_iter))
        .ok_or(Error::EigenNoConvergence(n))?;
    let mut eig: Vec<Complex64> = schur.complex_eigenvalues().iter().map(|c| Complex64::new(c.re, c.im)).collect();
    if eig.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::EigenNoConvergence(n));
    }
    eig.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(eig)
}

/// Left null vector `z` of a Laplacian-like matrix (`z^T M = 0`), scaled so
/// that its entries sum to one.
///
/// Requires the null space to be one-dimensional and not orthogonal to the
/// ones vector, which holds for Laplacians of graphs with a spanning tree.
pub fn left_null_vector(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = m.nrows();
    if n == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    let mut sys = m.transpose();
    for j in 0..n {
        sys[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    sys.lu()
        .solve(&rhs)
        .filter(|z| z.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Singular("left null vector is not unique".into()))
}

pub fn frobenius_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Nodes reachable from `root` when information flows from `j` to `i`
/// whenever `adjacency[(i, j)] > 0`.
pub fn reachable_from(adjacency: &DMatrix<f64>, root: usize) -> Vec<bool> {
    let n = adjacency.nrows();
    let mut seen = vec![false; n];
    let mut stack = vec![root];
    seen[root] = true;
    while let Some(j) = stack.pop() {
        for i in 0..n {
            if !seen[i] && adjacency[(i, j)] > 0.0 {
                seen[i] = true;
                stack.push(i);
            }
        }
    }
    seen
}

/// A node from which every other node can be reached, if one exists.
pub fn spanning_tree_root(adjacency: &DMatrix<f64>) -> Option<usize> {
    let n = adjacency.nrows();
    if n == 0 {
        return None;
    }
    (0..n).find(|&r| reachable_from(adjacency, r).into_iter().all(|s| s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplacian_rows_sum_to_zero() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 0.5, 0.0, 0.0, 0.0, 3.0, 0.0]);
        let l = laplacian_of(&a);
        for i in 0..3 {
            assert!(l.row(i).iter().sum::<f64>().abs() < 1e-15);
        }
        assert_eq!(l[(0, 0)], 3.0);
        assert_eq!(l[(0, 2)], -2.0);
    }

    #[test]
    fn left_null_vector_of_directed_path_sits_on_the_root() {
        // 0 -> 1 -> 2: only node 0 influences everyone.
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let z = left_null_vector(&laplacian_of(&a)).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-12);
        assert!(z[1].abs() < 1e-12 && z[2].abs() < 1e-12);
    }

    #[test]
    fn left_null_vector_fails_without_spanning_tree() {
        let a = DMatrix::zeros(2, 2);
        assert!(left_null_vector(&laplacian_of(&a)).is_err());
    }

    #[test]
    fn eigenvalues_sorted_with_imaginary_tiebreak() {
        // rotation-like block with eigenvalues 1 +- i, plus 0.
        let m = DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let e = sorted_eigenvalues(&m).unwrap();
        assert!(e[0].norm() < 1e-12);
        assert!((e[1] - Complex64::new(1.0, -1.0)).norm() < 1e-12);
        assert!((e[2] - Complex64::new(1.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn stalling_schur_case_converges() {
        let rows = [
            [5., -1., -1., -1., -1., -1.],
            [-1., 5., -1., -1., -1., -1.],
            [-1., -1., 5., -1., -1., -1.],
            [-1., -1., -1., 4., -1., 0.],
            [-1., -1., -1., -1., 4., 0.],
            [-1., -1., -1., 0., 0., 3.],
        ];
        let m = DMatrix::from_fn(6, 6, |i, j| rows[i][j]);
        let eig = sorted_eigenvalues(&m).unwrap();
        assert!(eig[0].norm() < 1e-9);
        let trace: f64 = eig.iter().map(|z| z.re).sum();
        assert!((trace - 26.0).abs() < 1e-9);
    }
}
