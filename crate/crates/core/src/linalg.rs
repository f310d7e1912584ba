//! Small dense helpers on top of nalgebra's symmetric eigendecomposition.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigen-based Moore–Penrose pseudo-inverse of a symmetric PSD matrix.
/// Eigenvalues at or below `rel_tol · λ_max` are treated as zero.
pub fn symmetric_pinv(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let max = eig.eigenvalues.amax();
    let mut out = DMatrix::zeros(n, n);
    if max == 0.0 {
        return out;
    }
    let cutoff = rel_tol * max;
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > cutoff {
            let v = eig.eigenvectors.column(i);
            out += (v * v.transpose()) / lambda;
        }
    }
    out
}

/// Orthonormal basis (as columns) of the null space of a symmetric PSD matrix.
/// Eigenvalues at or below `abs_tol · max(1, λ_max)` count as zero.
pub fn symmetric_null_space(m: &DMatrix<f64>, abs_tol: f64) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let cutoff = abs_tol * eig.eigenvalues.amax().max(1.0);
    let cols: Vec<DVector<f64>> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &l)| l.abs() <= cutoff)
        .map(|(i, _)| eig.eigenvectors.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Orthogonal projector onto the range of a symmetric PSD matrix.
pub fn range_projector(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = m.nrows();
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let max = eig.eigenvalues.amax();
    let mut out = DMatrix::zeros(n, n);
    if max == 0.0 {
        return out;
    }
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > rel_tol * max {
            let v = eig.eigenvectors.column(i);
            out += v * v.transpose();
        }
    }
    out
}
