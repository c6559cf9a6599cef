// SPDX-License-Identifier: Apache-2.0

//! Small dense helpers shared by the probes and erasers.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub fn to_f64(m: &DMatrix<f32>) -> DMatrix<f64> {
    m.map(|v| v as f64)
}

pub fn to_f32(m: &DMatrix<f64>) -> DMatrix<f32> {
    m.map(|v| v as f32)
}

/// Builds a matrix from row-major values.
pub fn from_row_major<T: nalgebra::Scalar + Copy>(rows: usize, cols: usize, data: &[T]) -> DMatrix<T> {
    DMatrix::from_row_slice(rows, cols, data)
}

pub fn to_row_major<T: nalgebra::Scalar + Copy>(m: &DMatrix<T>) -> Vec<T> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows().max(1) as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

pub fn center_columns(x: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let mean = column_means(x);
    let mut centered = x.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    (centered, mean)
}

/// Cross-covariance `Cov(X, Z)` (population normalisation).
pub fn cross_covariance(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.nrows() != z.nrows() {
        return Err(Error::Dimension(format!(
            "{} rows against {} rows",
            x.nrows(),
            z.nrows()
        )));
    }
    let (xc, _) = center_columns(x);
    let (zc, _) = center_columns(z);
    Ok(xc.transpose() * zc / x.nrows().max(1) as f64)
}

/// Symmetric eigendecomposition with eigenvalues sorted descending.
pub fn sorted_eigh(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(m.nrows(), order.len());
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Numerical rank from singular values, relative tolerance against the largest.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Orthonormal basis of the column space of `m`, dropping directions whose
/// singular value falls below `rel_tol` times the largest.
pub fn column_space_basis(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| max > 0.0 && svd.singular_values[i] > rel_tol * max)
        .collect();
    let mut basis = DMatrix::zeros(m.nrows(), keep.len());
    for (dst, &src) in keep.iter().enumerate() {
        basis.set_column(dst, &u.column(src));
    }
    basis
}

pub fn is_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}
