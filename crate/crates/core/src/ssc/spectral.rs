use super::kmeans::kmeans;
use super::ClusterAssignment;
use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, Matrix};

/// `W = |C| + |Cᵀ|`.
pub fn affinity(coeffs: &Matrix) -> Result<Matrix> {
    if !coeffs.is_square() {
        return Err(Error::Shape(format!(
            "coefficient matrix must be square, got {:?}",
            coeffs.shape()
        )));
    }
    let n = coeffs.rows();
    let mut w = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            w[(i, j)] = coeffs[(i, j)].abs() + coeffs[(j, i)].abs();
        }
    }
    Ok(w)
}

/// `L = I − D^{-1/2} W D^{-1/2}`, with isolated nodes given degree 1.
pub fn normalized_laplacian(w: &Matrix) -> Matrix {
    let n = w.rows();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = w.row(i).iter().sum();
            1.0 / if d > 0.0 { d } else { 1.0 }.sqrt()
        })
        .collect();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let delta = if i == j { 1.0 } else { 0.0 };
            l[(i, j)] = delta - inv_sqrt[i] * w[(i, j)] * inv_sqrt[j];
        }
    }
    l
}

/// Relative gap below which two Laplacian eigenvalues count as equal.
const TIE_TOL: f64 = 1e-8;

/// Rows of the eigenvectors for the `k` smallest Laplacian eigenvalues,
/// each row scaled to unit length (zero rows stay zero).
///
/// When the `k`-th eigenvalue is repeated past position `k`, every
/// eigenvector of that eigenvalue is kept. Any basis of a repeated
/// eigenspace is equally valid, so truncating it would make the clustering
/// depend on the solver's arbitrary choice; the full eigenspace gives row
/// distances that do not.
pub fn spectral_embedding(laplacian: &Matrix, k: usize) -> Result<Matrix> {
    let n = laplacian.rows();
    if k == 0 || k > n {
        return Err(Error::Parameter(format!("cannot embed {n} nodes into {k} dimensions")));
    }
    let eig = sym_eigen(laplacian)?;
    let last = eig.eigenvalues[k - 1];
    let tol = TIE_TOL * last.abs().max(1.0);
    let mut dims = k;
    while dims < n && eig.eigenvalues[dims] - last <= tol {
        dims += 1;
    }
    let mut emb = Matrix::zeros(n, dims);
    for i in 0..n {
        for j in 0..dims {
            emb[(i, j)] = eig.eigenvectors[(i, j)];
        }
        let norm: f64 = emb.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            emb.row_mut(i).iter_mut().for_each(|v| *v /= norm);
        }
    }
    Ok(emb)
}

/// Spectral clustering of the channels linked by a self-expressive code.
pub fn spectral_cluster(
    coeffs: &Matrix,
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<ClusterAssignment> {
    let n = coeffs.rows();
    if k == 0 || k > n {
        return Err(Error::Parameter(format!("cannot form {k} clusters from {n} channels")));
    }
    if k == n {
        return Ok(ClusterAssignment::singletons(n));
    }
    if k == 1 {
        return ClusterAssignment::from_labels(&vec![0; n]);
    }
    let w = affinity(coeffs)?;
    let emb = spectral_embedding(&normalized_laplacian(&w), k)?;
    let fit = kmeans(&emb, k, restarts, seed)?;
    ClusterAssignment::from_labels(&fit.labels)
}
