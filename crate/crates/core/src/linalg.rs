//! Small dense helpers shared by the solvers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Symmetric part `(A + A^T) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Moore-Penrose inverse of a symmetric PSD matrix. Eigenvalues below
/// `rtol * max_eigenvalue` are treated as zero.
pub fn sym_pinv(a: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let n = a.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = SymmetricEigen::new(symmetrize(a));
    let top = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let cut = rtol * top;
    let mut inv = DVector::zeros(n);
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if top > 0.0 && l > cut {
            inv[i] = 1.0 / l;
        }
    }
    let v = &eig.eigenvectors;
    v * DMatrix::from_diagonal(&inv) * v.transpose()
}

/// Number of eigenvalues above `rtol * max_eigenvalue`.
pub fn sym_rank(a: &DMatrix<f64>, rtol: f64) -> usize {
    if a.nrows() == 0 {
        return 0;
    }
    let e = SymmetricEigen::new(symmetrize(a)).eigenvalues;
    let top = e.iter().cloned().fold(0.0_f64, f64::max);
    e.iter().filter(|&&l| top > 0.0 && l > rtol * top).count()
}

/// Largest eigenvalue of a symmetric matrix (0 for an empty matrix).
pub fn sym_max_eig(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(a))
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn sym_min_eig(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(a))
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Largest generalized eigenvalue of the pencil `(a, b)`, i.e.
/// `sup x^T a x / x^T b x`. Returns `None` when `b` is not positive definite
/// relative to `rtol`.
pub fn max_generalized_eig(a: &DMatrix<f64>, b: &DMatrix<f64>, rtol: f64) -> Option<f64> {
    let n = b.nrows();
    if n == 0 {
        return Some(0.0);
    }
    let eb = SymmetricEigen::new(symmetrize(b));
    let top = eb.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    if top <= 0.0 {
        return None;
    }
    let mut scale = DVector::zeros(n);
    for (i, &l) in eb.eigenvalues.iter().enumerate() {
        if l <= rtol * top {
            return None;
        }
        scale[i] = 1.0 / l.sqrt();
    }
    // b^{-1/2} = V diag(scale) V^T
    let v = &eb.eigenvectors;
    let half = v * DMatrix::from_diagonal(&scale) * v.transpose();
    let c = &half * symmetrize(a) * &half;
    Some(sym_max_eig(&c))
}

/// Spectral norm (largest singular value).
pub fn op_norm(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    a.clone().svd(false, false).singular_values.iter().cloned().fold(0.0, f64::max)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (a, b) in lx.iter().zip(&ly) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    sxy / sxx
}
