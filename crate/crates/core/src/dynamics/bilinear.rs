//! Advection term `B(u, v) = Pi((u . grad) v)` and its linearization.

use nalgebra::{DMatrix, DVector};

use crate::spectral::{GridVector, SpectralSpace};

fn advect(space: &SpectralSpace, u: &GridVector, grad: &[GridVector; 2]) -> DVector<f64> {
    let len = u[0].len();
    let mut w: GridVector = [vec![0.0; len], vec![0.0; len]];
    for (i, wi) in w.iter_mut().enumerate() {
        for (a, out) in wi.iter_mut().enumerate() {
            *out = u[0][a] * grad[i][0][a] + u[1][a] * grad[i][1][a];
        }
    }
    space.project(&w)
}

/// `Pi((u . grad) v)` truncated to the retained modes. The grid rule in
/// [`SpectralSpace::new`] makes the product alias-free on those modes.
pub fn bilinear_b(space: &SpectralSpace, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let ug = space.synthesize(u);
    let (_, gv) = space.synthesize_with_gradient(v);
    advect(space, &ug, &gv)
}

/// `B(v) = B(v, v)`.
pub fn quadratic_b(space: &SpectralSpace, v: &DVector<f64>) -> DVector<f64> {
    let (vg, gv) = space.synthesize_with_gradient(v);
    advect(space, &vg, &gv)
}

/// Dense matrix of `v -> B(v, u) + B(u, v)` about a fixed field `u`.
pub fn linearization_matrix(space: &SpectralSpace, u: &DVector<f64>) -> DMatrix<f64> {
    let k = space.dim();
    let (ug, gu) = space.synthesize_with_gradient(u);
    let mut out = DMatrix::zeros(k, k);
    for i in 0..k {
        let e = DVector::from_fn(k, |j, _| (i == j) as u8 as f64);
        let (eg, ge) = space.synthesize_with_gradient(&e);
        let col = advect(space, &eg, &gu) + advect(space, &ug, &ge);
        out.set_column(i, &col);
    }
    out
}

/// `B(v, u) + B(u, v)`.
pub fn linearized_apply(space: &SpectralSpace, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    bilinear_b(space, v, u) + bilinear_b(space, u, v)
}

/// Adjoint of [`linearized_apply`] in `H`, as the transpose of the dense matrix.
pub fn adjoint_apply(space: &SpectralSpace, u: &DVector<f64>, q: &DVector<f64>) -> DVector<f64> {
    linearization_matrix(space, u).tr_mul(q)
}
