//! Equality-constrained minimization of a positive definite quadratic form:
//! minimize `x^T J x` subject to `A x = y`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{sym_pinv, symmetrize};

/// Relative constraint residual above which `y` is declared outside `range(A)`.
pub const INFEASIBLE_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct QuadraticProgram {
    pub cost: DMatrix<f64>,
    pub constraint: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multiplier `mu` of the Lagrangian `x^T J x + mu^T (A x - y)`.
    pub multiplier: DVector<f64>,
}

impl QuadraticProgram {
    pub fn new(cost: DMatrix<f64>, constraint: DMatrix<f64>, rhs: DVector<f64>) -> Result<Self> {
        let n = cost.nrows();
        if cost.ncols() != n || constraint.ncols() != n || constraint.nrows() != rhs.len() {
            return Err(Error::InvalidProgram(format!(
                "shape mismatch: cost {}x{}, constraint {}x{}, rhs {}",
                cost.nrows(),
                cost.ncols(),
                constraint.nrows(),
                constraint.ncols(),
                rhs.len()
            )));
        }
        let asym = (&cost - cost.transpose()).norm();
        if asym > 1e-12 * cost.norm() {
            return Err(Error::InvalidProgram(format!("cost form is not symmetric ({asym:.2e})")));
        }
        Ok(QuadraticProgram { cost, constraint, rhs })
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.cost * x))
    }

    fn factor(&self) -> Result<Cholesky<f64, Dyn>> {
        Cholesky::new(symmetrize(&self.cost)).ok_or_else(|| Error::InvalidProgram("cost form is not positive definite".into()))
    }
}

fn check_feasible(a: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>) -> Result<()> {
    let residual = (a * x - y).norm() / y.norm().max(f64::MIN_POSITIVE);
    if y.norm() > 0.0 && residual > INFEASIBLE_TOL {
        return Err(Error::Infeasible { residual });
    }
    Ok(())
}

/// Normal-equations route: `x = J^{-1} A^T (A J^{-1} A^T)^+ y`.
pub fn solve_constrained_min(qp: &QuadraticProgram, rtol: f64) -> Result<QpSolution> {
    let chol = qp.factor()?;
    let jinv_at = chol.solve(&qp.constraint.transpose());
    let schur = &qp.constraint * &jinv_at;
    let lambda = sym_pinv(&schur, rtol) * &qp.rhs;
    let x = &jinv_at * &lambda;
    check_feasible(&qp.constraint, &x, &qp.rhs)?;
    Ok(QpSolution {
        x,
        multiplier: lambda * -2.0,
    })
}

/// Null-space route: particular solution plus the optimal correction inside `ker A`.
pub fn solve_null_space(qp: &QuadraticProgram, rtol: f64) -> Result<DVector<f64>> {
    qp.factor()?;
    let a = &qp.constraint;
    let n = a.ncols();
    let eig = SymmetricEigen::new(symmetrize(&a.tr_mul(a)));
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let mut range_cols = Vec::new();
    let mut null_cols = Vec::new();
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if top > 0.0 && l > rtol * top {
            range_cols.push(i);
        } else {
            null_cols.push(i);
        }
    }
    let v = &eig.eigenvectors;
    // minimum-norm particular solution x_p = V_r diag(1/l) V_r^T A^T y
    let aty = a.tr_mul(&qp.rhs);
    let mut xp = DVector::zeros(n);
    for &i in &range_cols {
        let col = v.column(i);
        xp.axpy(col.dot(&aty) / eig.eigenvalues[i], &col.into_owned(), 1.0);
    }
    check_feasible(a, &xp, &qp.rhs)?;
    if null_cols.is_empty() {
        return Ok(xp);
    }
    let z = DMatrix::from_fn(n, null_cols.len(), |r, c| v[(r, null_cols[c])]);
    let jz = &qp.cost * &z;
    let reduced = z.tr_mul(&jz);
    let w = Cholesky::new(symmetrize(&reduced))
        .ok_or_else(|| Error::InvalidProgram("cost form is not positive definite on ker A".into()))?
        .solve(&(-jz.tr_mul(&xp)));
    Ok(xp + z * w)
}

/// Relative stationarity residual `|2 J x + A^T mu| / (|J||x| + |A^T||mu|)`.
pub fn kkt_residual(qp: &QuadraticProgram, x: &DVector<f64>, multiplier: &DVector<f64>) -> f64 {
    let r = &qp.cost * x * 2.0 + qp.constraint.tr_mul(multiplier);
    let scale = qp.cost.norm() * x.norm() + qp.constraint.norm() * multiplier.norm();
    if scale == 0.0 {
        r.norm()
    } else {
        r.norm() / scale
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LinearityReport {
    pub trials: usize,
    pub max_linearity_deviation: f64,
    pub max_orthogonality: f64,
}

/// Checks that `y -> x*(y)` is linear and that `J(x*(y), z) = 0` for `z` in `ker A`.
pub fn minimizer_map_linearity_check<R: Rng>(
    cost: &DMatrix<f64>,
    constraint: &DMatrix<f64>,
    rtol: f64,
    trials: usize,
    rng: &mut R,
) -> Result<LinearityReport> {
    let m = constraint.nrows();
    let n = constraint.ncols();
    let solve = |y: DVector<f64>| -> Result<DVector<f64>> {
        let qp = QuadraticProgram::new(cost.clone(), constraint.clone(), y)?;
        Ok(solve_constrained_min(&qp, rtol)?.x)
    };
    // ker A basis from the eigenvectors of A^T A
    let eig = SymmetricEigen::new(symmetrize(&constraint.tr_mul(constraint)));
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let null: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] <= 1e-12 * top).collect();

    let mut lin: f64 = 0.0;
    let mut orth: f64 = 0.0;
    for _ in 0..trials {
        let ya = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        let yb = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        let (s, t): (f64, f64) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let xa = solve(ya.clone())?;
        let xb = solve(yb.clone())?;
        let xc = solve(&ya * s + &yb * t)?;
        let combo = &xa * s + &xb * t;
        lin = lin.max((&xc - &combo).norm() / combo.norm().max(f64::MIN_POSITIVE));
        if !null.is_empty() {
            let mut z = DVector::zeros(n);
            for &i in &null {
                z.axpy(rng.random_range(-1.0..1.0), &eig.eigenvectors.column(i).into_owned(), 1.0);
            }
            let val = xa.dot(&(cost * &z)).abs();
            orth = orth.max(val / (cost.norm() * xa.norm() * z.norm()).max(f64::MIN_POSITIVE));
        }
    }
    Ok(LinearityReport {
        trials,
        max_linearity_deviation: lin,
        max_orthogonality: orth,
    })
}
