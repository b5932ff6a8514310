//! Localized actuator: cutoff mask `chi` and the map `eta -> Pi(chi P_M eta)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{GridVector, SpectralSpace};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ChiShape {
    /// Radial bump `exp(1 - 1/(1 - r^2/R^2))`, equal to 1 at the center.
    Bump { center: [f64; 2], radius: f64 },
    /// Spatially constant mask (test configurations).
    Constant { value: f64 },
}

#[derive(Clone, Debug)]
pub struct ChiMask {
    shape: ChiShape,
    rho: f64,
    values: Vec<f64>,
    sup: f64,
}

fn periodic_offset(a: f64, b: f64) -> f64 {
    (a - b + PI).rem_euclid(2.0 * PI) - PI
}

impl ChiShape {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match *self {
            ChiShape::Constant { value } => value,
            ChiShape::Bump { center, radius } => {
                let dx = periodic_offset(x, center[0]);
                let dy = periodic_offset(y, center[1]);
                let s = (dx * dx + dy * dy) / (radius * radius);
                if s < 1.0 {
                    (1.0 - 1.0 / (1.0 - s)).exp()
                } else {
                    0.0
                }
            }
        }
    }
}

impl ChiMask {
    pub fn new(space: &SpectralSpace, shape: ChiShape, rho: f64) -> Result<Self> {
        match shape {
            ChiShape::Bump { center, radius } => {
                if !(radius > 0.0 && radius <= PI) {
                    return Err(Error::invalid("chi.radius", format!("must lie in (0, pi], got {radius}")));
                }
                if !center.iter().all(|c| c.is_finite()) {
                    return Err(Error::invalid("chi.center", "must be finite"));
                }
            }
            ChiShape::Constant { value } => {
                if !(0.0..=1.0).contains(&value) {
                    return Err(Error::invalid("chi.value", format!("must lie in [0, 1], got {value}")));
                }
            }
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::invalid("chi.rho", format!("must lie in [0, 1), got {rho}")));
        }
        let g = space.grid();
        let values: Vec<f64> = (0..g.len())
            .map(|i| {
                let (x, y) = g.point(i);
                shape.eval(x, y)
            })
            .collect();
        let sup = values.iter().cloned().fold(0.0, f64::max);
        Ok(ChiMask { shape, rho, values, sup })
    }

    pub fn constant(space: &SpectralSpace, value: f64) -> Result<Self> {
        Self::new(space, ChiShape::Constant { value }, 0.0)
    }

    pub fn shape(&self) -> &ChiShape {
        &self.shape
    }

    /// Level defining the documented region `{chi > rho}`.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup
    }

    pub fn is_zero(&self) -> bool {
        self.sup == 0.0
    }

    /// Fraction of grid points where `chi > rho`.
    pub fn active_fraction(&self) -> f64 {
        self.values.iter().filter(|&&v| v > self.rho).count() as f64 / self.values.len() as f64
    }

    fn multiply(&self, w: &GridVector) -> GridVector {
        let m = |c: &Vec<f64>| c.iter().zip(&self.values).map(|(a, b)| a * b).collect();
        [m(&w[0]), m(&w[1])]
    }

    /// Grid values of `chi e_j` for every Stokes mode.
    fn localized_modes(&self, space: &SpectralSpace) -> Vec<GridVector> {
        let k = space.dim();
        (0..k)
            .map(|j| {
                let e = DVector::from_fn(k, |i, _| (i == j) as u8 as f64);
                self.multiply(&space.synthesize(&e))
            })
            .collect()
    }

    /// `W[i][j] = int chi^2 e_i . e_j dx` by grid quadrature.
    pub fn l2_gram(&self, space: &SpectralSpace) -> DMatrix<f64> {
        let fields = self.localized_modes(space);
        let n2 = space.grid().len();
        let x = DMatrix::from_fn(2 * n2, fields.len(), |r, j| fields[j][r / n2][r % n2]);
        x.transpose() * x * space.grid().cell_area()
    }

    /// `W1[i][j] = (chi e_i, chi e_j)_{H^1}` with the spectral gradient.
    pub fn h1_gram(&self, space: &SpectralSpace) -> DMatrix<f64> {
        let g = space.grid();
        let n = g.n();
        let n2 = g.len();
        let fields = self.localized_modes(space);
        let weights: Vec<f64> = (0..n2)
            .map(|s| {
                let kx = g.wavenumber(s % n) as f64;
                let ky = g.wavenumber(s / n) as f64;
                (1.0 + kx * kx + ky * ky).sqrt()
            })
            .collect();
        // Real and imaginary parts of both components stacked as rows.
        let mut y = DMatrix::zeros(4 * n2, fields.len());
        for (j, f) in fields.iter().enumerate() {
            for c in 0..2 {
                let spec = g.forward(&f[c]);
                for s in 0..n2 {
                    y[(c * 2 * n2 + s, j)] = weights[s] * spec[s].re;
                    y[(c * 2 * n2 + n2 + s, j)] = weights[s] * spec[s].im;
                }
            }
        }
        y.transpose() * y * (g.cell_area() / n2 as f64)
    }
}

/// Dense `K x M` matrix of `eta -> Pi(chi P_M eta)` in Stokes coefficients.
#[derive(Clone, Debug)]
pub struct Actuator {
    matrix: DMatrix<f64>,
}

impl Actuator {
    pub fn build(space: &SpectralSpace, chi: &ChiMask, m: usize) -> Result<Self> {
        space.check_m(m)?;
        let g = space.grid();
        let mut matrix = DMatrix::zeros(space.dim(), m);
        for (i, lm) in space.laplacian_modes()[..m].iter().enumerate() {
            let mut w: GridVector = [vec![0.0; g.len()], vec![0.0; g.len()]];
            for (idx, chi_v) in chi.values().iter().enumerate() {
                if *chi_v != 0.0 {
                    let (x, y) = g.point(idx);
                    w[lm.component][idx] = chi_v * lm.eval(x, y)[lm.component];
                }
            }
            matrix.set_column(i, &space.project(&w));
        }
        Ok(Actuator { matrix })
    }

    pub fn m(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `Pi(chi P_M eta)` for a control vector.
    pub fn apply(&self, eta: &DVector<f64>) -> DVector<f64> {
        &self.matrix * eta
    }

    /// `P_M(chi v)` for a Stokes field, the exact transpose of [`Actuator::apply`].
    pub fn apply_chi_pm(&self, v: &DVector<f64>) -> DVector<f64> {
        self.matrix.tr_mul(v)
    }

    /// The symmetric kernel of `v -> Pi chi P_M chi v`.
    pub fn gain_kernel(&self) -> DMatrix<f64> {
        &self.matrix * self.matrix.transpose()
    }
}
