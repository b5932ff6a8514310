//! Truncated divergence-free Fourier model on the torus `[0, 2 pi)^2`.
//!
//! The Stokes basis uses real modes `e = c trig(k . x) k_perp / |k|` with
//! `c = 1 / (sqrt(2) pi)`, one cosine and one sine mode per wavevector in the
//! half plane `{kx > 0} U {kx = 0, ky > 0}`. The control basis (`E_M`) uses
//! the same trig functions times a unit vector along x or y.

mod chi;
mod grid;

pub use chi::{Actuator, ChiMask, ChiShape};
pub use grid::{Grid, GridVector};

use std::cmp::Ordering;
use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stokes coefficients of a velocity field.
pub type Field = DVector<f64>;

/// L2 normalization of a single real Fourier mode on the torus.
pub fn mode_norm() -> f64 {
    1.0 / (SQRT_2 * PI)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Cos,
    Sin,
}

impl Parity {
    pub fn eval(self, theta: f64) -> f64 {
        match self {
            Parity::Cos => theta.cos(),
            Parity::Sin => theta.sin(),
        }
    }

    fn rank(self) -> u8 {
        match self {
            Parity::Cos => 0,
            Parity::Sin => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StokesMode {
    pub k: [i32; 2],
    pub parity: Parity,
    /// Unit divergence-free direction `k_perp / |k|`.
    pub direction: [f64; 2],
    pub alpha: f64,
}

impl StokesMode {
    pub fn k2(&self) -> i32 {
        self.k[0] * self.k[0] + self.k[1] * self.k[1]
    }

    pub fn eval(&self, x: f64, y: f64) -> [f64; 2] {
        let s = mode_norm() * self.parity.eval(self.k[0] as f64 * x + self.k[1] as f64 * y);
        [s * self.direction[0], s * self.direction[1]]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaplacianMode {
    pub k: [i32; 2],
    pub parity: Parity,
    pub component: usize,
    pub beta: f64,
}

impl LaplacianMode {
    pub fn eval(&self, x: f64, y: f64) -> [f64; 2] {
        let s = mode_norm() * self.parity.eval(self.k[0] as f64 * x + self.k[1] as f64 * y);
        let mut v = [0.0; 2];
        v[self.component] = s;
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Norms {
    pub h: f64,
    pub v: f64,
    pub dl: f64,
}

fn in_half_plane(k: [i32; 2]) -> bool {
    k[0] > 0 || (k[0] == 0 && k[1] > 0)
}

fn half_plane_lattice(r2max: i32) -> Vec<[i32; 2]> {
    let r = (r2max as f64).sqrt().floor() as i32;
    let mut out = Vec::new();
    for kx in 0..=r {
        for ky in -r..=r {
            let k = [kx, ky];
            if in_half_plane(k) && kx * kx + ky * ky <= r2max {
                out.push(k);
            }
        }
    }
    out
}

fn mode_key(k: [i32; 2], p: Parity) -> (i32, u8, i32, i32) {
    (k[0] * k[0] + k[1] * k[1], p.rank(), k[0], k[1])
}

#[derive(Clone, Debug)]
pub struct SpectralSpace {
    nu: f64,
    modes: Vec<StokesMode>,
    alpha: DVector<f64>,
    laplacian: Vec<LaplacianMode>,
    grid: Grid,
}

impl SpectralSpace {
    /// Smallest admissible grid for the first `k` Stokes modes.
    pub fn min_grid(k: usize) -> usize {
        let modes = Self::enumerate(k, 1.0);
        Self::required_grid(&modes)
    }

    fn required_grid(modes: &[StokesMode]) -> usize {
        let axis = modes.iter().map(|m| m.k[0].abs().max(m.k[1].abs())).max().unwrap_or(0) as usize;
        let radius = modes.iter().map(|m| (m.k2() as f64).sqrt()).fold(0.0, f64::max);
        // Exact quadrature of triple products needs n > 3 * (per-axis max).
        (3 * axis + 1).max((3.0 * radius).ceil() as usize)
    }

    fn enumerate(k: usize, nu: f64) -> Vec<StokesMode> {
        let mut r2 = 1;
        loop {
            let lattice = half_plane_lattice(r2);
            if 2 * lattice.len() >= k {
                let mut keys: Vec<([i32; 2], Parity)> = lattice.iter().flat_map(|&kv| [(kv, Parity::Cos), (kv, Parity::Sin)]).collect();
                keys.sort_by_key(|&(kv, p)| mode_key(kv, p));
                // Only complete shells below r2 are guaranteed sorted; since
                // every wavevector with |k|^2 <= r2 is present the prefix is exact.
                return keys
                    .into_iter()
                    .take(k)
                    .map(|(kv, parity)| {
                        let norm = ((kv[0] * kv[0] + kv[1] * kv[1]) as f64).sqrt();
                        StokesMode {
                            k: kv,
                            parity,
                            direction: [-kv[1] as f64 / norm, kv[0] as f64 / norm],
                            alpha: nu * norm * norm,
                        }
                    })
                    .collect();
            }
            r2 += 1;
        }
    }

    pub fn new(k: usize, n: usize, nu: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("K", "at least one Stokes mode is required"));
        }
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::invalid("nu", format!("must be positive, got {nu}")));
        }
        let modes = Self::enumerate(k, nu);
        let needed = Self::required_grid(&modes);
        if n < needed {
            return Err(Error::GridTooCoarse { n, needed });
        }
        let alpha = DVector::from_iterator(k, modes.iter().map(|m| m.alpha));

        // Control modes resolvable on the grid: |k| < n/2.
        let lim = (n * n) as i32;
        let mut lap: Vec<LaplacianMode> = half_plane_lattice((lim - 1) / 4)
            .into_iter()
            .filter(|kv| 4 * (kv[0] * kv[0] + kv[1] * kv[1]) < lim)
            .flat_map(|kv| {
                let beta = (kv[0] * kv[0] + kv[1] * kv[1]) as f64;
                [Parity::Cos, Parity::Sin].into_iter().flat_map(move |parity| {
                    (0..2).map(move |component| LaplacianMode {
                        k: kv,
                        parity,
                        component,
                        beta,
                    })
                })
            })
            .collect();
        lap.sort_by(|a, b| {
            let ka = (mode_key(a.k, a.parity), a.component);
            let kb = (mode_key(b.k, b.parity), b.component);
            ka.partial_cmp(&kb).unwrap_or(Ordering::Equal)
        });

        Ok(SpectralSpace {
            nu,
            modes,
            alpha,
            laplacian: lap,
            grid: Grid::new(n),
        })
    }

    pub fn dim(&self) -> usize {
        self.modes.len()
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn modes(&self) -> &[StokesMode] {
        &self.modes
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// The Stokes operator `L` as a dense diagonal matrix.
    pub fn stokes_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.alpha)
    }

    pub fn laplacian_modes(&self) -> &[LaplacianMode] {
        &self.laplacian
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn grid_n(&self) -> usize {
        self.grid.n()
    }

    /// Index of the Stokes mode with wavevector `k` (either sign) and parity.
    /// Returns the index and the sign picked up by flipping `k` into the half plane.
    pub fn stokes_index(&self, k: [i32; 2], parity: Parity) -> Option<(usize, f64)> {
        let (kh, sign) = if in_half_plane(k) {
            (k, 1.0)
        } else {
            // trig(-k.x) = +/- trig(k.x) and k_perp flips sign.
            let s = match parity {
                Parity::Cos => -1.0,
                Parity::Sin => 1.0,
            };
            ([-k[0], -k[1]], s)
        };
        self.modes.iter().position(|m| m.k == kh && m.parity == parity).map(|j| (j, sign))
    }

    pub fn norms(&self, c: &DVector<f64>) -> Norms {
        let mut h = 0.0;
        let mut v = 0.0;
        let mut dl = 0.0;
        for (ci, ai) in c.iter().zip(self.alpha.iter()) {
            h += ci * ci;
            v += ai * ci * ci;
            dl += ai * ai * ci * ci;
        }
        Norms {
            h: h.sqrt(),
            v: v.sqrt(),
            dl: dl.sqrt(),
        }
    }

    pub fn norm_v(&self, c: &DVector<f64>) -> f64 {
        self.norms(c).v
    }

    /// Orthogonal projection onto the first `n` Stokes modes (`Pi_N`).
    pub fn stokes_project(&self, c: &DVector<f64>, n: usize) -> Result<DVector<f64>> {
        if n > self.dim() {
            return Err(Error::invalid("N", format!("{n} exceeds K = {}", self.dim())));
        }
        let mut out = c.clone();
        for v in out.iter_mut().skip(n) {
            *v = 0.0;
        }
        Ok(out)
    }

    fn add_trig(&self, spec: &mut [Complex64], k: [i32; 2], parity: Parity, amp: f64, deriv: Option<usize>) {
        let half = 0.5 * amp;
        let (mut plus, mut minus) = match parity {
            Parity::Cos => (Complex64::new(half, 0.0), Complex64::new(half, 0.0)),
            Parity::Sin => (Complex64::new(0.0, -half), Complex64::new(0.0, half)),
        };
        if let Some(d) = deriv {
            let kd = k[d] as f64;
            plus *= Complex64::new(0.0, kd);
            minus *= Complex64::new(0.0, -kd);
        }
        spec[self.grid.slot(k)] += plus;
        spec[self.grid.slot([-k[0], -k[1]])] += minus;
    }

    /// Velocity on the grid; with `deriv = Some(d)` the partial derivative along axis `d`.
    fn synthesize_part(&self, c: &DVector<f64>, deriv: Option<usize>) -> GridVector {
        let norm = mode_norm();
        let mut out: GridVector = [Vec::new(), Vec::new()];
        for (comp, slot) in out.iter_mut().enumerate() {
            let mut spec = self.grid.zero_spectrum();
            for (m, &cj) in self.modes.iter().zip(c.iter()) {
                let w = cj * norm * m.direction[comp];
                if w != 0.0 {
                    self.add_trig(&mut spec, m.k, m.parity, w, deriv);
                }
            }
            *slot = self.grid.synthesize(spec);
        }
        out
    }

    /// Physical-space velocity on the grid.
    pub fn synthesize(&self, c: &DVector<f64>) -> GridVector {
        self.synthesize_part(c, None)
    }

    /// Velocity and its gradient; `grad[i][d]` is the derivative of component `i` along axis `d`.
    pub fn synthesize_with_gradient(&self, c: &DVector<f64>) -> (GridVector, [GridVector; 2]) {
        let u = self.synthesize_part(c, None);
        let dx = self.synthesize_part(c, Some(0));
        let dy = self.synthesize_part(c, Some(1));
        let [dx0, dx1] = dx;
        let [dy0, dy1] = dy;
        (u, [[dx0, dy0], [dx1, dy1]])
    }

    /// Divergence `d_x u_x + d_y u_y` of a field on the grid.
    pub fn divergence(&self, c: &DVector<f64>) -> Vec<f64> {
        let (_, g) = self.synthesize_with_gradient(c);
        g[0][0].iter().zip(&g[1][1]).map(|(a, b)| a + b).collect()
    }

    /// Grid-quadrature sums `(sum w cos(k.x), sum w sin(k.x))` for every slot.
    fn trig_sums(&self, w: &[f64]) -> Vec<Complex64> {
        self.grid.forward(w)
    }

    fn trig_sum(&self, spec: &[Complex64], k: [i32; 2], parity: Parity) -> f64 {
        let z = spec[self.grid.slot(k)];
        match parity {
            Parity::Cos => z.re,
            Parity::Sin => -z.im,
        }
    }

    /// Leray projection plus truncation of a grid vector field, by quadrature
    /// against the Stokes modes (exact for band-limited input within the grid).
    pub fn project(&self, w: &GridVector) -> DVector<f64> {
        let sx = self.trig_sums(&w[0]);
        let sy = self.trig_sums(&w[1]);
        let scale = self.grid.cell_area() * mode_norm();
        DVector::from_iterator(
            self.dim(),
            self.modes
                .iter()
                .map(|m| scale * (m.direction[0] * self.trig_sum(&sx, m.k, m.parity) + m.direction[1] * self.trig_sum(&sy, m.k, m.parity))),
        )
    }

    /// Coefficients of `P_M w` for a grid vector field.
    pub fn project_laplacian(&self, w: &GridVector, m: usize) -> Result<DVector<f64>> {
        self.check_m(m)?;
        let sums = [self.trig_sums(&w[0]), self.trig_sums(&w[1])];
        let scale = self.grid.cell_area() * mode_norm();
        Ok(DVector::from_iterator(
            m,
            self.laplacian[..m]
                .iter()
                .map(|l| scale * self.trig_sum(&sums[l.component], l.k, l.parity)),
        ))
    }

    /// Grid values of `sum_i eta_i phi_i` over the first `eta.len()` control modes.
    pub fn synthesize_laplacian(&self, eta: &DVector<f64>) -> Result<GridVector> {
        self.check_m(eta.len())?;
        let norm = mode_norm();
        let mut specs = [self.grid.zero_spectrum(), self.grid.zero_spectrum()];
        for (l, &a) in self.laplacian.iter().zip(eta.iter()) {
            if a != 0.0 {
                let spec = &mut specs[l.component];
                self.add_trig(spec, l.k, l.parity, a * norm, None);
            }
        }
        let [a, b] = specs;
        Ok([self.grid.synthesize(a), self.grid.synthesize(b)])
    }

    pub(crate) fn check_m(&self, m: usize) -> Result<()> {
        if m > self.laplacian.len() {
            return Err(Error::invalid(
                "M",
                format!(
                    "{m} exceeds the {} control modes resolvable on an n = {} grid",
                    self.laplacian.len(),
                    self.grid.n()
                ),
            ));
        }
        Ok(())
    }

    /// Grid L2 inner product of two vector fields.
    pub fn grid_inner(&self, a: &GridVector, b: &GridVector) -> f64 {
        let mut s = 0.0;
        for c in 0..2 {
            for (x, y) in a[c].iter().zip(&b[c]) {
                s += x * y;
            }
        }
        s * self.grid.cell_area()
    }

    /// `beta_M`, the Laplacian eigenvalue of control mode `m` (1-based count).
    pub fn beta(&self, m: usize) -> f64 {
        if m == 0 {
            0.0
        } else {
            self.laplacian[m.min(self.laplacian.len()) - 1].beta
        }
    }
}
