//! Uniform n x n collocation grid on the torus with 2D FFTs.
//!
//! Grid values are stored row-major with x varying fastest:
//! `idx = iy * n + ix`, `x = 2 pi ix / n`, `y = 2 pi iy / n`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// A pair of scalar grid arrays (x and y components).
pub type GridVector = [Vec<f64>; 2];

#[derive(Clone)]
pub struct Grid {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("n", &self.n).finish()
    }
}

impl Grid {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Grid {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Quadrature weight of one cell, `(2 pi / n)^2`.
    pub fn cell_area(&self) -> f64 {
        let h = 2.0 * PI / self.n as f64;
        h * h
    }

    pub fn point(&self, idx: usize) -> (f64, f64) {
        let h = 2.0 * PI / self.n as f64;
        ((idx % self.n) as f64 * h, (idx / self.n) as f64 * h)
    }

    /// Storage slot of wavevector `k` in a spectrum array.
    pub fn slot(&self, k: [i32; 2]) -> usize {
        let n = self.n as i32;
        (k[1].rem_euclid(n) * n + k[0].rem_euclid(n)) as usize
    }

    /// Signed wavenumber stored at a spectrum index along one axis.
    pub fn wavenumber(&self, i: usize) -> i32 {
        let n = self.n as i32;
        let i = i as i32;
        if i >= n / 2 {
            i - n
        } else {
            i
        }
    }

    fn fft2(&self, buf: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let plan = if inverse { &self.inv } else { &self.fwd };
        plan.process(buf);
        let mut col = vec![Complex64::new(0.0, 0.0); n * n];
        for iy in 0..n {
            for ix in 0..n {
                col[ix * n + iy] = buf[iy * n + ix];
            }
        }
        plan.process(&mut col);
        for iy in 0..n {
            for ix in 0..n {
                buf[iy * n + ix] = col[ix * n + iy];
            }
        }
    }

    /// Unnormalized forward transform `F_k = sum_a f(x_a) exp(-i k . x_a)`.
    pub fn forward(&self, f: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft2(&mut buf, false);
        buf
    }

    /// Synthesis `f(x_a) = Re sum_k F_k exp(i k . x_a)`.
    pub fn synthesize(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.fft2(&mut spec, true);
        spec.into_iter().map(|c| c.re).collect()
    }

    pub fn zero_spectrum(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.len()]
    }
}
