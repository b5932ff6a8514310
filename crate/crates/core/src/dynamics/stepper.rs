//! Semi-implicit stepping for `v_t + L v = E(t) v + g(t, v)`: Crank-Nicolson in
//! the diagonal `L`, Heun in the linear part `E`, trapezoidal in `g`.
//!
//! The trapezoidal treatment of `g` is resolved by fixed-point iteration when
//! `g` depends on the state, so that freezing `g` along a converged
//! trajectory reproduces that trajectory exactly.

use nalgebra::DVector;

use crate::spectral::SpectralSpace;

const MAX_INNER: usize = 100;

#[derive(Clone, Debug)]
pub struct SemiImplicit {
    dt: f64,
    inv: DVector<f64>,
    explicit: DVector<f64>,
}

impl SemiImplicit {
    pub fn new(space: &SpectralSpace, dt: f64) -> Self {
        let a = space.alpha();
        SemiImplicit {
            dt,
            inv: a.map(|x| 1.0 / (1.0 + 0.5 * dt * x)),
            explicit: a.map(|x| 1.0 - 0.5 * dt * x),
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// One step from `v` where `r_now = E(t_n) v + g(t_n, v)`.
    ///
    /// `lin_next(w)` evaluates `E(t_{n+1}) w` and `g_next(w)` evaluates
    /// `g(t_{n+1}, w)`. With `iterate` the implicit `g` term is converged.
    pub fn step(
        &self,
        v: &DVector<f64>,
        r_now: &DVector<f64>,
        lin_next: &dyn Fn(&DVector<f64>) -> DVector<f64>,
        g_next: &mut dyn FnMut(&DVector<f64>) -> DVector<f64>,
        iterate: bool,
    ) -> DVector<f64> {
        let h = self.dt;
        let base = v.component_mul(&self.explicit);
        let predictor = (&base + r_now * h).component_mul(&self.inv);
        let half = base + (r_now + lin_next(&predictor)) * (0.5 * h);
        let mut w = predictor;
        for _ in 0..MAX_INNER {
            let next = (&half + g_next(&w) * (0.5 * h)).component_mul(&self.inv);
            if !iterate {
                return next;
            }
            let change = (&next - &w).norm();
            w = next;
            if !(change > 1e-15 * w.norm().max(1e-300)) {
                break;
            }
        }
        w
    }
}
