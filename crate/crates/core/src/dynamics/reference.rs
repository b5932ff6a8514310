//! Manufactured reference flows `u_hat(t) = sum_r a_r(t) d_r` with exact forcing.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::bilinear::{bilinear_b, linearization_matrix};
use crate::error::{Error, Result};
use crate::spectral::{Parity, SpectralSpace};

/// Smooth bounded amplitude `a(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Schedule {
    Constant {
        value: f64,
    },
    /// `mean + amplitude * cos(omega t + phase)`
    Cosine {
        mean: f64,
        amplitude: f64,
        omega: f64,
        phase: f64,
    },
    /// `initial * exp(rate t)`, only decaying rates are accepted.
    Exponential {
        initial: f64,
        rate: f64,
    },
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        let params: Vec<f64> = match *self {
            Schedule::Constant { value } => vec![value],
            Schedule::Cosine {
                mean,
                amplitude,
                omega,
                phase,
            } => vec![mean, amplitude, omega, phase],
            Schedule::Exponential { initial, rate } => {
                if rate > 0.0 {
                    return Err(Error::invalid(
                        "reference.schedule",
                        format!("growing exponential (rate {rate}) has an unbounded derivative"),
                    ));
                }
                vec![initial, rate]
            }
        };
        if params.iter().all(|p| p.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid("reference.schedule", "parameters must be finite"))
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Schedule::Constant { value } => value,
            Schedule::Cosine {
                mean,
                amplitude,
                omega,
                phase,
            } => mean + amplitude * (omega * t + phase).cos(),
            Schedule::Exponential { initial, rate } => initial * (rate * t).exp(),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            Schedule::Constant { .. } => 0.0,
            Schedule::Cosine {
                amplitude, omega, phase, ..
            } => -amplitude * omega * (omega * t + phase).sin(),
            Schedule::Exponential { initial, rate } => initial * rate * (rate * t).exp(),
        }
    }

    /// True when `a(t + 1) = a(t)` for all `t`.
    pub fn unit_periodic(&self) -> bool {
        match *self {
            Schedule::Constant { .. } => true,
            Schedule::Cosine { amplitude, omega, .. } => {
                let turns = omega / (2.0 * PI);
                amplitude == 0.0 || (turns - turns.round()).abs() < 1e-12
            }
            Schedule::Exponential { initial, rate } => initial == 0.0 || rate == 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ReferenceComponent {
    pub direction: DVector<f64>,
    pub schedule: Schedule,
}

#[derive(Clone, Debug)]
pub struct ReferenceTrajectory {
    components: Vec<ReferenceComponent>,
    lin: Vec<DMatrix<f64>>,
    cross: Vec<Vec<DVector<f64>>>,
    alpha: DVector<f64>,
    horizon: f64,
}

/// Stokes coefficients of the Taylor-Green field `(sin x cos y, -cos x sin y)`.
pub fn taylor_green_direction(space: &SpectralSpace) -> Result<DVector<f64>> {
    let mut d = DVector::zeros(space.dim());
    for (k, c) in [([1, 1], -PI), ([1, -1], PI)] {
        let (j, sign) = space
            .stokes_index(k, Parity::Sin)
            .ok_or_else(|| Error::invalid("K", "Taylor-Green needs the |k|^2 = 2 sine modes (K >= 8)"))?;
        d[j] += sign * c;
    }
    Ok(d)
}

impl ReferenceTrajectory {
    pub fn new(space: &SpectralSpace, components: Vec<ReferenceComponent>, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid("reference.horizon", "must be positive"));
        }
        for c in &components {
            c.schedule.validate()?;
            if c.direction.len() != space.dim() {
                return Err(Error::invalid("reference.modes", "direction length differs from K"));
            }
        }
        let lin = components.iter().map(|c| linearization_matrix(space, &c.direction)).collect();
        let cross = components
            .iter()
            .map(|a| components.iter().map(|b| bilinear_b(space, &a.direction, &b.direction)).collect())
            .collect();
        Ok(ReferenceTrajectory {
            components,
            lin,
            cross,
            alpha: space.alpha().clone(),
            horizon,
        })
    }

    pub fn zero(space: &SpectralSpace, horizon: f64) -> Result<Self> {
        Self::new(space, Vec::new(), horizon)
    }

    pub fn taylor_green(space: &SpectralSpace, schedule: Schedule, horizon: f64) -> Result<Self> {
        let direction = taylor_green_direction(space)?;
        Self::new(space, vec![ReferenceComponent { direction, schedule }], horizon)
    }

    pub fn components(&self) -> &[ReferenceComponent] {
        &self.components
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    /// True when the linearized dynamics repeat on every unit interval.
    pub fn unit_periodic(&self) -> bool {
        self.components.iter().all(|c| c.schedule.unit_periodic())
    }

    pub fn is_zero(&self) -> bool {
        self.components
            .iter()
            .all(|c| c.direction.iter().all(|&v| v == 0.0) || matches!(c.schedule, Schedule::Constant { value } if value == 0.0))
    }

    pub fn state(&self, t: f64) -> DVector<f64> {
        let mut u = DVector::zeros(self.dim());
        for c in &self.components {
            u.axpy(c.schedule.value(t), &c.direction, 1.0);
        }
        u
    }

    pub fn time_derivative(&self, t: f64) -> DVector<f64> {
        let mut u = DVector::zeros(self.dim());
        for c in &self.components {
            u.axpy(c.schedule.derivative(t), &c.direction, 1.0);
        }
        u
    }

    /// Exact forcing `h = u_t + L u + B(u)`.
    pub fn forcing(&self, t: f64) -> DVector<f64> {
        let mut h = self.time_derivative(t) + self.state(t).component_mul(&self.alpha);
        for (r, a) in self.components.iter().enumerate() {
            for (s, b) in self.components.iter().enumerate() {
                let w = a.schedule.value(t) * b.schedule.value(t);
                h.axpy(w, &self.cross[r][s], 1.0);
            }
        }
        h
    }

    /// Dense matrix of the linearized advection about `u_hat(t)`.
    pub fn linearization(&self, t: f64) -> DMatrix<f64> {
        let k = self.dim();
        let mut m = DMatrix::zeros(k, k);
        for (c, l) in self.components.iter().zip(&self.lin) {
            m += l * c.schedule.value(t);
        }
        m
    }

    /// Measured `sup_tau (max |u_hat| on the grid over [tau, tau+1] + ||u_hat_t||_{L2(tau, tau+1; H)})`.
    pub fn w_norm(&self, space: &SpectralSpace, dt: f64) -> f64 {
        let grids: Vec<_> = self.components.iter().map(|c| space.synthesize(&c.direction)).collect();
        let npts = space.grid().len();
        let steps = (self.horizon / dt).round() as usize;
        let mut sup_u = Vec::with_capacity(steps + 1);
        let mut ut2 = Vec::with_capacity(steps + 1);
        for n in 0..=steps {
            let t = n as f64 * dt;
            let amps: Vec<f64> = self.components.iter().map(|c| c.schedule.value(t)).collect();
            let mut m: f64 = 0.0;
            for a in 0..npts {
                let mut v = [0.0; 2];
                for (g, amp) in grids.iter().zip(&amps) {
                    v[0] += amp * g[0][a];
                    v[1] += amp * g[1][a];
                }
                m = m.max(v[0].hypot(v[1]));
            }
            sup_u.push(m);
            ut2.push(self.time_derivative(t).norm_squared());
        }
        let per_unit = (1.0 / dt).round() as usize;
        let mut best: f64 = 0.0;
        let mut start = 0;
        while start + per_unit <= steps || start == 0 {
            let end = (start + per_unit).min(steps);
            let linf = sup_u[start..=end].iter().cloned().fold(0.0, f64::max);
            let mut l2 = 0.0;
            for n in start..end {
                l2 += 0.5 * dt * (ut2[n] + ut2[n + 1]);
            }
            best = best.max(linf + l2.sqrt());
            start += per_unit;
            if end == steps {
                break;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taylor_green_matches_physical_field() {
        let s = SpectralSpace::new(12, 8, 0.1).unwrap();
        let d = taylor_green_direction(&s).unwrap();
        let u = s.synthesize(&d);
        for (idx, (ux, uy)) in u[0].iter().zip(&u[1]).enumerate() {
            let (x, y) = s.grid().point(idx);
            assert!((ux - x.sin() * y.cos()).abs() < 1e-13);
            assert!((uy + x.cos() * y.sin()).abs() < 1e-13);
        }
        assert!(taylor_green_direction(&SpectralSpace::new(6, 8, 0.1).unwrap()).is_err());
    }

    #[test]
    fn steady_taylor_green_forcing_is_stokes_term() {
        let s = SpectralSpace::new(12, 8, 0.1).unwrap();
        let r = ReferenceTrajectory::taylor_green(&s, Schedule::Constant { value: 1.3 }, 4.0).unwrap();
        let h = r.forcing(0.7);
        let expect = r.state(0.7).component_mul(s.alpha());
        assert!((h - &expect).norm() < 1e-13);
        for j in 0..12 {
            if expect[j] != 0.0 {
                assert!((s.alpha()[j] - 0.2).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_reference_is_inert() {
        let s = SpectralSpace::new(12, 8, 0.1).unwrap();
        let r = ReferenceTrajectory::taylor_green(&s, Schedule::Constant { value: 0.0 }, 2.0).unwrap();
        assert!(r.is_zero());
        assert_eq!(r.forcing(0.3).norm(), 0.0);
        assert_eq!(r.linearization(0.3).norm(), 0.0);
    }

    #[test]
    fn schedules_validate_and_differentiate() {
        assert!(Schedule::Exponential { initial: 1.0, rate: 0.5 }.validate().is_err());
        assert!(Schedule::Constant { value: f64::NAN }.validate().is_err());
        let c = Schedule::Cosine {
            mean: 1.0,
            amplitude: 0.3,
            omega: 2.0 * PI,
            phase: 0.2,
        };
        assert!(c.unit_periodic());
        let h = 1e-6;
        let fd = (c.value(0.4 + h) - c.value(0.4 - h)) / (2.0 * h);
        assert!((fd - c.derivative(0.4)).abs() < 1e-8);
    }

    #[test]
    fn w_norm_of_steady_flow_is_its_peak_speed() {
        let s = SpectralSpace::new(12, 8, 0.1).unwrap();
        let r = ReferenceTrajectory::taylor_green(&s, Schedule::Constant { value: 2.0 }, 3.0).unwrap();
        // |TG| peaks at 1 on the grid points (x, y) = (pi/2, 0).
        assert!((r.w_norm(&s, 0.125) - 2.0).abs() < 1e-12);
    }
}
