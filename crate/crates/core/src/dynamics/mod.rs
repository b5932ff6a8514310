//! Nonlinear and linearized propagation around a reference flow.

mod bilinear;
mod propagator;
mod reference;
mod regularity;
mod stepper;

pub use bilinear::{adjoint_apply, bilinear_b, linearization_matrix, linearized_apply, quadratic_b};
pub use propagator::{propagate_adjoint, propagate_linear, unit_steps, AdjointTrajectory, Propagator};
pub use reference::{taylor_green_direction, ReferenceComponent, ReferenceTrajectory, Schedule};
pub use regularity::{random_runs, regularity_diagnostics, run_ratios, RegularityRatios, RegularityRun};
pub use stepper::SemiImplicit;

use nalgebra::DVector;

use crate::spectral::SpectralSpace;

/// Uniformly sampled solution `states[n]` at `t0 + n dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn time(&self, n: usize) -> f64 {
        self.t0 + n as f64 * self.dt
    }

    pub fn last(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory has at least one sample")
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Appends `other`, whose first sample must coincide with our last.
    pub fn append(&mut self, other: &Trajectory) {
        self.states.extend(other.states.iter().skip(1).cloned());
    }
}

/// Simulates `u_t + L u + B(u) = h(t)` from `u0` with `steps` steps of `dt`.
pub fn simulate_forced_navier_stokes(
    space: &SpectralSpace,
    forcing: &dyn Fn(f64) -> DVector<f64>,
    u0: &DVector<f64>,
    dt: f64,
    steps: usize,
) -> Trajectory {
    let stepper = SemiImplicit::new(space, dt);
    let k = space.dim();
    let mut states = vec![u0.clone()];
    for n in 0..steps {
        let t = n as f64 * dt;
        let u = &states[n];
        let r_now = forcing(t) - quadratic_b(space, u);
        let h_next = forcing(t + dt);
        let zero = |_: &DVector<f64>| DVector::zeros(k);
        let mut g = |w: &DVector<f64>| &h_next - quadratic_b(space, w);
        let next = stepper.step(u, &r_now, &zero, &mut g, true);
        states.push(next);
    }
    Trajectory { t0: 0.0, dt, states }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manufactured_reference_is_reproduced_at_second_order() {
        let s = SpectralSpace::new(20, 16, 0.1).unwrap();
        let tg = taylor_green_direction(&s).unwrap();
        // add a second component so that the nonlinear term is active
        let mut other = DVector::zeros(20);
        other[0] = 0.8;
        other[3] = -0.5;
        let r = ReferenceTrajectory::new(
            &s,
            vec![
                ReferenceComponent {
                    direction: tg,
                    schedule: Schedule::Cosine {
                        mean: 1.0,
                        amplitude: 0.4,
                        omega: 2.0 * std::f64::consts::PI,
                        phase: 0.3,
                    },
                },
                ReferenceComponent {
                    direction: other,
                    schedule: Schedule::Exponential { initial: 1.0, rate: -0.5 },
                },
            ],
            2.0,
        )
        .unwrap();
        let mut errs = Vec::new();
        for steps in [32usize, 64] {
            let dt = 1.0 / steps as f64;
            let f = |t: f64| r.forcing(t);
            let traj = simulate_forced_navier_stokes(&s, &f, &r.state(0.0), dt, steps);
            let err = traj
                .states
                .iter()
                .enumerate()
                .map(|(n, u)| (u - r.state(n as f64 * dt)).norm())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 1.8 && order < 2.3, "errors {errs:?}");
    }
}
