//! Unit-interval controls that annihilate the first `N` Stokes modes at the
//! end of the interval, with the regularized (penalized) variant and its
//! adjoint characterization.
//!
//! Controls are piecewise constant per time step. The decision vector is
//! `xi_n = sqrt(dt) eta_n`, so that `|xi|^2` is the discrete `L2` cost.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use crate::dynamics::{AdjointTrajectory, Propagator, ReferenceTrajectory, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::{loglog_slope, sym_pinv, sym_rank, symmetrize};
use crate::spectral::{Actuator, SpectralSpace};

/// Piecewise-constant control on `[tau, tau + 1]`; `coeffs[n]` acts on step `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlSignal {
    pub tau: f64,
    pub dt: f64,
    pub coeffs: Vec<DVector<f64>>,
}

impl ControlSignal {
    pub fn zero(tau: f64, dt: f64, steps: usize, m: usize) -> Self {
        ControlSignal {
            tau,
            dt,
            coeffs: vec![DVector::zeros(m); steps],
        }
    }

    /// Discrete `|eta|^2_{L2}` with the propagator quadrature.
    pub fn norm_squared(&self) -> f64 {
        self.coeffs.iter().map(|c| self.dt * c.norm_squared()).sum()
    }

    /// `sum dt exp(rate t_{n+1/2}) |eta_n|^2`.
    pub fn weighted_norm_squared(&self, rate: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(n, c)| {
                let t = self.tau + (n as f64 + 0.5) * self.dt;
                self.dt * (rate * t).exp() * c.norm_squared()
            })
            .sum()
    }

    /// Stokes forcing `Pi(chi P_M eta_n)` per step.
    pub fn inputs(&self, actuator: &Actuator) -> Vec<DVector<f64>> {
        self.coeffs.iter().map(|c| actuator.apply(c)).collect()
    }

    fn from_decision(tau: f64, dt: f64, m: usize, xi: &DVector<f64>) -> Self {
        let s = 1.0 / dt.sqrt();
        let steps = xi.len() / m.max(1);
        let coeffs = (0..steps).map(|n| xi.rows(n * m, m).into_owned() * s).collect();
        ControlSignal { tau, dt, coeffs }
    }

    /// Stacked decision vector `xi`.
    pub fn decision(&self) -> DVector<f64> {
        let s = self.dt.sqrt();
        let m = self.coeffs.first().map_or(0, |c| c.len());
        DVector::from_iterator(
            m * self.coeffs.len(),
            self.coeffs.iter().flat_map(|c| c.iter().map(|v| v * s).collect::<Vec<_>>()),
        )
    }
}

/// Matrix form of the controlled interval map `v(tau+1) = Phi w0 + L xi`.
#[derive(Clone, Debug)]
pub struct ReachabilityBundle {
    pub n: usize,
    pub free_map: DMatrix<f64>,
    pub input_map: DMatrix<f64>,
    pub gramian: DMatrix<f64>,
    propagator: Propagator,
    actuator: Actuator,
}

impl ReachabilityBundle {
    pub fn from_propagator(propagator: Propagator, actuator: Actuator, n: usize) -> Result<Self> {
        let k = propagator.dim();
        if n > k {
            return Err(Error::invalid("N", format!("{n} exceeds K = {k}")));
        }
        let m = actuator.m();
        let steps = propagator.steps();
        let sq = propagator.dt().sqrt();
        let mut input_map = DMatrix::zeros(k, m * steps);
        let a = actuator.matrix();
        let y0 = propagator.adjoint_sweep(&DMatrix::identity(k, k), |step, mid| {
            let block = mid.tr_mul(a) * sq;
            input_map.view_mut((0, step * m), (k, m)).copy_from(&block);
        });
        let ln = input_map.rows(0, n);
        let gramian = symmetrize(&(ln * ln.transpose()));
        Ok(ReachabilityBundle {
            n,
            free_map: y0.transpose(),
            input_map,
            gramian,
            propagator,
            actuator,
        })
    }

    pub fn build(space: &SpectralSpace, reference: &ReferenceTrajectory, actuator: &Actuator, tau: f64, dt: f64, n: usize) -> Result<Self> {
        let p = Propagator::build(space, reference, tau, dt)?;
        Self::from_propagator(p, actuator.clone(), n)
    }

    pub fn propagator(&self) -> &Propagator {
        &self.propagator
    }

    pub fn actuator(&self) -> &Actuator {
        &self.actuator
    }

    pub fn m(&self) -> usize {
        self.actuator.m()
    }

    pub fn tau(&self) -> f64 {
        self.propagator.tau()
    }

    pub fn dt(&self) -> f64 {
        self.propagator.dt()
    }

    /// Numerical rank of the projected Gramian.
    pub fn gramian_rank(&self, rtol: f64) -> usize {
        sym_rank(&self.gramian, rtol)
    }

    /// Rows of the input map that feed `F_N`.
    fn projected_input(&self) -> DMatrix<f64> {
        self.input_map.rows(0, self.n).into_owned()
    }

    fn projected_free(&self, w0: &DVector<f64>) -> DVector<f64> {
        (&self.free_map * w0).rows(0, self.n).into_owned()
    }

    /// Forward simulation of `(w0, eta)` through the step matrices.
    pub fn simulate(&self, w0: &DVector<f64>, control: &ControlSignal) -> Trajectory {
        let inputs = control.inputs(&self.actuator);
        self.propagator.forward(w0, Some(&inputs))
    }

    /// Matrix endpoint `Phi w0 + L xi`.
    pub fn endpoint(&self, w0: &DVector<f64>, control: &ControlSignal) -> DVector<f64> {
        &self.free_map * w0 + &self.input_map * control.decision()
    }
}

/// Minimal-norm control with `Pi_N v(tau+1) = 0`.
pub fn min_norm_control(bundle: &ReachabilityBundle, w0: &DVector<f64>, rtol: f64, null_tol: f64) -> Result<ControlSignal> {
    let y = -bundle.projected_free(w0);
    let g_pinv = sym_pinv(&bundle.gramian, rtol);
    let lambda = &g_pinv * &y;
    let residual = (&bundle.gramian * &lambda - &y).norm();
    let scale = w0.norm();
    if residual > null_tol * scale {
        return Err(Error::Unreachable {
            m: bundle.m(),
            n: bundle.n,
            residual: residual / scale,
        });
    }
    let xi = bundle.projected_input().tr_mul(&lambda);
    Ok(ControlSignal::from_decision(bundle.tau(), bundle.dt(), bundle.m(), &xi))
}

/// Regularized control with its endpoint and adjoint state.
#[derive(Clone, Debug)]
pub struct RegularizedSolution {
    pub epsilon: f64,
    pub control: ControlSignal,
    pub v_end: DVector<f64>,
    pub adjoint: AdjointTrajectory,
}

/// Minimizes `|eta|^2 + |Pi_N v(tau+1)|^2 / eps`.
pub fn regularized_control(bundle: &ReachabilityBundle, w0: &DVector<f64>, epsilon: f64) -> Result<RegularizedSolution> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::invalid("epsilon", "must be positive"));
    }
    let n = bundle.n;
    let shifted = &bundle.gramian + DMatrix::identity(n, n) * epsilon;
    let s = Cholesky::new(symmetrize(&shifted))
        .ok_or_else(|| Error::invalid("epsilon", "shifted Gramian is not positive definite"))?
        .solve(&bundle.projected_free(w0));
    let xi = -bundle.projected_input().tr_mul(&s);
    let control = ControlSignal::from_decision(bundle.tau(), bundle.dt(), bundle.m(), &xi);
    let v_end = bundle.simulate(w0, &control).last().clone();
    let k = v_end.len();
    let mut q1 = DVector::zeros(k);
    for i in 0..n {
        q1[i] = -2.0 / epsilon * v_end[i];
    }
    let adjoint = bundle.propagator.adjoint(&q1);
    Ok(RegularizedSolution {
        epsilon,
        control,
        v_end,
        adjoint,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct KktReport {
    pub epsilon: f64,
    /// max_n |eta_n - P_M(chi q_{n+1/2}) / 2| relative to max_n |eta_n|
    pub representation_error: f64,
    /// `int |P_M(chi q)|^2 + eps |q(tau+1)|^2`
    pub identity_lhs: f64,
    /// `-2 (q(tau), w0)`
    pub identity_rhs: f64,
    pub identity_error: f64,
}

pub fn kkt_identity_check(bundle: &ReachabilityBundle, w0: &DVector<f64>, epsilon: f64) -> Result<KktReport> {
    let sol = regularized_control(bundle, w0, epsilon)?;
    let dt = bundle.dt();
    let mut worst: f64 = 0.0;
    let mut top: f64 = 0.0;
    let mut lhs = 0.0;
    for (eta, mid) in sol.control.coeffs.iter().zip(&sol.adjoint.mids) {
        let out = bundle.actuator.apply_chi_pm(mid);
        worst = worst.max((eta - &out * 0.5).norm());
        top = top.max(eta.norm());
        lhs += dt * out.norm_squared();
    }
    lhs += epsilon * sol.adjoint.nodes.last().map_or(0.0, |q| q.norm_squared());
    let rhs = -2.0 * sol.adjoint.nodes[0].dot(w0);
    let scale = lhs.abs().max(rhs.abs());
    Ok(KktReport {
        epsilon,
        representation_error: if top > 0.0 { worst / top } else { worst },
        identity_lhs: lhs,
        identity_rhs: rhs,
        identity_error: if scale > 0.0 { (lhs - rhs).abs() / scale } else { 0.0 },
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct EpsilonRow {
    pub epsilon: f64,
    /// |xi_eps - xi_*| / |xi_*|
    pub control_gap: f64,
    /// |Pi_N v_eps(tau+1)| / |w0|
    pub violation: f64,
    pub cost: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EpsilonStudy {
    pub rows: Vec<EpsilonRow>,
    pub min_norm_cost: f64,
    /// log-log slope of the violation against epsilon
    pub violation_slope: f64,
    pub monotone: bool,
}

pub fn epsilon_limit_study(
    bundle: &ReachabilityBundle,
    w0: &DVector<f64>,
    epsilons: &[f64],
    rtol: f64,
    null_tol: f64,
) -> Result<EpsilonStudy> {
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("epsilon grid", "must be strictly decreasing"));
    }
    let star = min_norm_control(bundle, w0, rtol, null_tol)?;
    let xs = star.decision();
    let w = w0.norm();
    let mut rows = Vec::new();
    for &eps in epsilons {
        let sol = regularized_control(bundle, w0, eps)?;
        let x = sol.control.decision();
        let gap = (&x - &xs).norm();
        rows.push(EpsilonRow {
            epsilon: eps,
            control_gap: if xs.norm() > 0.0 { gap / xs.norm() } else { gap },
            violation: if w > 0.0 { sol.v_end.rows(0, bundle.n).norm() / w } else { 0.0 },
            cost: sol.control.norm_squared(),
        });
    }
    let monotone = rows
        .windows(2)
        .all(|p| p[1].violation <= p[0].violation && p[1].control_gap <= p[0].control_gap * (1.0 + 1e-9) + 1e-14);
    let positive: Vec<&EpsilonRow> = rows.iter().filter(|r| r.violation > 0.0).collect();
    let violation_slope = if positive.len() >= 2 {
        let x: Vec<f64> = positive.iter().map(|r| r.epsilon).collect();
        let y: Vec<f64> = positive.iter().map(|r| r.violation).collect();
        loglog_slope(&x, &y)
    } else {
        0.0
    };
    Ok(EpsilonStudy {
        rows,
        min_norm_cost: star.norm_squared(),
        violation_slope,
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Schedule;
    use crate::spectral::{ChiMask, ChiShape};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn setup(n: usize, m: usize) -> (SpectralSpace, ReachabilityBundle) {
        let s = SpectralSpace::new(16, 16, 0.1).unwrap();
        let r = ReferenceTrajectory::taylor_green(&s, Schedule::Constant { value: 1.0 }, 4.0).unwrap();
        let chi = ChiMask::new(
            &s,
            ChiShape::Bump {
                center: [PI, PI],
                radius: 2.0,
            },
            0.1,
        )
        .unwrap();
        let a = Actuator::build(&s, &chi, m).unwrap();
        let b = ReachabilityBundle::build(&s, &r, &a, 0.0, 1.0 / 32.0, n).unwrap();
        (s, b)
    }

    #[test]
    fn input_map_matches_forward_simulation() {
        let (_, b) = setup(4, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w0 = DVector::from_fn(16, |_, _| rng.random_range(-1.0..1.0));
        let ctrl = ControlSignal {
            tau: 0.0,
            dt: b.dt(),
            coeffs: (0..32).map(|_| DVector::from_fn(8, |_, _| rng.random_range(-1.0..1.0))).collect(),
        };
        let sim = b.simulate(&w0, &ctrl);
        assert!((sim.last() - b.endpoint(&w0, &ctrl)).norm() < 1e-12 * sim.last().norm());
    }

    #[test]
    fn min_norm_control_nulls_projection_and_is_linear() {
        let (_, b) = setup(4, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let wa = DVector::from_fn(16, |_, _| rng.random_range(-1.0..1.0));
        let wb = DVector::from_fn(16, |_, _| rng.random_range(-1.0..1.0));
        let ca = min_norm_control(&b, &wa, 1e-10, 1e-8).unwrap();
        let cb = min_norm_control(&b, &wb, 1e-10, 1e-8).unwrap();
        let end = b.simulate(&wa, &ca);
        assert!(end.last().rows(0, 4).norm() <= 1e-8 * wa.norm());
        let cc = min_norm_control(&b, &(&wa * 2.0 - &wb * 0.5), 1e-10, 1e-8).unwrap();
        let combo = ca.decision() * 2.0 - cb.decision() * 0.5;
        assert!((cc.decision() - &combo).norm() <= 1e-9 * combo.norm());
        let zero = min_norm_control(&b, &DVector::zeros(16), 1e-10, 1e-8).unwrap();
        assert_eq!(zero.norm_squared(), 0.0);
    }

    #[test]
    fn zero_mask_is_unreachable() {
        let s = SpectralSpace::new(16, 16, 0.1).unwrap();
        let r = ReferenceTrajectory::zero(&s, 2.0).unwrap();
        let a = Actuator::build(&s, &ChiMask::constant(&s, 0.0).unwrap(), 8).unwrap();
        let b = ReachabilityBundle::build(&s, &r, &a, 0.0, 1.0 / 16.0, 2).unwrap();
        assert_eq!(b.input_map.norm(), 0.0);
        assert_eq!(b.gramian.norm(), 0.0);
        let w0 = DVector::from_element(16, 1.0);
        assert!(matches!(min_norm_control(&b, &w0, 1e-10, 1e-8), Err(Error::Unreachable { .. })));
    }

    #[test]
    fn scalar_gramian_entry_matches_hand_computation() {
        // u_hat = 0, chi = 1, one step of size 1: the input map of mode j is
        // dt * (1 + dt a / 2)^{-1} * gain with gain = 1.
        let s = SpectralSpace::new(16, 16, 0.3).unwrap();
        let r = ReferenceTrajectory::zero(&s, 2.0).unwrap();
        let a = Actuator::build(&s, &ChiMask::constant(&s, 1.0).unwrap(), 2).unwrap();
        let b = ReachabilityBundle::build(&s, &r, &a, 0.0, 1.0, 1).unwrap();
        let alpha = s.alpha()[0];
        let entry = 1.0 / (1.0 + 0.5 * alpha);
        assert!((b.gramian[(0, 0)] - entry * entry).abs() < 1e-14);
    }

    #[test]
    fn kkt_identities_hold_to_roundoff() {
        let (_, b) = setup(4, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w0 = DVector::from_fn(16, |_, _| rng.random_range(-1.0..1.0));
        for eps in [1e-2, 1e-4] {
            let rep = kkt_identity_check(&b, &w0, eps).unwrap();
            assert!(rep.representation_error < 1e-9, "{rep:?}");
            assert!(rep.identity_error < 1e-8, "{rep:?}");
            let rep2 = kkt_identity_check(&b, &(&w0 * 2.0), eps).unwrap();
            assert!((rep2.identity_lhs / rep.identity_lhs - 4.0).abs() < 1e-9);
        }
        let z = kkt_identity_check(&b, &DVector::zeros(16), 1e-3).unwrap();
        assert_eq!((z.identity_lhs, z.identity_rhs), (0.0, 0.0));
    }

    #[test]
    fn large_penalty_weight_recovers_free_flow() {
        let (_, b) = setup(4, 8);
        let w0 = DVector::from_element(16, 0.3);
        let sol = regularized_control(&b, &w0, 1e12).unwrap();
        assert!(sol.control.norm_squared() < 1e-18);
        assert!((sol.v_end - &b.free_map * &w0).norm() < 1e-10);
    }
}
