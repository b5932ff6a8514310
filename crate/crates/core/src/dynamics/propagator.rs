//! Crank-Nicolson propagators for the linearized flow on a unit interval.
//!
//! Step `n` uses `A_n = L + BB(u_hat(t_n + dt/2))`:
//! `(I + dt/2 A_n) v_{n+1} = (I - dt/2 A_n) v_n + dt b_n`,
//! written as `v_{n+1} = M_n (2 v_n + dt b_n) - v_n` with `M_n = (I + dt/2 A_n)^{-1}`.
//! The adjoint sweep applies `M_n^T` in the same split form, so it is the
//! exact transpose of the forward map.

use nalgebra::{DMatrix, DVector};

use super::reference::ReferenceTrajectory;
use super::Trajectory;
use crate::error::{Error, Result};
use crate::spectral::SpectralSpace;

#[derive(Clone, Debug)]
pub struct Propagator {
    tau: f64,
    dt: f64,
    inv: Vec<DMatrix<f64>>,
}

/// Backward states `q_n` at the nodes and `q_{n+1/2} = M_n^T q_{n+1}` per step.
#[derive(Clone, Debug)]
pub struct AdjointTrajectory {
    pub tau: f64,
    pub dt: f64,
    pub nodes: Vec<DVector<f64>>,
    pub mids: Vec<DVector<f64>>,
}

/// Number of steps of size `dt` in a unit interval; `dt` must divide 1.
pub fn unit_steps(dt: f64) -> Result<usize> {
    if !(dt.is_finite() && dt > 0.0 && dt <= 1.0) {
        return Err(Error::invalid("time.dt", format!("must lie in (0, 1], got {dt}")));
    }
    let steps = (1.0 / dt).round() as usize;
    if ((steps as f64) * dt - 1.0).abs() > 1e-12 {
        return Err(Error::invalid("time.dt", "1/dt must be an integer"));
    }
    Ok(steps)
}

impl Propagator {
    /// Builds the step matrices on `[tau, tau + 1]`.
    pub fn build(space: &SpectralSpace, reference: &ReferenceTrajectory, tau: f64, dt: f64) -> Result<Self> {
        let steps = unit_steps(dt)?;
        let k = space.dim();
        let l = space.stokes_matrix();
        let mut inv = Vec::with_capacity(steps);
        for n in 0..steps {
            let t_mid = tau + (n as f64 + 0.5) * dt;
            let a = &l + reference.linearization(t_mid);
            let m = DMatrix::identity(k, k) + a * (0.5 * dt);
            let mi = m.lu().try_inverse().ok_or(Error::SingularStep { step: n })?;
            if !mi.iter().all(|v| v.is_finite()) {
                return Err(Error::SingularStep { step: n });
            }
            inv.push(mi);
        }
        Ok(Propagator { tau, dt, inv })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.inv.len()
    }

    pub fn dim(&self) -> usize {
        self.inv.first().map_or(0, |m| m.nrows())
    }

    /// `(I + dt/2 A_n)^{-1}`.
    pub fn half_step_inverse(&self, n: usize) -> &DMatrix<f64> {
        &self.inv[n]
    }

    /// Per-step transition `S_n = 2 M_n - I`.
    pub fn step_matrix(&self, n: usize) -> DMatrix<f64> {
        let k = self.dim();
        &self.inv[n] * 2.0 - DMatrix::identity(k, k)
    }

    /// One forward step with optional piecewise-constant input `b` (Stokes coefficients).
    pub fn step(&self, n: usize, v: &DVector<f64>, b: Option<&DVector<f64>>) -> DVector<f64> {
        let mut rhs = v * 2.0;
        if let Some(b) = b {
            rhs.axpy(self.dt, b, 1.0);
        }
        &self.inv[n] * rhs - v
    }

    /// Forward solution from `w0` at `tau`; `inputs[n]` acts on step `n`.
    pub fn forward(&self, w0: &DVector<f64>, inputs: Option<&[DVector<f64>]>) -> Trajectory {
        let mut states = Vec::with_capacity(self.steps() + 1);
        states.push(w0.clone());
        for n in 0..self.steps() {
            let b = inputs.map(|i| &i[n]);
            let next = self.step(n, &states[n], b);
            states.push(next);
        }
        Trajectory {
            t0: self.tau,
            dt: self.dt,
            states,
        }
    }

    /// Adjoint solution from the terminal datum `q1` at `tau + 1`.
    pub fn adjoint(&self, q1: &DVector<f64>) -> AdjointTrajectory {
        let steps = self.steps();
        let mut nodes = vec![DVector::zeros(q1.len()); steps + 1];
        let mut mids = vec![DVector::zeros(q1.len()); steps];
        nodes[steps] = q1.clone();
        for n in (0..steps).rev() {
            let mid = self.inv[n].tr_mul(&nodes[n + 1]);
            nodes[n] = &mid * 2.0 - &nodes[n + 1];
            mids[n] = mid;
        }
        AdjointTrajectory {
            tau: self.tau,
            dt: self.dt,
            nodes,
            mids,
        }
    }

    /// Matrix-valued adjoint sweep from terminal columns `terminal`. Calls
    /// `visit(n, mid)` with `M_n^T Y_{n+1}` for every step and returns `Y_0`.
    pub fn adjoint_sweep<F>(&self, terminal: &DMatrix<f64>, mut visit: F) -> DMatrix<f64>
    where
        F: FnMut(usize, &DMatrix<f64>),
    {
        let mut y = terminal.clone();
        for n in (0..self.steps()).rev() {
            let mid = self.inv[n].tr_mul(&y);
            visit(n, &mid);
            y = &mid * 2.0 - y;
        }
        y
    }

    /// The full-interval transition matrix `Phi`.
    pub fn transition(&self) -> DMatrix<f64> {
        let k = self.dim();
        self.adjoint_sweep(&DMatrix::identity(k, k), |_, _| {}).transpose()
    }
}

/// Forward linear solution on `[tau, tau+1]` together with the reusable propagator.
pub fn propagate_linear(
    space: &SpectralSpace,
    reference: &ReferenceTrajectory,
    tau: f64,
    dt: f64,
    w0: &DVector<f64>,
    inputs: Option<&[DVector<f64>]>,
) -> Result<(Trajectory, Propagator)> {
    let p = Propagator::build(space, reference, tau, dt)?;
    if let Some(i) = inputs {
        if i.len() != p.steps() {
            return Err(Error::invalid("eta", "input length differs from the step count"));
        }
    }
    Ok((p.forward(w0, inputs), p))
}

/// Backward adjoint solution on `[tau, tau+1]` with terminal datum `q1`.
pub fn propagate_adjoint(
    space: &SpectralSpace,
    reference: &ReferenceTrajectory,
    tau: f64,
    dt: f64,
    q1: &DVector<f64>,
) -> Result<AdjointTrajectory> {
    Ok(Propagator::build(space, reference, tau, dt)?.adjoint(q1))
}
