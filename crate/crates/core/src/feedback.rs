//! Exponentially weighted LQ feedback. Everything is solved for the shifted
//! state `z = e^{lambda t / 2} v`, where the cost becomes
//! `int |z|_V^2 + |zeta|^2` and the system matrix is `-(L + B(u(t))) + lambda/2`.
//! `P(t)` below is the shifted cost operator, `Q(t) = e^{lambda t} P(t)`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dynamics::{ReferenceTrajectory, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::{op_norm, sym_min_eig, symmetrize};
use crate::spectral::{Actuator, ChiMask, SpectralSpace};

#[derive(Clone, Debug)]
pub struct RiccatiOptions {
    /// truncation horizon `T_h`; `P(T_h) = 0`
    pub horizon: f64,
    /// spacing of the stored samples
    pub dt: f64,
    /// blow-up cap on `|P|`
    pub cap: f64,
}

#[derive(Clone, Debug)]
pub struct FeedbackLaw {
    lambda: f64,
    horizon: f64,
    dt: f64,
    substeps: usize,
    samples: Vec<DMatrix<f64>>,
    actuator: DMatrix<f64>,
    alpha: DVector<f64>,
    reference: ReferenceTrajectory,
}

struct Riccati<'a> {
    lambda: f64,
    alpha: &'a DVector<f64>,
    actuator: &'a DMatrix<f64>,
    reference: &'a ReferenceTrajectory,
}

impl Riccati<'_> {
    fn system(&self, t: f64) -> DMatrix<f64> {
        let mut f = -self.reference.linearization(t);
        for i in 0..self.alpha.len() {
            f[(i, i)] += 0.5 * self.lambda - self.alpha[i];
        }
        f
    }

    /// Pieces `(F^T P + P F, P B B^T P)` of the right-hand side.
    fn terms(&self, t: f64, p: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let pf = p * self.system(t);
        let pb = p * self.actuator;
        (&pf + pf.transpose(), &pb * pb.transpose())
    }

    /// `-dP/dt = F^T P + P F - P B B^T P + diag(alpha)`.
    fn backward_rate(&self, t: f64, p: &DMatrix<f64>) -> DMatrix<f64> {
        let (lin, quad) = self.terms(t, p);
        let mut r = lin - quad;
        for i in 0..self.alpha.len() {
            r[(i, i)] += self.alpha[i];
        }
        r
    }

    /// Substeps per sample keeping RK4 well inside its stability region.
    fn substeps(&self, dt: f64, horizon: f64) -> usize {
        let mut lin: f64 = 0.0;
        let nodes = (horizon.ceil() as usize).max(1) * 8;
        for i in 0..=nodes {
            let t = horizon * i as f64 / nodes as f64;
            lin = lin.max(self.reference.linearization(t).norm());
        }
        let a_max = self.alpha.iter().cloned().fold(0.0, f64::max);
        let rho = 2.0 * (a_max + 0.5 * self.lambda.abs() + lin);
        ((rho * dt).ceil() as usize).max(1)
    }

    fn sweep(&self, opts: &RiccatiOptions, m: usize, store: bool) -> Result<(usize, Vec<DMatrix<f64>>)> {
        let steps = sample_count(opts)?;
        let k = self.alpha.len();
        let substeps = self.substeps(opts.dt, opts.horizon);
        let h = opts.dt / substeps as f64;
        let mut p = DMatrix::zeros(k, k);
        let mut out = Vec::new();
        if store {
            out.reserve(steps + 1);
            out.push(p.clone());
        }
        for i in (0..steps).rev() {
            let t_node = (i + 1) as f64 * opts.dt;
            for j in 0..substeps {
                let t = t_node - j as f64 * h;
                let k1 = self.backward_rate(t, &p);
                let k2 = self.backward_rate(t - 0.5 * h, &(&p + &k1 * (0.5 * h)));
                let k3 = self.backward_rate(t - 0.5 * h, &(&p + &k2 * (0.5 * h)));
                let k4 = self.backward_rate(t - h, &(&p + &k3 * h));
                p += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
                p = symmetrize(&p);
            }
            let size = p.norm();
            if !(size.is_finite() && size <= opts.cap) {
                return Err(Error::NotStabilizable {
                    t: i as f64 * opts.dt,
                    m,
                    cap: opts.cap,
                });
            }
            if store {
                out.push(p.clone());
            }
        }
        out.reverse();
        if !store {
            out.push(p);
        }
        Ok((substeps, out))
    }
}

fn sample_count(opts: &RiccatiOptions) -> Result<usize> {
    if !(opts.dt.is_finite() && opts.dt > 0.0) {
        return Err(Error::invalid("time.dt", "must be positive"));
    }
    if !(opts.horizon.is_finite() && opts.horizon > 0.0) {
        return Err(Error::invalid("time.T_h", "must be positive"));
    }
    let steps = (opts.horizon / opts.dt).round();
    if (steps * opts.dt - opts.horizon).abs() > 1e-9 * opts.horizon {
        return Err(Error::invalid("time.T_h", "must be a multiple of dt"));
    }
    if !(opts.cap > 0.0) {
        return Err(Error::invalid("tolerances.riccati_cap", "must be positive"));
    }
    Ok(steps as usize)
}

/// Solves the backward Riccati equation on `[0, T_h]` and stores `P` at every sample.
pub fn synthesize(
    space: &SpectralSpace,
    reference: &ReferenceTrajectory,
    chi: &ChiMask,
    m: usize,
    lambda: f64,
    opts: &RiccatiOptions,
) -> Result<FeedbackLaw> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::invalid("control.lambda", "must be nonnegative"));
    }
    let actuator = Actuator::build(space, chi, m)?.matrix().clone();
    let alpha = space.alpha().clone();
    let ric = Riccati {
        lambda,
        alpha: &alpha,
        actuator: &actuator,
        reference,
    };
    let (substeps, samples) = ric.sweep(opts, m, true)?;
    Ok(FeedbackLaw {
        lambda,
        horizon: opts.horizon,
        dt: opts.dt,
        substeps,
        samples,
        actuator,
        alpha,
        reference: reference.clone(),
    })
}

/// Relative change of `P(0)` when the horizon is doubled.
pub fn horizon_gate(law: &FeedbackLaw, cap: f64) -> Result<f64> {
    let ric = law.riccati();
    let opts = RiccatiOptions {
        horizon: 2.0 * law.horizon,
        dt: law.dt,
        cap,
    };
    let (_, p) = ric.sweep(&opts, law.m(), false)?;
    let base = &law.samples[0];
    Ok((&p[0] - base).norm() / base.norm().max(f64::MIN_POSITIVE))
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualRow {
    pub t: f64,
    pub relative: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    pub rows: Vec<ResidualRow>,
    pub max_relative: f64,
}

/// Serializable subsample of a law.
#[derive(Clone, Debug, Serialize)]
pub struct LawDump {
    pub lambda: f64,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "T_h")]
    pub horizon: f64,
    pub times: Vec<f64>,
    /// row-major `P(t)` at each listed time
    pub samples: Vec<Vec<f64>>,
}

impl FeedbackLaw {
    fn riccati(&self) -> Riccati<'_> {
        Riccati {
            lambda: self.lambda,
            alpha: &self.alpha,
            actuator: &self.actuator,
            reference: &self.reference,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn m(&self) -> usize {
        self.actuator.ncols()
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn samples(&self) -> &[DMatrix<f64>] {
        &self.samples
    }

    pub fn actuator(&self) -> &DMatrix<f64> {
        &self.actuator
    }

    pub fn reference(&self) -> &ReferenceTrajectory {
        &self.reference
    }

    pub fn sample_time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    /// Index of the sample at `t`, if `t` lies on the sample grid.
    pub fn node(&self, t: f64) -> Option<usize> {
        let i = (t / self.dt).round();
        if i >= 0.0 && (i * self.dt - t).abs() <= 1e-9 * self.dt.max(t.abs()) && (i as usize) < self.samples.len() {
            Some(i as usize)
        } else {
            None
        }
    }

    fn slope(&self, i: usize) -> DMatrix<f64> {
        -self.riccati().backward_rate(self.sample_time(i), &self.samples[i])
    }

    /// Shifted operator `P(t)`, cubic Hermite between samples and frozen beyond `T_h`.
    pub fn p_at(&self, t: f64) -> DMatrix<f64> {
        self.p_cached(t, &mut None)
    }

    fn p_cached(&self, t: f64, cache: &mut Option<(usize, DMatrix<f64>, DMatrix<f64>)>) -> DMatrix<f64> {
        let last = self.samples.len() - 1;
        if t >= self.horizon {
            return self.samples[last].clone();
        }
        let t = t.max(0.0);
        let x = t / self.dt;
        let i = (x.floor() as usize).min(last - 1);
        let theta = x - i as f64;
        if theta.abs() < 1e-12 {
            return self.samples[i].clone();
        }
        if (1.0 - theta).abs() < 1e-12 {
            return self.samples[i + 1].clone();
        }
        match cache.take() {
            Some(c) if c.0 == i => *cache = Some(c),
            Some((j, _, d)) if j + 1 == i => *cache = Some((i, d, self.slope(i + 1))),
            _ => *cache = Some((i, self.slope(i), self.slope(i + 1))),
        }
        let (_, d0, d1) = cache.as_ref().expect("filled above");
        let t2 = theta * theta;
        let t3 = t2 * theta;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + theta;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        &self.samples[i] * h00 + d0 * (h10 * self.dt) + &self.samples[i + 1] * h01 + d1 * (h11 * self.dt)
    }

    /// `P` at sample `i`, frozen past the last sample.
    pub fn p_node(&self, i: usize) -> &DMatrix<f64> {
        &self.samples[i.min(self.samples.len() - 1)]
    }

    /// `K(t_i) v` at sample `i`, frozen past the last sample.
    pub fn gain_at_node(&self, i: usize, v: &DVector<f64>) -> DVector<f64> {
        -(&self.actuator * self.actuator.tr_mul(&(self.p_node(i) * v)))
    }

    /// Unshifted `Q(t) = e^{lambda t} P(t)`.
    pub fn q_at(&self, t: f64) -> DMatrix<f64> {
        self.p_at(t) * (self.lambda * t).exp()
    }

    /// `eta = -P_M(chi P(t) v)`.
    pub fn control(&self, t: f64, v: &DVector<f64>) -> DVector<f64> {
        -self.actuator.tr_mul(&(self.p_at(t) * v))
    }

    /// `K(t) v = -Pi chi P_M chi P(t) v`.
    pub fn gain_apply(&self, t: f64, v: &DVector<f64>) -> DVector<f64> {
        &self.actuator * self.control(t, v)
    }

    pub fn gain_matrix(&self, t: f64) -> DMatrix<f64> {
        -(&self.actuator * self.actuator.transpose()) * self.p_at(t)
    }

    /// Smallest eigenvalue over all samples.
    pub fn min_eig(&self) -> f64 {
        self.samples.iter().map(sym_min_eig).fold(f64::INFINITY, f64::min)
    }

    /// `sup_t |P(t)|`, the constant `C` in `|Q(t)| <= C e^{lambda t}`.
    pub fn sup_norm(&self) -> f64 {
        self.samples.iter().map(op_norm).fold(0.0, f64::max)
    }

    /// `sup_t` of the gain operator norm over samples in `[0, until]`.
    pub fn gain_bound(&self, until: f64) -> f64 {
        let kernel = &self.actuator * self.actuator.transpose();
        self.samples
            .iter()
            .enumerate()
            .filter(|(i, _)| self.sample_time(*i) <= until + 1e-12)
            .map(|(_, p)| op_norm(&(&kernel * p)))
            .fold(0.0, f64::max)
    }

    /// Largest `|P(t_{i+1}) - P(t_i)|` between adjacent samples.
    pub fn max_jump(&self) -> f64 {
        self.samples.windows(2).map(|w| (&w[1] - &w[0]).norm()).fold(0.0, f64::max)
    }

    /// Residual of the Riccati equation with a fourth-order central difference
    /// for `dP/dt`, relative to the size of its terms.
    pub fn riccati_residual(&self, times: &[f64]) -> Result<ResidualReport> {
        let ric = self.riccati();
        let mut rows = Vec::new();
        for &t in times {
            let i = self
                .node(t)
                .filter(|&i| i >= 2 && i + 2 < self.samples.len())
                .ok_or_else(|| Error::invalid("times", "residual needs interior sample times"))?;
            let s = &self.samples;
            let dp = (&s[i - 2] - &s[i + 2] + (&s[i + 1] - &s[i - 1]) * 8.0) / (12.0 * self.dt);
            let (lin, quad) = ric.terms(t, &s[i]);
            let w = self.alpha.norm();
            let mut r = &dp + &lin - &quad;
            for j in 0..self.alpha.len() {
                r[(j, j)] += self.alpha[j];
            }
            let scale = lin.norm() + quad.norm() + w;
            rows.push(ResidualRow {
                t,
                relative: r.norm() / scale,
            });
        }
        let max_relative = rows.iter().map(|r| r.relative).fold(0.0, f64::max);
        Ok(ResidualReport { rows, max_relative })
    }

    /// Residual of the stationary equation at `P(0)`, relative to its terms.
    pub fn stationary_residual(&self) -> f64 {
        let ric = self.riccati();
        let p = &self.samples[0];
        let r = ric.backward_rate(0.0, p);
        let (lin, quad) = ric.terms(0.0, p);
        r.norm() / (lin.norm() + quad.norm() + self.alpha.norm())
    }

    /// `P` at every `stride`-th sample.
    pub fn dump(&self, stride: usize) -> LawDump {
        let stride = stride.max(1);
        let mut times = Vec::new();
        let mut samples = Vec::new();
        for (i, p) in self.samples.iter().enumerate().step_by(stride) {
            times.push(self.sample_time(i));
            samples.push(p.transpose().as_slice().to_vec());
        }
        LawDump {
            lambda: self.lambda,
            m: self.m(),
            horizon: self.horizon,
            times,
            samples,
        }
    }
}

/// A linear closed-loop run from time `s`.
#[derive(Clone, Debug)]
pub struct ClosedLoopRun {
    pub s: f64,
    pub trajectory: Trajectory,
    /// `int_s^t e^{lambda (t' - s)} (|v|_V^2 + |eta|^2)` at every sample
    pub cost: Vec<f64>,
}

impl ClosedLoopRun {
    /// `sup_t e^{lambda (t - s)} |v(t)|^2 / |v0|^2`.
    pub fn measured_kappa(&self, lambda: f64) -> f64 {
        let h0 = self.trajectory.states[0].norm_squared();
        if h0 == 0.0 {
            return 0.0;
        }
        self.trajectory
            .states
            .iter()
            .enumerate()
            .map(|(i, v)| (lambda * (self.trajectory.time(i) - self.s)).exp() * v.norm_squared() / h0)
            .fold(0.0, f64::max)
    }

    pub fn total_cost(&self) -> f64 {
        *self.cost.last().expect("cost has a sample")
    }
}

/// Open-loop correction added on top of the feedback control.
pub type ControlPerturbation<'a> = &'a dyn Fn(f64) -> DVector<f64>;

struct Integrator<'a> {
    law: &'a FeedbackLaw,
    s: f64,
    delta: Option<ControlPerturbation<'a>>,
    cache: Option<(usize, DMatrix<f64>, DMatrix<f64>)>,
}

impl Integrator<'_> {
    /// `(dv/dt, running cost density)` for the unshifted state.
    fn rate(&mut self, t: f64, v: &DVector<f64>) -> (DVector<f64>, f64) {
        let law = self.law;
        let p = law.p_cached(t, &mut self.cache);
        let mut eta = -law.actuator.tr_mul(&(p * v));
        if let Some(d) = self.delta {
            eta += d(t);
        }
        let mut dv = -(law.reference.linearization(t) * v) + &law.actuator * &eta;
        for i in 0..v.len() {
            dv[i] -= law.alpha[i] * v[i];
        }
        let vv: f64 = v.iter().zip(law.alpha.iter()).map(|(x, a)| a * x * x).sum();
        let density = (law.lambda * (t - self.s)).exp() * (vv + eta.norm_squared());
        (dv, density)
    }
}

fn integrate(law: &FeedbackLaw, s: f64, v0: &DVector<f64>, duration: f64, delta: Option<ControlPerturbation>) -> Result<ClosedLoopRun> {
    if v0.len() != law.dim() {
        return Err(Error::invalid("v0", "length differs from K"));
    }
    let start = law.node(s).ok_or_else(|| Error::invalid("s", "must be a sample time of the law"))?;
    let steps = (duration / law.dt).round();
    if !(steps >= 0.0) || (steps * law.dt - duration).abs() > 1e-9 * duration.max(1.0) {
        return Err(Error::invalid("duration", "must be a nonnegative multiple of dt"));
    }
    let mut it = Integrator {
        law,
        s,
        delta,
        cache: None,
    };
    let h = law.dt / law.substeps as f64;
    let mut v = v0.clone();
    let mut c = 0.0;
    let mut states = vec![v.clone()];
    let mut cost = vec![0.0];
    for n in 0..steps as usize {
        let t_node = (start + n) as f64 * law.dt;
        for j in 0..law.substeps {
            let t = t_node + j as f64 * h;
            let (k1, c1) = it.rate(t, &v);
            let (k2, c2) = it.rate(t + 0.5 * h, &(&v + &k1 * (0.5 * h)));
            let (k3, c3) = it.rate(t + 0.5 * h, &(&v + &k2 * (0.5 * h)));
            let (k4, c4) = it.rate(t + h, &(&v + &k3 * h));
            v += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
            c += (c1 + 2.0 * (c2 + c3) + c4) * (h / 6.0);
        }
        states.push(v.clone());
        cost.push(c);
    }
    Ok(ClosedLoopRun {
        s,
        trajectory: Trajectory { t0: s, dt: law.dt, states },
        cost,
    })
}

/// Integrates `v_t + L v + B(u) v = K(t) v` from `v(s) = v0` over `duration`.
pub fn closed_loop_linear(law: &FeedbackLaw, s: f64, v0: &DVector<f64>, duration: f64) -> Result<ClosedLoopRun> {
    integrate(law, s, v0, duration, None)
}

/// Same as [`closed_loop_linear`] with `delta(t)` added to the feedback control.
pub fn perturbed_run(law: &FeedbackLaw, s: f64, v0: &DVector<f64>, duration: f64, delta: ControlPerturbation) -> Result<ClosedLoopRun> {
    integrate(law, s, v0, duration, Some(delta))
}

/// `sup_t e^{lambda (t - s)} |U(t, s)|^2` from the closed-loop transition matrix.
pub fn decay_constant(law: &FeedbackLaw, s: f64, duration: f64) -> Result<f64> {
    let k = law.dim();
    let start = law.node(s).ok_or_else(|| Error::invalid("s", "must be a sample time of the law"))?;
    let steps = (duration / law.dt).round() as usize;
    let kernel = &law.actuator * law.actuator.transpose();
    let mut cache = None;
    let mut rate = |t: f64, u: &DMatrix<f64>| -> DMatrix<f64> {
        let p = law.p_cached(t, &mut cache);
        let mut a = -law.reference.linearization(t) - &kernel * p;
        for i in 0..k {
            a[(i, i)] -= law.alpha[i];
        }
        a * u
    };
    let h = law.dt / law.substeps as f64;
    let mut u = DMatrix::identity(k, k);
    let mut kappa: f64 = 1.0;
    for n in 0..steps {
        let t_node = (start + n) as f64 * law.dt;
        for j in 0..law.substeps {
            let t = t_node + j as f64 * h;
            let k1 = rate(t, &u);
            let k2 = rate(t + 0.5 * h, &(&u + &k1 * (0.5 * h)));
            let k3 = rate(t + 0.5 * h, &(&u + &k2 * (0.5 * h)));
            let k4 = rate(t + h, &(&u + &k3 * h));
            u += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        }
        let t = t_node + law.dt;
        kappa = kappa.max((law.lambda * (t - s)).exp() * op_norm(&u).powi(2));
    }
    Ok(kappa)
}

#[derive(Clone, Debug, Serialize)]
pub struct CostReport {
    pub s: f64,
    /// `e^{-lambda s} (Q(s) w0, w0)`
    pub predicted: f64,
    /// simulated `int_s^{T_h} e^{lambda (t - s)} (|v|_V^2 + |eta|^2)`
    pub simulated: f64,
    pub relative_gap: f64,
}

/// Compares the quadratic form of `P(s)` with the closed-loop cost on `[s, T_h]`.
pub fn optimal_cost_check(law: &FeedbackLaw, s: f64, w0: &DVector<f64>) -> Result<CostReport> {
    let run = closed_loop_linear(law, s, w0, law.horizon - s)?;
    let i = law.node(s).expect("checked by the run");
    let predicted = w0.dot(&(&law.samples[i] * w0));
    let simulated = run.total_cost();
    Ok(CostReport {
        s,
        predicted,
        simulated,
        relative_gap: relative_gap(predicted, simulated),
    })
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DpRow {
    pub s: f64,
    /// `int_0^s e^{lambda t} (|v|_V^2 + |eta|^2)`
    pub running: f64,
    /// `(Q(s) v(s), v(s))`
    pub cost_to_go: f64,
    pub relative_gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DpReport {
    pub total: f64,
    pub rows: Vec<DpRow>,
    pub max_relative_gap: f64,
}

/// Cost splitting along the optimal trajectory from `v(0) = v0`.
pub fn dp_check(law: &FeedbackLaw, v0: &DVector<f64>, splits: &[f64]) -> Result<DpReport> {
    let run = closed_loop_linear(law, 0.0, v0, law.horizon)?;
    let total = run.total_cost();
    let mut rows = Vec::new();
    for &s in splits {
        let i = law
            .node(s)
            .ok_or_else(|| Error::invalid("splits", "must be sample times of the law"))?;
        let v = &run.trajectory.states[i];
        let running = run.cost[i];
        let cost_to_go = (law.lambda * s).exp() * v.dot(&(&law.samples[i] * v));
        rows.push(DpRow {
            s,
            running,
            cost_to_go,
            relative_gap: relative_gap(total, running + cost_to_go),
        });
    }
    let max_relative_gap = rows.iter().map(|r| r.relative_gap).fold(0.0, f64::max);
    Ok(DpReport {
        total,
        rows,
        max_relative_gap,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LyapunovReport {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub violations: usize,
    /// largest `(Phi(t_{i+1}) - Phi(t_i)) / Phi(t_i)`
    pub max_relative_increase: f64,
}

/// Evaluates `Phi(t, v(t)) = int_t^{T_h} |U(t, tau) v(t)|^2 dtau` at `samples`
/// evenly spaced sample times of `run`, with the Gramian obtained from the
/// backward equation `-dG/dt = A^T G + G A + I`, `G(T_h) = 0`.
pub fn lyapunov_check(law: &FeedbackLaw, run: &ClosedLoopRun, samples: usize) -> Result<LyapunovReport> {
    let k = law.dim();
    let first = law
        .node(run.s)
        .ok_or_else(|| Error::invalid("s", "must be a sample time of the law"))?;
    let len = run.trajectory.len();
    if samples < 2 || len < 2 {
        return Err(Error::invalid("samples", "need at least two sample times"));
    }
    let last_node = law.samples.len() - 1;
    if first + len - 1 > last_node {
        return Err(Error::invalid("run", "extends past the synthesized horizon"));
    }
    let picks: Vec<usize> = (0..samples)
        .map(|j| ((len - 1) as f64 * j as f64 / (samples - 1) as f64).round() as usize)
        .collect();
    let kernel = &law.actuator * law.actuator.transpose();
    let mut cache = None;
    let mut rate = |t: f64, g: &DMatrix<f64>| -> DMatrix<f64> {
        let p = law.p_cached(t, &mut cache);
        let mut a = -law.reference.linearization(t) - &kernel * p;
        for i in 0..k {
            a[(i, i)] -= law.alpha[i];
        }
        let ga = g * a;
        let mut r = &ga + ga.transpose();
        for i in 0..k {
            r[(i, i)] += 1.0;
        }
        r
    };
    let h = law.dt / law.substeps as f64;
    let mut g = DMatrix::zeros(k, k);
    let mut values = vec![0.0; samples];
    let want = |node: usize| picks.iter().enumerate().filter(move |(_, &p)| first + p == node).map(|(j, _)| j);
    for j in want(last_node) {
        let v = &run.trajectory.states[picks[j]];
        values[j] = v.dot(&(&g * v));
    }
    for node in (first..last_node).rev() {
        let t_node = (node + 1) as f64 * law.dt;
        for j in 0..law.substeps {
            let t = t_node - j as f64 * h;
            let k1 = rate(t, &g);
            let k2 = rate(t - 0.5 * h, &(&g + &k1 * (0.5 * h)));
            let k3 = rate(t - 0.5 * h, &(&g + &k2 * (0.5 * h)));
            let k4 = rate(t - h, &(&g + &k3 * h));
            g += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
            g = symmetrize(&g);
        }
        for j in want(node) {
            let v = &run.trajectory.states[picks[j]];
            values[j] = v.dot(&(&g * v));
        }
    }
    let mut violations = 0;
    let mut max_relative_increase = f64::NEG_INFINITY;
    for w in values.windows(2) {
        let inc = if w[0] > 0.0 { (w[1] - w[0]) / w[0] } else { 0.0 };
        max_relative_increase = max_relative_increase.max(inc);
        if w[1] > w[0] + 1e-8 * w[0] {
            violations += 1;
        }
    }
    Ok(LyapunovReport {
        times: picks.iter().map(|&p| run.trajectory.time(p)).collect(),
        values,
        violations,
        max_relative_increase,
    })
}
