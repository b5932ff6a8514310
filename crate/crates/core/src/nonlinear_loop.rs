//! The nonlinear perturbation `v_t + L v + B(v) + B(u) v = K(t) v` under the
//! synthesized feedback, the map `Xi` whose fixed points are its solutions,
//! and the sweeps measuring where decay holds.

use std::thread;

use nalgebra::DVector;
use rand::Rng;
use serde::Serialize;

use crate::dynamics::{quadratic_b, SemiImplicit, Trajectory};
use crate::error::{Error, Result};
use crate::feedback::FeedbackLaw;
use crate::linalg::loglog_slope;
use crate::spectral::SpectralSpace;

/// Largest `|v|_V / max(1, |v0|_V)` before a run counts as blown up.
pub const BLOWUP_FACTOR: f64 = 1e6;

/// Picard depth cap.
pub const MAX_PICARD: usize = 50;

/// `|z|_{Z^lambda} = sup_t (e^{lambda t}|z(t)|_V^2 + int_t^{t+1} e^{lambda s}|z|_{D(L)}^2 ds)^{1/2}`
/// on the sample grid; windows running past the last sample are truncated.
pub fn z_lambda_norm(space: &SpectralSpace, traj: &Trajectory, lambda: f64) -> f64 {
    let n = traj.len();
    if n == 0 {
        return 0.0;
    }
    let a = space.alpha();
    let mut v2 = Vec::with_capacity(n);
    let mut d2 = Vec::with_capacity(n);
    for (i, z) in traj.states.iter().enumerate() {
        let w = (lambda * traj.time(i)).exp();
        let (mut v, mut d) = (0.0, 0.0);
        for (x, al) in z.iter().zip(a.iter()) {
            v += al * x * x;
            d += al * al * x * x;
        }
        v2.push(w * v);
        d2.push(w * d);
    }
    // prefix[i] = trapezoid integral of d2 over [t_0, t_i]
    let mut prefix = vec![0.0; n];
    for i in 1..n {
        prefix[i] = prefix[i - 1] + 0.5 * traj.dt * (d2[i - 1] + d2[i]);
    }
    let window = (1.0 / traj.dt).round() as usize;
    let mut best: f64 = 0.0;
    for i in 0..n {
        let j = (i + window).min(n - 1);
        best = best.max(v2[i] + prefix[j] - prefix[i]);
    }
    best.sqrt()
}

/// Difference of two trajectories on the same grid.
pub fn difference(a: &Trajectory, b: &Trajectory) -> Trajectory {
    Trajectory {
        t0: a.t0,
        dt: a.dt,
        states: a.states.iter().zip(&b.states).map(|(x, y)| x - y).collect(),
    }
}

#[derive(Clone, Debug)]
pub struct NonlinearRun {
    pub trajectory: Trajectory,
    /// time of the first sample beyond the blow-up threshold
    pub blowup: Option<f64>,
}

impl NonlinearRun {
    /// `sup_t e^{lambda t}|v(t)|_V^2 / |v0|_V^2` over the computed samples.
    pub fn theta(&self, space: &SpectralSpace, lambda: f64) -> f64 {
        let v0 = space.norm_v(&self.trajectory.states[0]).powi(2);
        if v0 == 0.0 {
            return 0.0;
        }
        self.trajectory
            .states
            .iter()
            .enumerate()
            .map(|(i, v)| (lambda * self.trajectory.time(i)).exp() * space.norm_v(v).powi(2) / v0)
            .fold(0.0, f64::max)
    }
}

/// Semi-implicit integration around a synthesized law, on the law's sample grid from `t = 0`.
pub struct ClosedLoop<'a> {
    space: &'a SpectralSpace,
    law: &'a FeedbackLaw,
    stepper: SemiImplicit,
}

impl<'a> ClosedLoop<'a> {
    pub fn new(space: &'a SpectralSpace, law: &'a FeedbackLaw) -> Result<Self> {
        if space.dim() != law.dim() {
            return Err(Error::invalid("law", "dimension differs from the space"));
        }
        Ok(ClosedLoop {
            space,
            law,
            stepper: SemiImplicit::new(space, law.dt()),
        })
    }

    pub fn space(&self) -> &SpectralSpace {
        self.space
    }

    pub fn law(&self) -> &FeedbackLaw {
        self.law
    }

    pub fn dt(&self) -> f64 {
        self.law.dt()
    }

    pub fn steps(&self, duration: f64) -> Result<usize> {
        let n = (duration / self.dt()).round();
        if !(n >= 0.0) || (n * self.dt() - duration).abs() > 1e-9 * duration.max(1.0) {
            return Err(Error::invalid("duration", "must be a nonnegative multiple of dt"));
        }
        Ok(n as usize)
    }

    /// `E(t_n) w = -B(u(t_n)) w + K(t_n) w`.
    fn linear(&self, n: usize, w: &DVector<f64>) -> DVector<f64> {
        let t = n as f64 * self.dt();
        self.law.gain_at_node(n, w) - self.law.reference().linearization(t) * w
    }

    fn trajectory(&self, states: Vec<DVector<f64>>) -> Trajectory {
        Trajectory {
            t0: 0.0,
            dt: self.dt(),
            states,
        }
    }

    /// Nonlinear closed loop from `v0`; stops early at blow-up.
    pub fn simulate(&self, v0: &DVector<f64>, duration: f64) -> Result<NonlinearRun> {
        let steps = self.steps(duration)?;
        let limit = BLOWUP_FACTOR * self.space.norm_v(v0).max(1.0);
        let mut states = vec![v0.clone()];
        let mut blowup = None;
        for n in 0..steps {
            let v = &states[n];
            let r_now = self.linear(n, v) - quadratic_b(self.space, v);
            let lin_next = |w: &DVector<f64>| self.linear(n + 1, w);
            let mut g = |w: &DVector<f64>| -quadratic_b(self.space, w);
            let next = self.stepper.step(v, &r_now, &lin_next, &mut g, true);
            let size = self.space.norm_v(&next);
            let bad = !(size.is_finite() && size <= limit);
            if bad {
                blowup = Some((n + 1) as f64 * self.dt());
                break;
            }
            states.push(next);
        }
        Ok(NonlinearRun {
            trajectory: self.trajectory(states),
            blowup,
        })
    }

    /// Linear closed loop `z_t + L z + B(u) z = K z + f` with `f` given per sample
    /// (`None` for zero forcing).
    pub fn forced_linear(&self, z0: &DVector<f64>, forcing: Option<&[DVector<f64>]>, duration: f64) -> Result<Trajectory> {
        let steps = self.steps(duration)?;
        if let Some(f) = forcing {
            if f.len() < steps + 1 {
                return Err(Error::invalid("forcing", "needs one sample per time node"));
            }
        }
        let k = self.space.dim();
        let zero = DVector::zeros(k);
        let f_at = |n: usize| forcing.map_or(&zero, |f| &f[n]);
        let mut states = vec![z0.clone()];
        for n in 0..steps {
            let z = &states[n];
            let r_now = self.linear(n, z) + f_at(n);
            let lin_next = |w: &DVector<f64>| self.linear(n + 1, w);
            let f_next = f_at(n + 1).clone();
            let mut g = |_: &DVector<f64>| f_next.clone();
            let next = self.stepper.step(z, &r_now, &lin_next, &mut g, false);
            states.push(next);
        }
        Ok(self.trajectory(states))
    }

    /// `Xi(a)`: the linear closed loop from `v0` forced by `-B(a(t))`.
    pub fn xi(&self, v0: &DVector<f64>, a: &Trajectory) -> Result<Trajectory> {
        let duration = (a.len() - 1) as f64 * a.dt;
        let f: Vec<DVector<f64>> = a.states.iter().map(|s| -quadratic_b(self.space, s)).collect();
        self.forced_linear(v0, Some(&f), duration)
    }
}

/// `sup_t e^{lambda t}|U(t,0)|^2_{V -> V}` of the linear closed loop, from its
/// transition columns.
pub fn v_decay_constant(lp: &ClosedLoop, duration: f64) -> Result<f64> {
    let k = lp.space.dim();
    let a = lp.space.alpha();
    let lambda = lp.law.lambda();
    let steps = lp.steps(duration)?;
    let mut cols: Vec<Trajectory> = Vec::with_capacity(k);
    for j in 0..k {
        let mut e = DVector::zeros(k);
        e[j] = 1.0 / a[j].sqrt();
        cols.push(lp.forced_linear(&e, None, duration)?);
    }
    let mut best: f64 = 1.0;
    for n in 1..=steps {
        let m = nalgebra::DMatrix::from_fn(k, k, |i, j| a[i].sqrt() * cols[j].states[n][i]);
        let norm = crate::linalg::op_norm(&m);
        best = best.max((lambda * n as f64 * lp.dt()).exp() * norm * norm);
    }
    Ok(best)
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayCheck {
    pub amplitude: f64,
    pub gated: bool,
    pub theta: f64,
    pub theta_bound: f64,
    pub holds: bool,
    pub blowup: Option<f64>,
}

/// Runs from `v0` and compares `sup e^{lambda t}|v|_V^2/|v0|_V^2` with `theta_bound`.
pub fn simulate_closed_loop(
    lp: &ClosedLoop,
    v0: &DVector<f64>,
    duration: f64,
    epsilon_star: f64,
    theta_bound: f64,
) -> Result<(NonlinearRun, DecayCheck)> {
    let run = lp.simulate(v0, duration)?;
    let amplitude = lp.space.norm_v(v0);
    let theta = run.theta(lp.space, lp.law.lambda());
    let check = DecayCheck {
        amplitude,
        gated: amplitude <= epsilon_star * (1.0 + 1e-12),
        theta,
        theta_bound,
        holds: run.blowup.is_none() && theta <= theta_bound,
        blowup: run.blowup,
    };
    Ok((run, check))
}

#[derive(Clone, Debug, Serialize)]
pub struct PicardReport {
    pub iterations: usize,
    pub converged: bool,
    /// `|a_{k+1} - a_k| / |a_k - a_{k-1}|` in `Z^lambda`
    pub ratios: Vec<f64>,
    pub gamma_hat: f64,
}

/// Picard iteration `a_{k+1} = Xi(a_k)` from `start`.
pub fn picard(lp: &ClosedLoop, v0: &DVector<f64>, start: Trajectory) -> Result<(Trajectory, PicardReport)> {
    let lambda = lp.law.lambda();
    let mut a = start;
    let mut prev_step: Option<f64> = None;
    let mut ratios = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_PICARD {
        let next = lp.xi(v0, &a)?;
        iterations += 1;
        let step = z_lambda_norm(lp.space, &difference(&next, &a), lambda);
        let size = z_lambda_norm(lp.space, &next, lambda);
        a = next;
        if !step.is_finite() {
            break;
        }
        if let Some(p) = prev_step {
            if p > 1e-12 * size {
                ratios.push(step / p);
            }
        }
        if step <= 1e-14 * size || size == 0.0 {
            converged = true;
            break;
        }
        prev_step = Some(step);
    }
    let gamma_hat = ratios.iter().cloned().fold(0.0, f64::max);
    Ok((
        a,
        PicardReport {
            iterations,
            converged,
            ratios,
            gamma_hat,
        },
    ))
}

#[derive(Clone, Debug, Serialize)]
pub struct ContractionReport {
    pub amplitude: f64,
    pub picard: PicardReport,
    /// `|fixed point - direct simulation|_Z / |direct simulation|_Z`
    pub fixed_point_gap: f64,
    /// same comparison between the fixed points reached from zero and from the linear solution
    pub two_start_gap: f64,
    pub pair_ratios: Vec<f64>,
    pub max_pair_ratio: f64,
}

fn relative(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Picard contraction at `v0`, plus Lipschitz ratios of `Xi` over `pairs`
/// random perturbations of the fixed point with relative size `spread`.
pub fn contraction_probe<R: Rng>(
    lp: &ClosedLoop,
    v0: &DVector<f64>,
    duration: f64,
    pairs: usize,
    spread: f64,
    rng: &mut R,
) -> Result<ContractionReport> {
    let lambda = lp.law.lambda();
    let k = lp.space.dim();
    let linear = lp.forced_linear(v0, None, duration)?;
    let (fixed, report) = picard(lp, v0, linear.clone())?;
    if !report.converged || report.gamma_hat >= 1.0 {
        return Err(Error::GateTooLarge {
            amplitude: lp.space.norm_v(v0),
            gamma: report.gamma_hat.max(if report.converged { 0.0 } else { f64::INFINITY }),
        });
    }
    let zero_start = Trajectory {
        t0: 0.0,
        dt: lp.dt(),
        states: vec![DVector::zeros(k); linear.len()],
    };
    let (fixed_zero, _) = picard(lp, v0, zero_start)?;
    let direct = lp.simulate(v0, duration)?;
    let scale = z_lambda_norm(lp.space, &direct.trajectory, lambda);
    let fixed_point_gap = if direct.trajectory.len() == fixed.len() {
        relative(z_lambda_norm(lp.space, &difference(&fixed, &direct.trajectory), lambda), scale)
    } else {
        f64::INFINITY
    };
    let two_start_gap = relative(z_lambda_norm(lp.space, &difference(&fixed, &fixed_zero), lambda), scale);

    let mut pair_ratios = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let mut perturbed = || -> Result<Trajectory> {
            let dir = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
            let dir = &dir * (spread * lp.space.norm_v(v0) / lp.space.norm_v(&dir).max(f64::MIN_POSITIVE));
            let bump = lp.forced_linear(&dir, None, duration)?;
            Ok(Trajectory {
                t0: 0.0,
                dt: lp.dt(),
                states: fixed.states.iter().zip(&bump.states).map(|(x, y)| x + y).collect(),
            })
        };
        let a1 = perturbed()?;
        let a2 = perturbed()?;
        let num = z_lambda_norm(lp.space, &difference(&lp.xi(v0, &a1)?, &lp.xi(v0, &a2)?), lambda);
        let den = z_lambda_norm(lp.space, &difference(&a1, &a2), lambda);
        pair_ratios.push(relative(num, den));
    }
    let max_pair_ratio = pair_ratios.iter().cloned().fold(0.0, f64::max);
    Ok(ContractionReport {
        amplitude: lp.space.norm_v(v0),
        picard: report,
        fixed_point_gap,
        two_start_gap,
        pair_ratios,
        max_pair_ratio,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DuhamelReport {
    /// `max_n |direct(n) - sum of single-pulse responses(n)|`, relative to `max |direct|`
    pub superposition_gap: f64,
}

/// Splits the forcing into single-sample pulses and compares the summed
/// responses with the direct forced run from rest.
pub fn duhamel_check(lp: &ClosedLoop, forcing: &[DVector<f64>]) -> Result<DuhamelReport> {
    if forcing.is_empty() {
        return Err(Error::invalid("forcing", "needs at least one sample"));
    }
    let k = lp.space.dim();
    let duration = (forcing.len() - 1) as f64 * lp.dt();
    let direct = lp.forced_linear(&DVector::zeros(k), Some(forcing), duration)?;
    let mut sum = vec![DVector::zeros(k); forcing.len()];
    for (j, f) in forcing.iter().enumerate() {
        if f.norm() == 0.0 {
            continue;
        }
        let mut pulse = vec![DVector::zeros(k); forcing.len()];
        pulse[j] = f.clone();
        let resp = lp.forced_linear(&DVector::zeros(k), Some(&pulse), duration)?;
        for (acc, r) in sum.iter_mut().zip(&resp.states) {
            *acc += r;
        }
    }
    let scale = direct.states.iter().map(|s| s.norm()).fold(0.0, f64::max);
    let gap = direct.states.iter().zip(&sum).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    Ok(DuhamelReport {
        superposition_gap: relative(gap, scale),
    })
}

/// `sup_t int_t^{t+1} e^{lambda s}|f(s)|_H^2 ds` on the sample grid.
pub fn sliding_forcing_norm(forcing: &[DVector<f64>], dt: f64, lambda: f64) -> f64 {
    let n = forcing.len();
    if n == 0 {
        return 0.0;
    }
    let w: Vec<f64> = forcing
        .iter()
        .enumerate()
        .map(|(i, f)| (lambda * i as f64 * dt).exp() * f.norm_squared())
        .collect();
    let mut prefix = vec![0.0; n];
    for i in 1..n {
        prefix[i] = prefix[i - 1] + 0.5 * dt * (w[i - 1] + w[i]);
    }
    let window = (1.0 / dt).round() as usize;
    (0..n).map(|i| prefix[(i + window).min(n - 1)] - prefix[i]).fold(0.0, f64::max)
}

/// Measured `C_1 = max |z|_Z^2 / sup_t int_t^{t+1} e^{lambda s}|f|^2` for the
/// forced closed loop from rest.
pub fn duhamel_constant(lp: &ClosedLoop, batch: &[Vec<DVector<f64>>]) -> Result<f64> {
    let lambda = lp.law.lambda();
    let k = lp.space.dim();
    let mut best: f64 = 0.0;
    for f in batch {
        let duration = (f.len() - 1) as f64 * lp.dt();
        let z = lp.forced_linear(&DVector::zeros(k), Some(f), duration)?;
        let den = sliding_forcing_norm(f, lp.dt(), lambda);
        if den > 0.0 {
            best = best.max(z_lambda_norm(lp.space, &z, lambda).powi(2) / den);
        }
    }
    Ok(best)
}

/// Random forcing with unit sliding-window weighted norm.
pub fn random_forcing<R: Rng>(k: usize, samples: usize, dt: f64, lambda: f64, rng: &mut R) -> Vec<DVector<f64>> {
    let f: Vec<DVector<f64>> = (0..samples)
        .map(|i| {
            let decay = (-0.5 * lambda * i as f64 * dt).exp();
            DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0)) * decay
        })
        .collect();
    let scale = sliding_forcing_norm(&f, dt, lambda).sqrt();
    f.into_iter().map(|x| x / scale).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct ConsistencyReport {
    pub amplitudes: Vec<f64>,
    /// `sup_{t <= 1} |nonlinear - linear|_H`
    pub gaps: Vec<f64>,
    pub slope: f64,
}

/// Gap between nonlinear and linear closed loops on `[0, 1]` from `s * dir`.
pub fn quadratic_consistency(lp: &ClosedLoop, dir: &DVector<f64>, scales: &[f64]) -> Result<ConsistencyReport> {
    let mut amplitudes = Vec::new();
    let mut gaps = Vec::new();
    for &s in scales {
        let v0 = dir * s;
        let nl = lp.simulate(&v0, 1.0)?;
        let lin = lp.forced_linear(&v0, None, 1.0)?;
        if nl.blowup.is_some() {
            return Err(Error::invalid("scales", "nonlinear run blew up; use smaller scales"));
        }
        let gap = nl
            .trajectory
            .states
            .iter()
            .zip(&lin.states)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        amplitudes.push(lp.space.norm_v(&v0));
        gaps.push(gap);
    }
    let slope = loglog_slope(&amplitudes, &gaps);
    Ok(ConsistencyReport { amplitudes, gaps, slope })
}

/// Picard ratio against amplitude along `dir`, with its log-log slope.
pub fn gamma_scaling(lp: &ClosedLoop, dir: &DVector<f64>, scales: &[f64], duration: f64) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let mut amps = Vec::new();
    let mut gammas = Vec::new();
    for &s in scales {
        let v0 = dir * s;
        let lin = lp.forced_linear(&v0, None, duration)?;
        let (_, rep) = picard(lp, &v0, lin)?;
        amps.push(lp.space.norm_v(&v0));
        gammas.push(rep.gamma_hat);
    }
    let slope = loglog_slope(&amps, &gammas);
    Ok((amps, gammas, slope))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Decay,
    NoDecay,
    BlowUp,
}

#[derive(Clone, Debug, Serialize)]
pub struct BasinReport {
    /// `|v0|_V` per row
    pub scales: Vec<f64>,
    pub directions: usize,
    /// `outcomes[i][j]` for scale `i` and direction `j`
    pub outcomes: Vec<Vec<Outcome>>,
    /// largest scale below which every run decays
    pub epsilon_hat: f64,
    pub theta_bound: f64,
}

/// Random direction with `|d|_V = 1`.
pub fn random_direction<R: Rng>(space: &SpectralSpace, rng: &mut R) -> DVector<f64> {
    let d = DVector::from_fn(space.dim(), |_, _| rng.random_range(-1.0..1.0));
    let n = space.norm_v(&d);
    d / n
}

/// Runs every `(scale, direction)` pair; directions run on separate threads.
pub fn basin_sweep(lp: &ClosedLoop, scales: &[f64], directions: &[DVector<f64>], duration: f64, theta_bound: f64) -> Result<BasinReport> {
    if scales.windows(2).any(|w| !(w[0] < w[1])) || scales.iter().any(|&s| !(s >= 0.0)) {
        return Err(Error::invalid("scales", "must be nonnegative and increasing"));
    }
    let columns: Vec<Result<Vec<Outcome>>> = thread::scope(|sc| {
        let handles: Vec<_> = directions
            .iter()
            .map(|d| {
                sc.spawn(move || -> Result<Vec<Outcome>> {
                    let mut col = Vec::with_capacity(scales.len());
                    for &s in scales {
                        let (run, check) = simulate_closed_loop(lp, &(d * s), duration, f64::INFINITY, theta_bound)?;
                        col.push(if run.blowup.is_some() {
                            Outcome::BlowUp
                        } else if check.holds {
                            Outcome::Decay
                        } else {
                            Outcome::NoDecay
                        });
                    }
                    Ok(col)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let columns = columns.into_iter().collect::<Result<Vec<_>>>()?;
    let outcomes: Vec<Vec<Outcome>> = (0..scales.len()).map(|i| columns.iter().map(|c| c[i]).collect()).collect();
    let mut epsilon_hat = 0.0;
    for (i, row) in outcomes.iter().enumerate() {
        if row.iter().all(|&o| o == Outcome::Decay) {
            epsilon_hat = scales[i];
        } else {
            break;
        }
    }
    Ok(BasinReport {
        scales: scales.to_vec(),
        directions: directions.len(),
        outcomes,
        epsilon_hat,
        theta_bound,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GateCalibration {
    pub epsilon_hat: f64,
    /// largest swept scale at which Picard contracts along every direction
    pub contraction_limit: f64,
    /// `gamma_hat` per scale (max over directions), up to the first failure
    pub gammas: Vec<(f64, f64)>,
    /// `min(epsilon_hat, contraction_limit) / 2`
    pub epsilon_star: f64,
}

/// Smallness gate from a basin sweep and a Picard scan over the same scales
/// and directions. Scales above `epsilon_hat` are not probed.
pub fn calibrate_gate(lp: &ClosedLoop, basin: &BasinReport, directions: &[DVector<f64>], duration: f64) -> Result<GateCalibration> {
    let scales: Vec<f64> = basin
        .scales
        .iter()
        .copied()
        .filter(|&s| s > 0.0 && s <= basin.epsilon_hat)
        .collect();
    let columns: Vec<Result<Vec<f64>>> = thread::scope(|sc| {
        let handles: Vec<_> = directions
            .iter()
            .map(|d| {
                let scales = &scales;
                sc.spawn(move || -> Result<Vec<f64>> {
                    let mut col = Vec::new();
                    for &s in scales {
                        let v0 = d * s;
                        let start = lp.forced_linear(&v0, None, duration)?;
                        let (_, rep) = picard(lp, &v0, start)?;
                        if !rep.converged || rep.gamma_hat >= 1.0 {
                            break;
                        }
                        col.push(rep.gamma_hat);
                    }
                    Ok(col)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("calibration worker panicked"))
            .collect()
    });
    let columns = columns.into_iter().collect::<Result<Vec<_>>>()?;
    let passed = columns.iter().map(|c| c.len()).min().unwrap_or(0);
    let gammas: Vec<(f64, f64)> = (0..passed)
        .map(|i| (scales[i], columns.iter().map(|c| c[i]).fold(0.0, f64::max)))
        .collect();
    let contraction_limit = gammas.last().map_or(0.0, |g| g.0);
    Ok(GateCalibration {
        epsilon_hat: basin.epsilon_hat,
        contraction_limit,
        gammas,
        epsilon_star: 0.5 * basin.epsilon_hat.min(contraction_limit),
    })
}

/// Measured `C_6 = max |B(a)|_H / (|a|_V |a|_{D(L)})` over random `a`.
pub fn measure_c6<R: Rng>(space: &SpectralSpace, count: usize, rng: &mut R) -> f64 {
    let mut best: f64 = 0.0;
    for _ in 0..count {
        let a = DVector::from_fn(space.dim(), |_, _| rng.random_range(-1.0..1.0));
        let n = space.norms(&a);
        best = best.max(quadratic_b(space, &a).norm() / (n.v * n.dl));
    }
    best
}
