//! Exponential stabilization by concatenating unit-interval null controls:
//! on each `[n, n+1]` the minimal-norm control annihilates `Pi_N v(n+1)`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dynamics::{Propagator, ReferenceTrajectory, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::{op_norm, sym_pinv};
use crate::null_control::{min_norm_control, ControlSignal, ReachabilityBundle};
use crate::observability::{build_forms, select_m1, ObservabilityForms};
use crate::spectral::{Actuator, ChiMask, SpectralSpace};

/// Shared inputs of the interval constructions.
pub struct Setup<'a> {
    pub space: &'a SpectralSpace,
    pub reference: &'a ReferenceTrajectory,
    pub chi: &'a ChiMask,
    pub dt: f64,
    pub m_list: Vec<usize>,
    pub slack: f64,
    pub pinv_rtol: f64,
    pub null_tol: f64,
    /// upper bound on the searched `N` (clamped to `K`)
    pub n_cap: usize,
}

/// Propagators per unit interval, shared across intervals when the
/// reference repeats with period one.
pub struct IntervalCache<'a> {
    setup: &'a Setup<'a>,
    periodic: bool,
    props: HashMap<usize, Propagator>,
}

impl<'a> IntervalCache<'a> {
    pub fn new(setup: &'a Setup<'a>) -> Self {
        IntervalCache {
            setup,
            periodic: setup.reference.unit_periodic(),
            props: HashMap::new(),
        }
    }

    fn key(&self, tau: usize) -> usize {
        if self.periodic {
            0
        } else {
            tau
        }
    }

    pub fn propagator(&mut self, tau: usize) -> Result<&Propagator> {
        let key = self.key(tau);
        if !self.props.contains_key(&key) {
            let s = self.setup;
            let p = Propagator::build(s.space, s.reference, tau as f64, s.dt)?;
            self.props.insert(key, p);
        }
        Ok(&self.props[&key])
    }

    /// Intervals whose dynamics differ among `0..count`.
    pub fn distinct(&self, count: usize) -> Vec<usize> {
        if self.periodic {
            vec![0]
        } else {
            (0..count).collect()
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Choice {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M1")]
    pub m: usize,
    /// max over intervals of the operator norm of `w0 -> v(tau+1)`
    pub contraction: f64,
    /// `exp(-lambda/2)`
    pub target: f64,
    /// `D(M1)`, max over intervals
    pub d_m1: f64,
    pub d_inf: f64,
    /// `(N, contraction)` for every candidate tried
    pub tried: Vec<(usize, f64)>,
}

struct Candidate {
    m: usize,
    contraction: f64,
    d_m1: f64,
    d_inf: f64,
}

fn forms_for(setup: &Setup, prop: &Propagator, n: usize) -> Result<ObservabilityForms> {
    build_forms(setup.space, prop, setup.chi, n, &setup.m_list)
}

/// Closed one-interval map `(I - L L_N^T G^+ Pi_N) Phi`.
fn closed_map(bundle: &ReachabilityBundle, rtol: f64) -> DMatrix<f64> {
    let n = bundle.n;
    let k = bundle.free_map.nrows();
    if n == 0 {
        return bundle.free_map.clone();
    }
    let ln = bundle.input_map.rows(0, n);
    let gain = &bundle.input_map * ln.transpose() * sym_pinv(&bundle.gramian, rtol);
    let mut proj = DMatrix::zeros(n, k);
    proj.view_mut((0, 0), (n, n)).fill_with_identity();
    (DMatrix::identity(k, k) - gain * proj) * &bundle.free_map
}

fn evaluate(cache: &mut IntervalCache, n: usize, intervals: usize) -> Result<Candidate> {
    let setup = cache.setup;
    let taus = cache.distinct(intervals);
    if n == 0 {
        let mut worst: f64 = 0.0;
        for &t in &taus {
            worst = worst.max(op_norm(&cache.propagator(t)?.transition()));
        }
        return Ok(Candidate {
            m: 0,
            contraction: worst,
            d_m1: f64::INFINITY,
            d_inf: f64::INFINITY,
        });
    }
    let mut m = 0;
    let mut d_inf: f64 = 0.0;
    for &t in &taus {
        let forms = forms_for(setup, cache.propagator(t)?, n)?;
        m = m.max(select_m1(&forms, setup.slack, setup.pinv_rtol)?);
        d_inf = d_inf.max(forms.localized_constant(setup.pinv_rtol));
    }
    let idx = setup.m_list.iter().position(|&x| x == m).expect("M1 comes from the list");
    let actuator = Actuator::build(setup.space, setup.chi, m)?;
    let mut worst: f64 = 0.0;
    let mut d_m1: f64 = 0.0;
    for &t in &taus {
        let prop = cache.propagator(t)?.clone();
        let forms = forms_for(setup, &prop, n)?;
        d_m1 = d_m1.max(forms.truncated_constant(idx, setup.pinv_rtol));
        let bundle = ReachabilityBundle::from_propagator(prop, actuator.clone(), n)?;
        let closed = closed_map(&bundle, setup.pinv_rtol);
        let leak = op_norm(&closed.rows(0, n).into_owned());
        if leak > setup.null_tol {
            return Err(Error::Unreachable { m, n, residual: leak });
        }
        worst = worst.max(op_norm(&closed));
    }
    Ok(Candidate {
        m,
        contraction: worst,
        d_m1,
        d_inf,
    })
}

/// `(M1, contraction factor)` of the closed interval map for a given `N`.
pub fn interval_contraction(setup: &Setup, n: usize, intervals: usize) -> Result<(usize, f64)> {
    let mut cache = IntervalCache::new(setup);
    let c = evaluate(&mut cache, n, intervals)?;
    Ok((c.m, c.contraction))
}

/// Smallest `N` (doubling search, then bisection) whose closed interval map
/// contracts by `exp(-lambda/2)` on every interval in `0..intervals`.
pub fn choose_n(setup: &Setup, lambda: f64, intervals: usize) -> Result<Choice> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid("control.lambda", "must be positive"));
    }
    let k = setup.space.dim();
    // candidates are N < limit
    let limit = if setup.n_cap < k { setup.n_cap + 1 } else { k };
    let target = (-0.5 * lambda).exp();
    let mut cache = IntervalCache::new(setup);
    let mut tried = Vec::new();
    let mut best = f64::INFINITY;
    let mut last_fail = None;
    let mut n = 0;
    let found = loop {
        if n >= limit {
            break None;
        }
        match evaluate(&mut cache, n, intervals) {
            Ok(c) => {
                tried.push((n, c.contraction));
                best = best.min(c.contraction);
                if c.contraction <= target {
                    break Some((n, c));
                }
            }
            Err(e @ (Error::InsufficientM { .. } | Error::Unobservable(_))) => return Err(e),
            Err(Error::Unreachable { .. }) => tried.push((n, f64::INFINITY)),
            Err(e) => return Err(e),
        }
        last_fail = Some(n);
        let next = if n == 0 { 1 } else { 2 * n };
        n = if next >= limit && n + 1 < limit { limit - 1 } else { next };
    };
    let (mut n_ok, mut cand) = found.ok_or(Error::ResolutionTooSmall { k, best })?;
    if let Some(mut lo) = last_fail {
        while n_ok - lo > 1 {
            let mid = (lo + n_ok) / 2;
            match evaluate(&mut cache, mid, intervals) {
                Ok(c) if c.contraction <= target => {
                    tried.push((mid, c.contraction));
                    n_ok = mid;
                    cand = c;
                }
                Ok(c) => {
                    tried.push((mid, c.contraction));
                    lo = mid;
                }
                Err(Error::Unreachable { .. }) => {
                    tried.push((mid, f64::INFINITY));
                    lo = mid;
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(Choice {
        n: n_ok,
        m: cand.m,
        contraction: cand.contraction,
        target,
        d_m1: cand.d_m1,
        d_inf: cand.d_inf,
        tried,
    })
}

#[derive(Clone, Debug)]
pub struct StabilizationRun {
    pub lambda: f64,
    pub n: usize,
    pub m: usize,
    pub controls: Vec<ControlSignal>,
    pub trajectory: Trajectory,
    pub kappa1: f64,
    pub kappa3: f64,
    /// `sup_{t <= 1} t e^{lambda t} |v|_V^2 / |v0|_H^2`
    pub kappa3_smoothing: f64,
    /// `|Pi_N v(n)| / |v0|` at integer times `n >= 1`
    pub projection_residuals: Vec<f64>,
    /// `|v(n)|^2 / (e^{-lambda n} |v0|^2)` at integer times `n >= 1`
    pub decay_ratios: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilizationSummary {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M1")]
    pub m1: usize,
    pub lambda: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    pub decay_violations: usize,
    pub max_projection_residual: f64,
}

impl StabilizationRun {
    /// Number of integer times where `|v(n)|^2 > e^{-lambda n}|v0|^2`.
    pub fn decay_violations(&self) -> usize {
        self.decay_ratios.iter().filter(|&&r| r > 1.0 + 1e-12).count()
    }

    pub fn summary(&self, kappa2: f64) -> StabilizationSummary {
        StabilizationSummary {
            n: self.n,
            m1: self.m,
            lambda: self.lambda,
            kappa1: self.kappa1,
            kappa2,
            kappa3: self.kappa3,
            decay_violations: self.decay_violations(),
            max_projection_residual: self.projection_residuals.iter().cloned().fold(0.0, f64::max),
        }
    }
}

/// Runs the concatenated control from `v0` over `n_max` unit intervals.
pub fn stabilize(setup: &Setup, choice: &Choice, lambda: f64, v0: &DVector<f64>, n_max: usize) -> Result<StabilizationRun> {
    let mut cache = IntervalCache::new(setup);
    let actuator = Actuator::build(setup.space, setup.chi, choice.m)?;
    let mut bundles: HashMap<usize, ReachabilityBundle> = HashMap::new();
    let mut controls = Vec::with_capacity(n_max);
    let mut trajectory = Trajectory {
        t0: 0.0,
        dt: setup.dt,
        states: vec![v0.clone()],
    };
    for tau in 0..n_max {
        let key = cache.key(tau);
        if let std::collections::hash_map::Entry::Vacant(slot) = bundles.entry(key) {
            let prop = cache.propagator(tau)?.clone();
            slot.insert(ReachabilityBundle::from_propagator(prop, actuator.clone(), choice.n)?);
        }
        let bundle = &bundles[&key];
        let w0 = trajectory.last().clone();
        let mut control = if choice.n == 0 || w0.norm() == 0.0 {
            ControlSignal::zero(0.0, setup.dt, bundle.propagator().steps(), choice.m)
        } else {
            min_norm_control(bundle, &w0, setup.pinv_rtol, setup.null_tol)?
        };
        control.tau = tau as f64;
        let piece = bundle.simulate(&w0, &control);
        trajectory.append(&piece);
        controls.push(control);
    }

    let steps = (1.0 / setup.dt).round() as usize;
    let h0 = v0.norm_squared();
    let v0_v = setup.space.norms(v0).v.powi(2);
    let mut kappa1: f64 = 0.0;
    let mut kappa3: f64 = 0.0;
    let mut kappa3_smoothing: f64 = 0.0;
    let mut projection_residuals = Vec::new();
    let mut decay_ratios = Vec::new();
    for (i, v) in trajectory.states.iter().enumerate() {
        let t = trajectory.time(i);
        let w = (lambda * t).exp();
        let hv = v.norm_squared();
        let vv = setup.space.norms(v).v.powi(2);
        if h0 > 0.0 {
            kappa1 = kappa1.max(w * hv / h0);
            if t <= 1.0 {
                kappa3_smoothing = kappa3_smoothing.max(t * w * vv / h0);
            }
        }
        if v0_v > 0.0 && t >= 1.0 - 1e-12 {
            kappa3 = kappa3.max(w * vv / v0_v);
        }
        if i > 0 && i % steps == 0 {
            let scale = v0.norm().max(f64::MIN_POSITIVE);
            projection_residuals.push(v.rows(0, choice.n).norm() / scale);
            decay_ratios.push(if h0 > 0.0 { w * hv / h0 } else { 0.0 });
        }
    }
    Ok(StabilizationRun {
        lambda,
        n: choice.n,
        m: choice.m,
        controls,
        trajectory,
        kappa1,
        kappa3,
        kappa3_smoothing,
        projection_residuals,
        decay_ratios,
    })
}

/// `kappa2(lt) = sum dt e^{lt t} |eta|^2 / |v0|^2` for `0 <= lt < lambda`.
pub fn weighted_control_norm(run: &StabilizationRun, v0: &DVector<f64>, lambda_tilde: f64) -> Result<f64> {
    if !(lambda_tilde >= 0.0 && lambda_tilde < run.lambda) {
        return Err(Error::invalid("lambda_tilde", "must lie in [0, lambda)"));
    }
    let h0 = v0.norm_squared();
    if h0 == 0.0 {
        return Ok(0.0);
    }
    let total: f64 = run.controls.iter().map(|c| c.weighted_norm_squared(lambda_tilde)).sum();
    Ok(total / h0)
}

/// Series bound `C' e^{lt} / (1 - e^{lt - lambda})` with `C' = 4 D |chi|_inf^2`.
pub fn kappa2_bound(d_m1: f64, chi_sup: f64, lambda: f64, lambda_tilde: f64) -> f64 {
    let c = 4.0 * d_m1 * chi_sup * chi_sup;
    c * lambda_tilde.exp() / (1.0 - (lambda_tilde - lambda).exp())
}

/// The sufficient threshold `alpha_N >= e^lambda (c_bar + 4 D |chi|^2)` evaluated
/// with measured constants.
#[derive(Clone, Debug, Serialize)]
pub struct SymbolicThreshold {
    pub alpha_n: f64,
    pub c_bar: f64,
    pub c_chi_prime: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

pub fn symbolic_threshold(space: &SpectralSpace, choice: &Choice, chi_sup: f64, lambda: f64, c_bar: f64) -> SymbolicThreshold {
    let alpha_n = if choice.n == 0 {
        0.0
    } else {
        space.alpha()[choice.n.min(space.dim()) - 1]
    };
    let c_chi_prime = 4.0 * choice.d_m1 * chi_sup * chi_sup;
    let rhs = lambda.exp() * (c_bar + c_chi_prime);
    SymbolicThreshold {
        alpha_n,
        c_bar,
        c_chi_prime,
        rhs,
        satisfied: alpha_n >= rhs,
    }
}
