//! Configuration-driven experiment runner behind the `nsstab` binary.

use std::path::PathBuf;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::dynamics::{random_runs, regularity_diagnostics, Propagator, ReferenceTrajectory, Schedule};
use crate::error::{Error, Result};
use crate::feedback::{
    closed_loop_linear, decay_constant, dp_check, horizon_gate, lyapunov_check, optimal_cost_check, synthesize, CostReport, DpReport,
    FeedbackLaw, ResidualReport,
};
use crate::io::{decay_table, trajectory_table, Manifest, OutputDir, Table, Versions};
use crate::nonlinear_loop::{
    basin_sweep, calibrate_gate, contraction_probe, random_direction, simulate_closed_loop, v_decay_constant, BasinReport, ClosedLoop,
    ContractionReport, DecayCheck,
};
use crate::null_control::{epsilon_limit_study, kkt_identity_check, min_norm_control, EpsilonStudy, KktReport, ReachabilityBundle};
use crate::observability::{build_forms, report, ObservabilityReport};
use crate::plot::{basin_svg, decay_svg, staircase_svg};
use crate::spectral::{Actuator, ChiMask, SpectralSpace};
use crate::stabilizer::{
    choose_n, kappa2_bound, stabilize, symbolic_threshold, weighted_control_norm, Choice, StabilizationSummary, SymbolicThreshold,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Reference,
    Observability,
    NullControl,
    Stabilize,
    Feedback,
    ClosedLoop,
    Basin,
    All,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Reference => "reference",
            Stage::Observability => "observability",
            Stage::NullControl => "null-control",
            Stage::Stabilize => "stabilize",
            Stage::Feedback => "feedback",
            Stage::ClosedLoop => "closed-loop",
            Stage::Basin => "basin",
            Stage::All => "all",
        }
    }

    /// Independent random stream per stage, so a stage's output does not
    /// depend on which other stages ran before it.
    fn stream(self) -> u64 {
        match self {
            Stage::Reference | Stage::Observability | Stage::All => 0,
            Stage::NullControl => 1,
            Stage::Stabilize => 2,
            Stage::Feedback => 3,
            Stage::ClosedLoop => 4,
            Stage::Basin => 5,
        }
    }
}

/// Exit status of the binary.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_ASSERTION: i32 = 4;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::InvalidParameter { .. } | Error::GridTooCoarse { .. } | Error::Json(_) => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

/// Remediation hint printed with a failure.
pub fn hint(err: &Error) -> Option<&'static str> {
    match err {
        Error::Unreachable { .. } => Some("raise M: unreachable target"),
        Error::InsufficientM { .. } => Some("extend control.M_list or raise control.slack"),
        Error::ResolutionTooSmall { .. } => Some("raise space.K or lower control.lambda"),
        Error::NotStabilizable { .. } => Some("raise M or tolerances.riccati_cap"),
        Error::GateTooLarge { .. } => Some("lower control.epsilon_star"),
        Error::GridTooCoarse { .. } => Some("raise space.grid_n"),
        _ => None,
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub artifacts: Vec<String>,
    pub failed_checks: Vec<String>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.failed_checks.is_empty() {
            EXIT_OK
        } else {
            EXIT_ASSERTION
        }
    }
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    seed: u64,
    space: &'a SpectralSpace,
    reference: &'a ReferenceTrajectory,
    chi: &'a ChiMask,
    out: OutputDir,
    failed: Vec<String>,
    choice: Option<Choice>,
    choice_hat: Option<Choice>,
    law: Option<FeedbackLaw>,
    theta: Option<f64>,
}

fn unit_random(k: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let v = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
    let n = v.norm();
    v / n
}

impl Context<'_> {
    fn rng(&self, stage: Stage) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(stage.stream());
        r
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failed.push(what.into());
        }
    }

    fn choice(&mut self) -> Result<Choice> {
        if self.choice.is_none() {
            let setup = self.cfg.setup(self.space, self.reference, self.chi);
            self.choice = Some(choose_n(&setup, self.cfg.control.lambda, self.cfg.time.n_max)?);
        }
        Ok(self.choice.clone().expect("set above"))
    }

    fn choice_hat(&mut self) -> Result<Choice> {
        if self.choice_hat.is_none() {
            let setup = self.cfg.setup(self.space, self.reference, self.chi);
            let lh = self.cfg.control.lambda * self.cfg.control.lambda_hat_factor;
            self.choice_hat = Some(choose_n(&setup, lh, self.cfg.time.n_max)?);
        }
        Ok(self.choice_hat.clone().expect("set above"))
    }

    fn law(&mut self) -> Result<&FeedbackLaw> {
        if self.law.is_none() {
            let m = self.choice_hat()?.m;
            let law = synthesize(
                self.space,
                self.reference,
                self.chi,
                m,
                self.cfg.control.lambda,
                &self.cfg.riccati_options(),
            )?;
            self.law = Some(law);
        }
        Ok(self.law.as_ref().expect("set above"))
    }

    fn theta(&mut self) -> Result<f64> {
        if self.theta.is_none() {
            let duration = self.cfg.time.n_max as f64;
            let space = self.space;
            let law = self.law()?;
            let lp = ClosedLoop::new(space, law)?;
            self.theta = Some(2.0 * v_decay_constant(&lp, duration)?);
        }
        Ok(self.theta.expect("set above"))
    }
}

#[derive(Serialize)]
struct ReferenceSummary {
    #[serde(rename = "K")]
    k: usize,
    nu: f64,
    grid_n: usize,
    horizon: f64,
    components: usize,
    unit_periodic: bool,
    w_norm: f64,
    max_divergence: f64,
}

fn run_reference(cx: &mut Context) -> Result<()> {
    let dt = cx.cfg.time.dt;
    let n = cx.cfg.time.n_max;
    let steps = (n as f64 / dt).round() as usize;
    let traj = crate::dynamics::Trajectory {
        t0: 0.0,
        dt,
        states: (0..=steps).map(|i| cx.reference.state(i as f64 * dt)).collect(),
    };
    let max_divergence = traj
        .states
        .iter()
        .step_by((1.0 / dt).round() as usize)
        .flat_map(|u| cx.space.divergence(u))
        .fold(0.0_f64, |a, d| a.max(d.abs()));
    let summary = ReferenceSummary {
        k: cx.space.dim(),
        nu: cx.space.nu(),
        grid_n: cx.space.grid_n(),
        horizon: cx.reference.horizon(),
        components: cx.reference.components().len(),
        unit_periodic: cx.reference.unit_periodic(),
        w_norm: cx.reference.w_norm(cx.space, dt),
        max_divergence,
    };
    cx.check(max_divergence <= 1e-10, "reference: discrete divergence above 1e-10");
    cx.out.table("reference.csv", &trajectory_table(cx.space, &traj))?;
    cx.out.json("reference.json", &summary)?;
    Ok(())
}

#[derive(Serialize)]
struct ObservabilityOutput {
    choice: Choice,
    report: ObservabilityReport,
    nonincreasing: bool,
    /// same N and M list at other truncations; recorded, not asserted
    k_sweep: Vec<KSweepRow>,
}

#[derive(Serialize)]
struct KSweepRow {
    #[serde(rename = "K")]
    k: usize,
    m_list: Vec<usize>,
    d_table: Vec<Option<f64>>,
    d_inf: Option<f64>,
}

fn k_sweep_row(cfg: &ExperimentConfig, k: usize, n: usize) -> Result<KSweepRow> {
    let mut cfg = cfg.clone();
    cfg.space.k = k;
    cfg.space.grid_n = cfg.space.grid_n.max(SpectralSpace::min_grid(k));
    let space = cfg.space()?;
    let reference = cfg.reference(&space)?;
    let chi = cfg.chi(&space)?;
    let prop = Propagator::build(&space, &reference, 0.0, cfg.time.dt)?;
    let m_list: Vec<usize> = cfg.control.m_list.iter().copied().filter(|&m| space.check_m(m).is_ok()).collect();
    let forms = build_forms(&space, &prop, &chi, n.min(k), &m_list)?;
    let rep = report(&forms, cfg.control.slack, cfg.tolerances.pinv_rtol);
    Ok(KSweepRow {
        k,
        m_list,
        d_table: rep.d_table,
        d_inf: rep.d_inf,
    })
}

fn run_observability(cx: &mut Context) -> Result<()> {
    let choice = cx.choice()?;
    let prop = Propagator::build(cx.space, cx.reference, 0.0, cx.cfg.time.dt)?;
    let forms = build_forms(cx.space, &prop, cx.chi, choice.n.max(1), &cx.cfg.control.m_list)?;
    let rep = report(&forms, cx.cfg.control.slack, cx.cfg.tolerances.pinv_rtol);
    let mut table = Table::new(&["M", "D_M"]);
    let mut prev = f64::INFINITY;
    let mut nonincreasing = true;
    for (m, d) in cx.cfg.control.m_list.iter().zip(&rep.d_table) {
        let d = d.unwrap_or(f64::INFINITY);
        nonincreasing &= d <= prev * (1.0 + 1e-9) || !prev.is_finite();
        prev = d;
        table.push(vec![*m as f64, d]);
    }
    cx.check(nonincreasing, "observability: D(M) increases with M");
    let k = cx.space.dim();
    let mut k_sweep = Vec::new();
    for kk in [k / 2, k, 2 * k] {
        if kk >= choice.n.max(1) {
            k_sweep.push(k_sweep_row(cx.cfg, kk, choice.n.max(1))?);
        }
    }
    cx.out.table("observability.csv", &table)?;
    cx.out.json(
        "observability.json",
        &ObservabilityOutput {
            choice,
            report: rep,
            nonincreasing,
            k_sweep,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct NullControlOutput {
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "M")]
    m: usize,
    gramian_rank: usize,
    projection_residual: f64,
    control_norm: f64,
    kkt: Vec<KktReport>,
    epsilon_study: EpsilonStudy,
}

fn run_null_control(cx: &mut Context) -> Result<()> {
    let choice = cx.choice()?;
    let n = choice.n.max(1);
    let m = if choice.n == 0 { cx.cfg.control.m_list[0] } else { choice.m };
    let mut rng = cx.rng(Stage::NullControl);
    let actuator = Actuator::build(cx.space, cx.chi, m)?;
    let bundle = ReachabilityBundle::build(cx.space, cx.reference, &actuator, 0.0, cx.cfg.time.dt, n)?;
    let w0 = unit_random(cx.space.dim(), &mut rng);
    let tol = &cx.cfg.tolerances;
    let control = min_norm_control(&bundle, &w0, tol.pinv_rtol, tol.null_tol)?;
    let end = bundle.endpoint(&w0, &control);
    let projection_residual = end.rows(0, n).norm() / w0.norm();
    let kkt = [1e-2, 1e-4, 1e-6]
        .iter()
        .map(|&e| kkt_identity_check(&bundle, &w0, e))
        .collect::<Result<Vec<_>>>()?;
    let epsilon_study = epsilon_limit_study(&bundle, &w0, &[1e-2, 1e-3, 1e-4, 1e-5, 1e-6], tol.pinv_rtol, tol.null_tol)?;
    cx.check(projection_residual <= 1e-8, "null-control: |Pi_N v(1)| above 1e-8 |w0|");
    for k in &kkt {
        cx.check(
            k.representation_error <= 1e-9,
            format!("null-control: KKT representation at eps={}", k.epsilon),
        );
        cx.check(k.identity_error <= 1e-8, format!("null-control: KKT identity at eps={}", k.epsilon));
    }
    let out = NullControlOutput {
        n,
        m,
        gramian_rank: bundle.gramian_rank(tol.pinv_rtol),
        projection_residual,
        control_norm: control.norm_squared().sqrt(),
        kkt,
        epsilon_study,
    };
    cx.out.json("null_control.json", &out)?;
    Ok(())
}

#[derive(Serialize)]
struct StabilizeOutput {
    choice: Choice,
    summary: StabilizationSummary,
    kappa2_bound: f64,
    kappa3_smoothing: f64,
    decay_ratios: Vec<f64>,
    projection_residuals: Vec<f64>,
    regularity_smoothing: f64,
    threshold: SymbolicThreshold,
    /// measured kappas at fixed |u_hat|_W across oscillation amplitudes; not asserted
    amplitude_sweep: Vec<AmplitudeRow>,
}

#[derive(Serialize)]
struct AmplitudeRow {
    amplitude: f64,
    mean: f64,
    w_norm: f64,
    #[serde(rename = "N")]
    n: usize,
    kappa1: f64,
    kappa2: f64,
}

/// Re-runs the stabilizer for a single cosine-scheduled reference with its
/// oscillation amplitude scaled and the mean re-solved (bisection) so the
/// measured W-norm stays at the shipped value. Empty for other references.
fn amplitude_sweep(cx: &Context, v0: &DVector<f64>) -> Result<Vec<AmplitudeRow>> {
    let comps = &cx.cfg.reference.components;
    let (mean0, amp0, omega, phase) = match comps.as_slice() {
        [c] => match c.schedule {
            Schedule::Cosine {
                mean,
                amplitude,
                omega,
                phase,
            } => (mean, amplitude, omega, phase),
            _ => return Ok(Vec::new()),
        },
        _ => return Ok(Vec::new()),
    };
    let dt = cx.cfg.time.dt;
    let lambda = cx.cfg.control.lambda;
    let target = cx.reference.w_norm(cx.space, dt);
    let with = |mean: f64, amplitude: f64| {
        let mut cfg = cx.cfg.clone();
        cfg.reference.components[0].schedule = Schedule::Cosine {
            mean,
            amplitude,
            omega,
            phase,
        };
        cfg
    };
    let mut rows = Vec::new();
    for frac in [0.0, 0.5, 1.0, 1.5] {
        let amplitude = frac * amp0;
        let w_at = |mean: f64| -> Result<f64> { Ok(with(mean, amplitude).reference(cx.space)?.w_norm(cx.space, dt)) };
        let (mut lo, mut hi) = (0.0, mean0.abs() + amp0 + 1.0);
        if w_at(lo)? > target {
            continue;
        }
        while w_at(hi)? < target {
            hi *= 2.0;
        }
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            if w_at(mid)? < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mean = 0.5 * (lo + hi);
        let cfg = with(mean, amplitude);
        let reference = cfg.reference(cx.space)?;
        let setup = cfg.setup(cx.space, &reference, cx.chi);
        let choice = choose_n(&setup, lambda, cx.cfg.time.n_max)?;
        let run = stabilize(&setup, &choice, lambda, v0, cx.cfg.time.n_max)?;
        rows.push(AmplitudeRow {
            amplitude,
            mean,
            w_norm: reference.w_norm(cx.space, dt),
            n: choice.n,
            kappa1: run.kappa1,
            kappa2: weighted_control_norm(&run, v0, 0.5 * lambda)?,
        });
    }
    Ok(rows)
}

fn run_stabilize(cx: &mut Context) -> Result<()> {
    let choice = cx.choice()?;
    let lambda = cx.cfg.control.lambda;
    let mut rng = cx.rng(Stage::Stabilize);
    let v0 = unit_random(cx.space.dim(), &mut rng);
    let setup = cx.cfg.setup(cx.space, cx.reference, cx.chi);
    let run = stabilize(&setup, &choice, lambda, &v0, cx.cfg.time.n_max)?;
    let kappa2 = weighted_control_norm(&run, &v0, 0.5 * lambda)?;
    let prop = Propagator::build(cx.space, cx.reference, 0.0, cx.cfg.time.dt)?;
    let runs = random_runs(cx.space, prop.steps(), 4, &mut rng);
    let c_bar = regularity_diagnostics(cx.space, &prop, &runs).smoothing;
    let threshold = symbolic_threshold(cx.space, &choice, cx.chi.sup_norm(), lambda, c_bar);
    cx.check(run.decay_violations() == 0, "stabilize: |v(n)|^2 > e^{-lambda n}|v0|^2 at some n");
    let amplitude_sweep = amplitude_sweep(cx, &v0)?;
    let out = StabilizeOutput {
        summary: run.summary(kappa2),
        kappa2_bound: kappa2_bound(choice.d_m1, cx.chi.sup_norm(), lambda, 0.5 * lambda),
        kappa3_smoothing: run.kappa3_smoothing,
        decay_ratios: run.decay_ratios.clone(),
        projection_residuals: run.projection_residuals.clone(),
        regularity_smoothing: c_bar,
        threshold,
        amplitude_sweep,
        choice,
    };
    cx.out
        .table("decay.csv", &decay_table(cx.space, &run.trajectory, lambda, run.kappa1))?;
    cx.out.table("trajectory.csv", &trajectory_table(cx.space, &run.trajectory))?;
    let m = run.m;
    let mut header = vec!["t".to_string()];
    header.extend((1..=m).map(|j| format!("eta_{j}")));
    let mut controls = Table { header, rows: Vec::new() };
    for c in &run.controls {
        for (i, eta) in c.coeffs.iter().enumerate() {
            let mut row = vec![c.tau + (i as f64 + 0.5) * c.dt];
            row.extend(eta.iter());
            controls.push(row);
        }
    }
    cx.out.table("control.csv", &controls)?;
    cx.out.json("stabilize.json", &out)?;
    Ok(())
}

#[derive(Serialize)]
struct KappaRow {
    s: f64,
    kappa: f64,
    measured: Vec<f64>,
}

#[derive(Serialize)]
struct FeedbackOutput {
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "N_hat")]
    n_hat: usize,
    lambda: f64,
    #[serde(rename = "T_h")]
    horizon: f64,
    horizon_gate: f64,
    min_eig: f64,
    sup_norm: f64,
    gain_bound: f64,
    max_jump: f64,
    residual: ResidualReport,
    dp: DpReport,
    cost: Vec<CostReport>,
    kappa: Vec<KappaRow>,
    lyapunov_violations: usize,
}

fn run_feedback(cx: &mut Context) -> Result<()> {
    let n_hat = cx.choice_hat()?.n;
    let cap = cx.cfg.tolerances.riccati_cap;
    let n_max = cx.cfg.time.n_max as f64;
    let samples = cx.cfg.sweep.samples.min(5);
    let mut rng = cx.rng(Stage::Feedback);
    let k = cx.space.dim();
    let space = cx.space;
    let law = cx.law()?.clone();
    let th = law.horizon();
    let gate = horizon_gate(&law, cap)?;
    let interior: Vec<f64> = (1..=(th / 2.0) as usize).map(|i| i as f64).collect();
    let residual = law.riccati_residual(&interior)?;
    let v0 = unit_random(k, &mut rng);
    let dp = dp_check(&law, &v0, &[0.0, th / 4.0, th / 2.0, th])?;
    let mut cost = Vec::new();
    let mut kappa = Vec::new();
    let mut lyapunov_violations = 0;
    let mut first_run = None;
    for s in [0.0, 1.0] {
        let w0 = unit_random(k, &mut rng);
        cost.push(optimal_cost_check(&law, s, &w0)?);
        let bound = decay_constant(&law, s, n_max)?;
        let mut measured = Vec::new();
        for _ in 0..samples {
            let v = unit_random(k, &mut rng);
            let run = closed_loop_linear(&law, s, &v, n_max)?;
            measured.push(run.measured_kappa(law.lambda()));
            if s == 0.0 {
                lyapunov_violations += lyapunov_check(&law, &run, 64)?.violations;
            }
            if first_run.is_none() {
                first_run = Some((run, bound));
            }
        }
        kappa.push(KappaRow { s, kappa: bound, measured });
    }
    let out = FeedbackOutput {
        m: law.m(),
        n_hat,
        lambda: law.lambda(),
        horizon: th,
        horizon_gate: gate,
        min_eig: law.min_eig(),
        sup_norm: law.sup_norm(),
        gain_bound: law.gain_bound(th / 2.0),
        max_jump: law.max_jump(),
        residual,
        dp,
        cost,
        kappa,
        lyapunov_violations,
    };
    cx.check(out.horizon_gate <= 1e-6, "feedback: T_h doubling changes P(0) by more than 1e-6");
    cx.check(out.residual.max_relative <= 1e-5, "feedback: Riccati residual above 1e-5");
    cx.check(out.min_eig >= -1e-10, "feedback: P(t) not PSD");
    cx.check(out.dp.max_relative_gap <= 1e-6, "feedback: dynamic-programming split above 1e-6");
    cx.check(
        out.cost.iter().all(|c| c.relative_gap <= 1e-4),
        "feedback: optimal cost differs from simulated cost",
    );
    cx.check(
        out.kappa.iter().all(|r| r.measured.iter().all(|&m| m <= r.kappa * (1.0 + 1e-9))),
        "feedback: decay bound exceeded",
    );
    cx.check(out.lyapunov_violations == 0, "feedback: Lyapunov functional increased");
    let (run, bound) = first_run.expect("at least one run");
    cx.out
        .table("feedback_decay.csv", &decay_table(space, &run.trajectory, law.lambda(), bound))?;
    let stride = (1.0 / law.dt()).round() as usize;
    cx.out.json("law.json", &law.dump(stride))?;
    cx.out.json("feedback.json", &out)?;
    Ok(())
}

#[derive(Serialize)]
struct ClosedLoopOutput {
    epsilon_star: f64,
    theta_bound: f64,
    decay: DecayCheck,
    contraction: ContractionReport,
}

fn run_closed_loop(cx: &mut Context) -> Result<()> {
    let theta = cx.theta()?;
    let eps = cx.cfg.control.epsilon_star;
    let duration = cx.cfg.time.n_max as f64;
    let mut rng = cx.rng(Stage::ClosedLoop);
    let space = cx.space;
    let law = cx.law()?.clone();
    let lp = ClosedLoop::new(space, &law)?;
    let v0 = random_direction(space, &mut rng) * eps;
    let (run, decay) = simulate_closed_loop(&lp, &v0, duration, eps, theta)?;
    let contraction = contraction_probe(&lp, &v0, duration, 4, 0.5, &mut rng)?;
    cx.check(decay.holds, "closed-loop: decay with measured theta fails at epsilon_star");
    cx.check(
        contraction.fixed_point_gap <= 1e-8,
        "closed-loop: Picard fixed point differs from direct simulation",
    );
    cx.out.table("closed_loop.csv", &trajectory_table(space, &run.trajectory))?;
    cx.out.json(
        "closed_loop.json",
        &ClosedLoopOutput {
            epsilon_star: eps,
            theta_bound: theta,
            decay,
            contraction,
        },
    )?;
    Ok(())
}

fn run_basin(cx: &mut Context) -> Result<BasinReport> {
    let theta = cx.theta()?;
    let duration = cx.cfg.time.n_max as f64;
    let mut rng = cx.rng(Stage::Basin);
    let space = cx.space;
    let dirs: Vec<_> = (0..cx.cfg.sweep.directions).map(|_| random_direction(space, &mut rng)).collect();
    let scales = cx.cfg.sweep.scales.clone();
    let law = cx.law()?.clone();
    let lp = ClosedLoop::new(space, &law)?;
    let rep = basin_sweep(&lp, &scales, &dirs, duration, theta)?;
    cx.out.json("basin.json", &rep)?;
    let gate = calibrate_gate(&lp, &rep, &dirs, duration)?;
    cx.check(
        cx.cfg.control.epsilon_star <= gate.epsilon_star * (1.0 + 1e-12),
        format!("basin: epsilon_star exceeds the calibrated gate {:e}", gate.epsilon_star),
    );
    cx.out.json("gate.json", &gate)?;
    Ok(rep)
}

/// Runs `stage` with outputs under `out` and writes `manifest.json`.
pub fn run(stage: Stage, cfg: &ExperimentConfig, out: PathBuf, seed: u64) -> Result<RunOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let space = cfg.space()?;
    let reference = cfg.reference(&space)?;
    let chi = cfg.chi(&space)?;
    let mut cx = Context {
        cfg,
        seed,
        space: &space,
        reference: &reference,
        chi: &chi,
        out: OutputDir::new(out)?,
        failed: Vec::new(),
        choice: None,
        choice_hat: None,
        law: None,
        theta: None,
    };
    match stage {
        Stage::Reference => run_reference(&mut cx)?,
        Stage::Observability => run_observability(&mut cx)?,
        Stage::NullControl => run_null_control(&mut cx)?,
        Stage::Stabilize => run_stabilize(&mut cx)?,
        Stage::Feedback => run_feedback(&mut cx)?,
        Stage::ClosedLoop => run_closed_loop(&mut cx)?,
        Stage::Basin => {
            run_basin(&mut cx)?;
        }
        Stage::All => {
            run_reference(&mut cx)?;
            run_observability(&mut cx)?;
            run_null_control(&mut cx)?;
            run_stabilize(&mut cx)?;
            run_feedback(&mut cx)?;
            run_closed_loop(&mut cx)?;
            let basin = run_basin(&mut cx)?;
            let decay = Table::read(&cx.out.path("decay.csv"))?;
            cx.out.text("decay.svg", &decay_svg(&decay)?)?;
            let fb = Table::read(&cx.out.path("feedback_decay.csv"))?;
            cx.out.text("feedback_decay.svg", &decay_svg(&fb)?)?;
            let obs = Table::read(&cx.out.path("observability.csv"))?;
            cx.out.text("observability.svg", &staircase_svg(&obs)?)?;
            cx.out.text("basin.svg", &basin_svg(&serde_json::to_string(&basin)?)?)?;
        }
    }
    let manifest = Manifest {
        subcommand: stage.name().to_string(),
        config_sha256: cfg.hash(),
        versions: Versions::current(),
        seed,
        wall_time_s: start.elapsed().as_secs_f64(),
        artifacts: cx.out.written().to_vec(),
        failed_checks: cx.failed.clone(),
    };
    let mut out = cx.out;
    out.json("manifest.json", &manifest)?;
    Ok(RunOutcome {
        artifacts: out.written().to_vec(),
        failed_checks: manifest.failed_checks,
    })
}
