//! Acceptance suite: one PASS/FAIL line per criterion on the shipped default
//! configuration, checked against oracles computed here.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use nsstab::config::{default_config, ExperimentConfig};
use nsstab::dynamics::{bilinear_b, Propagator, ReferenceTrajectory, Schedule};
use nsstab::feedback::{
    closed_loop_linear, decay_constant, dp_check, horizon_gate, lyapunov_check, optimal_cost_check, synthesize, FeedbackLaw, RiccatiOptions,
};
use nsstab::nonlinear_loop::{
    basin_sweep, calibrate_gate, contraction_probe, gamma_scaling, quadratic_consistency, random_direction, simulate_closed_loop,
    v_decay_constant, ClosedLoop,
};
use nsstab::null_control::{kkt_identity_check, min_norm_control, regularized_control, ControlSignal, ReachabilityBundle};
use nsstab::observability::{build_forms, report, select_m1};
use nsstab::quadmin::{solve_null_space, QuadraticProgram};
use nsstab::spectral::{mode_norm, Actuator, ChiMask, ChiShape, GridVector, Parity, SpectralSpace, StokesMode};
use nsstab::stabilizer::{choose_n, stabilize, weighted_control_norm, Choice};

struct Fixture {
    cfg: ExperimentConfig,
    space: SpectralSpace,
    reference: ReferenceTrajectory,
    chi: ChiMask,
    choice: Choice,
    law: FeedbackLaw,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let cfg = default_config();
        let space = cfg.space().unwrap();
        let reference = cfg.reference(&space).unwrap();
        let chi = cfg.chi(&space).unwrap();
        let setup = cfg.setup(&space, &reference, &chi);
        let choice = choose_n(&setup, cfg.control.lambda, cfg.time.n_max).unwrap();
        let hat = choose_n(&setup, cfg.control.lambda * cfg.control.lambda_hat_factor, cfg.time.n_max).unwrap();
        let law = synthesize(&space, &reference, &chi, hat.m, cfg.control.lambda, &cfg.riccati_options()).unwrap();
        Fixture {
            cfg,
            space,
            reference,
            chi,
            choice,
            law,
        }
    })
}

fn verdict(n: u32, name: &str, pass: bool, detail: String) {
    println!("criterion {n:>2} [{name}]: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

fn random_vec(k: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0))
}

/// `P_M(chi q)` through the grid, independent of the actuator matrix.
fn pm_chi(space: &SpectralSpace, chi: &ChiMask, q: &DVector<f64>, m: usize) -> DVector<f64> {
    let mut w: GridVector = space.synthesize(q);
    for comp in w.iter_mut() {
        for (x, c) in comp.iter_mut().zip(chi.values()) {
            *x *= c;
        }
    }
    space.project_laplacian(&w, m).unwrap()
}

// ---- 1: bilinear term against the exact convolution sum ----

/// Coefficients of `e^{+i theta}` and `e^{-i theta}` in a trig function,
/// optionally differentiated once.
fn exp_coeffs(p: Parity, derivative: bool) -> [Complex64; 2] {
    let half = Complex64::new(0.5, 0.0);
    let ihalf = Complex64::new(0.0, 0.5);
    match (p, derivative) {
        (Parity::Cos, false) => [half, half],
        (Parity::Sin, false) => [-ihalf, ihalf],
        (Parity::Cos, true) => [ihalf, -ihalf],
        (Parity::Sin, true) => [half, half],
    }
}

/// `int ((phi_a . grad) phi_b) . phi_j` over the torus, from product-to-sum rules.
fn triad(a: &StokesMode, b: &StokesMode, j: &StokesMode) -> f64 {
    let c = mode_norm();
    let da_kb = a.direction[0] * b.k[0] as f64 + a.direction[1] * b.k[1] as f64;
    let db_dj = b.direction[0] * j.direction[0] + b.direction[1] * j.direction[1];
    if da_kb == 0.0 || db_dj == 0.0 {
        return 0.0;
    }
    let (ca, cb, cj) = (exp_coeffs(a.parity, false), exp_coeffs(b.parity, true), exp_coeffs(j.parity, false));
    let mut total = Complex64::new(0.0, 0.0);
    for (ia, sa) in [1, -1].into_iter().enumerate() {
        for (ib, sb) in [1, -1].into_iter().enumerate() {
            for (ij, sj) in [1, -1].into_iter().enumerate() {
                let kx = sa * a.k[0] + sb * b.k[0] + sj * j.k[0];
                let ky = sa * a.k[1] + sb * b.k[1] + sj * j.k[1];
                if kx == 0 && ky == 0 {
                    total += ca[ia] * cb[ib] * cj[ij];
                }
            }
        }
    }
    c * c * c * da_kb * db_dj * 4.0 * PI * PI * total.re
}

#[test]
fn criterion_01_bilinear_oracle() {
    let k = 12;
    let s = SpectralSpace::new(k, SpectralSpace::min_grid(k), 1.0).unwrap();
    let modes = s.modes();
    let mut t = vec![0.0; k * k * k];
    for a in 0..k {
        for b in 0..k {
            for j in 0..k {
                t[(a * k + b) * k + j] = triad(&modes[a], &modes[b], &modes[j]);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let u = random_vec(k, &mut rng);
        let v = random_vec(k, &mut rng);
        let oracle = DVector::from_fn(k, |j, _| {
            let mut acc = 0.0;
            for a in 0..k {
                for b in 0..k {
                    acc += u[a] * v[b] * t[(a * k + b) * k + j];
                }
            }
            acc
        });
        let got = bilinear_b(&s, &u, &v);
        worst = worst.max((got - &oracle).norm() / oracle.norm());
    }
    verdict(
        1,
        "bilinear oracle",
        worst <= 1e-12,
        format!("max relative error {worst:.2e} over 50 pairs, K=12"),
    );
}

// ---- 2: discrete adjoint ----

#[test]
fn criterion_02_discrete_adjoint() {
    let f = fixture();
    let k = f.space.dim();
    let prop = Propagator::build(&f.space, &f.reference, 0.0, f.cfg.time.dt).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let w0 = random_vec(k, &mut rng);
        let q1 = random_vec(k, &mut rng);
        let fwd = prop.forward(&w0, None);
        let adj = prop.adjoint(&q1);
        let lhs = fwd.last().dot(&q1);
        let rhs = w0.dot(&adj.nodes[0]);
        worst = worst.max((lhs - rhs).abs() / (fwd.last().norm() * q1.norm()));
    }
    verdict(
        2,
        "discrete adjoint",
        worst <= 1e-12,
        format!("max relative gap {worst:.2e} over 50 pairs, K={k}"),
    );
}

// ---- 3: KKT identities ----

#[test]
fn criterion_03_kkt_identities() {
    let f = fixture();
    let k = f.space.dim();
    let n = f.choice.n;
    let m = f.choice.m;
    let actuator = Actuator::build(&f.space, &f.chi, m).unwrap();
    let bundle = ReachabilityBundle::build(&f.space, &f.reference, &actuator, 0.0, f.cfg.time.dt, n).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let w0 = random_vec(k, &mut rng);
    let dt = bundle.dt();
    let mut worst_rep: f64 = 0.0;
    let mut worst_id: f64 = 0.0;
    for eps in [1e-2, 1e-4, 1e-6] {
        let sol = regularized_control(&bundle, &w0, eps).unwrap();
        let mut gap: f64 = 0.0;
        let mut top: f64 = 0.0;
        let mut lhs = 0.0;
        for (eta, mid) in sol.control.coeffs.iter().zip(&sol.adjoint.mids) {
            let out = pm_chi(&f.space, &f.chi, mid, m);
            gap = gap.max((eta - &out * 0.5).norm());
            top = top.max(eta.norm());
            lhs += dt * out.norm_squared();
        }
        lhs += eps * sol.adjoint.nodes.last().unwrap().norm_squared();
        let rhs = -2.0 * sol.adjoint.nodes[0].dot(&w0);
        worst_rep = worst_rep.max(gap / top);
        worst_id = worst_id.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
        let lib = kkt_identity_check(&bundle, &w0, eps).unwrap();
        worst_rep = worst_rep.max(lib.representation_error);
        worst_id = worst_id.max(lib.identity_error);
    }
    verdict(
        3,
        "KKT identities",
        worst_rep <= 1e-9 && worst_id <= 1e-8,
        format!("representation {worst_rep:.2e}, identity {worst_id:.2e}, N={n}, M={m}"),
    );
}

// ---- 4: null projection and the QP oracle ----

fn qp_oracle_gap() -> f64 {
    let k = 16;
    let s = SpectralSpace::new(k, SpectralSpace::min_grid(k), 0.5).unwrap();
    let r = ReferenceTrajectory::taylor_green(
        &s,
        Schedule::Cosine {
            mean: 2.0,
            amplitude: 0.6,
            omega: 2.0 * PI,
            phase: 0.0,
        },
        2.0,
    )
    .unwrap();
    let chi = ChiMask::new(
        &s,
        ChiShape::Bump {
            center: [PI, PI],
            radius: PI,
        },
        0.1,
    )
    .unwrap();
    let (n, m, dt) = (4, 8, 1.0 / 32.0);
    let act = Actuator::build(&s, &chi, m).unwrap();
    let bundle = ReachabilityBundle::build(&s, &r, &act, 0.0, dt, n).unwrap();
    let steps = 32;
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let w0 = random_vec(k, &mut rng);
    // constraint columns from forward simulations of unit controls
    let dim = m * steps;
    let mut a = DMatrix::zeros(n, dim);
    let zero = DVector::zeros(k);
    for col in 0..dim {
        let mut c = ControlSignal::zero(0.0, dt, steps, m);
        c.coeffs[col / m][col % m] = 1.0 / dt.sqrt();
        let end = bundle.simulate(&zero, &c).last().clone();
        a.set_column(col, &end.rows(0, n));
    }
    let free = bundle.simulate(&w0, &ControlSignal::zero(0.0, dt, steps, m)).last().clone();
    let y = -free.rows(0, n).into_owned();
    let qp = QuadraticProgram::new(DMatrix::identity(dim, dim), a, y).unwrap();
    let oracle = solve_null_space(&qp, 1e-12).unwrap();
    let got = min_norm_control(&bundle, &w0, 1e-10, 1e-8).unwrap().decision();
    (got - &oracle).norm() / oracle.norm()
}

#[test]
fn criterion_04_null_projection() {
    let f = fixture();
    let k = f.space.dim();
    let (n, m) = (f.choice.n, f.choice.m);
    let actuator = Actuator::build(&f.space, &f.chi, m).unwrap();
    let bundle = ReachabilityBundle::build(&f.space, &f.reference, &actuator, 0.0, f.cfg.time.dt, n).unwrap();
    let tol = &f.cfg.tolerances;
    let mut rng = ChaCha8Rng::seed_from_u64(204);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let w0 = random_vec(k, &mut rng);
        let c = min_norm_control(&bundle, &w0, tol.pinv_rtol, tol.null_tol).unwrap();
        let end = bundle.simulate(&w0, &c).last().clone();
        worst = worst.max(end.rows(0, n).norm() / w0.norm());
    }
    let qp = qp_oracle_gap();
    verdict(
        4,
        "null projection",
        worst <= 1e-8 && qp <= 1e-9,
        format!("max |Pi_N v(1)|/|w0| = {worst:.2e} (K={k}, N={n}, M={m}); QP oracle gap {qp:.2e} at K=16"),
    );
}

// ---- 5: piecewise stabilization decay chain ----

#[test]
fn criterion_05_decay_chain() {
    let f = fixture();
    let k = f.space.dim();
    let lambda = f.cfg.control.lambda;
    let n_max = f.cfg.time.n_max;
    let setup = f.cfg.setup(&f.space, &f.reference, &f.chi);
    let per_unit = (1.0 / f.cfg.time.dt).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut violations = 0;
    let mut worst_ratio: f64 = 0.0;
    let (mut k1, mut k2, mut k3): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..10 {
        let v0 = random_vec(k, &mut rng);
        let run = stabilize(&setup, &f.choice, lambda, &v0, n_max).unwrap();
        for n in 1..=n_max {
            let vn = &run.trajectory.states[n * per_unit];
            let ratio = vn.norm_squared() / ((-lambda * n as f64).exp() * v0.norm_squared());
            worst_ratio = worst_ratio.max(ratio);
            if ratio > 1.0 {
                violations += 1;
            }
        }
        k1 = k1.max(run.kappa1);
        k3 = k3.max(run.kappa3);
        k2 = k2.max(weighted_control_norm(&run, &v0, 0.5 * lambda).unwrap());
    }
    let finite = k1.is_finite() && k2.is_finite() && k3.is_finite();
    verdict(
        5,
        "decay chain",
        violations == 0 && finite,
        format!("{violations} violations, max ratio {worst_ratio:.3}; kappa1 {k1:.3e}, kappa2 {k2:.3e}, kappa3 {k3:.3e}"),
    );
}

// ---- 6: truncated observability ----

fn heat_oracle_gap() -> f64 {
    let s = SpectralSpace::new(12, SpectralSpace::min_grid(12), 0.3).unwrap();
    let r = ReferenceTrajectory::zero(&s, 2.0).unwrap();
    let p = Propagator::build(&s, &r, 0.0, 1.0 / 128.0).unwrap();
    let chi = ChiMask::constant(&s, 1.0).unwrap();
    let forms = build_forms(&s, &p, &chi, 1, &[8]).unwrap();
    let a = s.alpha()[0];
    let oracle = 2.0 * a / ((2.0 * a).exp() - 1.0);
    (forms.truncated_constant(0, 1e-10) - oracle).abs() / oracle
}

#[test]
fn criterion_06_truncated_observability() {
    let f = fixture();
    let k = f.space.dim();
    let n = f.choice.n;
    let rtol = f.cfg.tolerances.pinv_rtol;
    let prop = Propagator::build(&f.space, &f.reference, 0.0, f.cfg.time.dt).unwrap();
    let forms = build_forms(&f.space, &prop, &f.chi, n, &f.cfg.control.m_list).unwrap();
    let m1 = select_m1(&forms, f.cfg.control.slack, rtol).unwrap();
    let idx = f.cfg.control.m_list.iter().position(|&m| m == m1).unwrap();
    let d = forms.truncated_constant(idx, rtol);
    let dt = prop.dt();
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100 {
        let mut q1 = DVector::zeros(k);
        let c = random_vec(n, &mut rng).normalize();
        q1.rows_mut(0, n).copy_from(&c);
        let adj = prop.adjoint(&q1);
        let lhs = adj.nodes[0].norm_squared();
        let obs: f64 = adj.mids.iter().map(|q| dt * pm_chi(&f.space, &f.chi, q, m1).norm_squared()).sum();
        worst = worst.max((lhs - d * obs) / lhs);
    }
    let rep = report(&forms, f.cfg.control.slack, rtol);
    let ds: Vec<f64> = rep.d_table.iter().map(|d| d.unwrap_or(f64::INFINITY)).collect();
    let monotone = ds.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) || w[0].is_infinite());
    let heat = heat_oracle_gap();
    verdict(
        6,
        "truncated observability",
        worst <= 1e-8 && monotone && heat <= 1e-4,
        format!("max violation {worst:.2e} at M1={m1}, D(M1)={d:.3}; D(M) nonincreasing: {monotone}; heat oracle gap {heat:.2e}"),
    );
}

// ---- 7: Riccati synthesis ----

fn are_oracle_gap() -> f64 {
    let s = SpectralSpace::new(12, SpectralSpace::min_grid(12), 0.2).unwrap();
    let r = ReferenceTrajectory::zero(&s, 1.0).unwrap();
    let chi = ChiMask::constant(&s, 0.7).unwrap();
    let (lambda, m) = (0.3, 10);
    let opts = RiccatiOptions {
        horizon: 48.0,
        dt: 1.0 / 128.0,
        cap: 1e8,
    };
    let law = synthesize(&s, &r, &chi, m, lambda, &opts).unwrap();
    let kernel = Actuator::build(&s, &chi, m).unwrap().gain_kernel();
    let p0 = law.p_node(0);
    (0..s.dim())
        .map(|j| {
            let alpha = s.alpha()[j];
            let a = alpha - 0.5 * lambda;
            let b2 = kernel[(j, j)];
            // scalar ARE: b2 p^2 + 2 a p - alpha = 0
            let expect = if b2 < 1e-14 {
                alpha / (2.0 * a)
            } else {
                (-a + (a * a + b2 * alpha).sqrt()) / b2
            };
            (p0[(j, j)] - expect).abs() / expect
        })
        .fold(0.0, f64::max)
}

#[test]
fn criterion_07_riccati_synthesis() {
    let f = fixture();
    let law = &f.law;
    let th = law.horizon();
    let are = are_oracle_gap();
    let times: Vec<f64> = (1..=(th / 2.0) as usize).map(|i| i as f64).collect();
    let residual = law.riccati_residual(&times).unwrap().max_relative;
    let min_eig = law.min_eig();
    let gate = horizon_gate(law, f.cfg.tolerances.riccati_cap).unwrap();
    verdict(
        7,
        "Riccati synthesis",
        are <= 1e-6 && residual <= 1e-5 && min_eig >= -1e-10 && gate <= 1e-6,
        format!("ARE oracle {are:.2e}; interior residual {residual:.2e}; min eig {min_eig:.2e}; T_h doubling {gate:.2e}"),
    );
}

// ---- 8: dynamic programming ----

#[test]
fn criterion_08_dynamic_programming() {
    let f = fixture();
    let law = &f.law;
    let th = law.horizon();
    let k = f.space.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let v0 = random_vec(k, &mut rng);
    let dp = dp_check(law, &v0, &[0.0, th / 4.0, th / 2.0, th]).unwrap();
    let mut cost_gap: f64 = 0.0;
    for s in [0.0, 1.0] {
        let w0 = random_vec(k, &mut rng);
        cost_gap = cost_gap.max(optimal_cost_check(law, s, &w0).unwrap().relative_gap);
    }
    verdict(
        8,
        "dynamic programming",
        dp.max_relative_gap <= 1e-6 && cost_gap <= 1e-4,
        format!(
            "split gap {:.2e} at T_h/4, T_h/2; optimal vs simulated cost {cost_gap:.2e}",
            dp.max_relative_gap
        ),
    );
}

// ---- 9: feedback decay ----

#[test]
fn criterion_09_feedback_decay() {
    let f = fixture();
    let law = &f.law;
    let k = f.space.dim();
    let lambda = law.lambda();
    let duration = f.cfg.time.n_max as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let mut bounds = Vec::new();
    let mut exceed = 0;
    let mut measured = Vec::new();
    for s in [0.0, 1.0] {
        let kappa = decay_constant(law, s, duration).unwrap();
        bounds.push(kappa);
        for _ in 0..5 {
            let v0 = random_vec(k, &mut rng);
            let run = closed_loop_linear(law, s, &v0, duration).unwrap();
            let m = run.measured_kappa(lambda);
            measured.push(m);
            if m > kappa * (1.0 + 1e-9) {
                exceed += 1;
            }
        }
    }
    let (lo, hi) = bounds.iter().fold((f64::INFINITY, 0.0_f64), |(a, b), &x| (a.min(x), b.max(x)));
    let stable = hi <= 1.1 * lo;
    let mmax = measured.iter().cloned().fold(0.0, f64::max);
    verdict(
        9,
        "feedback decay",
        exceed == 0 && stable,
        format!(
            "kappa(s=0) {:.4}, kappa(s=1) {:.4}; max measured {mmax:.4}; {exceed} exceedances",
            bounds[0], bounds[1]
        ),
    );
}

// ---- 10: Lyapunov monotonicity ----

#[test]
fn criterion_10_lyapunov() {
    let f = fixture();
    let law = &f.law;
    let k = f.space.dim();
    let duration = f.cfg.time.n_max as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..5 {
        let v0 = random_vec(k, &mut rng);
        let run = closed_loop_linear(law, 0.0, &v0, duration).unwrap();
        let rep = lyapunov_check(law, &run, run.trajectory.len()).unwrap();
        violations += rep.violations;
        worst = worst.max(rep.max_relative_increase);
    }
    verdict(
        10,
        "Lyapunov monotonicity",
        violations == 0,
        format!("{violations} per-step increases above 1e-8; max relative change {worst:.2e}"),
    );
}

// ---- 11: nonlinear decay at the shipped gate ----

#[test]
fn criterion_11_nonlinear_decay() {
    let f = fixture();
    let eps = f.cfg.control.epsilon_star;
    let duration = f.cfg.time.n_max as f64;
    let lp = ClosedLoop::new(&f.space, &f.law).unwrap();
    let theta_bound = 2.0 * v_decay_constant(&lp, duration).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(111);
    let mut failures = 0;
    let mut theta_max: f64 = 0.0;
    let dirs: Vec<_> = (0..10).map(|_| random_direction(&f.space, &mut rng)).collect();
    for d in &dirs {
        let (_, check) = simulate_closed_loop(&lp, &(d * eps), duration, eps, theta_bound).unwrap();
        theta_max = theta_max.max(check.theta);
        if !(check.gated && check.holds) {
            failures += 1;
        }
    }
    let cons = quadratic_consistency(&lp, &dirs[0], &[1e-4, 1e-3, 1e-2]).unwrap();
    let slope_ok = (cons.slope - 2.0).abs() <= 0.3;

    // the shipped gate re-derives from the calibration sweep
    let cal_dirs: Vec<_> = (0..f.cfg.sweep.directions).map(|_| random_direction(&f.space, &mut rng)).collect();
    let basin = basin_sweep(&lp, &f.cfg.sweep.scales, &cal_dirs, duration, theta_bound).unwrap();
    let gate = calibrate_gate(&lp, &basin, &cal_dirs, duration).unwrap();
    let shipped = eps <= gate.epsilon_star * (1.0 + 1e-12);
    verdict(
        11,
        "nonlinear decay",
        failures == 0 && slope_ok && shipped,
        format!(
            "{failures}/10 directions fail at |v0|_V = {eps}; max theta {theta_max:.3} vs bound {theta_bound:.3}; \
             consistency slope {:.3}; recalibrated gate {} (eps_hat {}, contraction limit {})",
            cons.slope, gate.epsilon_star, gate.epsilon_hat, gate.contraction_limit
        ),
    );
}

// ---- 12: Picard contraction ----

#[test]
fn criterion_12_contraction() {
    let f = fixture();
    let eps = f.cfg.control.epsilon_star;
    let duration = f.cfg.time.n_max as f64;
    let lp = ClosedLoop::new(&f.space, &f.law).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(112);
    let dir = random_direction(&f.space, &mut rng);
    let probe = contraction_probe(&lp, &(&dir * eps), duration, 2, 0.5, &mut rng);
    let (gamma, gap, converged) = match &probe {
        Ok(p) => (p.picard.gamma_hat, p.fixed_point_gap, p.picard.converged),
        Err(_) => (f64::INFINITY, f64::INFINITY, false),
    };
    let (_, gammas, slope) = gamma_scaling(&lp, &dir, &[eps / 8.0, eps / 4.0, eps / 2.0, eps], duration).unwrap();
    verdict(
        12,
        "Picard contraction",
        converged && gamma < 1.0 && gap <= 1e-8 && (slope - 1.0).abs() <= 0.3,
        format!("gamma_hat {gamma:.3e} at |v0|_V = {eps}; fixed point vs direct {gap:.2e}; slope {slope:.3} over {gammas:.3?}"),
    );
}

// ---- 13: determinism of the full pipeline ----

#[test]
fn criterion_13_determinism() {
    let mut cfg = default_config();
    // a short sweep keeps the run quick; it still brackets the shipped gate
    cfg.sweep.scales = vec![1.0, 2.0 * cfg.control.epsilon_star];
    cfg.sweep.directions = 2;
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("config.json");
    std::fs::write(&cfg_path, cfg.to_json()).unwrap();
    let bin = env!("CARGO_BIN_EXE_nsstab");
    let mut outs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = std::process::Command::new(bin)
            .args(["all", "--config"])
            .arg(&cfg_path)
            .arg("--out")
            .arg(&out)
            .args(["--seed", "7"])
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0), "run {run} exit status");
        outs.push(out);
    }
    let mut names: Vec<String> = std::fs::read_dir(&outs[0])
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| std::fs::read(outs[0].join(n)).unwrap() != std::fs::read(outs[1].join(n)).unwrap())
        .collect();
    verdict(
        13,
        "determinism",
        names.len() >= 6 && differing.is_empty(),
        format!("{} CSV files compared, differing: {differing:?}", names.len()),
    );
}
