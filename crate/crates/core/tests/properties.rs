//! Structural invariants over randomized inputs.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use nsstab::config::default_config;
use nsstab::dynamics::{bilinear_b, Propagator, ReferenceTrajectory, Schedule, Trajectory};
use nsstab::io::Table;
use nsstab::nonlinear_loop::z_lambda_norm;
use nsstab::null_control::{min_norm_control, ReachabilityBundle};
use nsstab::quadmin::{solve_constrained_min, solve_null_space, QuadraticProgram};
use nsstab::spectral::{Actuator, ChiMask, ChiShape, SpectralSpace};

const K: usize = 12;

struct Small {
    space: SpectralSpace,
    prop: Propagator,
    bundle: ReachabilityBundle,
}

fn small() -> &'static Small {
    static S: OnceLock<Small> = OnceLock::new();
    S.get_or_init(|| {
        let space = SpectralSpace::new(K, SpectralSpace::min_grid(K), 0.4).unwrap();
        let reference = ReferenceTrajectory::taylor_green(
            &space,
            Schedule::Cosine {
                mean: 1.0,
                amplitude: 0.5,
                omega: 2.0 * std::f64::consts::PI,
                phase: 0.3,
            },
            2.0,
        )
        .unwrap();
        let chi = ChiMask::new(
            &space,
            ChiShape::Bump {
                center: [3.0, 3.0],
                radius: 2.5,
            },
            0.2,
        )
        .unwrap();
        let prop = Propagator::build(&space, &reference, 0.0, 1.0 / 16.0).unwrap();
        let act = Actuator::build(&space, &chi, 16).unwrap();
        let bundle = ReachabilityBundle::build(&space, &reference, &act, 0.0, 1.0 / 16.0, 4).unwrap();
        Small { space, prop, bundle }
    })
}

fn field() -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-1.0..1.0f64, K).prop_map(DVector::from_vec)
}

fn rel(a: f64, scale: f64) -> f64 {
    a / scale.max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn advection_conserves_energy(u in field(), v in field()) {
        let s = &small().space;
        let b = bilinear_b(s, &u, &v);
        prop_assert!(rel(b.dot(&v).abs(), b.norm() * v.norm()) <= 1e-12);
    }

    #[test]
    fn advection_is_bilinear(u in field(), w in field(), v in field(), a in -3.0..3.0f64) {
        let s = &small().space;
        let lhs = bilinear_b(s, &(&u * a + &w), &v);
        let rhs = bilinear_b(s, &u, &v) * a + bilinear_b(s, &w, &v);
        prop_assert!(rel((&lhs - &rhs).norm(), rhs.norm() + lhs.norm()) <= 1e-12);
    }

    #[test]
    fn propagator_is_linear_and_adjoint_exact(w1 in field(), w2 in field(), q in field(), a in -2.0..2.0f64) {
        let p = &small().prop;
        let lhs = p.forward(&(&w1 * a + &w2), None).last().clone();
        let rhs = p.forward(&w1, None).last() * a + p.forward(&w2, None).last();
        prop_assert!(rel((&lhs - &rhs).norm(), rhs.norm()) <= 1e-12);
        let fwd = p.forward(&w1, None).last().dot(&q);
        let bwd = w1.dot(&p.adjoint(&q).nodes[0]);
        prop_assert!(rel((fwd - bwd).abs(), w1.norm() * q.norm()) <= 1e-12);
    }

    #[test]
    fn minimal_control_is_linear_in_the_initial_state(w1 in field(), w2 in field(), a in -2.0..2.0f64) {
        let b = &small().bundle;
        let c = |w: &DVector<f64>| min_norm_control(b, w, 1e-10, 1e-8).unwrap().decision();
        let lhs = c(&(&w1 * a + &w2));
        let rhs = c(&w1) * a + c(&w2);
        prop_assert!(rel((&lhs - &rhs).norm(), rhs.norm()) <= 1e-9);
    }

    #[test]
    fn z_lambda_norm_is_homogeneous(states in prop::collection::vec(field(), 2..40), c in -5.0..5.0f64, lambda in 0.0..2.0f64) {
        let s = &small().space;
        let t = Trajectory { t0: 0.0, dt: 1.0 / 16.0, states };
        let scaled = Trajectory { t0: 0.0, dt: t.dt, states: t.states.iter().map(|x| x * c).collect() };
        let n = z_lambda_norm(s, &t, lambda);
        prop_assert!(n >= 0.0);
        prop_assert!((z_lambda_norm(s, &scaled, lambda) - c.abs() * n).abs() <= 1e-12 * n.max(1.0));
    }

    #[test]
    fn qp_routes_agree(seed in prop::collection::vec(-1.0..1.0f64, 6 * 6 + 3 * 6 + 3)) {
        let g = DMatrix::from_column_slice(6, 6, &seed[..36]);
        let cost = &g * g.transpose() + DMatrix::identity(6, 6) * 0.5;
        let a = DMatrix::from_column_slice(3, 6, &seed[36..54]);
        let y = DVector::from_column_slice(&seed[54..]);
        let qp = QuadraticProgram::new(cost, a.clone(), y.clone()).unwrap();
        let x1 = solve_constrained_min(&qp, 1e-12).unwrap().x;
        let x2 = solve_null_space(&qp, 1e-12).unwrap();
        prop_assert!(rel((&x1 - &x2).norm(), x1.norm()) <= 1e-8);
        prop_assert!(rel((&a * &x1 - &y).norm(), y.norm()) <= 1e-9);
    }

    #[test]
    fn cosine_schedule_with_whole_turns_is_unit_periodic(mean in -3.0..3.0f64, amp in -2.0..2.0f64, turns in 1u32..4, phase in -3.0..3.0f64, t in 0.0..10.0f64) {
        let s = Schedule::Cosine { mean, amplitude: amp, omega: 2.0 * std::f64::consts::PI * turns as f64, phase };
        prop_assert!(s.unit_periodic());
        prop_assert!((s.value(t + 1.0) - s.value(t)).abs() <= 1e-9);
    }

    #[test]
    fn config_round_trips(nu in 0.05..2.0f64, lambda in 0.1..3.0f64, eps in 1e-6..1e3f64, seed in any::<u64>()) {
        let mut c = default_config();
        c.space.nu = nu;
        c.control.lambda = lambda;
        c.control.epsilon_star = eps;
        c.seed = seed;
        let back = nsstab::config::ExperimentConfig::from_json(&c.to_json()).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn csv_tables_round_trip(rows in prop::collection::vec(prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 3), 0..20)) {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new(&["a", "b", "c"]);
        for r in rows {
            t.push(r);
        }
        let p = dir.path().join("t.csv");
        t.write(&p).unwrap();
        prop_assert_eq!(Table::read(&p).unwrap(), t);
    }
}
