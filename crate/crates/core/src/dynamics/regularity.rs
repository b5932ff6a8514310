//! Empirical constants of the parabolic regularity estimates on `[0, 1]`:
//!
//! * energy: `sup |r|_H^2 + int |r|_V^2  <=  C (|r0|_H^2 + int |f|_{V'}^2)`
//! * smoothing: `sup t|r|_V^2 + int t|r|_{D(L)}^2  <=  C (|r0|_H^2 + int |f|_H^2)`
//! * strong: `sup |r|_V^2 + int |r|_{D(L)}^2  <=  C (|r0|_V^2 + int |f|_H^2)`

use nalgebra::DVector;
use rand::Rng;
use serde::Serialize;

use super::propagator::Propagator;
use crate::spectral::SpectralSpace;

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct RegularityRatios {
    pub energy: f64,
    pub smoothing: f64,
    pub strong: f64,
}

/// One run: initial datum and a piecewise-constant forcing per step.
pub struct RegularityRun {
    pub r0: DVector<f64>,
    pub forcing: Vec<DVector<f64>>,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

pub fn run_ratios(space: &SpectralSpace, prop: &Propagator, run: &RegularityRun) -> RegularityRatios {
    let traj = prop.forward(&run.r0, Some(&run.forcing));
    let dt = prop.dt();
    let a = space.alpha();
    let v2 = |c: &DVector<f64>| c.iter().zip(a.iter()).map(|(x, w)| w * x * x).sum::<f64>();
    let d2 = |c: &DVector<f64>| c.iter().zip(a.iter()).map(|(x, w)| w * w * x * x).sum::<f64>();
    let dual2 = |c: &DVector<f64>| c.iter().zip(a.iter()).map(|(x, w)| x * x / w).sum::<f64>();

    let mut sup_h: f64 = 0.0;
    let mut sup_v: f64 = 0.0;
    let mut sup_tv: f64 = 0.0;
    let (mut int_v, mut int_d, mut int_td) = (0.0, 0.0, 0.0);
    for (n, s) in traj.states.iter().enumerate() {
        let t = n as f64 * dt;
        let (h, v, d) = (s.norm_squared(), v2(s), d2(s));
        sup_h = sup_h.max(h);
        sup_v = sup_v.max(v);
        sup_tv = sup_tv.max(t * v);
        let w = if n == 0 || n + 1 == traj.states.len() { 0.5 * dt } else { dt };
        int_v += w * v;
        int_d += w * d;
        int_td += w * t * d;
    }
    let f_h: f64 = run.forcing.iter().map(|f| dt * f.norm_squared()).sum();
    let f_dual: f64 = run.forcing.iter().map(|f| dt * dual2(f)).sum();
    let r0_h = run.r0.norm_squared();
    let r0_v = v2(&run.r0);
    RegularityRatios {
        energy: ratio(sup_h + int_v, r0_h + f_dual),
        smoothing: ratio(sup_tv + int_td, r0_h + f_h),
        strong: ratio(sup_v + int_d, r0_v + f_h),
    }
}

/// Largest ratios over a batch of runs on the interval `[0, 1]` of `prop`.
pub fn regularity_diagnostics(space: &SpectralSpace, prop: &Propagator, runs: &[RegularityRun]) -> RegularityRatios {
    runs.iter()
        .map(|r| run_ratios(space, prop, r))
        .fold(RegularityRatios::default(), |acc, r| RegularityRatios {
            energy: acc.energy.max(r.energy),
            smoothing: acc.smoothing.max(r.smoothing),
            strong: acc.strong.max(r.strong),
        })
}

/// Random smooth data: coefficients decaying like `1/|k|^2`, forcing a
/// fixed random field modulated by `cos(2 pi t)`.
pub fn random_runs<R: Rng>(space: &SpectralSpace, steps: usize, count: usize, rng: &mut R) -> Vec<RegularityRun> {
    let k = space.dim();
    let nu = space.nu();
    let a = space.alpha();
    (0..count)
        .map(|_| {
            let r0 = DVector::from_fn(k, |i, _| rng.random_range(-1.0..1.0) * nu / a[i]);
            let base = DVector::from_fn(k, |i, _| rng.random_range(-1.0..1.0) * nu / a[i]);
            let forcing = (0..steps)
                .map(|n| {
                    let t = (n as f64 + 0.5) / steps as f64;
                    &base * (2.0 * std::f64::consts::PI * t).cos()
                })
                .collect();
            RegularityRun { r0, forcing }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ReferenceTrajectory;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn smoothing_ratio_of_single_free_mode_matches_calculus() {
        let s = SpectralSpace::new(12, 8, 0.5).unwrap();
        let r = ReferenceTrajectory::zero(&s, 1.0).unwrap();
        let dt = 1.0 / 512.0;
        let p = Propagator::build(&s, &r, 0.0, dt).unwrap();
        let j = 10;
        let a = s.alpha()[j];
        let run = RegularityRun {
            r0: DVector::from_fn(12, |i, _| (i == j) as u8 as f64),
            forcing: vec![DVector::zeros(12); 512],
        };
        let got = run_ratios(&s, &p, &run).smoothing;
        // sup_t t a e^{-2at} is attained at t = 1/(2a) when that is inside [0, 1]
        let t_star = (0.5 / a).min(1.0);
        let sup = t_star * a * (-2.0 * a * t_star).exp();
        // int_0^1 t a^2 e^{-2at} dt
        let int = 0.25 * (1.0 - (1.0 + 2.0 * a) * (-2.0 * a).exp());
        assert!((got - (sup + int)).abs() < 1e-4, "{got} vs {}", sup + int);
        assert!(sup <= 0.5 / std::f64::consts::E + 1e-15);
    }

    #[test]
    fn zero_data_give_zero_ratios() {
        let s = SpectralSpace::new(12, 8, 0.5).unwrap();
        let r = ReferenceTrajectory::zero(&s, 1.0).unwrap();
        let p = Propagator::build(&s, &r, 0.0, 1.0 / 64.0).unwrap();
        let run = RegularityRun {
            r0: DVector::zeros(12),
            forcing: vec![DVector::zeros(12); 64],
        };
        let out = run_ratios(&s, &p, &run);
        assert_eq!((out.energy, out.smoothing, out.strong), (0.0, 0.0, 0.0));
    }

    #[test]
    fn random_batch_ratios_are_finite_and_refine_stably() {
        let s = SpectralSpace::new(12, 8, 0.2).unwrap();
        let r = ReferenceTrajectory::taylor_green(&s, crate::dynamics::Schedule::Constant { value: 0.5 }, 2.0).unwrap();
        let mut out = Vec::new();
        for steps in [64usize, 128] {
            let p = Propagator::build(&s, &r, 0.0, 1.0 / steps as f64).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let runs = random_runs(&s, steps, 8, &mut rng);
            let d = regularity_diagnostics(&s, &p, &runs);
            assert!(d.energy.is_finite() && d.smoothing.is_finite() && d.strong.is_finite());
            out.push(d);
        }
        assert!((out[0].energy - out[1].energy).abs() < 0.05 * out[1].energy);
        assert!((out[0].strong - out[1].strong).abs() < 0.05 * out[1].strong);
    }
}
