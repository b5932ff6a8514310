use std::ffi::{CStr, CString};
use std::ptr;

use nsstab::config::{default_config, ExperimentConfig};
use nsstab_ffi::*;

fn small_config() -> ExperimentConfig {
    let mut c = default_config();
    c.space.k = 12;
    c.space.grid_n = 16;
    c.control.m_list = vec![8, 16, 32];
    c.control.n_max = 11;
    c.time.dt = 1.0 / 32.0;
    c.time.t_h = 16.0;
    c.time.n_max = 3;
    c
}

fn last_error() -> String {
    let p = nsstab_last_error();
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { nsstab_string_free(p) };
    s
}

fn experiment(cfg: &ExperimentConfig) -> *mut NsstabExperiment {
    let json = CString::new(cfg.to_json()).unwrap();
    let mut exp = ptr::null_mut();
    let st = unsafe { nsstab_experiment_from_json(json.as_ptr(), &mut exp) };
    assert_eq!(st, NsstabStatus::Ok);
    exp
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(nsstab_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn bad_input_sets_status_and_message() {
    let mut exp = ptr::null_mut();
    let st = unsafe { nsstab_experiment_from_json(ptr::null(), &mut exp) };
    assert_eq!(st, NsstabStatus::NullPointer);
    assert!(last_error().contains("json"));

    let mut cfg = small_config();
    cfg.time.dt = 0.3;
    let json = CString::new(cfg.to_json()).unwrap();
    let st = unsafe { nsstab_experiment_from_json(json.as_ptr(), &mut exp) };
    assert_eq!(st, NsstabStatus::Config);
    assert!(last_error().contains("time.dt"));
    assert!(exp.is_null());

    let mut k = 0usize;
    assert_eq!(unsafe { nsstab_experiment_dim(ptr::null(), &mut k) }, NsstabStatus::NullPointer);
    unsafe { nsstab_string_free(ptr::null_mut()) };
    unsafe { nsstab_experiment_free(ptr::null_mut()) };
    unsafe { nsstab_law_free(ptr::null_mut()) };
}

#[test]
fn default_experiment_round_trips_its_config() {
    let mut exp = ptr::null_mut();
    assert_eq!(unsafe { nsstab_experiment_default(&mut exp) }, NsstabStatus::Ok);
    let mut k = 0usize;
    assert_eq!(unsafe { nsstab_experiment_dim(exp, &mut k) }, NsstabStatus::Ok);
    assert_eq!(k, 64);
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { nsstab_experiment_config_json(exp, &mut s) }, NsstabStatus::Ok);
    let text = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
    unsafe { nsstab_string_free(s) };
    assert_eq!(ExperimentConfig::from_json(&text).unwrap(), default_config());
    unsafe { nsstab_experiment_free(exp) };
}

#[test]
fn law_gain_is_linear_and_the_loop_decays() {
    let exp = experiment(&small_config());
    let mut law = ptr::null_mut();
    let st = unsafe { nsstab_law_synthesize(exp, &mut law) };
    assert_eq!(st, NsstabStatus::Ok, "{}", last_error());
    let mut m = 0usize;
    assert_eq!(unsafe { nsstab_law_m(law, &mut m) }, NsstabStatus::Ok);
    assert!(m > 0);

    let k = 12;
    let v: Vec<f64> = (0..k).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.1).collect();
    let v2: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
    let (mut g1, mut g2) = (vec![0.0; k], vec![0.0; k]);
    unsafe {
        assert_eq!(nsstab_law_gain(law, 0.5, v.as_ptr(), k, g1.as_mut_ptr()), NsstabStatus::Ok);
        assert_eq!(nsstab_law_gain(law, 0.5, v2.as_ptr(), k, g2.as_mut_ptr()), NsstabStatus::Ok);
        assert_eq!(
            nsstab_law_gain(law, 0.5, v.as_ptr(), k - 1, g1.as_mut_ptr()),
            NsstabStatus::InvalidArgument
        );
    }
    for (a, b) in g1.iter().zip(&g2) {
        assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1e-300));
    }

    let norm = |x: &[f64]| x.iter().map(|y| y * y).sum::<f64>().sqrt();
    for nonlinear in [0, 1] {
        let mut end = vec![0.0; k];
        let st = unsafe { nsstab_law_closed_loop(law, v.as_ptr(), k, 3.0, nonlinear, end.as_mut_ptr()) };
        assert_eq!(st, NsstabStatus::Ok);
        assert!(norm(&end) < norm(&v));
    }
    unsafe {
        nsstab_law_free(law);
        nsstab_experiment_free(exp);
    }
}

#[test]
fn run_writes_artifacts_and_rejects_unknown_stages() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, small_config().to_json()).unwrap();
    let cfg = CString::new(cfg_path.to_str().unwrap()).unwrap();
    let out = CString::new(dir.path().join("out").to_str().unwrap()).unwrap();
    let stage = CString::new("reference").unwrap();
    let st = unsafe { nsstab_run(stage.as_ptr(), cfg.as_ptr(), out.as_ptr(), 3) };
    assert_eq!(st, NsstabStatus::Ok);
    assert!(dir.path().join("out").join("manifest.json").exists());

    let bad = CString::new("everything").unwrap();
    let st = unsafe { nsstab_run(bad.as_ptr(), cfg.as_ptr(), out.as_ptr(), 3) };
    assert_eq!(st, NsstabStatus::InvalidArgument);
    assert!(last_error().contains("everything"));
}
