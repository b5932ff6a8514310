use std::path::Path;
use std::process::{Command, Output};

use nalgebra::DVector;
use nsstab::config::default_config;
use nsstab::stabilizer::{choose_n, stabilize};

fn nsstab(args: &[&str], cfg: Option<&Path>, out: Option<&Path>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_nsstab"));
    c.args(args);
    if let Some(p) = cfg {
        c.arg("--config").arg(p);
    }
    if let Some(o) = out {
        c.arg("--out").arg(o);
    }
    c.output().unwrap()
}

#[test]
fn invalid_config_exits_2_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    let mut cfg = default_config();
    cfg.chi.radius = -1.0;
    std::fs::write(&p, cfg.to_json()).unwrap();
    let o = nsstab(&["reference"], Some(&p), Some(&dir.path().join("out")));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("chi.radius"));

    let o = nsstab(&["reference"], Some(&dir.path().join("missing.json")), None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_3_with_hint() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    let mut cfg = default_config();
    cfg.control.m_list = vec![1, 2];
    std::fs::write(&p, cfg.to_json()).unwrap();
    let o = nsstab(&["observability"], Some(&p), Some(&dir.path().join("out")));
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hint:"));
}

#[test]
fn observability_on_default_is_nonincreasing_and_manifested() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    std::fs::write(&p, default_config().to_json()).unwrap();
    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_nsstab"))
        .args(["observability", "--seed", "99", "--config"])
        .arg(&p)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("observability.json")).unwrap()).unwrap();
    assert_eq!(rep["nonincreasing"], true);
    let d: Vec<f64> = rep["report"]["d_table"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert!(d.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)));
    let man: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(man["seed"], 99);
    assert_eq!(man["config_sha256"], default_config().hash());
    assert!(man["artifacts"].as_array().unwrap().iter().any(|a| a == "observability.csv"));
}

#[test]
fn plot_of_empty_csv_is_empty_axes() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("decay.csv");
    std::fs::write(&csv, "").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_nsstab"))
        .args(["plot", "--kind", "decay", "--input"])
        .arg(&csv)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let svg = std::fs::read_to_string(dir.path().join("decay.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));

    std::fs::write(&csv, "x,y\n1,2\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_nsstab"))
        .args(["plot", "--kind", "decay", "--input"])
        .arg(&csv)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stabilizing_zero_gives_zero() {
    let cfg = default_config();
    let s = cfg.space().unwrap();
    let r = cfg.reference(&s).unwrap();
    let chi = cfg.chi(&s).unwrap();
    let setup = cfg.setup(&s, &r, &chi);
    let choice = choose_n(&setup, cfg.control.lambda, 2).unwrap();
    let run = stabilize(&setup, &choice, cfg.control.lambda, &DVector::zeros(s.dim()), 2).unwrap();
    assert!(run.trajectory.states.iter().all(|v| v.iter().all(|&x| x == 0.0)));
    assert!(run.controls.iter().all(|c| c.coeffs.iter().all(|e| e.iter().all(|&x| x == 0.0))));
}
