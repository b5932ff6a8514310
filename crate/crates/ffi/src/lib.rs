//! C interface to `nsstab`.
//!
//! Every function returns an [`NsstabStatus`]. On failure the message is kept
//! per thread and read with [`nsstab_last_error`]. Strings handed out by the
//! library are released with [`nsstab_string_free`]; handles with their own
//! `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use nalgebra::DVector;
use nsstab::cli::{self, Stage};
use nsstab::config::{default_config, ExperimentConfig};
use nsstab::dynamics::ReferenceTrajectory;
use nsstab::feedback::{closed_loop_linear, synthesize, FeedbackLaw};
use nsstab::nonlinear_loop::ClosedLoop;
use nsstab::spectral::{ChiMask, SpectralSpace};
use nsstab::stabilizer::choose_n;
use nsstab::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NsstabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidString = 2,
    Config = 3,
    InvalidArgument = 4,
    Numerical = 5,
    Io = 6,
    /// A run finished but some of its checks failed.
    ChecksFailed = 7,
    Panic = 8,
}

/// Configuration with its spectral space, reference flow and mask.
pub struct NsstabExperiment {
    cfg: ExperimentConfig,
    space: SpectralSpace,
    reference: ReferenceTrajectory,
    chi: ChiMask,
}

/// A synthesized feedback law.
pub struct NsstabLaw {
    space: SpectralSpace,
    law: FeedbackLaw,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn status_of(err: &Error) -> NsstabStatus {
    match err {
        Error::Config { .. } | Error::Json(_) | Error::GridTooCoarse { .. } => NsstabStatus::Config,
        Error::InvalidParameter { .. } | Error::Schema(_) => NsstabStatus::InvalidArgument,
        Error::Io(_) => NsstabStatus::Io,
        _ => NsstabStatus::Numerical,
    }
}

fn fail(err: Error) -> NsstabStatus {
    let status = status_of(&err);
    match cli::hint(&err) {
        Some(h) => set_error(format!("{err} (hint: {h})")),
        None => set_error(err.to_string()),
    }
    status
}

/// Runs `f`, converting panics into [`NsstabStatus::Panic`].
fn guard(f: impl FnOnce() -> NsstabStatus) -> NsstabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            NsstabStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, NsstabStatus> {
    if p.is_null() {
        set_error(format!("{what} is null"));
        return Err(NsstabStatus::NullPointer);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        NsstabStatus::InvalidString
    })
}

unsafe fn read_vec(p: *const f64, len: usize, want: usize, what: &str) -> Result<DVector<f64>, NsstabStatus> {
    if p.is_null() {
        set_error(format!("{what} is null"));
        return Err(NsstabStatus::NullPointer);
    }
    if len != want {
        set_error(format!("{what} has length {len}, expected {want}"));
        return Err(NsstabStatus::InvalidArgument);
    }
    Ok(DVector::from_column_slice(std::slice::from_raw_parts(p, len)))
}

fn null(what: &str) -> NsstabStatus {
    set_error(format!("{what} is null"));
    NsstabStatus::NullPointer
}

fn build(cfg: ExperimentConfig) -> Result<NsstabExperiment, Error> {
    let space = cfg.space()?;
    let reference = cfg.reference(&space)?;
    let chi = cfg.chi(&space)?;
    Ok(NsstabExperiment {
        cfg,
        space,
        reference,
        chi,
    })
}

/// Library version as a static NUL-terminated string; do not free.
#[no_mangle]
pub extern "C" fn nsstab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy of the calling thread's last error message, or null when there is
/// none. Free with [`nsstab_string_free`].
#[no_mangle]
pub extern "C" fn nsstab_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |s| s.clone().into_raw()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn nsstab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates a JSON configuration.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nsstab_experiment_from_json(json: *const c_char, out: *mut *mut NsstabExperiment) -> NsstabStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let text = match read_str(json, "json") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match ExperimentConfig::from_json(text).and_then(build) {
            Ok(e) => {
                *out = Box::into_raw(Box::new(e));
                NsstabStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// The shipped default configuration.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nsstab_experiment_default(out: *mut *mut NsstabExperiment) -> NsstabStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        match build(default_config()) {
            Ok(e) => {
                *out = Box::into_raw(Box::new(e));
                NsstabStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `exp` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn nsstab_experiment_free(exp: *mut NsstabExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Number of retained Stokes modes `K`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn nsstab_experiment_dim(exp: *const NsstabExperiment, out: *mut usize) -> NsstabStatus {
    guard(|| match (exp.as_ref(), out.is_null()) {
        (Some(e), false) => {
            *out = e.space.dim();
            NsstabStatus::Ok
        }
        (None, _) => null("exp"),
        _ => null("out"),
    })
}

/// Canonical JSON of the configuration; free with [`nsstab_string_free`].
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn nsstab_experiment_config_json(exp: *const NsstabExperiment, out: *mut *mut c_char) -> NsstabStatus {
    guard(|| match (exp.as_ref(), out.is_null()) {
        (Some(e), false) => match CString::new(e.cfg.to_json()) {
            Ok(s) => {
                *out = s.into_raw();
                NsstabStatus::Ok
            }
            Err(_) => {
                set_error("config JSON contains NUL");
                NsstabStatus::InvalidString
            }
        },
        (None, _) => null("exp"),
        _ => null("out"),
    })
}

/// Chooses the projection size `N` and control size `M` for decay rate
/// `lambda` over the configured number of intervals.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn nsstab_choose_n(
    exp: *const NsstabExperiment,
    lambda: f64,
    n_out: *mut usize,
    m_out: *mut usize,
    contraction_out: *mut f64,
) -> NsstabStatus {
    guard(|| {
        let Some(e) = exp.as_ref() else { return null("exp") };
        if n_out.is_null() || m_out.is_null() || contraction_out.is_null() {
            return null("output pointer");
        }
        let setup = e.cfg.setup(&e.space, &e.reference, &e.chi);
        match choose_n(&setup, lambda, e.cfg.time.n_max) {
            Ok(c) => {
                *n_out = c.n;
                *m_out = c.m;
                *contraction_out = c.contraction;
                NsstabStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Synthesizes the feedback law for the configured `lambda`, with `M` chosen
/// at `lambda * lambda_hat_factor`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn nsstab_law_synthesize(exp: *const NsstabExperiment, out: *mut *mut NsstabLaw) -> NsstabStatus {
    guard(|| {
        let Some(e) = exp.as_ref() else { return null("exp") };
        if out.is_null() {
            return null("out");
        }
        let setup = e.cfg.setup(&e.space, &e.reference, &e.chi);
        let lh = e.cfg.control.lambda * e.cfg.control.lambda_hat_factor;
        let law = choose_n(&setup, lh, e.cfg.time.n_max)
            .and_then(|c| synthesize(&e.space, &e.reference, &e.chi, c.m, e.cfg.control.lambda, &e.cfg.riccati_options()));
        match law {
            Ok(law) => {
                *out = Box::into_raw(Box::new(NsstabLaw {
                    space: e.space.clone(),
                    law,
                }));
                NsstabStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// # Safety
/// `law` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn nsstab_law_free(law: *mut NsstabLaw) {
    if !law.is_null() {
        drop(Box::from_raw(law));
    }
}

/// Number of control modes `M` of the law.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn nsstab_law_m(law: *const NsstabLaw, out: *mut usize) -> NsstabStatus {
    guard(|| match (law.as_ref(), out.is_null()) {
        (Some(l), false) => {
            *out = l.law.m();
            NsstabStatus::Ok
        }
        (None, _) => null("law"),
        _ => null("out"),
    })
}

/// Writes `K(t) v` into `out`; `v` and `out` have length `K`.
///
/// # Safety
/// `v` and `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nsstab_law_gain(law: *const NsstabLaw, t: f64, v: *const f64, len: usize, out: *mut f64) -> NsstabStatus {
    guard(|| {
        let Some(l) = law.as_ref() else { return null("law") };
        if out.is_null() {
            return null("out");
        }
        let v = match read_vec(v, len, l.law.dim(), "v") {
            Ok(v) => v,
            Err(s) => return s,
        };
        if !(t.is_finite() && t >= 0.0) {
            set_error("t must be finite and nonnegative");
            return NsstabStatus::InvalidArgument;
        }
        let g = l.law.gain_apply(t, &v);
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(g.as_slice());
        NsstabStatus::Ok
    })
}

/// Linear (`nonlinear == 0`) or nonlinear closed loop from `v0` at `t = 0`;
/// writes the state at `duration` into `out`.
///
/// # Safety
/// `v0` and `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nsstab_law_closed_loop(
    law: *const NsstabLaw,
    v0: *const f64,
    len: usize,
    duration: f64,
    nonlinear: i32,
    out: *mut f64,
) -> NsstabStatus {
    guard(|| {
        let Some(l) = law.as_ref() else { return null("law") };
        if out.is_null() {
            return null("out");
        }
        let v0 = match read_vec(v0, len, l.law.dim(), "v0") {
            Ok(v) => v,
            Err(s) => return s,
        };
        let end = if nonlinear != 0 {
            ClosedLoop::new(&l.space, &l.law)
                .and_then(|lp| lp.simulate(&v0, duration))
                .and_then(|run| match run.blowup {
                    Some(t) => Err(Error::InvalidParameter {
                        name: "v0",
                        reason: format!("nonlinear run blew up at t = {t}"),
                    }),
                    None => Ok(run.trajectory.last().clone()),
                })
        } else {
            closed_loop_linear(&l.law, 0.0, &v0, duration).map(|run| run.trajectory.last().clone())
        };
        match end {
            Ok(v) => {
                std::slice::from_raw_parts_mut(out, len).copy_from_slice(v.as_slice());
                NsstabStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Runs a CLI stage (`"reference"`, `"feedback"`, `"all"`, ...) with
/// artifacts under `out_dir`. Returns [`NsstabStatus::ChecksFailed`] when the
/// run completes with failed checks.
///
/// # Safety
/// String arguments must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn nsstab_run(stage: *const c_char, config_path: *const c_char, out_dir: *const c_char, seed: u64) -> NsstabStatus {
    guard(|| {
        let (stage, cfg_path, out_dir) = match (
            read_str(stage, "stage"),
            read_str(config_path, "config_path"),
            read_str(out_dir, "out_dir"),
        ) {
            (Ok(a), Ok(b), Ok(c)) => (a, b, c),
            (Err(s), _, _) | (_, Err(s), _) | (_, _, Err(s)) => return s,
        };
        let stage = match stage {
            "reference" => Stage::Reference,
            "observability" => Stage::Observability,
            "null-control" => Stage::NullControl,
            "stabilize" => Stage::Stabilize,
            "feedback" => Stage::Feedback,
            "closed-loop" => Stage::ClosedLoop,
            "basin" => Stage::Basin,
            "all" => Stage::All,
            other => {
                set_error(format!("unknown stage {other:?}"));
                return NsstabStatus::InvalidArgument;
            }
        };
        let result =
            ExperimentConfig::load(std::path::Path::new(cfg_path)).and_then(|cfg| cli::run(stage, &cfg, PathBuf::from(out_dir), seed));
        match result {
            Ok(o) if o.failed_checks.is_empty() => NsstabStatus::Ok,
            Ok(o) => {
                set_error(format!("failed checks: {}", o.failed_checks.join("; ")));
                NsstabStatus::ChecksFailed
            }
            Err(e) => fail(e),
        }
    })
}
