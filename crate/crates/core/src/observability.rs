//! Observability forms of the adjoint flow with terminal data in `F_N`, the
//! truncated observability constant `D(M)`, and selection of `M1`.
//!
//! For terminal data `q1 = sum_{i<N} c_i e_i` every form is a quadratic form
//! in `c`: backward energy `|q(tau)|^2`, localized output `int |chi q|^2`,
//! truncated output `int |P_M(chi q)|^2`, and `int |chi q|^2_{H^1}`. Time
//! integrals use the step midpoints of the adjoint sweep.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dynamics::Propagator;
use crate::error::{Error, Result};
use crate::linalg::{max_generalized_eig, symmetrize};
use crate::spectral::{Actuator, ChiMask, SpectralSpace};

#[derive(Clone, Debug)]
pub struct ObservabilityForms {
    pub tau: f64,
    pub n: usize,
    pub m_list: Vec<usize>,
    pub backward_energy: DMatrix<f64>,
    pub truncated: Vec<DMatrix<f64>>,
    pub localized: DMatrix<f64>,
    pub localized_h1: DMatrix<f64>,
    pub beta: Vec<f64>,
}

/// One backward sweep per `F_N` direction (done together as a matrix sweep).
pub fn build_forms(
    space: &SpectralSpace,
    propagator: &Propagator,
    chi: &ChiMask,
    n: usize,
    m_list: &[usize],
) -> Result<ObservabilityForms> {
    let k = space.dim();
    if n > k {
        return Err(Error::invalid("N", format!("{n} exceeds K = {k}")));
    }
    if m_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("control.m_list", "must be strictly increasing"));
    }
    let m_max = m_list.last().copied().unwrap_or(0);
    let act = Actuator::build(space, chi, m_max)?;
    let a = act.matrix();
    let w = chi.l2_gram(space);
    let w1 = chi.h1_gram(space);
    let dt = propagator.dt();

    let mut truncated = vec![DMatrix::zeros(n, n); m_list.len()];
    let mut localized = DMatrix::zeros(n, n);
    let mut localized_h1 = DMatrix::zeros(n, n);
    let terminal = DMatrix::identity(k, n);
    let y0 = propagator.adjoint_sweep(&terminal, |_, z| {
        let out = a.tr_mul(z);
        for (form, &m) in truncated.iter_mut().zip(m_list) {
            let rows = out.rows(0, m);
            *form += rows.tr_mul(&rows) * dt;
        }
        localized += z.tr_mul(&(&w * z)) * dt;
        localized_h1 += z.tr_mul(&(&w1 * z)) * dt;
    });
    Ok(ObservabilityForms {
        tau: propagator.tau(),
        n,
        m_list: m_list.to_vec(),
        backward_energy: symmetrize(&y0.tr_mul(&y0)),
        truncated: truncated.iter().map(symmetrize).collect(),
        localized: symmetrize(&localized),
        localized_h1: symmetrize(&localized_h1),
        beta: m_list.iter().map(|&m| space.beta(m)).collect(),
    })
}

impl ObservabilityForms {
    fn constant(&self, form: &DMatrix<f64>, rtol: f64) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        max_generalized_eig(&self.backward_energy, form, rtol).unwrap_or(f64::INFINITY)
    }

    /// `D(M)` for the `idx`-th entry of the M list; infinite when unobservable.
    pub fn truncated_constant(&self, idx: usize, rtol: f64) -> f64 {
        self.constant(&self.truncated[idx], rtol)
    }

    /// `D(inf)` from the untruncated localized output.
    pub fn localized_constant(&self, rtol: f64) -> f64 {
        self.constant(&self.localized, rtol)
    }

    /// `sup int |chi q|^2_{H^1} / int |chi q|^2` over `F_N`.
    pub fn h1_l2_ratio(&self, rtol: f64) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        max_generalized_eig(&self.localized_h1, &self.localized, rtol).unwrap_or(f64::INFINITY)
    }

    pub fn table(&self, rtol: f64) -> Vec<(usize, f64)> {
        (0..self.m_list.len())
            .map(|i| (self.m_list[i], self.truncated_constant(i, rtol)))
            .collect()
    }

    /// Relative slack of `|q(tau)|^2 <= D int |P_M(chi q)|^2` for one terminal datum.
    pub fn truncated_violation(&self, idx: usize, d: f64, c: &DVector<f64>) -> f64 {
        let lhs = c.dot(&(&self.backward_energy * c));
        let rhs = d * c.dot(&(&self.truncated[idx] * c));
        (lhs - rhs) / lhs.max(f64::MIN_POSITIVE)
    }

    /// Relative slack of `int |chi q|^2 <= int |P_M(chi q)|^2 + beta_M^{-1} int |chi q|^2_{H^1}`.
    pub fn bound_chain_violation(&self, idx: usize, c: &DVector<f64>) -> f64 {
        let lhs = c.dot(&(&self.localized * c));
        let rhs = c.dot(&(&self.truncated[idx] * c)) + c.dot(&(&self.localized_h1 * c)) / self.beta[idx];
        (lhs - rhs) / lhs.max(f64::MIN_POSITIVE)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ObservabilityReport {
    pub tau: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub m_list: Vec<usize>,
    /// `D(M)` per listed M (null when infinite)
    pub d_table: Vec<Option<f64>>,
    pub d_inf: Option<f64>,
    #[serde(rename = "M1")]
    pub m1: Option<usize>,
    pub c_h1l2: Option<f64>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Smallest listed M with `D(M) <= slack * D(inf)`.
pub fn select_m1(forms: &ObservabilityForms, slack: f64, rtol: f64) -> Result<usize> {
    if slack.is_nan() || slack < 1.0 {
        return Err(Error::invalid("control.slack", "must be >= 1"));
    }
    let d_inf = forms.localized_constant(rtol);
    if !d_inf.is_finite() {
        return Err(Error::Unobservable(format!(
            "localized output does not observe F_N (N = {})",
            forms.n
        )));
    }
    let table = forms.table(rtol);
    for &(m, d) in &table {
        if d.is_finite() && (slack.is_infinite() || d <= slack * d_inf) {
            return Ok(m);
        }
    }
    // excess D(M)/D(inf) - 1 decays like c / beta_M
    let estimate = table
        .iter()
        .zip(&forms.beta)
        .rev()
        .find(|((_, d), _)| d.is_finite())
        .map(|((_, d), &b)| (d / d_inf - 1.0) * b / (slack - 1.0));
    Err(Error::InsufficientM {
        slack,
        estimate: estimate.map(|need| forms.m_list.last().copied().unwrap_or(0).max(estimate_count(need))),
    })
}

/// Rough count of control modes with `beta <= need` (two per lattice point).
fn estimate_count(need: f64) -> usize {
    (2.0 * std::f64::consts::PI * need).ceil() as usize
}

pub fn report(forms: &ObservabilityForms, slack: f64, rtol: f64) -> ObservabilityReport {
    ObservabilityReport {
        tau: forms.tau,
        n: forms.n,
        m_list: forms.m_list.clone(),
        d_table: forms.table(rtol).into_iter().map(|(_, d)| finite(d)).collect(),
        d_inf: finite(forms.localized_constant(rtol)),
        m1: select_m1(forms, slack, rtol).ok(),
        c_h1l2: finite(forms.h1_l2_ratio(rtol)),
    }
}
