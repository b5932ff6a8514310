//! Experiment configuration (JSON) and the objects it builds.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{ReferenceComponent, ReferenceTrajectory, Schedule};
use crate::error::{Error, Result};
use crate::feedback::RiccatiOptions;
use crate::spectral::{ChiMask, ChiShape, Parity, SpectralSpace};
use crate::stabilizer::Setup;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub nu: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub grid_n: usize,
}

/// One Stokes mode with its coefficient in a reference direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeCoefficient {
    pub k: [i32; 2],
    pub parity: Parity,
    pub coefficient: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentConfig {
    pub modes: Vec<ModeCoefficient>,
    pub schedule: Schedule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub components: Vec<ComponentConfig>,
    pub horizon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChiConfig {
    pub center: [f64; 2],
    pub radius: f64,
    pub sharpness: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub lambda: f64,
    pub lambda_hat_factor: f64,
    #[serde(rename = "M_list")]
    pub m_list: Vec<usize>,
    #[serde(rename = "N_max")]
    pub n_max: usize,
    pub slack: f64,
    /// smallness gate on `|v0|_V` for the nonlinear loop
    pub epsilon_star: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    #[serde(rename = "T_h")]
    pub t_h: f64,
    /// number of unit intervals simulated
    pub n_max: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    pub pinv_rtol: f64,
    pub null_tol: f64,
    pub riccati_cap: f64,
}

/// Sizes of the random batches and of the basin sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub samples: usize,
    pub directions: usize,
    /// `|v0|_V` values of the basin sweep, increasing
    pub scales: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub space: SpaceConfig,
    pub reference: ReferenceConfig,
    pub chi: ChiConfig,
    pub control: ControlConfig,
    pub time: TimeConfig,
    pub tolerances: ToleranceConfig,
    pub sweep: SweepConfig,
    pub seed: u64,
    pub output: String,
}

fn bad(path: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_string(),
        reason: reason.into(),
    }
}

fn positive(path: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(bad(path, format!("must be positive and finite, got {x}")))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| bad("$", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| bad("$", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        positive("space.nu", self.space.nu)?;
        if self.space.k == 0 {
            return Err(bad("space.K", "must be at least 1"));
        }
        let need = SpectralSpace::min_grid(self.space.k);
        if self.space.grid_n < need {
            return Err(bad("space.grid_n", format!("must be at least {need} for K = {}", self.space.k)));
        }
        positive("reference.horizon", self.reference.horizon)?;
        for (i, c) in self.reference.components.iter().enumerate() {
            c.schedule
                .validate()
                .map_err(|e| bad(&format!("reference.components[{i}].schedule"), e.to_string()))?;
            for (j, m) in c.modes.iter().enumerate() {
                if m.k == [0, 0] || !m.coefficient.is_finite() {
                    return Err(bad(
                        &format!("reference.components[{i}].modes[{j}]"),
                        "needs k != 0 and a finite coefficient",
                    ));
                }
            }
        }
        positive("chi.radius", self.chi.radius)?;
        if self.chi.radius > std::f64::consts::PI {
            return Err(bad("chi.radius", "must not exceed pi"));
        }
        positive("chi.sharpness", self.chi.sharpness)?;
        if !self.chi.center.iter().all(|c| c.is_finite()) {
            return Err(bad("chi.center", "must be finite"));
        }
        positive("control.lambda", self.control.lambda)?;
        if !(self.control.lambda_hat_factor >= 1.0 && self.control.lambda_hat_factor.is_finite()) {
            return Err(bad("control.lambda_hat_factor", "must be at least 1"));
        }
        if self.control.m_list.is_empty() || self.control.m_list.windows(2).any(|w| w[0] >= w[1]) || self.control.m_list[0] == 0 {
            return Err(bad("control.M_list", "must be nonempty, positive and strictly increasing"));
        }
        if !(self.control.slack >= 1.0 && self.control.slack.is_finite()) {
            return Err(bad("control.slack", "must be at least 1"));
        }
        positive("control.epsilon_star", self.control.epsilon_star)?;
        positive("time.dt", self.time.dt)?;
        let per_unit = (1.0 / self.time.dt).round();
        if (per_unit * self.time.dt - 1.0).abs() > 1e-12 {
            return Err(bad("time.dt", "1/dt must be an integer"));
        }
        positive("time.T_h", self.time.t_h)?;
        let th_steps = (self.time.t_h / self.time.dt).round();
        if (th_steps * self.time.dt - self.time.t_h).abs() > 1e-9 * self.time.t_h {
            return Err(bad("time.T_h", "must be a multiple of dt"));
        }
        if self.time.n_max == 0 || (self.time.n_max as f64) + 1.0 > self.time.t_h {
            return Err(bad("time.n_max", "must be positive and leave at least one unit before T_h"));
        }
        positive("tolerances.pinv_rtol", self.tolerances.pinv_rtol)?;
        positive("tolerances.null_tol", self.tolerances.null_tol)?;
        positive("tolerances.riccati_cap", self.tolerances.riccati_cap)?;
        if self.sweep.samples == 0 || self.sweep.directions == 0 {
            return Err(bad("sweep", "samples and directions must be positive"));
        }
        if self.sweep.scales.is_empty()
            || self.sweep.scales.windows(2).any(|w| !(w[0] < w[1]))
            || self.sweep.scales.iter().any(|s| !(*s >= 0.0))
        {
            return Err(bad("sweep.scales", "must be nonempty, nonnegative and increasing"));
        }
        if self.output.is_empty() {
            return Err(bad("output", "must name a directory"));
        }
        Ok(())
    }

    pub fn space(&self) -> Result<SpectralSpace> {
        SpectralSpace::new(self.space.k, self.space.grid_n, self.space.nu)
    }

    pub fn reference(&self, space: &SpectralSpace) -> Result<ReferenceTrajectory> {
        let mut comps = Vec::new();
        for (i, c) in self.reference.components.iter().enumerate() {
            let mut d = DVector::zeros(space.dim());
            for (j, m) in c.modes.iter().enumerate() {
                let (idx, sign) = space.stokes_index(m.k, m.parity).ok_or_else(|| {
                    bad(
                        &format!("reference.components[{i}].modes[{j}]"),
                        format!("mode {:?} is not among the K retained modes", m.k),
                    )
                })?;
                d[idx] += sign * m.coefficient;
            }
            comps.push(ReferenceComponent {
                direction: d,
                schedule: c.schedule.clone(),
            });
        }
        ReferenceTrajectory::new(space, comps, self.reference.horizon)
    }

    pub fn chi(&self, space: &SpectralSpace) -> Result<ChiMask> {
        ChiMask::new(
            space,
            ChiShape::Bump {
                center: self.chi.center,
                radius: self.chi.radius,
            },
            self.chi.sharpness,
        )
    }

    pub fn setup<'a>(&self, space: &'a SpectralSpace, reference: &'a ReferenceTrajectory, chi: &'a ChiMask) -> Setup<'a> {
        Setup {
            space,
            reference,
            chi,
            dt: self.time.dt,
            m_list: self.control.m_list.clone(),
            slack: self.control.slack,
            pinv_rtol: self.tolerances.pinv_rtol,
            null_tol: self.tolerances.null_tol,
            n_cap: self.control.n_max,
        }
    }

    pub fn riccati_options(&self) -> RiccatiOptions {
        RiccatiOptions {
            horizon: self.time.t_h,
            dt: self.time.dt,
            cap: self.tolerances.riccati_cap,
        }
    }
}

/// The checked-in default configuration.
pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.json");

pub fn default_config() -> ExperimentConfig {
    ExperimentConfig::from_json(DEFAULT_CONFIG).expect("shipped default config is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_bit_identically() {
        let c = default_config();
        let text = c.to_json();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_json(), text);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = default_config();
        c.time.dt = 0.3;
        match c.validate() {
            Err(Error::Config { path, .. }) => assert_eq!(path, "time.dt"),
            other => panic!("{other:?}"),
        }
        let mut c = default_config();
        c.control.m_list = vec![16, 8];
        assert!(matches!(c.validate(), Err(Error::Config { path, .. }) if path == "control.M_list"));
        let text = default_config().to_json().replace("\"nu\"", "\"viscosity\"");
        assert!(matches!(ExperimentConfig::from_json(&text), Err(Error::Config { .. })));
    }

    #[test]
    fn default_builds_the_taylor_green_reference() {
        let c = default_config();
        let s = c.space().unwrap();
        let r = c.reference(&s).unwrap();
        let tg = crate::dynamics::taylor_green_direction(&s).unwrap();
        let d = &r.components()[0].direction;
        assert!((d - tg).norm() < 1e-12);
    }
}
