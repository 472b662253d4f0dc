//! Run configuration: a JSON document with strict keys and documented defaults.
//!
//! Frequencies in `ramp` are given in the units of `convention`; the Rabi
//! frequency is always in rad/μs, rates in 1/ms and durations of the bath
//! and heating models in ms.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bath::BathSpec;
use crate::error::{Error, Result};
use crate::filter::{FilterParams, DEFAULT_ETA, DEFAULT_RABI_BASE};
use crate::model::{FockTruncation, FrequencyConvention, ThermalState};
use crate::propagator::{RampSchedule, RampShape, DEFAULT_INTEGRATOR_TOL};
use crate::protocol::{CycleTiming, FilterModel, HeatingModel, ProtocolConfig};
use crate::work::DEFAULT_COLUMN_TOL;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub convention: FrequencyConvention,
    pub ramp: RampConfig,
    pub thermal: ThermalConfig,
    #[serde(default)]
    pub truncation: TruncationConfig,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub protocol: ProtocolBlock,
    #[serde(default)]
    pub bath: BathConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampConfig {
    pub omega_initial: f64,
    pub omega_final: f64,
    /// μs.
    pub tau: f64,
    #[serde(default)]
    pub shape: RampShape,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalConfig {
    pub nbar: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TruncationConfig {
    pub n_max: usize,
    pub n_max_limit: usize,
    pub leakage_tol: f64,
    pub integrator_tol: f64,
    /// Bound on the relative error of the exponential work average from omitted initial levels.
    pub column_tol: f64,
    /// Initial levels reported by `transitions`.
    pub n_report: usize,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        TruncationConfig {
            n_max: 64,
            n_max_limit: 1024,
            leakage_tol: 1e-8,
            integrator_tol: DEFAULT_INTEGRATOR_TOL,
            column_tol: DEFAULT_COLUMN_TOL,
            n_report: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub m_test: usize,
    pub cycles: usize,
    pub eta: f64,
    /// rad/μs.
    pub rabi_base: f64,
    pub efficiency: f64,
    /// Input levels reported by `filter`.
    pub n_report: usize,
    /// S–D linewidth in rad/μs; only checked against the trap frequency.
    pub linewidth_d: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            m_test: 3,
            cycles: 10,
            eta: DEFAULT_ETA,
            rabi_base: DEFAULT_RABI_BASE,
            efficiency: 1.0,
            n_report: 12,
            linewidth_d: 1.0 / 1.2e6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolBlock {
    /// Accepted shots.
    pub samples: usize,
    pub max_attempts: u64,
    pub ideal_filter: bool,
    /// m_test grid `0..=n_report`; resolved from the thermal state when absent.
    pub n_report: Option<usize>,
    /// Phonons per ms.
    pub heating_rate: f64,
    /// ms.
    pub heating_dwell: f64,
    pub timing: CycleTiming,
}

impl Default for ProtocolBlock {
    fn default() -> Self {
        ProtocolBlock {
            samples: 100_000,
            max_attempts: 1 << 32,
            ideal_filter: true,
            n_report: None,
            heating_rate: 0.0,
            heating_dwell: 0.0,
            timing: CycleTiming::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BathConfig {
    /// 1/ms.
    pub gamma: f64,
    pub n_env: f64,
    /// ms.
    pub duration: f64,
}

impl Default for BathConfig {
    fn default() -> Self {
        BathConfig {
            gamma: 1.0,
            n_env: 0.0,
            duration: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    #[default]
    Both,
}

impl OutputFormat {
    pub fn csv(self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, OutputFormat::Json | OutputFormat::Both)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub format: OutputFormat,
    pub svg: bool,
}

/// Reads and validates a configuration file; defaults are materialized.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config(format!("at `{path}`: {}", e.into_inner()))
    })?;
    cfg.resolve()?;
    Ok(cfg)
}

impl RunConfig {
    /// Validates every block and fills values that depend on other blocks.
    pub fn resolve(&mut self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.ramp.omega_initial) || !positive(self.ramp.omega_final) {
            return bad("ramp frequencies must be positive".into());
        }
        if !positive(self.ramp.tau) {
            return bad("ramp.tau must be positive".into());
        }
        if !(self.thermal.nbar >= 0.0 && self.thermal.nbar.is_finite()) {
            return bad("thermal.nbar must be >= 0".into());
        }
        let t = &self.truncation;
        if t.n_max < 4 || t.n_max_limit < t.n_max {
            return bad("truncation.n_max must be >= 4 and <= n_max_limit".into());
        }
        for (name, v) in [
            ("leakage_tol", t.leakage_tol),
            ("integrator_tol", t.integrator_tol),
            ("column_tol", t.column_tol),
        ] {
            if !positive(v) {
                return bad(format!("truncation.{name} must be positive"));
            }
        }
        self.filter_params().validate().map_err(|e| Error::Config(format!("filter: {e}")))?;
        if self.filter.cycles == 0 {
            return bad("filter.cycles must be >= 1".into());
        }
        let omega0 = self.omega_initial();
        if !(self.filter.linewidth_d >= 0.0 && self.filter.linewidth_d < 1e-3 * omega0.min(self.omega_final())) {
            return bad("filter.linewidth_d must be much smaller than the trap frequency".into());
        }
        let p = &self.protocol;
        if p.samples == 0 || p.max_attempts == 0 {
            return bad("protocol.samples and protocol.max_attempts must be >= 1".into());
        }
        if !(p.heating_rate >= 0.0 && p.heating_dwell >= 0.0) {
            return bad("protocol heating rate and dwell must be >= 0".into());
        }
        if self.protocol.n_report.is_none() {
            let th = self.thermal_state()?;
            self.protocol.n_report = Some(th.levels_for_tail(1e-4).max(2));
        }
        let b = &self.bath;
        if !(b.gamma >= 0.0 && b.n_env >= 0.0 && b.duration >= 0.0) {
            return bad("bath gamma, n_env and duration must be >= 0".into());
        }
        Ok(())
    }

    pub fn omega_initial(&self) -> f64 {
        self.convention.to_angular(self.ramp.omega_initial)
    }

    pub fn omega_final(&self) -> f64 {
        self.convention.to_angular(self.ramp.omega_final)
    }

    pub fn ramp_schedule(&self) -> Result<RampSchedule> {
        RampSchedule::new(self.omega_initial(), self.omega_final(), self.ramp.tau)
    }

    pub fn thermal_state(&self) -> Result<ThermalState> {
        ThermalState::new(self.thermal.nbar, self.omega_initial())
    }

    pub fn fock_truncation(&self) -> FockTruncation {
        FockTruncation {
            n_max: self.truncation.n_max,
            leakage_tol: self.truncation.leakage_tol,
            n_max_limit: self.truncation.n_max_limit,
        }
    }

    pub fn filter_params(&self) -> FilterParams {
        FilterParams {
            eta: self.filter.eta,
            rabi_base: self.filter.rabi_base,
            efficiency: self.filter.efficiency,
        }
    }

    pub fn protocol_config(&self) -> Result<ProtocolConfig> {
        let p = &self.protocol;
        let mut cfg = ProtocolConfig::new(self.thermal_state()?, self.ramp_schedule()?, p.samples, self.seed);
        cfg.trunc = self.fock_truncation();
        cfg.integrator_tol = self.truncation.integrator_tol;
        cfg.max_attempts = p.max_attempts;
        if let Some(n) = p.n_report {
            cfg.n_report = n;
        }
        if !p.ideal_filter {
            cfg.filter = FilterModel::Pulsed {
                params: self.filter_params(),
                cycles: self.filter.cycles,
            };
        }
        if p.heating_rate * p.heating_dwell > 0.0 {
            cfg.heating = Some(HeatingModel {
                rate: p.heating_rate,
                dwell: p.heating_dwell,
            });
        }
        Ok(cfg)
    }

    pub fn bath_spec(&self) -> Result<BathSpec> {
        BathSpec::new(self.bath.gamma, self.bath.n_env, self.omega_initial())
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// SHA-256 of the compact canonical JSON of the resolved config.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(&self.to_value()).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
