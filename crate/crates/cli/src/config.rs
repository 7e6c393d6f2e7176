//! Resolved per-command configurations.
//!
//! Every subcommand resolves to one of these structs before any computation
//! starts: defaults, then an optional JSON config file, then explicit
//! command-line flags, in increasing precedence.  The resolved struct is
//! embedded verbatim in the output metadata and identifies a sweep for
//! resume purposes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use photonet_core::certifier::DEFAULT_LP_TOL;
use photonet_core::{HeraldingSpec, NoiseParams, PovmVariant, TrainingConfig};

use crate::CliError;

/// A full job description: subcommand plus its parameters, as accepted by
/// `photonet run --config job.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "params", rename_all = "kebab-case")]
pub enum RunConfig {
    Dist(DistConfig),
    LpScan(LpScanConfig),
    Fit(FitConfig),
    NoiseSweep(NoiseSweepConfig),
    Ring(RingConfig),
    Herald(HeraldConfig),
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        match self {
            RunConfig::Dist(c) => c.validate(),
            RunConfig::LpScan(c) => c.validate(),
            RunConfig::Fit(c) => c.validate(),
            RunConfig::NoiseSweep(c) => c.validate(),
            RunConfig::Ring(c) => c.validate(),
            RunConfig::Herald(c) => c.validate(),
        }
    }
}

/// Parses a config file into `T`, rejecting unknown fields.
pub fn load_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("invalid config {}: {e}", path.display())))
}

fn check_range(name: &str, value: f64, lo: f64, hi: f64) -> Result<(), CliError> {
    if !(value >= lo && value <= hi) {
        return Err(CliError::Validation(format!(
            "{name} = {value} outside [{lo}, {hi}]"
        )));
    }
    Ok(())
}

/// Inclusive arithmetic grid; the step count is fixed up front so float
/// accumulation cannot change the grid length.
pub fn grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(step > 0.0) || !min.is_finite() || !max.is_finite() || max < min {
        return Err(CliError::Validation(format!(
            "invalid grid [{min}, {max}] step {step}"
        )));
    }
    let count = ((max - min) / step + 1.5).floor() as usize;
    Ok((0..count).map(|i| min + i as f64 * step).collect())
}

fn default_phases() -> Vec<f64> {
    vec![0.0; 3]
}

fn one() -> f64 {
    1.0
}

// ── dist ───────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistConfig {
    /// Beamsplitter transmissivity shared by all parties.
    pub t: f64,
    /// Per-party measurement phases.
    pub phases: Vec<f64>,
    pub variant: PovmVariant,
    pub noise: NoiseParams,
}

impl Default for DistConfig {
    fn default() -> Self {
        Self {
            t: 0.5,
            phases: default_phases(),
            variant: PovmVariant::Passive,
            noise: NoiseParams::ideal(),
        }
    }
}

impl DistConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_range("t", self.t, 0.0, 1.0)?;
        if self.phases.len() != 3 {
            return Err(CliError::Validation(format!(
                "triangle needs exactly 3 phases, got {}",
                self.phases.len()
            )));
        }
        self.noise
            .validate()
            .map_err(|e| CliError::Validation(e.to_string()))
    }
}

// ── lp-scan ────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LpScanConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub t_step: f64,
    /// Width to which each feasible/infeasible transition is bisected.
    pub boundary_precision: f64,
    pub tolerance: f64,
}

impl Default for LpScanConfig {
    fn default() -> Self {
        Self {
            t_min: 0.0,
            t_max: 1.0,
            t_step: 0.05,
            boundary_precision: 1e-4,
            tolerance: DEFAULT_LP_TOL,
        }
    }
}

impl LpScanConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_range("t_min", self.t_min, 0.0, 1.0)?;
        check_range("t_max", self.t_max, 0.0, 1.0)?;
        grid(self.t_min, self.t_max, self.t_step)?;
        if !(self.boundary_precision > 0.0) || !(self.tolerance > 0.0) {
            return Err(CliError::Validation(
                "boundary_precision and tolerance must be positive".into(),
            ));
        }
        Ok(())
    }
}

// ── fit ────────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub t_step: f64,
    /// Werner visibilities of the sources, one sweep column per value.
    pub visibilities: Vec<f64>,
    pub phases: Vec<f64>,
    pub variant: PovmVariant,
    pub training: TrainingConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            t_min: 0.0,
            t_max: 1.0,
            t_step: 0.05,
            visibilities: vec![1.0, 0.9, 0.8, 0.7, 0.6, 0.5],
            phases: default_phases(),
            variant: PovmVariant::Passive,
            training: TrainingConfig::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        grid(self.t_min, self.t_max, self.t_step)?;
        check_range("t_min", self.t_min, 0.0, 1.0)?;
        check_range("t_max", self.t_max, 0.0, 1.0)?;
        if self.visibilities.is_empty() {
            return Err(CliError::Validation("visibilities must be non-empty".into()));
        }
        for &r in &self.visibilities {
            check_range("visibility", r, 0.0, 1.0)?;
        }
        if self.phases.len() != 3 {
            return Err(CliError::Validation(format!(
                "triangle needs exactly 3 phases, got {}",
                self.phases.len()
            )));
        }
        self.training
            .validate()
            .map_err(|e| CliError::Validation(e.to_string()))
    }
}

// ── noise-sweep ────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSweepConfig {
    pub t: f64,
    /// Heralding impurity held fixed across the sweep.
    pub impurity: f64,
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_step: f64,
    #[serde(default = "one")]
    pub werner_visibility: f64,
    pub fidelity: photonet_core::ChannelFidelity,
    pub phases: Vec<f64>,
    pub training: TrainingConfig,
}

impl Default for NoiseSweepConfig {
    fn default() -> Self {
        Self {
            t: 0.85,
            impurity: 0.006875,
            grid_min: 0.94,
            grid_max: 1.0,
            grid_step: 0.01,
            werner_visibility: 1.0,
            fidelity: photonet_core::ChannelFidelity::Exact,
            phases: default_phases(),
            training: TrainingConfig::default(),
        }
    }
}

impl NoiseSweepConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_range("t", self.t, 0.0, 1.0)?;
        check_range("impurity", self.impurity, 0.0, 1.0)?;
        check_range("grid_min", self.grid_min, 0.0, 1.0)?;
        check_range("grid_max", self.grid_max, 0.0, 1.0)?;
        check_range("werner_visibility", self.werner_visibility, 0.0, 1.0)?;
        grid(self.grid_min, self.grid_max, self.grid_step)?;
        if self.phases.len() != 3 {
            return Err(CliError::Validation(format!(
                "triangle needs exactly 3 phases, got {}",
                self.phases.len()
            )));
        }
        self.training
            .validate()
            .map_err(|e| CliError::Validation(e.to_string()))
    }
}

// ── ring ───────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RingConfig {
    /// Ring sizes to process.
    pub parties: Vec<usize>,
    /// When set, emit the outcome distribution at this single transmissivity
    /// instead of scanning feasibility verdicts.
    pub t: Option<f64>,
    pub t_min: f64,
    pub t_max: f64,
    pub t_step: f64,
    pub variant: PovmVariant,
    pub tolerance: f64,
}

impl Default for RingConfig {
    fn default() -> Self {
        Self {
            parties: vec![3, 4, 5],
            t: None,
            t_min: 0.0,
            t_max: 1.0,
            t_step: 0.05,
            variant: PovmVariant::Passive,
            tolerance: DEFAULT_LP_TOL,
        }
    }
}

impl RingConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.parties.is_empty() {
            return Err(CliError::Validation("parties must be non-empty".into()));
        }
        for &n in &self.parties {
            if !(3..=photonet_core::distribution::MAX_RING_PARTIES).contains(&n) {
                return Err(CliError::Validation(format!(
                    "ring size {n} outside 3..={}",
                    photonet_core::distribution::MAX_RING_PARTIES
                )));
            }
        }
        match self.t {
            Some(t) => check_range("t", t, 0.0, 1.0)?,
            None => {
                check_range("t_min", self.t_min, 0.0, 1.0)?;
                check_range("t_max", self.t_max, 0.0, 1.0)?;
                grid(self.t_min, self.t_max, self.t_step)?;
            }
        }
        if !(self.tolerance > 0.0) {
            return Err(CliError::Validation("tolerance must be positive".into()));
        }
        Ok(())
    }
}

// ── herald ─────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeraldConfig {
    pub spec: HeraldingSpec,
}

impl Default for HeraldConfig {
    fn default() -> Self {
        Self {
            spec: HeraldingSpec {
                pair_emission: 0.01,
                detector_efficiency: 0.7,
                pixel_count: 8,
                pulse_rate: 1e7,
            },
        }
    }
}

impl HeraldConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.spec
            .validate()
            .map_err(|e| CliError::Validation(e.to_string()))
    }
}
