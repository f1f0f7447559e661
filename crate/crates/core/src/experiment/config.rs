//! TOML experiment configuration: parsing, unknown-key detection, and
//! whole-file validation that reports every violation at once.

use crate::error::{Error, Result};
use crate::params::{ErrorMode, ScheduleKnobs};
use crate::spectral::MultiIndex;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeCoeff {
    pub mode: Vec<u32>,
    pub coeff: f64,
}

/// Named source-term recipes; `decay` is G(x,t) = e^{-rate t} Σ coeff ψ_mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SourceRecipe {
    None,
    Decay { rate: f64, modes: Vec<ModeCoeff> },
}

/// Named diffusion-coefficient recipes, both inside the (A0, A1) band.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LambdaRecipe {
    Constant { value: f64 },
    Sinusoid { mean: f64, amplitude: f64, period: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthConfig {
    /// Initial state as a sum of at most five modes.
    pub u0: Vec<ModeCoeff>,
    pub source: SourceRecipe,
    pub lambda: LambdaRecipe,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub alpha0: f64,
    pub delta0: f64,
    pub m0: f64,
    pub m1: f64,
    pub gamma: f64,
    pub mu: Vec<f64>,
    pub mu0: f64,
    #[serde(default = "default_c_mu")]
    pub c_mu: f64,
}

fn default_c_mu() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub v_max: f64,
    pub vartheta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorConfig {
    pub a0: f64,
    pub a1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Uniform time steps over [0, T].
    pub steps: usize,
    /// Galerkin cutoff of the forward (truth) solve.
    #[serde(default = "default_forward_beta")]
    pub forward_beta: f64,
    #[serde(default = "default_true")]
    pub nonlinear: bool,
}

fn default_forward_beta() -> f64 {
    64.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    L2,
    H1,
}

impl ModeName {
    pub fn as_error_mode(self) -> ErrorMode {
        match self {
            ModeName::L2 => ErrorMode::L2,
            ModeName::H1 => ErrorMode::H1,
        }
    }
}

fn default_mode() -> ModeName {
    ModeName::L2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dimension: usize,
    pub horizon: f64,
    /// One grid-count vector per study cell axis.
    pub counts: Vec<Vec<usize>>,
    pub eps: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: ModeName,
    /// Times at which errors are recorded; defaults to [0, T/2].
    #[serde(default)]
    pub error_times: Option<Vec<f64>>,
    pub truth: TruthConfig,
    pub schedule: ScheduleConfig,
    pub noise: NoiseConfig,
    pub operator: OperatorConfig,
    pub solver: SolverConfig,
}

impl ExperimentConfig {
    pub fn knobs(&self) -> ScheduleKnobs {
        ScheduleKnobs {
            alpha0: self.schedule.alpha0,
            delta0: self.schedule.delta0,
            m0: self.schedule.m0,
            m1: self.schedule.m1,
            gamma: self.schedule.gamma,
            horizon: self.horizon,
            a0: self.operator.a0,
            a1: self.operator.a1,
            mu: self.schedule.mu.clone(),
            mu0: self.schedule.mu0,
        }
    }

    pub fn error_times_or_default(&self) -> Vec<f64> {
        match &self.error_times {
            Some(ts) => ts.clone(),
            None => vec![0.0, self.horizon / 2.0],
        }
    }

    /// Every violated invariant, collected (never just the first).
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.dimension == 0 {
            bad.push("dimension must be >= 1".to_string());
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            bad.push("horizon must be positive and finite".to_string());
        }
        if self.counts.is_empty() {
            bad.push("counts must list at least one grid".to_string());
        }
        for (i, c) in self.counts.iter().enumerate() {
            if c.len() != self.dimension {
                bad.push(format!("counts[{i}] must have {} entries", self.dimension));
            }
            if c.iter().any(|&n| n == 0) {
                bad.push(format!("counts[{i}] entries must be >= 1"));
            }
        }
        if self.eps.is_empty() {
            bad.push("eps must list at least one noise level".to_string());
        }
        if self.eps.iter().any(|&e| !(e >= 0.0)) {
            bad.push("every eps must be >= 0".to_string());
        }
        if self.replicates == 0 {
            bad.push("replicates must be >= 1".to_string());
        }
        if let Some(ts) = &self.error_times {
            if ts.is_empty() {
                bad.push("error_times must not be empty".to_string());
            }
            if ts.iter().any(|&t| !(0.0 <= t && t <= self.horizon)) {
                bad.push("every error time must lie in [0, horizon]".to_string());
            }
        }
        if let Err(Error::ConfigInvalid(mut v)) = self.knobs().validate(self.dimension) {
            bad.append(&mut v);
        }
        self.validate_truth(&mut bad);
        if !(self.noise.v_max >= 0.0) {
            bad.push("noise.v_max must be >= 0".to_string());
        }
        if !(0.0 <= self.noise.vartheta && self.noise.vartheta <= self.noise.v_max) {
            bad.push("noise.vartheta must satisfy 0 <= vartheta <= v_max".to_string());
        }
        if self.solver.steps == 0 {
            bad.push("solver.steps must be >= 1".to_string());
        }
        if !(self.solver.forward_beta >= 1.0) {
            bad.push("solver.forward_beta must be >= 1".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(bad))
        }
    }

    fn check_modes(&self, modes: &[ModeCoeff], what: &str, bad: &mut Vec<String>) {
        for mc in modes {
            match MultiIndex::new(mc.mode.clone()) {
                Ok(p) => {
                    if p.dim() != self.dimension {
                        bad.push(format!("{what}: mode {:?} has wrong dimension", mc.mode));
                    } else if (p.norm_sq() as f64) > self.solver.forward_beta {
                        bad.push(format!(
                            "{what}: mode {:?} lies outside the forward Galerkin cutoff (|p|^2 > forward_beta)",
                            mc.mode
                        ));
                    }
                }
                Err(_) => bad.push(format!("{what}: mode {:?} is not a valid multi-index", mc.mode)),
            }
            if !mc.coeff.is_finite() {
                bad.push(format!("{what}: coefficient for mode {:?} must be finite", mc.mode));
            }
        }
    }

    fn validate_truth(&self, bad: &mut Vec<String>) {
        if self.truth.u0.is_empty() || self.truth.u0.len() > 5 {
            bad.push("truth.u0 must contain between 1 and 5 modes".to_string());
        }
        self.check_modes(&self.truth.u0, "truth.u0", bad);
        match &self.truth.source {
            SourceRecipe::None => {}
            SourceRecipe::Decay { rate, modes } => {
                if !rate.is_finite() {
                    bad.push("truth.source.rate must be finite".to_string());
                }
                if modes.is_empty() || modes.len() > 5 {
                    bad.push("truth.source.modes must contain between 1 and 5 modes".to_string());
                }
                self.check_modes(modes, "truth.source", bad);
            }
        }
        let (lo, hi) = (self.operator.a0, self.operator.a1);
        match &self.truth.lambda {
            LambdaRecipe::Constant { value } => {
                if !(lo <= *value && *value < hi) {
                    bad.push(format!("truth.lambda: constant {value} must lie in [A0, A1) = [{lo}, {hi})"));
                }
            }
            LambdaRecipe::Sinusoid { mean, amplitude, period } => {
                if !(*amplitude >= 0.0) {
                    bad.push("truth.lambda: amplitude must be >= 0".to_string());
                }
                if !(*period > 0.0) {
                    bad.push("truth.lambda: period must be > 0".to_string());
                }
                if !(lo <= mean - amplitude && mean + amplitude < hi) {
                    bad.push(format!(
                        "truth.lambda: range [{}, {}] must lie in [A0, A1) = [{lo}, {hi})",
                        mean - amplitude,
                        mean + amplitude
                    ));
                }
            }
        }
    }
}

/// Keys accepted at each table path; everything else is an unknown key.
fn allowed_keys(path: &str) -> Option<&'static [&'static str]> {
    match path {
        "" => Some(&[
            "dimension", "horizon", "counts", "eps", "replicates", "seed", "mode", "error_times", "truth",
            "schedule", "noise", "operator", "solver",
        ]),
        "truth" => Some(&["u0", "source", "lambda"]),
        "truth.u0" => Some(&["mode", "coeff"]),
        "truth.source" => Some(&["kind", "rate", "modes"]),
        "truth.source.modes" => Some(&["mode", "coeff"]),
        "truth.lambda" => Some(&["kind", "value", "mean", "amplitude", "period"]),
        "schedule" => Some(&["alpha0", "delta0", "m0", "m1", "gamma", "mu", "mu0", "c_mu"]),
        "noise" => Some(&["v_max", "vartheta"]),
        "operator" => Some(&["a0", "a1"]),
        "solver" => Some(&["steps", "forward_beta", "nonlinear"]),
        _ => None,
    }
}

fn scan_unknown(value: &toml::Value, path: &str, unknown: &mut Vec<String>) {
    match value {
        toml::Value::Table(table) => {
            let allowed = allowed_keys(path);
            for (key, child) in table {
                let full = if path.is_empty() {
                    key.clone()
                } else {
                    format!("{path}.{key}")
                };
                match allowed {
                    Some(keys) if !keys.contains(&key.as_str()) => unknown.push(full),
                    _ => scan_unknown(child, &full, unknown),
                }
            }
        }
        toml::Value::Array(items) => {
            for item in items {
                // array elements share the array's path (e.g. truth.u0)
                scan_unknown(item, path, unknown);
            }
        }
        _ => {}
    }
}

/// Parse and fully validate a config file. Duplicate keys fail at the TOML
/// level; unknown keys are collected and listed; invariant violations are
/// collected and listed.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let value: toml::Value = text
        .parse()
        .map_err(|e| Error::Parse(format!("config: {e}")))?;
    let mut unknown = Vec::new();
    scan_unknown(&value, "", &mut unknown);
    if !unknown.is_empty() {
        return Err(Error::ConfigInvalid(
            unknown.into_iter().map(|k| format!("unknown key: {k}")).collect(),
        ));
    }
    let cfg: ExperimentConfig = value
        .try_into()
        .map_err(|e| Error::Parse(format!("config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
pub(crate) fn minimal_toml() -> String {
        r#"
dimension = 1
horizon = 1.0
counts = [[64]]
eps = [1e-3]
replicates = 2
seed = 7

[[truth.u0]]
mode = [1]
coeff = 1.0

[truth.source]
kind = "none"

[truth.lambda]
kind = "constant"
value = 1.0

[schedule]
alpha0 = 1.0
delta0 = 0.5
m0 = 0.3
m1 = 0.3
gamma = 1.0
mu = [1.0]
mu0 = 3.0

[noise]
v_max = 1.0
vartheta = 0.5

[operator]
a0 = 0.5
a1 = 1.1

[solver]
steps = 64
"#
    .to_string()
}
