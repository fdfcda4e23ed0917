//! Run configuration (TOML). Unknown keys are rejected everywhere; every
//! omitted key falls back to the documented default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ddsindy::driver::{ModelConfig, OmegaSetting, Preset, SolverConfig};
use ddsindy::optimize::{default_sigma_grid, PsoConfig};
use ddsindy::quadrature::QuadratureKind;
use ddsindy::synth::SurrogateSpec;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Root of every random stream (PSO, surrogate ticks and noise).
    #[serde(default)]
    pub seed: u64,
    /// Canonical input table for fit / optimize / sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub pso: PsoSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surrogate: Option<SurrogateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub renewal: Option<RenewalSection>,
    #[serde(default)]
    pub ingest: IngestSection,
}

/// Overrides on top of a preset (default `dd`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub include_delay_terms: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub include_constant: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_history: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub include_exp_activity: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature_column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exp_interactions: Option<Vec<String>>,
    /// A number, or `"optimize"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<OmegaSetting>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<QuadratureKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_train: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
}

impl ModelSection {
    pub fn resolve(&self) -> ModelConfig {
        let base = ModelConfig::preset(self.preset.unwrap_or(Preset::Dd));
        ModelConfig {
            columns: self.columns.clone().unwrap_or(base.columns),
            degree: self.degree.unwrap_or(base.degree),
            include_delay_terms: self.include_delay_terms.unwrap_or(base.include_delay_terms),
            include_constant: self.include_constant.unwrap_or(base.include_constant),
            target_history: self.target_history.unwrap_or(base.target_history),
            include_exp_activity: self.include_exp_activity.unwrap_or(base.include_exp_activity),
            temperature_column: self.temperature_column.clone().unwrap_or(base.temperature_column),
            exp_interactions: self.exp_interactions.clone().unwrap_or(base.exp_interactions),
            omega: self.omega.unwrap_or(base.omega),
            sigma: self.sigma.unwrap_or(base.sigma),
            quadrature: self.quadrature.unwrap_or(base.quadrature),
            nodes: self.nodes.unwrap_or(base.nodes),
            solver: self.solver.unwrap_or(base.solver),
            n_train: self.n_train.unwrap_or(base.n_train),
        }
    }

    /// Every field spelled out, so that a manifest replays without defaults.
    pub fn explicit(&self) -> Self {
        let m = self.resolve();
        ModelSection {
            preset: self.preset,
            columns: Some(m.columns),
            degree: Some(m.degree),
            include_delay_terms: Some(m.include_delay_terms),
            include_constant: Some(m.include_constant),
            target_history: Some(m.target_history),
            include_exp_activity: Some(m.include_exp_activity),
            temperature_column: Some(m.temperature_column),
            exp_interactions: Some(m.exp_interactions),
            omega: Some(m.omega),
            sigma: Some(m.sigma),
            quadrature: Some(m.quadrature),
            nodes: Some(m.nodes),
            n_train: Some(m.n_train),
            solver: Some(m.solver),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsoSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub swarm_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inertia: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cognitive: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub social: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stall_iterations: Option<usize>,
}

impl PsoSection {
    pub fn resolve(&self, seed: u64) -> PsoConfig {
        let d = PsoConfig::default();
        PsoConfig {
            swarm_size: self.swarm_size.unwrap_or(d.swarm_size),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            inertia: self.inertia.unwrap_or(d.inertia),
            cognitive: self.cognitive.unwrap_or(d.cognitive),
            social: self.social.unwrap_or(d.social),
            bounds: self.bounds.unwrap_or(d.bounds),
            seed,
            tol: self.tol.unwrap_or(d.tol),
            stall_iterations: self.stall_iterations.unwrap_or(d.stall_iterations),
        }
    }

    pub fn explicit(&self) -> Self {
        let p = self.resolve(0);
        PsoSection {
            swarm_size: Some(p.swarm_size),
            max_iter: Some(p.max_iter),
            inertia: Some(p.inertia),
            cognitive: Some(p.cognitive),
            social: Some(p.social),
            bounds: Some(p.bounds),
            tol: Some(p.tol),
            stall_iterations: Some(p.stall_iterations),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Run the ω profile; defaults to whether the model has an ω.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<bool>,
    /// Run the σ profile (default true).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<bool>,
    /// Points of the ω grid over `[0.1·ω_opt, 1]` (default 15).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_points: Option<usize>,
    /// Reference ω; defaults to the model's fixed ω, else a PSO run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_opt: Option<f64>,
    /// σ values (default 0.25, 0.5, …, 3.0).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_grid: Option<Vec<f64>>,
}

impl SweepSection {
    pub fn omega_points(&self) -> usize {
        self.omega_points.unwrap_or(15)
    }

    pub fn sigma_grid(&self) -> Vec<f64> {
        self.sigma_grid.clone().unwrap_or_else(default_sigma_grid)
    }
}

/// Forward simulation of a single-state renewal equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenewalSection {
    /// Term label → coefficient, over the state `x` and delay `s`.
    pub terms: BTreeMap<String, f64>,
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    /// Constant history value, or samples on `[−σ, 0]` at spacing `dt`.
    pub history: History,
    pub horizon: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum History {
    Constant(f64),
    Samples(Vec<f64>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSection {
    /// ISD-lite files (plain or gzip).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub temperature: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cases: Option<PathBuf>,
    /// Fraction of hours a month needs for a mean (default 0.5).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_coverage: Option<f64>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    /// Reads a TOML config, or the `config` member of a run manifest.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        if path.extension().is_some_and(|ext| ext == "json") {
            let manifest: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("invalid manifest {}: {e}", path.display())))?;
            let config = manifest
                .get("config")
                .cloned()
                .ok_or_else(|| CliError::Config(format!("manifest {} has no `config`", path.display())))?;
            serde_json::from_value(config).map_err(|e| CliError::Config(format!("invalid manifest config: {e}")))
        } else {
            Self::from_toml(&text)
        }
    }
}
