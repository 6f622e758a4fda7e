//! JSON experiment configuration: a named preset or explicit scenario, the
//! method/noise/seed grid, and descent parameters.

use serde::{Deserialize, Serialize};

use recon_core::inversion::{DescentConfig, RhoSchedule, StepRule, TikhonovSign, UpdateRule};
use recon_core::objectives::Method;
use recon_core::{Error, Result};

use crate::presets::{preset, PresetOptions, ScenarioSpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Preset(String),
    Explicit(Box<ScenarioSpec>),
}

fn default_fine_refinements() -> usize {
    2
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

/// One experiment: a scenario swept over methods, noise levels, and seeds.
///
/// Unstated numerical parameters (mesh resolution, step size, iteration
/// count, smoothing and regularization weights) default to the preset values
/// and can be overridden field by field.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioRef,
    pub methods: Vec<Method>,
    pub noise_levels: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub mesh_resolution: Option<usize>,
    #[serde(default = "default_fine_refinements")]
    pub fine_refinements: usize,
    #[serde(default)]
    pub k_max: Option<usize>,
    #[serde(default)]
    pub step: Option<StepRule>,
    /// Per-method step override, e.g. a smaller fixed step for one method.
    #[serde(default)]
    pub step_overrides: std::collections::BTreeMap<Method, StepRule>,
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default)]
    pub rho: Option<RhoSchedule>,
    #[serde(default)]
    pub w0: Option<f64>,
    #[serde(default)]
    pub w1: Option<f64>,
    #[serde(default)]
    pub update_rule: Option<UpdateRule>,
    #[serde(default)]
    pub tikhonov_sign: Option<TikhonovSign>,
    #[serde(default)]
    pub bounds: Option<[f64; 2]>,
    #[serde(default)]
    pub alpha0: Option<f64>,
    #[serde(default)]
    pub g_input: Option<crate::presets::AnalyticFn>,
    /// Pick-a-point coordinate for the four-quadrant preset.
    #[serde(default)]
    pub xi: Option<f64>,
    /// Central circle radius for the three-subregion preset.
    #[serde(default)]
    pub circle_radius: Option<f64>,
    /// Disable the pick-a-point restriction even when a partition exists.
    #[serde(default)]
    pub projection: Option<bool>,
    pub out_dir: String,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::config(format!("config schema error: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::config("config schema error: 'methods' must be non-empty"));
        }
        if self.noise_levels.is_empty() {
            return Err(Error::config(
                "config schema error: 'noise_levels' must be non-empty",
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("config schema error: 'seeds' must be non-empty"));
        }
        if self.noise_levels.iter().any(|&d| d < 0.0) {
            return Err(Error::config("config schema error: noise levels must be >= 0"));
        }
        if self.fine_refinements < 2 {
            return Err(Error::config(
                "config schema error: 'fine_refinements' must be at least 2 \
                 (inverse-crime guard)",
            ));
        }
        self.resolve_scenario()?;
        Ok(())
    }

    pub fn preset_options(&self) -> PresetOptions {
        let defaults = PresetOptions::default();
        PresetOptions {
            xi: self.xi.unwrap_or(defaults.xi),
            circle_radius: self.circle_radius.unwrap_or(defaults.circle_radius),
        }
    }

    /// The scenario with config-level overrides applied.
    pub fn resolve_scenario(&self) -> Result<ScenarioSpec> {
        let mut spec = match &self.scenario {
            ScenarioRef::Preset(name) => preset(name, &self.preset_options())
                .ok_or_else(|| {
                    Error::config(format!(
                        "config schema error: unknown preset '{name}' (available: {})",
                        crate::presets::PRESET_NAMES.join(", ")
                    ))
                })?,
            ScenarioRef::Explicit(spec) => (**spec).clone(),
        };
        if let Some(a0) = self.alpha0 {
            spec.alpha0 = a0;
        }
        if let Some(g) = self.g_input {
            spec.g_input = g;
        }
        if let Some(r) = self.mesh_resolution {
            spec.mesh_resolution = r;
        }
        if let Some(k) = self.k_max {
            spec.k_max = k;
        }
        if let Some(m) = self.mu {
            spec.mu = m;
        }
        if let Some(w) = self.w0 {
            spec.w0 = w;
        }
        if let Some(w) = self.w1 {
            spec.w1 = w;
        }
        if let Some(p) = &spec.partition {
            p.validate()?;
        }
        Ok(spec)
    }

    /// Descent configuration for one (method, seed) cell.
    pub fn descent_config(&self, spec: &ScenarioSpec, method: Method, seed: u64) -> DescentConfig {
        let step = self
            .step_overrides
            .get(&method)
            .copied()
            .or(self.step)
            .unwrap_or(StepRule::Fixed { t: spec.step_t });
        let rho = self.rho.unwrap_or(RhoSchedule::Constant { rho: spec.rho });
        let projection = if self.projection.unwrap_or(true) {
            spec.partition.clone()
        } else {
            None
        };
        DescentConfig {
            method,
            update_rule: self
                .update_rule
                .unwrap_or(UpdateRule::SmoothedMisfitPlusRawTikhonov),
            mu: spec.mu,
            step,
            rho,
            w0: spec.w0,
            w1: spec.w1,
            k_max: spec.k_max,
            projection,
            tikhonov_sign: self.tikhonov_sign.unwrap_or(TikhonovSign::Minus),
            bounds: self.bounds,
            seed,
            grad_tol: None,
        }
    }
}
