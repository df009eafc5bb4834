//! Simulation config files.

use anyhow::{anyhow, Context, Result};
use nph_core::combo::ComboSpec;
use nph_core::sim::{PiecewiseHazard, ScenarioSpec, TrialDesign};
use nph_core::study::{Method, StudyConfig};
use nph_core::wlr::FhWeight;
use serde::{Deserialize, Serialize};

use crate::ConfigError;

/// A built-in scenario name or explicit piecewise hazards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioConfig {
    Builtin(String),
    Custom {
        name: String,
        control: PiecewiseHazard,
        experimental: PiecewiseHazard,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub design: TrialDesign,
    pub replicates: usize,
    #[serde(default = "default_alpha")]
    pub alpha_one_sided: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "all_methods")]
    pub methods: Vec<Method>,
    /// MaxCombo components as `[rho, gamma]` pairs.
    #[serde(default = "default_combo")]
    pub max_combo: Vec<[f64; 2]>,
}

fn default_alpha() -> f64 {
    0.025
}

fn all_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_combo() -> Vec<[f64; 2]> {
    ComboSpec::max_combo()
        .components()
        .iter()
        .map(|w| [w.rho, w.gamma])
        .collect()
}

impl SimulationConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            anyhow!(ConfigError(format!("at `{path}`: {}", e.inner())))
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow!(ConfigError(format!("cannot read {}: {e}", path.display()))))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    /// Validated study configuration; `seed` overrides the file's seed.
    pub fn study(&self, seed: Option<u64>) -> Result<StudyConfig> {
        let invalid = |e: nph_core::NphError| anyhow!(ConfigError(e.to_string()));
        let scenario = match &self.scenario {
            ScenarioConfig::Builtin(name) => ScenarioSpec::builtin(name).ok_or_else(|| {
                anyhow!(ConfigError(format!(
                    "at `scenario`: unknown scenario {name:?}; expected one of {}",
                    ScenarioSpec::BUILTIN_NAMES.join(", ")
                )))
            })?,
            ScenarioConfig::Custom {
                name,
                control,
                experimental,
            } => ScenarioSpec::new(name.clone(), control.clone(), experimental.clone())
                .map_err(invalid)?,
        };
        let components = self
            .max_combo
            .iter()
            .map(|[r, g]| FhWeight::new(*r, *g))
            .collect::<nph_core::Result<Vec<_>>>()
            .map_err(invalid)?;
        let config = StudyConfig {
            scenario,
            design: self.design.clone(),
            replicates: self.replicates,
            alpha_one_sided: self.alpha_one_sided,
            seed: seed.unwrap_or(self.seed),
            methods: self.methods.clone(),
            max_combo: ComboSpec::new(components, "MaxCombo").map_err(invalid)?,
        };
        config.validate().map_err(invalid)?;
        Ok(config)
    }
}
