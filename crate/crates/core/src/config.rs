//! Scenario configuration: a single JSON document, fully validated before a run.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::AggregationRule;
use crate::model::{ModelError, SourceSpec, DEFAULT_VOTE_CLAMP};
use crate::reputation::{BandThresholds, RegionThresholds};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config is not a valid scenario document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
}

impl ConfigError {
    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    fn from_model(prefix: &str, err: ModelError) -> Self {
        match err {
            ModelError::OutOfRange { field, value, range } => {
                Self::invalid(format!("{prefix}.{field}"), format!("{value} is outside {range}"))
            }
            other => Self::invalid(prefix, other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub world: WorldConfig,
    pub sources: Vec<SourceSpec>,
    pub verifiers: VerifierPopulation,
    pub estimation: EstimationConfig,
    #[serde(default)]
    pub reputation: ReputationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub claims: usize,
    pub realms: Vec<RealmConfig>,
}

/// A realm and the distribution of the claims drawn into it.
///
/// Claim evidence is `clamp(truth_sign * evidence_mean + N(0, evidence_spread²), -1, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealmConfig {
    pub name: String,
    #[serde(default = "one")]
    pub weight: f64,
    pub truth_marginal: f64,
    pub evidence_mean: f64,
    pub evidence_spread: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformRange {
    pub min: f64,
    pub max: f64,
}

impl UniformRange {
    pub fn fixed(v: f64) -> Self {
        Self { min: v, max: v }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifierPopulation {
    pub size: usize,
    pub acuity: UniformRange,
    pub bias: UniformRange,
    #[serde(default = "default_clamp")]
    pub clamp: f64,
}

fn default_clamp() -> f64 {
    DEFAULT_VOTE_CLAMP
}

/// Which randomness a source's stance is drawn from in each replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StanceMode {
    /// A fresh self-assessment per replicate.
    #[default]
    Fresh,
    /// The modal stance over all replicates, reused in every replicate.
    Modal,
}

/// Whether each replicate perceives the claim anew or reuses replicate 0's artifact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerceptionMode {
    #[default]
    Fresh,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationConfig {
    pub panel_size: usize,
    pub replicates: usize,
    pub rule: AggregationRule,
    #[serde(default = "default_checkpoints")]
    pub checkpoints: usize,
    #[serde(default)]
    pub stance_mode: StanceMode,
    #[serde(default)]
    pub perception_mode: PerceptionMode,
}

fn default_checkpoints() -> usize {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReputationConfig {
    pub near_offset: f64,
    pub far_offset: f64,
    pub corner: f64,
    pub conviction_band: f64,
    pub tau_agree: f64,
}

impl Default for ReputationConfig {
    fn default() -> Self {
        let regions = RegionThresholds::default();
        Self {
            near_offset: regions.near_offset,
            far_offset: regions.far_offset,
            corner: regions.corner,
            conviction_band: BandThresholds::default().high,
            tau_agree: crate::metrics::DEFAULT_TAU_AGREE,
        }
    }
}

impl ReputationConfig {
    pub fn regions(&self) -> RegionThresholds {
        RegionThresholds {
            near_offset: self.near_offset,
            far_offset: self.far_offset,
            corner: self.corner,
        }
    }

    pub fn bands(&self) -> BandThresholds {
        BandThresholds {
            high: self.conviction_band,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: ScenarioConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let w = &self.world;
        if w.claims == 0 {
            return Err(ConfigError::invalid("world.claims", "must be at least 1"));
        }
        if w.realms.is_empty() {
            return Err(ConfigError::invalid("world.realms", "must define at least one realm"));
        }
        let mut names = BTreeSet::new();
        for (i, realm) in w.realms.iter().enumerate() {
            let field = |f: &str| format!("world.realms[{i}].{f}");
            if realm.name.is_empty() {
                return Err(ConfigError::invalid(field("name"), "must not be empty"));
            }
            if !names.insert(realm.name.as_str()) {
                return Err(ConfigError::invalid(field("name"), format!("duplicate realm {:?}", realm.name)));
            }
            if !(realm.weight.is_finite() && realm.weight > 0.0) {
                return Err(ConfigError::invalid(field("weight"), "must be positive"));
            }
            if !(0.0..=1.0).contains(&realm.truth_marginal) {
                return Err(ConfigError::invalid(field("truth_marginal"), "must be in [0, 1]"));
            }
            if !(-1.0..=1.0).contains(&realm.evidence_mean) {
                return Err(ConfigError::invalid(field("evidence_mean"), "must be in [-1, 1]"));
            }
            if !(realm.evidence_spread.is_finite() && realm.evidence_spread >= 0.0) {
                return Err(ConfigError::invalid(field("evidence_spread"), "must be >= 0"));
            }
        }

        if self.sources.is_empty() {
            return Err(ConfigError::invalid("sources", "must list at least one source"));
        }
        let mut ids = BTreeSet::new();
        for (i, source) in self.sources.iter().enumerate() {
            let prefix = format!("sources[{i}]");
            if source.id.as_str().is_empty() {
                return Err(ConfigError::invalid(format!("{prefix}.id"), "must not be empty"));
            }
            if !ids.insert(source.id.clone()) {
                return Err(ConfigError::invalid(
                    format!("{prefix}.id"),
                    format!("duplicate source {:?}", source.id.as_str()),
                ));
            }
            source.validate().map_err(|e| ConfigError::from_model(&prefix, e))?;
        }

        let v = &self.verifiers;
        if v.size == 0 {
            return Err(ConfigError::invalid("verifiers.size", "must be at least 1"));
        }
        if !(v.acuity.min > 0.0 && v.acuity.min <= v.acuity.max && v.acuity.max.is_finite()) {
            return Err(ConfigError::invalid("verifiers.acuity", "need 0 < min <= max < inf"));
        }
        if !(v.bias.min >= -1.0 && v.bias.min <= v.bias.max && v.bias.max <= 1.0) {
            return Err(ConfigError::invalid("verifiers.bias", "need -1 <= min <= max <= 1"));
        }
        if !(v.clamp > 0.0 && v.clamp < 0.5) {
            return Err(ConfigError::invalid("verifiers.clamp", "must be in (0, 0.5)"));
        }

        let e = &self.estimation;
        if e.panel_size == 0 {
            return Err(ConfigError::invalid("estimation.panel_size", "must be at least 1"));
        }
        if e.replicates == 0 {
            return Err(ConfigError::invalid("estimation.replicates", "must be at least 1"));
        }
        if e.checkpoints == 0 {
            return Err(ConfigError::invalid("estimation.checkpoints", "must be at least 1"));
        }
        e.rule
            .validate()
            .map_err(|reason| ConfigError::invalid("estimation.rule", reason))?;

        let r = &self.reputation;
        if !(r.near_offset > 0.0 && r.near_offset < r.far_offset && r.far_offset <= 1.0) {
            return Err(ConfigError::invalid(
                "reputation.near_offset",
                "need 0 < near_offset < far_offset <= 1",
            ));
        }
        if !(r.corner > 0.5 && r.corner < 1.0) {
            return Err(ConfigError::invalid("reputation.corner", "must be in (0.5, 1)"));
        }
        if !(r.conviction_band > 0.0 && r.conviction_band <= 1.0) {
            return Err(ConfigError::invalid("reputation.conviction_band", "must be in (0, 1]"));
        }
        if !(r.tau_agree >= 0.0 && r.tau_agree < 1.0) {
            return Err(ConfigError::invalid("reputation.tau_agree", "must be in [0, 1)"));
        }
        Ok(())
    }
}
