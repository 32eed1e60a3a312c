//! JSON run configuration.
//!
//! ```json
//! { "preset": "general", "n": 40, "epsilon": 0.1, "delta": 0.01,
//!   "size_probs": "uniform", "inertia": "hk_rule", "horizon": 40000,
//!   "replicas": 100, "tail_fraction": 0.25 }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::DEFAULT_TAIL_FRACTION;
use crate::model::ModelConfig;
use crate::presets::{dw_preset, dw_preset_degenerate, general_preset, hk_preset, PresetName};
use crate::rules::{CommunicationRule, InertiaPolicy, NoiseModel};

pub const DEFAULT_HORIZON: usize = 10_000;
pub const DEFAULT_REPLICAS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SizeProbsSpec {
    Shorthand(String),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseSpec {
    /// `uniform`, `two_point` or `none`, with amplitude from `delta`.
    Named(String),
    Model(NoiseModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: PresetName,
    pub n: usize,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_probs: Option<SizeProbsSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inertia: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_fraction: Option<f64>,
    /// Explicit initial opinions; drawn uniformly on `[0,1]^n` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
    /// Admit the identity DW update (`beta = 1`).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

/// Execution settings that are not part of the dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub horizon: usize,
    pub replicas: usize,
    pub seeds: Option<Vec<u64>>,
    pub snapshot_stride: Option<usize>,
    pub tail_fraction: f64,
    pub initial: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub preset: PresetName,
    pub model: ModelConfig,
    pub settings: RunSettings,
}

impl ConfigFile {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    fn not_for(&self, key: &str, present: bool) -> Result<()> {
        if present {
            return Err(Error::Config(format!(
                "key `{key}` does not apply to preset `{}`",
                self.preset
            )));
        }
        Ok(())
    }

    fn noise_model(&self) -> Result<Option<NoiseModel>> {
        let delta = self.delta;
        let need_delta = || delta.ok_or_else(|| Error::Config("`delta` is required".into()));
        Ok(match &self.noise {
            None => None,
            Some(NoiseSpec::Model(m)) => {
                m.validate()?;
                Some(m.clone())
            }
            Some(NoiseSpec::Named(name)) => Some(match name.as_str() {
                "uniform" => NoiseModel::uniform(need_delta()?)?,
                "two_point" => NoiseModel::two_point(need_delta()?)?,
                "none" => NoiseModel::None,
                other => {
                    return Err(Error::Config(format!(
                        "unknown noise `{other}` (expected uniform, two_point or none)"
                    )))
                }
            }),
        })
    }

    pub fn build(&self) -> Result<LoadedConfig> {
        let noise = self.noise_model()?;
        // presets need an amplitude even when the noise law is overridden
        let delta = match (self.delta, &noise) {
            (Some(d), _) => d,
            (None, Some(m)) if m.delta() > 0.0 => m.delta(),
            (None, Some(_)) => 1.0,
            (None, None) => return Err(Error::Config("`delta` is required".into())),
        };
        let mut model = match self.preset {
            PresetName::Hk => {
                self.not_for("size_probs", self.size_probs.is_some())?;
                self.not_for("inertia", self.inertia.is_some())?;
                self.not_for("beta", self.beta.is_some())?;
                hk_preset(self.n, self.epsilon, delta)?
            }
            PresetName::Dw => {
                self.not_for("size_probs", self.size_probs.is_some())?;
                self.not_for("inertia", self.inertia.is_some())?;
                let beta = self
                    .beta
                    .ok_or_else(|| Error::Config("preset `dw` requires `beta`".into()))?;
                if self.degenerate {
                    dw_preset_degenerate(self.n, self.epsilon, beta, delta)?
                } else {
                    dw_preset(self.n, self.epsilon, beta, delta)?
                }
            }
            PresetName::General => {
                self.not_for("beta", self.beta.is_some())?;
                let rule = match &self.size_probs {
                    None => CommunicationRule::uniform(self.n),
                    Some(SizeProbsSpec::Shorthand(s)) => CommunicationRule::parse(s, self.n)?,
                    Some(SizeProbsSpec::Explicit(p)) => CommunicationRule::new(p.clone())?,
                };
                let inertia = match &self.inertia {
                    None => InertiaPolicy::HkRule,
                    Some(s) => InertiaPolicy::parse(s)?,
                };
                general_preset(self.n, self.epsilon, delta, rule, inertia)?
            }
        };
        if let Some(alpha) = self.alpha {
            model.alpha = alpha;
        }
        if let Some(noise) = noise {
            model.noise = noise;
        }
        model.validate()?;

        let tail_fraction = self.tail_fraction.unwrap_or(DEFAULT_TAIL_FRACTION);
        if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
            return Err(Error::Config(format!(
                "tail_fraction must lie in (0, 1), got {tail_fraction}"
            )));
        }
        if let Some(init) = &self.initial {
            if init.len() != self.n {
                return Err(Error::Config(format!(
                    "`initial` has {} entries, expected n = {}",
                    init.len(),
                    self.n
                )));
            }
        }
        let settings = RunSettings {
            horizon: self.horizon.unwrap_or(DEFAULT_HORIZON),
            replicas: self.replicas.unwrap_or(DEFAULT_REPLICAS),
            seeds: self.seeds.clone(),
            snapshot_stride: self.snapshot_stride,
            tail_fraction,
            initial: self.initial.clone(),
        };
        Ok(LoadedConfig {
            preset: self.preset,
            model,
            settings,
        })
    }
}

pub fn load(path: &Path) -> Result<LoadedConfig> {
    ConfigFile::from_path(path)?.build()
}
