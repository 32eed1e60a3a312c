//! Ready-made configurations: synchronous HK, pairwise DW, and the general
//! asynchronous model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::rules::{CommunicationRule, InertiaPolicy, NoiseModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    Hk,
    Dw,
    General,
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hk" => Ok(PresetName::Hk),
            "dw" => Ok(PresetName::Dw),
            "general" => Ok(PresetName::General),
            other => Err(Error::Config(format!(
                "unknown preset `{other}` (expected hk, dw or general)"
            ))),
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PresetName::Hk => "hk",
            PresetName::Dw => "dw",
            PresetName::General => "general",
        })
    }
}

fn check_common(n: usize, epsilon: f64, delta: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::param("n", format!("need n >= 2, got {n}")));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::param("epsilon", format!("need 0 < epsilon <= 1, got {epsilon}")));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::param("delta", format!("need delta > 0, got {delta}")));
    }
    Ok(())
}

/// Everyone communicates every step, inertia `1/(|N_i|+1)`, uniform noise.
pub fn hk_preset(n: usize, epsilon: f64, delta: f64) -> Result<ModelConfig> {
    check_common(n, epsilon, delta)?;
    ModelConfig::new(
        n,
        epsilon,
        1.0 / n as f64,
        InertiaPolicy::HkRule,
        NoiseModel::uniform(delta)?,
        CommunicationRule::fixed(n, n)?,
    )
}

/// Two random agents interact per step with mixing weight `beta`.
pub fn dw_preset(n: usize, epsilon: f64, beta: f64, delta: f64) -> Result<ModelConfig> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::param(
            "beta",
            format!("need 0 < beta < 1, got {beta} (beta = 1 needs dw_preset_degenerate)"),
        ));
    }
    dw_build(n, epsilon, beta, delta, false)
}

/// DW with `beta` allowed to reach 1, where the pairwise update is the
/// identity and the inertia floor cannot be met.
pub fn dw_preset_degenerate(n: usize, epsilon: f64, beta: f64, delta: f64) -> Result<ModelConfig> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::param("beta", format!("need 0 < beta <= 1, got {beta}")));
    }
    dw_build(n, epsilon, beta, delta, true)
}

fn dw_build(n: usize, epsilon: f64, beta: f64, delta: f64, degenerate: bool) -> Result<ModelConfig> {
    check_common(n, epsilon, delta)?;
    let inertia = InertiaPolicy::Constant { value: beta };
    let alpha = if degenerate {
        beta.min(1.0 / n as f64)
    } else {
        inertia.implied_alpha(n)
    };
    let config = ModelConfig {
        n,
        epsilon,
        alpha,
        inertia,
        noise: NoiseModel::uniform(delta)?,
        comm: CommunicationRule::fixed(n, 2)?,
        beta: Some(beta),
        allow_degenerate: degenerate,
    };
    config.validate()?;
    Ok(config)
}

/// Direct assembly of the general model; `alpha` is the largest floor the
/// inertia policy admits.
pub fn general_preset(
    n: usize,
    epsilon: f64,
    delta: f64,
    size_probs: CommunicationRule,
    inertia: InertiaPolicy,
) -> Result<ModelConfig> {
    check_common(n, epsilon, delta)?;
    let alpha = inertia.implied_alpha(n);
    ModelConfig::new(n, epsilon, alpha, inertia, NoiseModel::uniform(delta)?, size_probs)
}
