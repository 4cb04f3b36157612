use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layered::LayeredModelSpec;
use super::sweep::SweepSpec;
use crate::error::{Error, Result};
use crate::sca_solver::ScaOptions;
use crate::system_model::{ChannelParams, ComputeParams, ModelProfile, QosBudget, Scenario, DEFAULT_RHO_MIN};

fn default_rho_min() -> f64 {
    DEFAULT_RHO_MIN
}

/// One run configuration. Exactly one of `model` and `layered_model` must
/// be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub channel: ChannelParams,
    pub device: ComputeParams,
    pub server: ComputeParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layered_model: Option<LayeredModelSpec>,
    pub qos: QosBudget,
    #[serde(default = "default_rho_min")]
    pub rho_min: f64,
    #[serde(default)]
    pub solver: ScaOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl Config {
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            msg: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.model, &self.layered_model) {
            (Some(_), Some(_)) => {
                return Err(Error::field(
                    "model",
                    "give either `model` or `layered_model`, not both",
                ))
            }
            (None, None) => {
                return Err(Error::field("model", "one of `model` or `layered_model` is required"))
            }
            (None, Some(l)) => l.validate()?,
            (Some(_), None) => {}
        }
        if !(self.solver.epsilon > 0.0 && self.solver.epsilon.is_finite()) {
            return Err(Error::field("epsilon", format!("must be > 0, got {}", self.solver.epsilon)));
        }
        if self.solver.max_iter == 0 {
            return Err(Error::field("max_iter", "must be >= 1"));
        }
        self.scenario()?.validate()?;
        if let Some(sw) = &self.sweep {
            sw.validate(self.layered_model.as_ref())?;
        }
        Ok(())
    }

    /// Base scenario. A layered model is cut at its `split` field.
    pub fn scenario(&self) -> Result<Scenario> {
        let model = match (&self.model, &self.layered_model) {
            (Some(m), _) => *m,
            (None, Some(l)) => {
                let split = l.split.ok_or_else(|| {
                    Error::field("split", "layered_model needs `split` to define a single scenario")
                })?;
                l.profile_at_split(split)?
            }
            (None, None) => return Err(Error::field("model", "missing")),
        };
        let sc = Scenario {
            channel: self.channel,
            device: self.device,
            server: self.server,
            model,
            qos: self.qos,
            rho_min: self.rho_min,
        };
        sc.validate()?;
        Ok(sc)
    }

    /// Upload size of the on-server scheme, if known.
    pub fn raw_input_bits(&self) -> Option<f64> {
        self.layered_model.as_ref().map(|l| l.raw_input_bits)
    }
}

/// Loads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    Config::load(path)?.scenario()
}
