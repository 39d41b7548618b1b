//! Sectioned run configuration, read from and written to TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::device::DeviceParams;
use crate::error::{Error, Result};
use crate::network::{LearningRates, SharedRates};
use crate::pendulum::{InitialStateRanges, NormalizationBounds, PendulumConfig};
use crate::training::{Environment, HardwareConfig, ReplayConfig};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// 25 agents and a 100-state test subsample.
    Desk,
    /// 2500 agents and the full 500-state test pool.
    Full,
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Scale::Desk),
            "full" => Ok(Scale::Full),
            other => Err(Error::config(format!("unknown scale `{other}`"))),
        }
    }
}

impl std::fmt::Display for Scale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scale::Desk => "desk",
            Scale::Full => "full",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HardwareSection {
    pub value_full_scale: f64,
    pub adc_bits: u32,
    pub eta: f64,
}

impl Default for HardwareSection {
    fn default() -> Self {
        let hw = HardwareConfig::default();
        Self {
            value_full_scale: hw.value_full_scale,
            adc_bits: hw.adc_bits,
            eta: hw.eta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub rates: LearningRates,
    /// Successful trials ending software pre-training.
    pub pretrain_c: usize,
    pub max_pretrain_trials: usize,
    pub max_retrain_trials: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            rates: LearningRates::default(),
            pretrain_c: 50,
            max_pretrain_trials: crate::training::MAX_PRETRAIN_TRIALS,
            max_retrain_trials: crate::training::MAX_RETRAIN_TRIALS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyncSection {
    pub total_samples: usize,
    pub checkpoint_every: usize,
    pub gamma: f64,
    pub rates: SharedRates,
}

impl Default for SyncSection {
    fn default() -> Self {
        Self {
            total_samples: 500_000,
            checkpoint_every: 25_000,
            gamma: 0.9,
            rates: SharedRates::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarnessSection {
    pub scale: Scale,
    /// Test states per evaluation; `0` means the scale's default.
    pub test_states: usize,
    /// Agents of a limited-information sweep.
    pub limited_agents: usize,
}

impl Default for HarnessSection {
    fn default() -> Self {
        Self {
            scale: Scale::Desk,
            test_states: 0,
            limited_agents: 5,
        }
    }
}

impl HarnessSection {
    pub fn effective_test_states(&self) -> usize {
        match (self.test_states, self.scale) {
            (0, Scale::Desk) => 100,
            (0, Scale::Full) => crate::pendulum::TEST_POOL_SIZE,
            (n, _) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub version: u32,
    pub pendulum: PendulumConfig,
    pub normalization: NormalizationBounds,
    pub initial_states: InitialStateRanges,
    pub device: DeviceParams,
    pub hardware: HardwareSection,
    pub training: TrainingSection,
    pub replay: ReplayConfig,
    pub sync: SyncSection,
    pub harness: HarnessSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            pendulum: PendulumConfig::default(),
            normalization: NormalizationBounds::default(),
            initial_states: InitialStateRanges::default(),
            device: DeviceParams::default(),
            hardware: HardwareSection::default(),
            training: TrainingSection::default(),
            replay: ReplayConfig::default(),
            sync: SyncSection::default(),
            harness: HarnessSection::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Config = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::config(format!(
                "config version {} unsupported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.pendulum.validate()?;
        self.normalization.validate()?;
        self.initial_states.validate()?;
        self.device.validate()?;
        self.training.rates.validate()?;
        self.replay.validate()?;
        if self.training.pretrain_c == 0
            || self.training.max_pretrain_trials == 0
            || self.training.max_retrain_trials == 0
        {
            return Err(Error::config("training counts must be positive"));
        }
        if !(1..=16).contains(&self.hardware.adc_bits) {
            return Err(Error::config("adc_bits must lie in 1..=16"));
        }
        if !(self.hardware.value_full_scale > 0.0 && self.hardware.eta > 0.0) {
            return Err(Error::config("hardware full scale and eta must be positive"));
        }
        Ok(())
    }

    pub fn environment(&self) -> Environment {
        Environment {
            pendulum: self.pendulum.clone(),
            bounds: self.normalization,
        }
    }

    pub fn hardware(&self, variation: crate::device::VariationMode) -> HardwareConfig {
        HardwareConfig {
            device: self.device,
            variation,
            value_full_scale: self.hardware.value_full_scale,
            adc_bits: self.hardware.adc_bits,
            eta: self.hardware.eta,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let c = Config::default();
        let text = c.to_toml().unwrap();
        assert!(text.contains("[pendulum]"));
        assert!(text.contains("[device]"));
        assert_eq!(Config::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let c = Config::from_toml("[pendulum]\npush_torque = 0.1\n").unwrap();
        assert_eq!(c.pendulum.push_torque, 0.1);
        assert_eq!(c.pendulum.dt, PendulumConfig::default().dt);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(Config::from_toml("[pendulum]\nbogus = 1\n").is_err());
    }

    #[test]
    fn invalid_value_rejected() {
        assert!(Config::from_toml("[pendulum]\ndt = -1.0\n").is_err());
        assert!(Config::from_toml("version = 7\n").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = Config::default();
        let mut b = a.clone();
        b.pendulum.push_torque = 0.09;
        assert_eq!(a.hash().unwrap(), a.hash().unwrap());
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
    }
}
