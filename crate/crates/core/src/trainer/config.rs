use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::DEFAULT_HIDDEN_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeightMode {
    None,
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub preset: String,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dropout_rate: f64,
    pub l2_coefficient: f64,
    pub class_weight_mode: ClassWeightMode,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Hard cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
    pub hidden_dim: usize,
    /// For text models, keep caption-less records (encoded as empty text) instead of skipping them.
    pub include_manual_text: bool,
}

pub const PRESET_NAMES: [&str; 6] = [
    "submitted",
    "comparative_bert",
    "comparative_densenet",
    "comparative_resnet",
    "comparative_bert_densenet",
    "comparative_bert_resnet",
];

impl TrainingConfig {
    fn base(preset: &str, learning_rate: f64, dropout_rate: f64, l2_coefficient: f64) -> Self {
        TrainingConfig {
            preset: preset.to_string(),
            learning_rate,
            batch_size: 16,
            dropout_rate,
            l2_coefficient,
            class_weight_mode: ClassWeightMode::Balanced,
            max_epochs: 20,
            early_stop_patience: 3,
            seed: 42,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            max_steps: None,
            hidden_dim: DEFAULT_HIDDEN_DIM,
            include_manual_text: true,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        let cfg = match name {
            "submitted" => Self::base(name, 1e-5, 0.2, 0.02),
            "comparative_bert" | "comparative_densenet" | "comparative_resnet" => {
                Self::base(name, 1e-6, 0.0, 0.01)
            }
            "comparative_bert_densenet" | "comparative_bert_resnet" => {
                Self::base(name, 1e-6, 0.3, 0.04)
            }
            _ => {
                return Err(Error::Config(format!(
                    "unknown preset {name:?}; valid presets: {}",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        Ok(cfg)
    }

    /// Parses a TOML config: an optional `preset` (default `submitted`) plus any field overrides.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_with_default(text, "submitted")
    }

    /// As [`TrainingConfig::from_toml_str`], with `default_preset` used when the file names none.
    pub fn from_toml_with_default(text: &str, default_preset: &str) -> Result<Self> {
        let overrides = ConfigOverrides::from_toml_str(text)?;
        let mut cfg = Self::preset(overrides.preset.as_deref().unwrap_or(default_preset))?;
        overrides.apply(&mut cfg)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be a non-negative number");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        if !(self.l2_coefficient >= 0.0 && self.l2_coefficient.is_finite()) {
            return bad("l2_coefficient must be non-negative");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be positive");
        }
        Ok(())
    }
}

/// Field overrides read from a TOML config file; absent fields keep the preset value.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    /// Base preset named by the file, if any.
    pub preset: Option<String>,
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    dropout_rate: Option<f64>,
    l2_coefficient: Option<f64>,
    class_weight_mode: Option<ClassWeightMode>,
    max_epochs: Option<usize>,
    early_stop_patience: Option<usize>,
    seed: Option<u64>,
    adam_beta1: Option<f64>,
    adam_beta2: Option<f64>,
    adam_epsilon: Option<f64>,
    max_steps: Option<usize>,
    hidden_dim: Option<usize>,
    include_manual_text: Option<bool>,
}

impl ConfigOverrides {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid training config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Writes every present field into `c` (the `preset` name is left alone) and re-validates.
    pub fn apply(&self, c: &mut TrainingConfig) -> Result<()> {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        set!(
            learning_rate,
            batch_size,
            dropout_rate,
            l2_coefficient,
            class_weight_mode,
            max_epochs,
            early_stop_patience,
            seed,
            adam_beta1,
            adam_beta2,
            adam_epsilon,
            hidden_dim,
            include_manual_text
        );
        if self.max_steps.is_some() {
            c.max_steps = self.max_steps;
        }
        c.validate()
    }
}
