use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hgnn::Activation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Ablation {
    #[default]
    #[serde(rename = "none")]
    None,
    /// Masked prediction straight from embedding lookups, no attention.
    #[serde(rename = "no_ge")]
    NoGe,
    /// Entity representations skip hypergraph propagation.
    #[serde(rename = "no_hga")]
    NoHga,
    /// Intra-view training first, then the mapping alone on frozen tables.
    #[serde(rename = "no_jl")]
    NoJl,
}

impl Ablation {
    pub fn name(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::NoGe => "no_ge",
            Ablation::NoHga => "no_hga",
            Ablation::NoJl => "no_jl",
        }
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Ablation::None),
            "no_ge" => Ok(Ablation::NoGe),
            "no_hga" => Ok(Ablation::NoHga),
            "no_jl" => Ok(Ablation::NoJl),
            other => Err(Error::UnknownAblation(other.to_string())),
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Every hyperparameter of a run. Serialized in checkpoints and manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Weight of the cross-view loss.
    pub omega: f64,
    /// Margin of the cross-view hinge.
    pub margin: f64,
    pub label_smoothing: f64,
    pub encoder_layers: usize,
    pub n_heads: usize,
    pub hypergraph_layers: usize,
    pub activation: Activation,
    /// Negative concepts per positive link.
    pub n_neg: usize,
    pub seed: u64,
    pub ablation: Ablation,
    /// Exclude only train-split golds when drawing negatives.
    pub strict_train: bool,
    /// Elementwise gradient clip.
    pub clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 256,
            epochs: 100,
            learning_rate: 5e-4,
            batch_size: 256,
            omega: 1.0,
            margin: 1.0,
            label_smoothing: 0.1,
            encoder_layers: 2,
            n_heads: 4,
            hypergraph_layers: 2,
            activation: Activation::Relu,
            n_neg: 1,
            seed: 0,
            ablation: Ablation::None,
            strict_train: false,
            clip: None,
        }
    }
}

impl TrainConfig {
    /// Parses a flat JSON object over the defaults. Every unknown key and
    /// every ill-typed or out-of-range value is reported.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        let Value::Object(given) = value else {
            return Err(Error::Config(vec!["config must be a JSON object".to_string()]));
        };
        let Value::Object(defaults) = serde_json::to_value(TrainConfig::default())? else {
            unreachable!("config serializes to an object");
        };
        let mut errors = Vec::new();
        let mut merged = defaults.clone();
        for (key, v) in &given {
            if !defaults.contains_key(key) {
                errors.push(format!("unknown key `{key}`"));
                continue;
            }
            let mut probe: Map<String, Value> = defaults.clone();
            probe.insert(key.clone(), v.clone());
            match serde_json::from_value::<TrainConfig>(Value::Object(probe)) {
                Ok(_) => {
                    merged.insert(key.clone(), v.clone());
                }
                Err(e) => errors.push(format!("`{key}`: {e}")),
            }
        }
        if !errors.is_empty() {
            return Err(Error::Config(errors));
        }
        let config: TrainConfig = serde_json::from_value(Value::Object(merged))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        let mut positive = |name: &str, v: f64| {
            // Written negated so NaN is rejected too.
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(v > 0.0) {
                errors.push(format!("`{name}` must be positive, got {v}"));
            }
        };
        positive("dim", self.dim as f64);
        positive("epochs", self.epochs as f64);
        positive("learning_rate", self.learning_rate);
        positive("batch_size", self.batch_size as f64);
        positive("margin", self.margin);
        positive("n_heads", self.n_heads as f64);
        positive("n_neg", self.n_neg as f64);
        if let Some(c) = self.clip {
            positive("clip", c);
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            errors.push(format!("`omega` must be non-negative, got {}", self.omega));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            errors.push(format!(
                "`label_smoothing` must be in [0, 1), got {}",
                self.label_smoothing
            ));
        }
        if self.n_heads > 0 && !self.dim.is_multiple_of(self.n_heads) {
            errors.push(format!(
                "`dim` {} is not divisible by `n_heads` {}",
                self.dim, self.n_heads
            ));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}
