use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Architecture, ModelConfig};

/// Which orientation of the ranking hinge to train with.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankLossForm {
    /// max(0, m + log p(S′) − log p(S)): pushes the true order above shuffles.
    #[default]
    Intended,
    /// max(0, m − log p(S′) + log p(S)), literally as printed; it rewards
    /// ranking the shuffled story higher. For inspection only.
    Printed,
}

/// Every training, model and decoding knob. Field names are the config-file
/// keys; missing keys take the defaults below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Ranking-loss weight λ.
    pub lambda: f64,
    /// Ranking margin m.
    pub margin: f64,
    pub rank_loss_form: RankLossForm,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm cap; off when absent.
    pub clip_norm: Option<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub k: usize,
    pub d_s: usize,
    pub d_g: usize,
    pub d_w: usize,
    pub architecture: Architecture,
    pub carry_state: bool,
    /// Vocabulary frequency threshold.
    pub min_count: usize,
    pub beam: usize,
    pub max_len: usize,
    /// Decode from the ground-truth summary photos instead of the selector's.
    pub oracle_selection: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 1.0,
            margin: 1.0,
            rank_loss_form: RankLossForm::Intended,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: None,
            epochs: 50,
            batch_size: 4,
            seed: 0,
            k: 16,
            d_s: 16,
            d_g: 32,
            d_w: 16,
            architecture: Architecture::HAttn,
            carry_state: true,
            min_count: 1,
            beam: 3,
            max_len: 8,
            oracle_selection: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and ≥ 0");
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad("margin must be finite and > 0");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and > 0");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be > 0");
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return bad("clip_norm must be > 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.beam == 0 || self.max_len == 0 {
            return bad("beam and max_len must be positive");
        }
        if self.min_count == 0 {
            return bad("min_count must be positive");
        }
        self.model_config(1).validate()
    }

    pub fn model_config(&self, vocab: usize) -> ModelConfig {
        ModelConfig {
            carry_state: self.carry_state,
            architecture: self.architecture,
            ..ModelConfig::new(self.k, self.d_s, self.d_g, self.d_w, vocab)
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Pretty JSON in declaration order.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form, hex encoded.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
