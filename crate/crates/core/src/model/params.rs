use std::convert::Infallible;

use serde::{Deserialize, Serialize};

use crate::data::STORY_SENTENCES;
use crate::error::{Error, Result};
use crate::numerics::{Rng, Tape, Tensor, Var};
use crate::recurrent::{EmbeddingTable, GruParams, Linear, MlpParams};

/// Which network produces the visual input for each sentence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    /// Encoder, latent photo selector and story generator.
    #[default]
    #[serde(rename = "h-attn")]
    HAttn,
    /// Final encoder state, projected, fed to every sentence.
    #[serde(rename = "enc-dec")]
    EncDec,
    /// Soft attention over photos driven by the decoder state.
    #[serde(rename = "enc-attn-dec")]
    EncAttnDec,
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "h-attn" => Ok(Architecture::HAttn),
            "enc-dec" => Ok(Architecture::EncDec),
            "enc-attn-dec" => Ok(Architecture::EncAttnDec),
            other => Err(Error::Config(format!("unknown architecture {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Photo feature width; also the width of every v_i and g_t. Must be even.
    pub k: usize,
    /// Selector hidden width.
    pub d_s: usize,
    /// Generator hidden width.
    pub d_g: usize,
    /// Word embedding width.
    pub d_w: usize,
    pub vocab: usize,
    /// Summary steps (sentences per story).
    pub steps: usize,
    /// Carry the generator state across sentence boundaries instead of
    /// resetting it to zero.
    pub carry_state: bool,
    pub architecture: Architecture,
}

impl ModelConfig {
    pub fn new(k: usize, d_s: usize, d_g: usize, d_w: usize, vocab: usize) -> Self {
        ModelConfig {
            k,
            d_s,
            d_g,
            d_w,
            vocab,
            steps: STORY_SENTENCES,
            carry_state: true,
            architecture: Architecture::HAttn,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k % 2 != 0 {
            return Err(Error::Config(format!(
                "feature width k = {} must be even and positive so the bi-GRU halves sum to k",
                self.k
            )));
        }
        if self.d_s == 0 || self.d_g == 0 || self.d_w == 0 {
            return Err(Error::Config("hidden and embedding widths must be positive".into()));
        }
        if self.vocab == 0 {
            return Err(Error::Config("empty vocabulary".into()));
        }
        if self.steps != STORY_SENTENCES {
            return Err(Error::Config(format!(
                "summary steps must be {STORY_SENTENCES}, got {}",
                self.steps
            )));
        }
        Ok(())
    }
}

/// Every weight of the storytelling model and both baselines.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T = Tensor> {
    pub enc_fwd: GruParams<T>,
    pub enc_bwd: GruParams<T>,
    pub sel_gru: GruParams<T>,
    pub sel_mlp: MlpParams<T>,
    pub gen_gru: GruParams<T>,
    pub embedding: EmbeddingTable<T>,
    pub vocab_proj: Linear<T>,
    /// enc-dec: final encoder state → decoder visual input.
    pub encdec_proj: Linear<T>,
    /// enc-attn-dec: attention scorer over [decoder state, v_i].
    pub attn_mlp: MlpParams<T>,
}

impl<T> ModelParams<T> {
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(String, &'a T)) {
        self.enc_fwd.visit("encoder.fwd", f);
        self.enc_bwd.visit("encoder.bwd", f);
        self.sel_gru.visit("selector.gru", f);
        self.sel_mlp.visit("selector.mlp", f);
        self.gen_gru.visit("generator.gru", f);
        self.embedding.visit("generator.embedding", f);
        self.vocab_proj.visit("generator.proj", f);
        self.encdec_proj.visit("baseline.encdec_proj", f);
        self.attn_mlp.visit("baseline.attn_mlp", f);
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(String, &mut T)) {
        self.enc_fwd.visit_mut("encoder.fwd", f);
        self.enc_bwd.visit_mut("encoder.bwd", f);
        self.sel_gru.visit_mut("selector.gru", f);
        self.sel_mlp.visit_mut("selector.mlp", f);
        self.gen_gru.visit_mut("generator.gru", f);
        self.embedding.visit_mut("generator.embedding", f);
        self.vocab_proj.visit_mut("generator.proj", f);
        self.encdec_proj.visit_mut("baseline.encdec_proj", f);
        self.attn_mlp.visit_mut("baseline.attn_mlp", f);
    }

    pub fn try_map<U, E>(
        &self,
        f: &mut dyn FnMut(&str, &T) -> std::result::Result<U, E>,
    ) -> std::result::Result<ModelParams<U>, E> {
        Ok(ModelParams {
            enc_fwd: self.enc_fwd.try_map("encoder.fwd", f)?,
            enc_bwd: self.enc_bwd.try_map("encoder.bwd", f)?,
            sel_gru: self.sel_gru.try_map("selector.gru", f)?,
            sel_mlp: self.sel_mlp.try_map("selector.mlp", f)?,
            gen_gru: self.gen_gru.try_map("generator.gru", f)?,
            embedding: self.embedding.try_map("generator.embedding", f)?,
            vocab_proj: self.vocab_proj.try_map("generator.proj", f)?,
            encdec_proj: self.encdec_proj.try_map("baseline.encdec_proj", f)?,
            attn_mlp: self.attn_mlp.try_map("baseline.attn_mlp", f)?,
        })
    }

    pub fn map<U>(&self, mut f: impl FnMut(&str, &T) -> U) -> ModelParams<U> {
        self.try_map::<U, Infallible>(&mut |n, t| Ok(f(n, t)))
            .unwrap_or_else(|e| match e {})
    }

    /// Leaves in canonical (manifest) order.
    pub fn leaves(&self) -> Vec<(String, &T)> {
        let mut out = Vec::new();
        self.visit(&mut |name, t| out.push((name, t)));
        out
    }
}

impl ModelParams<Tensor> {
    pub fn init(cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let (k, d_s, d_g, d_w, v) = (cfg.k, cfg.d_s, cfg.d_g, cfg.d_w, cfg.vocab);
        Ok(ModelParams {
            enc_fwd: GruParams::init(rng, k, k / 2)?,
            enc_bwd: GruParams::init(rng, k, k / 2)?,
            sel_gru: GruParams::init(rng, k, d_s)?,
            sel_mlp: MlpParams::init(rng, &[d_s + k, d_s + k, 1])?,
            gen_gru: GruParams::init(rng, d_w + k, d_g)?,
            embedding: EmbeddingTable::init(rng, v, d_w)?,
            vocab_proj: Linear::init(rng, d_g, v)?,
            encdec_proj: Linear::init(rng, k, k)?,
            attn_mlp: MlpParams::init(rng, &[d_g + k, d_g + k, 1])?,
        })
    }

    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let (k, d_s, d_g, d_w, v) = (cfg.k, cfg.d_s, cfg.d_g, cfg.d_w, cfg.vocab);
        Ok(ModelParams {
            enc_fwd: GruParams::zeros(k, k / 2),
            enc_bwd: GruParams::zeros(k, k / 2),
            sel_gru: GruParams::zeros(k, d_s),
            sel_mlp: MlpParams::zeros(&[d_s + k, d_s + k, 1]),
            gen_gru: GruParams::zeros(d_w + k, d_g),
            embedding: EmbeddingTable {
                table: Tensor::zeros(&[v, d_w]),
            },
            vocab_proj: Linear::zeros(d_g, v),
            encdec_proj: Linear::zeros(k, k),
            attn_mlp: MlpParams::zeros(&[d_g + k, d_g + k, 1]),
        })
    }

    /// Checks every tensor against the shapes `cfg` implies.
    pub fn check_shapes(&self, cfg: &ModelConfig) -> Result<()> {
        let expected = ModelParams::zeros(cfg)?;
        let mine = self.leaves();
        let theirs = expected.leaves();
        if mine.len() != theirs.len() {
            return Err(Error::Dimension(format!(
                "{} parameter tensors, expected {}",
                mine.len(),
                theirs.len()
            )));
        }
        for ((name, t), (_, e)) in mine.iter().zip(&theirs) {
            if t.shape() != e.shape() {
                return Err(Error::Dimension(format!(
                    "{name} has shape {:?}, expected {:?}",
                    t.shape(),
                    e.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn numel(&self) -> usize {
        self.leaves().iter().map(|(_, t)| t.numel()).sum()
    }

    /// Flattens all parameters in manifest order.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.numel());
        self.visit(&mut |_, t| out.extend_from_slice(t.data()));
        out
    }
}

/// A model: configuration plus weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

/// Parameters bound onto a tape for one forward pass.
pub struct Bound<'m> {
    pub config: &'m ModelConfig,
    pub p: ModelParams<Var>,
}

impl Model {
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        let params = ModelParams::init(&config, rng)?;
        Ok(Model { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        params.check_shapes(&config)?;
        Ok(Model { config, params })
    }

    /// Records every weight on `tape`; `trainable` decides whether gradients
    /// flow back to them.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound<'_> {
        let p = self.params.map(|_, t| {
            if trainable {
                tape.leaf(t.clone())
            } else {
                tape.constant(t.clone())
            }
        });
        Bound {
            config: &self.config,
            p,
        }
    }
}

/// Groups a parameter name into the module it belongs to.
pub fn module_of(name: &str) -> &str {
    match name.split('.').next().unwrap_or(name) {
        "encoder" => "encoder",
        "selector" => "selector",
        "generator" => "generator",
        _ => "baseline",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn odd_k_is_rejected() {
        let cfg = ModelConfig::new(5, 4, 4, 4, 10);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert!(Model::new(cfg, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn leaves_are_named_and_ordered() {
        let cfg = ModelConfig::new(4, 3, 5, 2, 7);
        let p = ModelParams::init(&cfg, &mut Rng::new(1)).unwrap();
        let names: Vec<String> = p.leaves().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names[0], "encoder.fwd.w_z");
        assert!(names.contains(&"selector.mlp.layer1.bias".to_string()));
        assert!(names.contains(&"generator.embedding.table".to_string()));
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
        p.check_shapes(&cfg).unwrap();
    }

    #[test]
    fn init_is_seeded() {
        let cfg = ModelConfig::new(4, 3, 5, 2, 7);
        let a = ModelParams::init(&cfg, &mut Rng::new(9)).unwrap();
        let b = ModelParams::init(&cfg, &mut Rng::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shape_check_catches_mismatch() {
        let cfg = ModelConfig::new(4, 3, 5, 2, 7);
        let mut p = ModelParams::zeros(&cfg).unwrap();
        p.vocab_proj.bias = Tensor::zeros(&[8]);
        assert!(p.check_shapes(&cfg).is_err());
    }

    #[test]
    fn architecture_names_round_trip() {
        for a in [Architecture::HAttn, Architecture::EncDec, Architecture::EncAttnDec] {
            let s = serde_json::to_string(&a).unwrap();
            let name: String = serde_json::from_str(&s).unwrap();
            assert_eq!(name.parse::<Architecture>().unwrap(), a);
        }
    }
}
