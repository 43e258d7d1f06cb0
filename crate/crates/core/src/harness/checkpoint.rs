//! Checkpoint files: `HATSTORY1`, a little-endian u64 header length, a UTF-8
//! JSON header, then every parameter as little-endian f64 in manifest order.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, ModelParams};
use crate::numerics::Tensor;
use crate::training::TrainConfig;

pub const MAGIC: &[u8; 9] = b"HATSTORY1";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub model: ModelConfig,
    pub vocabulary: Vocabulary,
    pub config_fingerprint: String,
    pub config: TrainConfig,
    pub manifest: Vec<ManifestEntry>,
}

/// A trained model with what is needed to use it on new data.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub vocabulary: Vocabulary,
    pub config: TrainConfig,
}

impl Checkpoint {
    pub fn header(&self) -> CheckpointHeader {
        CheckpointHeader {
            version: VERSION,
            model: self.model.config.clone(),
            vocabulary: self.vocabulary.clone(),
            config_fingerprint: self.config.fingerprint(),
            config: self.config.clone(),
            manifest: self
                .model
                .params
                .leaves()
                .into_iter()
                .map(|(name, t)| ManifestEntry { name, shape: t.shape().to_vec() })
                .collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header()).expect("header serializes");
        let mut out = Vec::with_capacity(MAGIC.len() + 8 + header.len() + 8 * self.model.params.numel());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for x in self.model.params.flat() {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let rest = &bytes[MAGIC.len()..];
        let len_bytes: [u8; 8] = rest
            .get(..8)
            .ok_or_else(|| Error::Corruption("truncated before the header length".into()))?
            .try_into()
            .expect("8 bytes");
        let header_len = usize::try_from(u64::from_le_bytes(len_bytes))
            .map_err(|_| Error::Corruption("header length overflows".into()))?;
        let rest = &rest[8..];
        if rest.len() < header_len {
            return Err(Error::Corruption(format!(
                "header is {header_len} bytes but only {} remain",
                rest.len()
            )));
        }
        let header: CheckpointHeader = serde_json::from_slice(&rest[..header_len])
            .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        if header.version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {}", header.version)));
        }
        let payload = &rest[header_len..];

        let mut params = ModelParams::zeros(&header.model)?;
        let expected = params.leaves();
        let manifest_ok = expected.len() == header.manifest.len()
            && expected
                .iter()
                .zip(&header.manifest)
                .all(|((n, t), e)| *n == e.name && t.shape() == e.shape.as_slice());
        if !manifest_ok {
            return Err(Error::Format("tensor manifest does not match the model dimensions".into()));
        }
        let numel: usize = header.manifest.iter().map(|e| e.shape.iter().product::<usize>()).sum();
        if payload.len() != 8 * numel {
            return Err(Error::Corruption(format!(
                "payload holds {} bytes, manifest needs {}",
                payload.len(),
                8 * numel
            )));
        }
        let mut values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        params.visit_mut(&mut |_, t: &mut Tensor| {
            for x in t.data_mut() {
                *x = values.next().expect("length checked");
            }
        });
        if header.vocabulary.len() != header.model.vocab {
            return Err(Error::Format(format!(
                "vocabulary has {} tokens, model expects {}",
                header.vocabulary.len(),
                header.model.vocab
            )));
        }
        Ok(Checkpoint {
            model: Model::from_parts(header.model, params)?,
            vocabulary: header.vocabulary,
            config: header.config,
        })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

/// SHA-256 of a file, hex encoded.
pub fn file_sha256(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
