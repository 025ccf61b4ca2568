//! Binary checkpoint container.
//!
//! Layout: magic `CLKDCKPT`, version (u32 LE), header length (u64 LE), JSON
//! header, then every parameter tensor followed by the Adam first and second
//! moments as little-endian f64, then a SHA-256 digest of all preceding bytes.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Sampler, TrainConfig, Trainer};
use crate::error::{Error, Result};
use crate::student::{OptimState, StudentParams, TENSOR_NAMES};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"CLKDCKPT";
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub iteration: usize,
    pub params: StudentParams,
    pub optim: OptimState,
    pub sampler: Sampler,
    pub data_digest: String,
}

#[derive(Serialize, Deserialize)]
struct SamplerHeader {
    rng_seed: String,
    rng_stream: u64,
    /// u128 in decimal; JSON numbers cannot hold it.
    rng_word_pos: String,
    order: Vec<usize>,
    cursor: usize,
    epoch: u64,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    iteration: usize,
    optim_step: u64,
    sampler: SamplerHeader,
    data_digest: String,
    tensors: Vec<(String, usize)>,
}

pub fn save_checkpoint(trainer: &Trainer<'_>, path: &Path) -> Result<()> {
    trainer.checkpoint().save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path)
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let s = &self.sampler;
        let header = Header {
            config: self.config.clone(),
            iteration: self.iteration,
            optim_step: self.optim.step,
            sampler: SamplerHeader {
                rng_seed: hex::encode(s.rng.get_seed()),
                rng_stream: s.rng.get_stream(),
                rng_word_pos: s.rng.get_word_pos().to_string(),
                order: s.order.clone(),
                cursor: s.cursor,
                epoch: s.epoch,
                len: s.len,
            },
            data_digest: self.data_digest.clone(),
            tensors: TENSOR_NAMES
                .iter()
                .zip(self.params.tensors())
                .map(|(n, t)| (n.to_string(), t.len()))
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(json.len() + 24 * self.params.num_params() + 64);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let tensors = self.params.tensors();
        for block in [&tensors[..], &as_slices(&self.optim.m), &as_slices(&self.optim.v)] {
            for t in block {
                for x in t.iter() {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| Error::CheckpointIntegrity(m.to_string());
        if bytes.len() < MAGIC.len() + 12 + DIGEST_LEN || &bytes[..8] != MAGIC {
            return Err(corrupt("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion {
                expected: CHECKPOINT_VERSION,
                found: version,
            });
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(corrupt("checksum mismatch"));
        }
        let header_len = u64::from_le_bytes(body[12..20].try_into().unwrap()) as usize;
        let header_end = 20usize
            .checked_add(header_len)
            .filter(|&e| e <= body.len())
            .ok_or_else(|| corrupt("header length out of range"))?;
        let header: Header = serde_json::from_slice(&body[20..header_end])?;

        let mut params = StudentParams::zeros(header.config.model)?;
        let expected: Vec<(String, usize)> = TENSOR_NAMES
            .iter()
            .zip(params.tensors())
            .map(|(n, t)| (n.to_string(), t.len()))
            .collect();
        if expected != header.tensors {
            return Err(corrupt("tensor shapes disagree with the model config"));
        }
        let mut floats = body[header_end..].chunks_exact(8);
        if floats.len() != 3 * params.num_params() || !floats.remainder().is_empty() {
            return Err(corrupt("tensor payload has the wrong size"));
        }
        let mut read = |dst: &mut Vec<f64>| {
            for x in dst.iter_mut() {
                *x = f64::from_le_bytes(floats.next().unwrap().try_into().unwrap());
            }
        };
        for t in params.tensors_mut() {
            read(t);
        }
        let mut optim = OptimState::new(&params);
        optim.step = header.optim_step;
        for t in optim.m.iter_mut().chain(optim.v.iter_mut()) {
            read(t);
        }

        let sh = header.sampler;
        let seed: [u8; 32] = hex::decode(&sh.rng_seed)
            .ok()
            .and_then(|v| v.try_into().ok())
            .ok_or_else(|| corrupt("bad RNG seed"))?;
        let word_pos: u128 = sh.rng_word_pos.parse().map_err(|_| corrupt("bad RNG position"))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(sh.rng_stream);
        rng.set_word_pos(word_pos);
        if sh.cursor > sh.order.len() || sh.order.iter().any(|&i| i >= sh.len) {
            return Err(corrupt("sampler state out of range"));
        }
        Ok(Checkpoint {
            config: header.config,
            iteration: header.iteration,
            params,
            optim,
            sampler: Sampler {
                rng,
                order: sh.order,
                cursor: sh.cursor,
                epoch: sh.epoch,
                len: sh.len,
            },
            data_digest: header.data_digest,
        })
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        std::fs::write(&tmp, &bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(format!("renaming into {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_bytes(&bytes)
    }
}

fn as_slices(v: &[Vec<f64>]) -> Vec<&[f64]> {
    v.iter().map(Vec::as_slice).collect()
}

/// Parameters only, for scoring with a saved model.
pub fn load_params(path: &Path) -> Result<StudentParams> {
    Ok(Checkpoint::load(path)?.params)
}
