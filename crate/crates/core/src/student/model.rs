use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::features::FeatureVector;
use crate::distill::Logits;
use crate::error::{Error, Result};

/// Architecture of the student scorer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Feature space is `2^hash_bits` rows.
    pub hash_bits: u32,
    pub embed_dim: usize,
    pub hidden: usize,
    /// Standard deviation of the Gaussian embedding init.
    pub embed_init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hash_bits: 18,
            embed_dim: 64,
            hidden: 128,
            embed_init_std: 2.0,
        }
    }
}

impl ModelConfig {
    pub fn rows(&self) -> usize {
        1usize << self.hash_bits
    }

    pub fn input_dim(&self) -> usize {
        3 * self.embed_dim
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=24).contains(&self.hash_bits) || self.embed_dim == 0 || self.hidden == 0 {
            return Err(Error::Config(format!("invalid model config {self:?}")));
        }
        if !(self.embed_init_std.is_finite() && self.embed_init_std >= 0.0) {
            return Err(Error::Config("embed_init_std must be finite and >= 0".into()));
        }
        Ok(())
    }
}

pub const TENSOR_NAMES: [&str; 5] = ["embedding", "w1", "b1", "w2", "b2"];

/// All learnable weights. Matrices are row-major:
/// `embedding` is `rows × d`, `w1` is `hidden × 3d`, `w2` is `2 × hidden`.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentParams {
    pub config: ModelConfig,
    pub embedding: Vec<f64>,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl StudentParams {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(StudentParams {
            config,
            embedding: vec![0.0; config.rows() * config.embed_dim],
            w1: vec![0.0; config.hidden * config.input_dim()],
            b1: vec![0.0; config.hidden],
            w2: vec![0.0; 2 * config.hidden],
            b2: vec![0.0; 2],
        })
    }

    /// Gaussian embeddings, Glorot-uniform MLP weights, zero biases.
    pub fn init(config: ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut p = StudentParams::zeros(config)?;
        if config.embed_init_std > 0.0 {
            let normal = Normal::new(0.0, config.embed_init_std).expect("validated std");
            p.embedding.iter_mut().for_each(|w| *w = normal.sample(rng));
        }
        let glorot = |fan_in: usize, fan_out: usize| {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Uniform::new_inclusive(-a, a).expect("finite bound")
        };
        let u1 = glorot(config.input_dim(), config.hidden);
        p.w1.iter_mut().for_each(|w| *w = u1.sample(rng));
        let u2 = glorot(config.hidden, 2);
        p.w2.iter_mut().for_each(|w| *w = u2.sample(rng));
        Ok(p)
    }

    pub fn init_from_seed(config: ModelConfig, seed: u64) -> Result<Self> {
        StudentParams::init(config, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn tensors(&self) -> [&[f64]; 5] {
        [&self.embedding, &self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 5] {
        [
            &mut self.embedding,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn check_shapes(&self) -> Result<()> {
        let c = &self.config;
        let expected = [
            c.rows() * c.embed_dim,
            c.hidden * c.input_dim(),
            c.hidden,
            2 * c.hidden,
            2,
        ];
        for ((name, t), n) in TENSOR_NAMES.iter().zip(self.tensors()).zip(expected) {
            if t.len() != n {
                return Err(Error::InvalidInput(format!(
                    "tensor `{name}` has {} values, expected {n}",
                    t.len()
                )));
            }
        }
        Ok(())
    }

    fn row(&self, index: u32) -> &[f64] {
        let d = self.config.embed_dim;
        let start = index as usize * d;
        &self.embedding[start..start + d]
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub e_q: Vec<f64>,
    pub e_s: Vec<f64>,
    /// `[e_q ; e_s ; e_q ⊙ e_s]`
    pub input: Vec<f64>,
    /// Hidden activations after `tanh`.
    pub hidden: Vec<f64>,
    pub logits: Logits,
}

fn mean_pool(params: &StudentParams, features: &FeatureVector) -> Result<Vec<f64>> {
    let rows = params.config.rows();
    let mut out = vec![0.0; params.config.embed_dim];
    let total = features.total_count();
    if total == 0 {
        return Ok(out);
    }
    for &(index, count) in features.entries() {
        if index as usize >= rows {
            return Err(Error::InvalidInput(format!(
                "feature index {index} outside hash space of {rows} rows"
            )));
        }
        let c = count as f64;
        for (o, w) in out.iter_mut().zip(params.row(index)) {
            *o += c * w;
        }
    }
    let inv = 1.0 / total as f64;
    out.iter_mut().for_each(|o| *o *= inv);
    Ok(out)
}

pub fn forward_cached(params: &StudentParams, fq: &FeatureVector, fs: &FeatureVector) -> Result<ForwardCache> {
    params.check_shapes()?;
    let c = &params.config;
    let e_q = mean_pool(params, fq)?;
    let e_s = mean_pool(params, fs)?;
    let mut input = Vec::with_capacity(c.input_dim());
    input.extend_from_slice(&e_q);
    input.extend_from_slice(&e_s);
    input.extend(e_q.iter().zip(&e_s).map(|(a, b)| a * b));

    let n_in = c.input_dim();
    let hidden: Vec<f64> = (0..c.hidden)
        .map(|j| {
            let w = &params.w1[j * n_in..(j + 1) * n_in];
            let pre: f64 = params.b1[j] + w.iter().zip(&input).map(|(a, b)| a * b).sum::<f64>();
            pre.tanh()
        })
        .collect();

    let mut z = [0.0; 2];
    for (k, zk) in z.iter_mut().enumerate() {
        let w = &params.w2[k * c.hidden..(k + 1) * c.hidden];
        *zk = params.b2[k] + w.iter().zip(&hidden).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(ForwardCache {
        e_q,
        e_s,
        input,
        hidden,
        logits: Logits(z),
    })
}

/// Two-class logits for a featurized (question, sentence) pair.
pub fn forward(params: &StudentParams, fq: &FeatureVector, fs: &FeatureVector) -> Result<Logits> {
    Ok(forward_cached(params, fq, fs)?.logits)
}

/// Parameter gradients. Embedding gradients are stored per touched row;
/// absent rows are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embedding: BTreeMap<u32, Vec<f64>>,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradients {
    pub fn zeros(config: &ModelConfig) -> Self {
        Gradients {
            embedding: BTreeMap::new(),
            w1: vec![0.0; config.hidden * config.input_dim()],
            b1: vec![0.0; config.hidden],
            w2: vec![0.0; 2 * config.hidden],
            b2: vec![0.0; 2],
        }
    }

    /// Resets to zero while keeping allocations for the MLP tensors.
    pub fn clear(&mut self) {
        self.embedding.clear();
        for t in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            t.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Gradient entry by tensor index (see [`TENSOR_NAMES`]) and flat offset.
    pub fn get(&self, tensor: usize, offset: usize, embed_dim: usize) -> f64 {
        match tensor {
            0 => self
                .embedding
                .get(&((offset / embed_dim) as u32))
                .map_or(0.0, |row| row[offset % embed_dim]),
            1 => self.w1[offset],
            2 => self.b1[offset],
            3 => self.w2[offset],
            4 => self.b2[offset],
            _ => panic!("tensor index {tensor} out of range"),
        }
    }

    /// First non-finite entry as `(tensor name, flat offset)`.
    pub fn first_non_finite(&self, embed_dim: usize) -> Option<(&'static str, usize)> {
        for (row, g) in &self.embedding {
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Some(("embedding", *row as usize * embed_dim + i));
            }
        }
        let dense = [(1, &self.w1), (2, &self.b1), (3, &self.w2), (4, &self.b2)];
        for (t, g) in dense {
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Some((TENSOR_NAMES[t], i));
            }
        }
        None
    }
}

fn scatter_rows(grads: &mut Gradients, features: &FeatureVector, grad_pooled: &[f64]) {
    let total = features.total_count();
    if total == 0 {
        return;
    }
    let d = grad_pooled.len();
    for &(index, count) in features.entries() {
        let w = count as f64 / total as f64;
        let row = grads.embedding.entry(index).or_insert_with(|| vec![0.0; d]);
        for (r, g) in row.iter_mut().zip(grad_pooled) {
            *r += w * g;
        }
    }
}

/// Accumulates the gradient of `grad_logits · logits` into `grads`.
pub fn backward_cached(
    params: &StudentParams,
    fq: &FeatureVector,
    fs: &FeatureVector,
    cache: &ForwardCache,
    grad_logits: [f64; 2],
    grads: &mut Gradients,
) -> Result<()> {
    if grad_logits.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!("non-finite logit gradient {grad_logits:?}")));
    }
    let c = &params.config;
    if grads.w1.len() != params.w1.len() || grads.w2.len() != params.w2.len() {
        return Err(Error::InvalidInput("gradient buffer shape mismatch".into()));
    }
    let h = c.hidden;
    let d = c.embed_dim;
    let n_in = c.input_dim();

    let mut grad_hidden = vec![0.0; h];
    for k in 0..2 {
        let g = grad_logits[k];
        grads.b2[k] += g;
        for j in 0..h {
            grads.w2[k * h + j] += g * cache.hidden[j];
            grad_hidden[j] += g * params.w2[k * h + j];
        }
    }

    let mut grad_input = vec![0.0; n_in];
    for j in 0..h {
        let a = cache.hidden[j];
        let g = grad_hidden[j] * (1.0 - a * a);
        if g == 0.0 {
            continue;
        }
        grads.b1[j] += g;
        let w = &params.w1[j * n_in..(j + 1) * n_in];
        let gw = &mut grads.w1[j * n_in..(j + 1) * n_in];
        for i in 0..n_in {
            gw[i] += g * cache.input[i];
            grad_input[i] += g * w[i];
        }
    }

    let mut grad_q = vec![0.0; d];
    let mut grad_s = vec![0.0; d];
    for i in 0..d {
        let gp = grad_input[2 * d + i];
        grad_q[i] = grad_input[i] + gp * cache.e_s[i];
        grad_s[i] = grad_input[d + i] + gp * cache.e_q[i];
    }
    scatter_rows(grads, fq, &grad_q);
    scatter_rows(grads, fs, &grad_s);
    Ok(())
}

/// Gradients of `grad_logits · forward(params, fq, fs)` for every parameter.
pub fn backward(
    params: &StudentParams,
    fq: &FeatureVector,
    fs: &FeatureVector,
    grad_logits: [f64; 2],
) -> Result<Gradients> {
    let cache = forward_cached(params, fq, fs)?;
    let mut grads = Gradients::zeros(&params.config);
    backward_cached(params, fq, fs, &cache, grad_logits, &mut grads)?;
    Ok(grads)
}
