//! Incremental decoder with two history mechanisms.
//!
//! `self-attention` keeps per-layer key/value caches that grow with the
//! step count, so each step attends over the whole history. `aan` keeps one
//! running sum per layer and replaces attention with a cumulative uniform
//! average of the previous layer's outputs — per-step work and state size
//! are then independent of the output position. Cross-attention and the
//! feed-forward sublayer are identical in both variants.
//!
//! The history core's multiply-accumulate count is tracked per step so the
//! complexity difference is observable instead of folklore.

use crate::error::{Error, Result};
use crate::model::config::{DecoderVariant, ModelConfig};
use crate::model::encoder::{ffn_block, linear, multi_head_attention, norm};
use crate::model::params::ModelParams;
use crate::runtime::GemmEngine;
use crate::tensor::{self, Tensor};

/// Per-layer key/value history, row-major `[t, emb]` each.
#[derive(Clone, Debug, Default)]
pub struct KvCache {
    keys: Vec<f32>,
    values: Vec<f32>,
}

/// Decoding state for one hypothesis.
#[derive(Clone, Debug)]
pub enum DecoderState {
    SelfAttn {
        layers: Vec<KvCache>,
        t: usize,
        last_core_macs: u64,
    },
    Aan {
        /// One running sum of previous-layer outputs per layer, `[emb]`.
        running_sums: Vec<Vec<f32>>,
        t: usize,
        last_core_macs: u64,
    },
}

impl DecoderState {
    pub fn new(config: &ModelConfig) -> Self {
        match config.decoder_variant {
            DecoderVariant::SelfAttention => DecoderState::SelfAttn {
                layers: vec![KvCache::default(); config.dec_layers],
                t: 0,
                last_core_macs: 0,
            },
            DecoderVariant::Aan => DecoderState::Aan {
                running_sums: vec![vec![0.0; config.emb_dim]; config.dec_layers],
                t: 0,
                last_core_macs: 0,
            },
        }
    }

    /// Steps taken so far.
    pub fn step_count(&self) -> usize {
        match self {
            DecoderState::SelfAttn { t, .. } | DecoderState::Aan { t, .. } => *t,
        }
    }

    /// Exact number of buffered f32 elements. Grows as `2 * layers * t *
    /// emb` for self-attention and stays at `layers * emb` for averaging.
    pub fn state_elems(&self) -> usize {
        match self {
            DecoderState::SelfAttn { layers, .. } => {
                layers.iter().map(|c| c.keys.len() + c.values.len()).sum()
            }
            DecoderState::Aan { running_sums, .. } => running_sums.iter().map(|s| s.len()).sum(),
        }
    }

    /// Multiply-accumulate operations spent in the history core (attention
    /// over the cache, or the cumulative average) during the last step.
    pub fn last_core_macs(&self) -> u64 {
        match self {
            DecoderState::SelfAttn { last_core_macs, .. } | DecoderState::Aan { last_core_macs, .. } => {
                *last_core_macs
            }
        }
    }
}

/// Multi-head attention of a single query row over `rows` cached key/value
/// rows (both `[rows, emb]` row-major). Returns the mixed context `[emb]`.
fn attend_single(q: &[f32], keys: &[f32], values: &[f32], rows: usize, emb: usize, heads: usize) -> Vec<f32> {
    let d = emb / heads;
    let scale = 1.0 / (d as f32).sqrt();
    let mut ctx = vec![0.0f32; emb];
    let mut scores = vec![0.0f32; rows];
    for h in 0..heads {
        let off = h * d;
        for (r, s) in scores.iter_mut().enumerate() {
            let mut acc = 0.0f32;
            for i in 0..d {
                acc += q[off + i] * keys[r * emb + off + i];
            }
            *s = acc * scale;
        }
        let max = scores.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f32;
        for s in scores.iter_mut() {
            *s = (*s - max).exp();
            sum += *s;
        }
        for s in scores.iter_mut() {
            *s /= sum;
        }
        for i in 0..d {
            let mut acc = 0.0f32;
            for (r, w) in scores.iter().enumerate() {
                acc += w * values[r * emb + off + i];
            }
            ctx[off + i] = acc;
        }
    }
    ctx
}

fn cross_and_ffn(
    config: &ModelConfig,
    params: &ModelParams,
    engine: &mut GemmEngine,
    layer: usize,
    x: Tensor<f32>,
    enc_out: &Tensor<f32>,
) -> Result<Tensor<f32>> {
    let cross = multi_head_attention(config, params, engine, &format!("dec.{layer}.cross"), &x, enc_out)?;
    let x = norm(params, &format!("dec.{layer}.ln2"), &tensor::add(&x, &cross)?)?;
    let ffn = ffn_block(engine, params, &format!("dec.{layer}.ffn"), &x)?;
    norm(params, &format!("dec.{layer}.ln3"), &tensor::add(&x, &ffn)?)
}

fn elementwise_mul(a: &Tensor<f32>, b: &Tensor<f32>) -> Result<Tensor<f32>> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "elementwise product: shapes {} and {} disagree",
            a.shape(),
            b.shape()
        )));
    }
    let out = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
    Tensor::new(a.dims(), out)
}

/// The averaging block's FFN/gate/residual/norm applied to `y` (block
/// input) and `g` (cumulative averages), both `[rows, emb]`.
fn aan_combine(
    config: &ModelConfig,
    params: &ModelParams,
    engine: &mut GemmEngine,
    layer: usize,
    y: &Tensor<f32>,
    g: &Tensor<f32>,
) -> Result<Tensor<f32>> {
    let mut h = g.clone();
    if config.aan_ffn_enabled {
        h = ffn_block(engine, params, &format!("dec.{layer}.aan.ffn"), &h)?;
    }
    if config.aan_gate_enabled {
        let cat = tensor::concat_last(&[y, &h])?;
        let gates = tensor::sigmoid(&linear(
            engine,
            params,
            &cat,
            &format!("dec.{layer}.aan.gate.w"),
            &format!("dec.{layer}.aan.gate.b"),
        )?);
        let input_gate = tensor::slice_last(&gates, 0, config.emb_dim)?;
        let forget_gate = tensor::slice_last(&gates, config.emb_dim, config.emb_dim)?;
        h = tensor::add(&elementwise_mul(&input_gate, y)?, &elementwise_mul(&forget_gate, &h)?)?;
    }
    norm(params, &format!("dec.{layer}.ln1"), &tensor::add(y, &h)?)
}

/// Advance the decoder by one step.
///
/// `y` is the embedded input token `[emb]`; the return value is the decoder
/// output `[emb]` to be projected onto the vocabulary. The state must match
/// the configured variant and is updated in place.
pub fn decoder_step(
    config: &ModelConfig,
    params: &ModelParams,
    engine: &mut GemmEngine,
    state: &mut DecoderState,
    y: &Tensor<f32>,
    enc_out: &Tensor<f32>,
) -> Result<Tensor<f32>> {
    if y.rank() != 1 || y.numel() != config.emb_dim {
        return Err(Error::Dimension(format!(
            "decoder step input must be [{}], got {}",
            config.emb_dim,
            y.shape()
        )));
    }
    let emb = config.emb_dim;
    let mut x = y.reshape(&[1, emb])?;
    let mut core_macs = 0u64;

    match (config.decoder_variant, &mut *state) {
        (DecoderVariant::SelfAttention, DecoderState::SelfAttn { layers, t, .. }) => {
            for (l, cache) in layers.iter_mut().enumerate() {
                let y_in = x.clone();
                let prefix = format!("dec.{l}.self");
                let q = linear(engine, params, &y_in, &format!("{prefix}.wq"), &format!("{prefix}.bq"))?;
                let k = linear(engine, params, &y_in, &format!("{prefix}.wk"), &format!("{prefix}.bk"))?;
                let v = linear(engine, params, &y_in, &format!("{prefix}.wv"), &format!("{prefix}.bv"))?;
                cache.keys.extend_from_slice(k.data());
                cache.values.extend_from_slice(v.data());
                let rows = *t + 1;
                let ctx = attend_single(q.data(), &cache.keys, &cache.values, rows, emb, config.heads);
                core_macs += 2 * rows as u64 * emb as u64;
                let ctx = Tensor::new(&[1, emb], ctx)?;
                let proj = linear(engine, params, &ctx, &format!("{prefix}.wo"), &format!("{prefix}.bo"))?;
                x = norm(params, &format!("dec.{l}.ln1"), &tensor::add(&y_in, &proj)?)?;
                x = cross_and_ffn(config, params, engine, l, x, enc_out)?;
            }
            *t += 1;
        }
        (DecoderVariant::Aan, DecoderState::Aan { running_sums, t, .. }) => {
            for (l, sum) in running_sums.iter_mut().enumerate() {
                let y_in = x.clone();
                let divisor = (*t + 1) as f32;
                let g: Vec<f32> = sum
                    .iter()
                    .zip(y_in.data())
                    .map(|(&s, &v)| (s + v) / divisor)
                    .collect();
                core_macs += emb as u64;
                for (s, &v) in sum.iter_mut().zip(y_in.data()) {
                    *s += v;
                }
                let g = Tensor::new(&[1, emb], g)?;
                x = aan_combine(config, params, engine, l, &y_in, &g)?;
                x = cross_and_ffn(config, params, engine, l, x, enc_out)?;
            }
            *t += 1;
        }
        _ => {
            return Err(Error::State(format!(
                "decoder state does not match the {} variant",
                config.decoder_variant
            )))
        }
    }

    match state {
        DecoderState::SelfAttn { last_core_macs, .. } | DecoderState::Aan { last_core_macs, .. } => {
            *last_core_macs = core_macs;
        }
    }
    x.reshape(&[emb])
}

/// Parallel form of one averaging block over a whole sequence `[T, emb]`:
/// multiply by the lower-triangular cumulative-mean matrix (row t holds
/// `1/(t+1)` on its first `t+1` entries), then the block's FFN, gate,
/// residual and norm. Step-by-step decoding reproduces this column for
/// column.
pub fn aan_parallel(
    config: &ModelConfig,
    params: &ModelParams,
    engine: &mut GemmEngine,
    layer: usize,
    y: &Tensor<f32>,
) -> Result<Tensor<f32>> {
    if config.decoder_variant != DecoderVariant::Aan {
        return Err(Error::State("aan_parallel needs an aan-variant configuration".into()));
    }
    let (t_len, emb) = y.shape().dims2()?;
    if emb != config.emb_dim {
        return Err(Error::Dimension(format!(
            "aan_parallel input width {emb} does not match emb_dim {}",
            config.emb_dim
        )));
    }
    let mut mean_matrix = vec![0.0f32; t_len * t_len];
    for row in 0..t_len {
        let w = 1.0 / (row + 1) as f32;
        for col in 0..=row {
            mean_matrix[row * t_len + col] = w;
        }
    }
    let g = tensor::gemm_f32(&Tensor::new(&[t_len, t_len], mean_matrix)?, y)?;
    aan_combine(config, params, engine, layer, y, &g)
}

/// Project a decoder output onto the vocabulary via the tied embedding:
/// `logit[j] = dot(dec_out, embed[id_j])`. With a shortlist only those rows
/// are computed, in shortlist order.
pub fn output_logits(
    dec_out: &Tensor<f32>,
    embed: &Tensor<f32>,
    shortlist: Option<&[u32]>,
) -> Result<Vec<f32>> {
    let (vocab, emb) = embed.shape().dims2()?;
    if dec_out.rank() != 1 || dec_out.numel() != emb {
        return Err(Error::Dimension(format!(
            "decoder output must be [{emb}], got {}",
            dec_out.shape()
        )));
    }
    let x = dec_out.data();
    let dot = |id: usize| -> f32 {
        let row = &embed.data()[id * emb..(id + 1) * emb];
        x.iter().zip(row).map(|(&a, &b)| a * b).sum()
    };
    match shortlist {
        Some(ids) => {
            let mut out = Vec::with_capacity(ids.len());
            for &id in ids {
                if id as usize >= vocab {
                    return Err(Error::Vocabulary(format!("shortlist id {id} outside vocabulary of {vocab}")));
                }
                out.push(dot(id as usize));
            }
            Ok(out)
        }
        None => Ok((0..vocab).map(dot).collect()),
    }
}
