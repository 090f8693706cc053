//! Transformer encoder stack and the shared projection/attention blocks.
//!
//! Post-norm layout: each sublayer output is `layer_norm(x + sublayer(x))`.
//! Parameter products go through the [`GemmEngine`] so the precision regime
//! applies uniformly; activation-by-activation products (attention scores
//! and mixing) stay in float.

use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::params::ModelParams;
use crate::runtime::GemmEngine;
use crate::tensor::{self, Tensor, LAYER_NORM_EPS};

/// Sinusoidal position signal for one position.
pub fn positional_signal(position: usize, emb_dim: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; emb_dim];
    for i in 0..emb_dim {
        let pair = (i / 2) as f32;
        let rate = 1.0 / 10_000f32.powf(2.0 * pair / emb_dim as f32);
        let angle = position as f32 * rate;
        out[i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
    }
    out
}

/// Embed one token at one position: embedding row scaled by sqrt(emb_dim),
/// plus the position signal when enabled.
pub fn embed_token(
    config: &ModelConfig,
    params: &ModelParams,
    token: u32,
    position: usize,
) -> Result<Tensor<f32>> {
    if token as usize >= config.vocab_size {
        return Err(Error::Vocabulary(format!(
            "token id {token} outside vocabulary of {}",
            config.vocab_size
        )));
    }
    let embed = params.get("embed")?;
    let scale = (config.emb_dim as f32).sqrt();
    let mut row: Vec<f32> = embed.row(token as usize)?.iter().map(|&v| v * scale).collect();
    if config.sinusoidal_positions {
        for (v, p) in row.iter_mut().zip(positional_signal(position, config.emb_dim)) {
            *v += p;
        }
    }
    Tensor::new(&[config.emb_dim], row)
}

fn embed_sequence(config: &ModelConfig, params: &ModelParams, ids: &[u32]) -> Result<Tensor<f32>> {
    let mut data = Vec::with_capacity(ids.len() * config.emb_dim);
    for (pos, &id) in ids.iter().enumerate() {
        data.extend_from_slice(embed_token(config, params, id, pos)?.data());
    }
    Tensor::new(&[ids.len(), config.emb_dim], data)
}

pub(crate) fn linear(
    engine: &mut GemmEngine,
    params: &ModelParams,
    x: &Tensor<f32>,
    w_name: &str,
    b_name: &str,
) -> Result<Tensor<f32>> {
    let product = engine.matmul(w_name, x, params.get(w_name)?)?;
    tensor::add(&product, params.get(b_name)?)
}

pub(crate) fn norm(params: &ModelParams, prefix: &str, x: &Tensor<f32>) -> Result<Tensor<f32>> {
    tensor::layer_norm(
        x,
        params.get(&format!("{prefix}.gain"))?,
        params.get(&format!("{prefix}.bias"))?,
        LAYER_NORM_EPS,
    )
}

pub(crate) fn ffn_block(
    engine: &mut GemmEngine,
    params: &ModelParams,
    prefix: &str,
    x: &Tensor<f32>,
) -> Result<Tensor<f32>> {
    let hidden = tensor::relu(&linear(engine, params, x, &format!("{prefix}.w1"), &format!("{prefix}.b1"))?);
    linear(engine, params, &hidden, &format!("{prefix}.w2"), &format!("{prefix}.b2"))
}

/// Batched multi-head attention of `q_src` over `kv_src` (no masking).
pub(crate) fn multi_head_attention(
    config: &ModelConfig,
    params: &ModelParams,
    engine: &mut GemmEngine,
    prefix: &str,
    q_src: &Tensor<f32>,
    kv_src: &Tensor<f32>,
) -> Result<Tensor<f32>> {
    let q = linear(engine, params, q_src, &format!("{prefix}.wq"), &format!("{prefix}.bq"))?;
    let k = linear(engine, params, kv_src, &format!("{prefix}.wk"), &format!("{prefix}.bk"))?;
    let v = linear(engine, params, kv_src, &format!("{prefix}.wv"), &format!("{prefix}.bv"))?;

    let d = config.head_dim();
    let scale = 1.0 / (d as f32).sqrt();
    let mut heads = Vec::with_capacity(config.heads);
    for h in 0..config.heads {
        let qh = tensor::slice_last(&q, h * d, d)?;
        let kh = tensor::slice_last(&k, h * d, d)?;
        let vh = tensor::slice_last(&v, h * d, d)?;
        let scores = tensor::scalar_mul(&tensor::gemm_f32(&qh, &tensor::transpose2d(&kh)?)?, scale);
        let attn = tensor::softmax_rows(&scores)?;
        heads.push(tensor::gemm_f32(&attn, &vh)?);
    }
    let head_refs: Vec<&Tensor<f32>> = heads.iter().collect();
    let ctx = tensor::concat_last(&head_refs)?;
    linear(engine, params, &ctx, &format!("{prefix}.wo"), &format!("{prefix}.bo"))
}

/// Run the encoder stack over a source sentence, producing `[src_len, emb]`.
pub fn encoder_forward(
    config: &ModelConfig,
    params: &ModelParams,
    engine: &mut GemmEngine,
    source_ids: &[u32],
) -> Result<Tensor<f32>> {
    if source_ids.is_empty() {
        return Err(Error::Parameter("encoder needs at least one source token".into()));
    }
    let mut x = embed_sequence(config, params, source_ids)?;
    for l in 0..config.enc_layers {
        let attn = multi_head_attention(config, params, engine, &format!("enc.{l}.attn"), &x, &x)?;
        x = norm(params, &format!("enc.{l}.ln1"), &tensor::add(&x, &attn)?)?;
        let ffn = ffn_block(engine, params, &format!("enc.{l}.ffn"), &x)?;
        x = norm(params, &format!("enc.{l}.ln2"), &tensor::add(&x, &ffn)?)?;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::Precision;

    fn tiny_config() -> ModelConfig {
        let mut c = ModelConfig::new(8, 16, 2, 12).unwrap();
        c.enc_layers = 2;
        c.dec_layers = 1;
        c
    }

    #[test]
    fn output_shape_contract() {
        let c = tiny_config();
        let params = ModelParams::random(&c, 5);
        let mut engine = GemmEngine::new(Precision::Float32);
        let out = encoder_forward(&c, &params, &mut engine, &[3]).unwrap();
        assert_eq!(out.dims(), &[1, c.emb_dim]);
        let out = encoder_forward(&c, &params, &mut engine, &[3, 4, 5, 6]).unwrap();
        assert_eq!(out.dims(), &[4, c.emb_dim]);
    }

    #[test]
    fn rejects_out_of_vocabulary_ids() {
        let c = tiny_config();
        let params = ModelParams::random(&c, 5);
        let mut engine = GemmEngine::new(Precision::Float32);
        assert!(matches!(
            encoder_forward(&c, &params, &mut engine, &[99]),
            Err(Error::Vocabulary(_))
        ));
    }

    #[test]
    fn identical_tokens_give_identical_rows_without_positions() {
        let mut c = tiny_config();
        c.sinusoidal_positions = false;
        let params = ModelParams::random(&c, 9);
        let mut engine = GemmEngine::new(Precision::Float32);
        let out = encoder_forward(&c, &params, &mut engine, &[7, 2, 7]).unwrap();
        let first = out.row(0).unwrap().to_vec();
        let last = out.row(2).unwrap().to_vec();
        // With positions disabled, attention sees a permutation-symmetric
        // input, so equal tokens at any positions produce equal rows.
        for (a, b) in first.iter().zip(&last) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    /// Straight-line reimplementation of the encoder used as an independent
    /// oracle: plain loops, no engine, no shared helpers.
    fn reference_encoder(c: &ModelConfig, p: &ModelParams, ids: &[u32]) -> Vec<Vec<f32>> {
        let e = c.emb_dim;
        let sqrt_e = (e as f32).sqrt();
        let embed = p.get("embed").unwrap();
        let mut x: Vec<Vec<f32>> = ids
            .iter()
            .enumerate()
            .map(|(pos, &id)| {
                let mut row: Vec<f32> = embed.row(id as usize).unwrap().iter().map(|v| v * sqrt_e).collect();
                if c.sinusoidal_positions {
                    for (i, v) in row.iter_mut().enumerate() {
                        let pair = (i / 2) as f32;
                        let rate = 1.0 / 10_000f32.powf(2.0 * pair / e as f32);
                        let angle = pos as f32 * rate;
                        *v += if i % 2 == 0 { angle.sin() } else { angle.cos() };
                    }
                }
                row
            })
            .collect();

        let matvec = |w: &Tensor<f32>, b: &Tensor<f32>, row: &[f32]| -> Vec<f32> {
            let (ins, outs) = w.shape().dims2().unwrap();
            (0..outs)
                .map(|o| {
                    let mut acc = b.data()[o];
                    for i in 0..ins {
                        acc += row[i] * w.data()[i * outs + o];
                    }
                    acc
                })
                .collect()
        };
        let layer_norm = |row: &[f32], gain: &Tensor<f32>, bias: &Tensor<f32>| -> Vec<f32> {
            let mean = row.iter().sum::<f32>() / row.len() as f32;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / row.len() as f32;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            row.iter()
                .enumerate()
                .map(|(i, v)| (v - mean) * inv * gain.data()[i] + bias.data()[i])
                .collect()
        };

        for l in 0..c.enc_layers {
            let pf = format!("enc.{l}.attn");
            let get = |n: &str| p.get(&format!("{pf}.{n}")).unwrap();
            let q: Vec<Vec<f32>> = x.iter().map(|r| matvec(get("wq"), get("bq"), r)).collect();
            let k: Vec<Vec<f32>> = x.iter().map(|r| matvec(get("wk"), get("bk"), r)).collect();
            let v: Vec<Vec<f32>> = x.iter().map(|r| matvec(get("wv"), get("bv"), r)).collect();
            let d = e / c.heads;
            let mut ctx = vec![vec![0.0f32; e]; x.len()];
            for h in 0..c.heads {
                for ti in 0..x.len() {
                    let mut scores: Vec<f32> = (0..x.len())
                        .map(|tj| {
                            let mut s = 0.0;
                            for di in 0..d {
                                s += q[ti][h * d + di] * k[tj][h * d + di];
                            }
                            s / (d as f32).sqrt()
                        })
                        .collect();
                    let max = scores.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                    let mut sum = 0.0;
                    for s in scores.iter_mut() {
                        *s = (*s - max).exp();
                        sum += *s;
                    }
                    for s in scores.iter_mut() {
                        *s /= sum;
                    }
                    for di in 0..d {
                        let mut acc = 0.0;
                        for (tj, w) in scores.iter().enumerate() {
                            acc += w * v[tj][h * d + di];
                        }
                        ctx[ti][h * d + di] = acc;
                    }
                }
            }
            let proj: Vec<Vec<f32>> = ctx.iter().map(|r| matvec(get("wo"), get("bo"), r)).collect();
            let g1 = p.get(&format!("enc.{l}.ln1.gain")).unwrap();
            let b1 = p.get(&format!("enc.{l}.ln1.bias")).unwrap();
            x = x
                .iter()
                .zip(&proj)
                .map(|(xa, pa)| {
                    let sum: Vec<f32> = xa.iter().zip(pa).map(|(a, b)| a + b).collect();
                    layer_norm(&sum, g1, b1)
                })
                .collect();

            let w1 = p.get(&format!("enc.{l}.ffn.w1")).unwrap();
            let bb1 = p.get(&format!("enc.{l}.ffn.b1")).unwrap();
            let w2 = p.get(&format!("enc.{l}.ffn.w2")).unwrap();
            let bb2 = p.get(&format!("enc.{l}.ffn.b2")).unwrap();
            let g2 = p.get(&format!("enc.{l}.ln2.gain")).unwrap();
            let b2v = p.get(&format!("enc.{l}.ln2.bias")).unwrap();
            x = x
                .iter()
                .map(|row| {
                    let mut hidden = matvec(w1, bb1, row);
                    for h in hidden.iter_mut() {
                        *h = h.max(0.0);
                    }
                    let out = matvec(w2, bb2, &hidden);
                    let sum: Vec<f32> = row.iter().zip(&out).map(|(a, b)| a + b).collect();
                    layer_norm(&sum, g2, b2v)
                })
                .collect();
        }
        x
    }

    #[test]
    fn matches_straight_line_reference() {
        let c = tiny_config();
        let params = ModelParams::random(&c, 11);
        let mut engine = GemmEngine::new(Precision::Float32);
        let ids = [1u32, 5, 9, 3, 7];
        let got = encoder_forward(&c, &params, &mut engine, &ids).unwrap();
        let want = reference_encoder(&c, &params, &ids);
        for (ti, row) in want.iter().enumerate() {
            for (di, expect) in row.iter().enumerate() {
                let actual = got.data()[ti * c.emb_dim + di];
                assert!(
                    (actual - expect).abs() < 1e-5,
                    "row {ti} dim {di}: {actual} vs {expect}"
                );
            }
        }
    }
}
