//! Model configuration, named presets and parameter-count arithmetic.

use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Decoder self-attention flavour.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum DecoderVariant {
    /// Standard decoder self-attention over the full history (state grows
    /// with output length).
    SelfAttention,
    /// Cumulative uniform averaging over the previous layer (fixed-size
    /// state, linear-time decoding).
    Aan,
}

impl DecoderVariant {
    pub fn name(self) -> &'static str {
        match self {
            DecoderVariant::SelfAttention => "self-attention",
            DecoderVariant::Aan => "aan",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "self-attention" => Ok(DecoderVariant::SelfAttention),
            "aan" => Ok(DecoderVariant::Aan),
            other => Err(Error::Parameter(format!(
                "unknown decoder variant {other:?} (expected self-attention or aan)"
            ))),
        }
    }
}

impl fmt::Display for DecoderVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Transformer encoder/decoder dimensions and decoder-variant switches.
/// Source, target and output embeddings are tied to one matrix.
#[derive(Clone, PartialEq, Debug)]
pub struct ModelConfig {
    pub emb_dim: usize,
    pub ffn_dim: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub heads: usize,
    pub vocab_size: usize,
    pub decoder_variant: DecoderVariant,
    pub aan_ffn_enabled: bool,
    pub aan_gate_enabled: bool,
    /// Hidden width of the averaging block's FFN; defaults to `emb_dim`.
    pub aan_ffn_dim: usize,
    /// Add sinusoidal position signals to embeddings. On by default; tests
    /// switch it off to probe position-independent behaviour.
    pub sinusoidal_positions: bool,
}

impl ModelConfig {
    pub fn new(emb_dim: usize, ffn_dim: usize, heads: usize, vocab_size: usize) -> Result<Self> {
        let config = ModelConfig {
            emb_dim,
            ffn_dim,
            enc_layers: 6,
            dec_layers: 6,
            heads,
            vocab_size,
            decoder_variant: DecoderVariant::SelfAttention,
            aan_ffn_enabled: true,
            aan_gate_enabled: true,
            aan_ffn_dim: emb_dim,
            sinusoidal_positions: true,
        };
        config.validate()?;
        Ok(config)
    }

    /// Named student configurations: big 1024/4096, base 512/2048,
    /// small 256/2048, tiny-256 256/1536, tiny-192 192/1536.
    pub fn preset(name: &str, vocab_size: usize) -> Result<Self> {
        let (emb, ffn, heads) = match name {
            "big" => (1024, 4096, 16),
            "base" => (512, 2048, 8),
            "small" => (256, 2048, 8),
            "tiny-256" => (256, 1536, 8),
            "tiny-192" => (192, 1536, 6),
            other => {
                return Err(Error::Parameter(format!(
                    "unknown preset {other:?} (expected big, base, small, tiny-256 or tiny-192)"
                )))
            }
        };
        ModelConfig::new(emb, ffn, heads, vocab_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.emb_dim == 0 || self.ffn_dim == 0 || self.aan_ffn_dim == 0 {
            return Err(Error::Parameter("model widths must be at least 1".into()));
        }
        if self.enc_layers == 0 || self.dec_layers == 0 {
            return Err(Error::Parameter("layer counts must be at least 1".into()));
        }
        if self.heads == 0 || self.emb_dim % self.heads != 0 {
            return Err(Error::Parameter(format!(
                "emb_dim {} must be divisible by heads {}",
                self.emb_dim, self.heads
            )));
        }
        if self.vocab_size < 3 {
            return Err(Error::Parameter("vocab_size must cover the reserved tokens".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.emb_dim / self.heads
    }

    /// Total parameter count: the tied embedding matrix once, plus every
    /// projection, bias and layer-norm vector of the encoder and decoder
    /// stacks. Optimizer state and position signals carry no parameters.
    pub fn param_count(&self) -> u64 {
        let e = self.emb_dim as u64;
        let f = self.ffn_dim as u64;
        let a = self.aan_ffn_dim as u64;
        let v = self.vocab_size as u64;

        let ln = 2 * e;
        let attn = 4 * e * e + 4 * e;
        let ffn_block = e * f + f + f * e + e;

        let enc_layer = attn + ln + ffn_block + ln;

        let history_block = match self.decoder_variant {
            DecoderVariant::SelfAttention => attn,
            DecoderVariant::Aan => {
                let mut block = 0;
                if self.aan_ffn_enabled {
                    block += e * a + a + a * e + e;
                }
                if self.aan_gate_enabled {
                    block += (2 * e) * (2 * e) + 2 * e;
                }
                block
            }
        };
        let dec_layer = history_block + ln + attn + ln + ffn_block + ln;

        v * e + self.enc_layers as u64 * enc_layer + self.dec_layers as u64 * dec_layer
    }

    /// Model size in MiB at 4 bytes per parameter.
    pub fn size_mib(&self) -> f64 {
        self.param_count() as f64 * 4.0 / (1u64 << 20) as f64
    }

    /// Serialize as `key=value` lines.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("emb_dim={}\n", self.emb_dim));
        out.push_str(&format!("ffn_dim={}\n", self.ffn_dim));
        if self.enc_layers == self.dec_layers {
            out.push_str(&format!("layers={}\n", self.enc_layers));
        } else {
            out.push_str(&format!("enc_layers={}\n", self.enc_layers));
            out.push_str(&format!("dec_layers={}\n", self.dec_layers));
        }
        out.push_str(&format!("heads={}\n", self.heads));
        out.push_str(&format!("vocab_size={}\n", self.vocab_size));
        out.push_str(&format!("decoder_variant={}\n", self.decoder_variant));
        out.push_str(&format!("aan_ffn={}\n", self.aan_ffn_enabled));
        out.push_str(&format!("aan_gate={}\n", self.aan_gate_enabled));
        out.push_str(&format!("aan_ffn_dim={}\n", self.aan_ffn_dim));
        out.push_str(&format!("positions={}\n", self.sinusoidal_positions));
        out
    }

    /// Parse `key=value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut emb_dim = None;
        let mut ffn_dim = None;
        let mut enc_layers = 6usize;
        let mut dec_layers = 6usize;
        let mut heads = None;
        let mut vocab_size = None;
        let mut variant = DecoderVariant::SelfAttention;
        let mut aan_ffn = true;
        let mut aan_gate = true;
        let mut aan_ffn_dim = None;
        let mut positions = true;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InputFormat(format!("config line {}: expected key=value, got {raw:?}", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let parse_usize = |v: &str| -> Result<usize> {
                v.parse()
                    .map_err(|_| Error::InputFormat(format!("config line {}: bad number {v:?}", lineno + 1)))
            };
            let parse_bool = |v: &str| -> Result<bool> {
                match v {
                    "true" | "1" => Ok(true),
                    "false" | "0" => Ok(false),
                    _ => Err(Error::InputFormat(format!(
                        "config line {}: bad boolean {v:?}",
                        lineno + 1
                    ))),
                }
            };
            match key {
                "emb_dim" => emb_dim = Some(parse_usize(value)?),
                "ffn_dim" => ffn_dim = Some(parse_usize(value)?),
                "layers" => {
                    enc_layers = parse_usize(value)?;
                    dec_layers = enc_layers;
                }
                "enc_layers" => enc_layers = parse_usize(value)?,
                "dec_layers" => dec_layers = parse_usize(value)?,
                "heads" => heads = Some(parse_usize(value)?),
                "vocab_size" => vocab_size = Some(parse_usize(value)?),
                "decoder_variant" => variant = DecoderVariant::parse(value)?,
                "aan_ffn" => aan_ffn = parse_bool(value)?,
                "aan_gate" => aan_gate = parse_bool(value)?,
                "aan_ffn_dim" => aan_ffn_dim = Some(parse_usize(value)?),
                "positions" => positions = parse_bool(value)?,
                other => {
                    return Err(Error::InputFormat(format!(
                        "config line {}: unknown key {other:?}",
                        lineno + 1
                    )))
                }
            }
        }

        let emb_dim = emb_dim.ok_or_else(|| Error::InputFormat("config is missing emb_dim".into()))?;
        let config = ModelConfig {
            emb_dim,
            ffn_dim: ffn_dim.ok_or_else(|| Error::InputFormat("config is missing ffn_dim".into()))?,
            enc_layers,
            dec_layers,
            heads: heads.ok_or_else(|| Error::InputFormat("config is missing heads".into()))?,
            vocab_size: vocab_size.ok_or_else(|| Error::InputFormat("config is missing vocab_size".into()))?,
            decoder_variant: variant,
            aan_ffn_enabled: aan_ffn,
            aan_gate_enabled: aan_gate,
            aan_ffn_dim: aan_ffn_dim.unwrap_or(emb_dim),
            sinusoidal_positions: positions,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_key_values())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text)
    }
}
