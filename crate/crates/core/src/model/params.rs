//! Named parameter store, random initialization and the binary container.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::config::{DecoderVariant, ModelConfig};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"QBPM";
const VERSION: u32 = 1;

/// Every parameter a model of this configuration owns, as (name, shape).
///
/// Weight matrices are stored `[in, out]` so products are `x @ W`; the tied
/// embedding is `[vocab, emb]`.
pub fn param_specs(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let e = config.emb_dim;
    let f = config.ffn_dim;
    let a = config.aan_ffn_dim;
    let mut specs: Vec<(String, Vec<usize>)> = Vec::new();

    specs.push(("embed".into(), vec![config.vocab_size, e]));

    let attn = |specs: &mut Vec<(String, Vec<usize>)>, prefix: &str| {
        for w in ["wq", "wk", "wv", "wo"] {
            specs.push((format!("{prefix}.{w}"), vec![e, e]));
        }
        for b in ["bq", "bk", "bv", "bo"] {
            specs.push((format!("{prefix}.{b}"), vec![e]));
        }
    };
    let ffn = |specs: &mut Vec<(String, Vec<usize>)>, prefix: &str, hidden: usize| {
        specs.push((format!("{prefix}.w1"), vec![e, hidden]));
        specs.push((format!("{prefix}.b1"), vec![hidden]));
        specs.push((format!("{prefix}.w2"), vec![hidden, e]));
        specs.push((format!("{prefix}.b2"), vec![e]));
    };
    let norm = |specs: &mut Vec<(String, Vec<usize>)>, prefix: &str| {
        specs.push((format!("{prefix}.gain"), vec![e]));
        specs.push((format!("{prefix}.bias"), vec![e]));
    };

    for l in 0..config.enc_layers {
        attn(&mut specs, &format!("enc.{l}.attn"));
        norm(&mut specs, &format!("enc.{l}.ln1"));
        ffn(&mut specs, &format!("enc.{l}.ffn"), f);
        norm(&mut specs, &format!("enc.{l}.ln2"));
    }

    for l in 0..config.dec_layers {
        match config.decoder_variant {
            DecoderVariant::SelfAttention => attn(&mut specs, &format!("dec.{l}.self")),
            DecoderVariant::Aan => {
                if config.aan_ffn_enabled {
                    ffn(&mut specs, &format!("dec.{l}.aan.ffn"), a);
                }
                if config.aan_gate_enabled {
                    specs.push((format!("dec.{l}.aan.gate.w"), vec![2 * e, 2 * e]));
                    specs.push((format!("dec.{l}.aan.gate.b"), vec![2 * e]));
                }
            }
        }
        norm(&mut specs, &format!("dec.{l}.ln1"));
        attn(&mut specs, &format!("dec.{l}.cross"));
        norm(&mut specs, &format!("dec.{l}.ln2"));
        ffn(&mut specs, &format!("dec.{l}.ffn"), f);
        norm(&mut specs, &format!("dec.{l}.ln3"));
    }

    specs
}

/// Immutable name -> tensor map for one model.
#[derive(Clone, PartialEq, Debug, Default)]
pub struct ModelParams {
    map: BTreeMap<String, Tensor<f32>>,
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<f32>) {
        self.map.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<f32>> {
        self.map
            .get(name)
            .ok_or_else(|| Error::Parameter(format!("missing model parameter {name:?}")))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<f32>)> {
        self.map.iter()
    }

    pub fn total_elements(&self) -> u64 {
        self.map.values().map(|t| t.numel() as u64).sum()
    }

    /// Randomly initialized parameters for a configuration. Weights draw
    /// from a fan-scaled uniform range; biases start at zero and layer-norm
    /// gains at one. Deterministic for a given seed.
    pub fn random(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ModelParams::new();
        for (name, dims) in param_specs(config) {
            let n: usize = dims.iter().product();
            let data: Vec<f32> = if name.ends_with(".gain") {
                vec![1.0; n]
            } else if name.ends_with(".bias")
                || name.ends_with(".b1")
                || name.ends_with(".b2")
                || name.ends_with(".bq")
                || name.ends_with(".bk")
                || name.ends_with(".bv")
                || name.ends_with(".bo")
                || name.ends_with("gate.b")
            {
                vec![0.0; n]
            } else {
                let fan_in = if dims.len() == 2 { dims[0] } else { dims[dims.len() - 1] };
                let bound = (3.0 / fan_in as f32).sqrt();
                (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
            };
            params.insert(name, Tensor::new(&dims, data).expect("spec shapes are valid"));
        }
        params
    }

    /// Check that exactly the configured parameters are present, with the
    /// configured shapes.
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        let specs = param_specs(config);
        for (name, dims) in &specs {
            let t = self.get(name)?;
            if t.dims() != dims.as_slice() {
                return Err(Error::Parameter(format!(
                    "parameter {name:?} has shape {:?}, config wants {dims:?}",
                    t.dims()
                )));
            }
        }
        if self.map.len() != specs.len() {
            return Err(Error::Parameter(format!(
                "parameter file has {} tensors, config wants {}",
                self.map.len(),
                specs.len()
            )));
        }
        Ok(())
    }

    /// Write the binary container. Bit-exact: floats round-trip unchanged.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.map.len() as u32).to_le_bytes());
        for (name, tensor) in &self.map {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(tensor.rank() as u32).to_le_bytes());
            for &d in tensor.dims() {
                buf.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in tensor.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut file = fs::File::create(path)?;
        file.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(4)?;
        if magic != MAGIC {
            return Err(Error::InputFormat("not a model parameter file (bad magic)".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(Error::InputFormat(format!("unsupported parameter file version {version}")));
        }
        let count = cur.u32()? as usize;
        let mut params = ModelParams::new();
        for _ in 0..count {
            let name_len = cur.u32()? as usize;
            let name = std::str::from_utf8(cur.take(name_len)?)
                .map_err(|_| Error::InputFormat("parameter name is not UTF-8".into()))?
                .to_string();
            let rank = cur.u32()? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(cur.u32()? as usize);
            }
            let numel: usize = dims.iter().product();
            let raw = cur.take(numel * 4)?;
            let data: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let tensor = Tensor::new(&dims, data)
                .map_err(|e| Error::InputFormat(format!("parameter {name:?}: {e}")))?;
            params.insert(name, tensor);
        }
        if cur.pos != bytes.len() {
            return Err(Error::InputFormat("trailing bytes after last parameter".into()));
        }
        Ok(params)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::InputFormat("parameter file truncated".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
