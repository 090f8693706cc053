//! Precision regimes and the engine that dispatches activation-by-parameter
//! matrix products to the right kernel.
//!
//! Under `float32` products run directly. Under the integer regimes every
//! named parameter gets a persistent product subgraph (quantize the
//! activation, multiply by the memoized quantized transpose of the
//! parameter), so parameter preparation runs once per engine lifetime, not
//! once per step. Under `autotune` each product carries both the float and
//! the int16 route and the shared tuner picks per operand shape.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::autotune::TunerState;
use crate::error::{Error, Result};
use crate::graph::{Graph, IntPrecision, NodeId, OpKind};
use crate::quant::Int8Scheme;
use crate::tensor::{self, Tensor};

/// Matrix-product regime for a translation run.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Precision {
    Float32,
    Int16,
    Int8,
    Autotune,
}

impl Precision {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "float32" => Ok(Precision::Float32),
            "int16" => Ok(Precision::Int16),
            "int8" => Ok(Precision::Int8),
            "autotune" => Ok(Precision::Autotune),
            other => Err(Error::Parameter(format!(
                "unknown precision {other:?} (expected float32, int16, int8 or autotune)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Precision::Float32 => "float32",
            Precision::Int16 => "int16",
            Precision::Int8 => "int8",
            Precision::Autotune => "autotune",
        }
    }
}

struct ProductEntry {
    input: NodeId,
    output: NodeId,
}

/// Executes `x @ W` for named parameters under the configured regime.
pub struct GemmEngine {
    precision: Precision,
    graph: Graph,
    entries: HashMap<String, ProductEntry>,
    scheme: Int8Scheme,
    tuner: Option<Arc<Mutex<TunerState>>>,
}

impl GemmEngine {
    pub fn new(precision: Precision) -> Self {
        let mut graph = Graph::new();
        let tuner = if precision == Precision::Autotune {
            let t = Arc::new(Mutex::new(TunerState::new()));
            graph.set_tuner(Arc::clone(&t));
            Some(t)
        } else {
            None
        };
        GemmEngine {
            precision,
            graph,
            entries: HashMap::new(),
            scheme: Int8Scheme::default(),
            tuner,
        }
    }

    /// Share an existing tuner (for cross-engine tuning or injected clocks).
    pub fn with_tuner(precision: Precision, tuner: Arc<Mutex<TunerState>>) -> Self {
        let mut engine = GemmEngine::new(precision);
        engine.graph.set_tuner(Arc::clone(&tuner));
        engine.tuner = Some(tuner);
        engine
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn set_memoize(&mut self, on: bool) {
        self.graph.set_memoize(on);
    }

    pub fn memoize(&self) -> bool {
        self.graph.memoize()
    }

    /// Bypass tuning and always run the named alternative (autotune only).
    pub fn set_force_alt(&mut self, alt: Option<String>) -> Result<()> {
        match &self.tuner {
            Some(t) => {
                t.lock()
                    .map_err(|_| Error::Graph("tuner mutex poisoned".into()))?
                    .set_force(alt);
                Ok(())
            }
            None => Err(Error::Parameter(
                "--force-alt only applies to the autotune precision regime".into(),
            )),
        }
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn tuner(&self) -> Option<Arc<Mutex<TunerState>>> {
        self.tuner.clone()
    }

    /// `x [m,k] @ w [k,n]` under the engine's regime. The parameter is
    /// identified by name so its quantized transpose is prepared only once.
    pub fn matmul(&mut self, name: &str, x: &Tensor<f32>, w: &Tensor<f32>) -> Result<Tensor<f32>> {
        if self.precision == Precision::Float32 {
            return tensor::gemm_f32(x, w);
        }
        if !self.entries.contains_key(name) {
            let input = self.graph.input(None);
            let param = self.graph.param(w.clone());
            let output = match self.precision {
                Precision::Int16 => self.graph.dot_int(input, param, IntPrecision::I16, None)?,
                Precision::Int8 => self.graph.dot_int(input, param, IntPrecision::I8, Some(self.scheme))?,
                Precision::Autotune => self.graph.dot_tuned(input, param)?,
                Precision::Float32 => unreachable!("handled above"),
            };
            self.entries.insert(name.to_string(), ProductEntry { input, output });
        }
        let entry = &self.entries[name];
        let (input, output) = (entry.input, entry.output);
        let mut feeds = HashMap::new();
        feeds.insert(input, x.clone());
        let eval = self.graph.forward_to(&feeds, &[output])?;
        Ok(eval.value(output)?.as_float()?.clone())
    }

    /// Per-parameter counts of constant-prep quantization runs, sorted by
    /// parameter name. One entry per product the engine has built.
    pub fn param_quant_evals_by_name(&self) -> Vec<(String, u64)> {
        let mut out: Vec<(String, u64)> = self
            .entries
            .iter()
            .map(|(name, entry)| {
                let runs = self
                    .graph
                    .subtree(entry.output)
                    .into_iter()
                    .filter(|&n| {
                        self.graph.is_constant(n)
                            && matches!(self.graph.op_kind(n), OpKind::QuantizeI16 | OpKind::QuantizeI8)
                    })
                    .map(|n| self.graph.eval_count(n))
                    .sum();
                (name.clone(), runs)
            })
            .collect();
        out.sort();
        out
    }

    /// Kernel runs that quantized a parameter (constant prep).
    pub fn param_quant_runs(&self) -> u64 {
        self.graph.const_op_eval_count(OpKind::QuantizeI16) + self.graph.const_op_eval_count(OpKind::QuantizeI8)
    }

    /// Kernel runs that quantized an activation.
    pub fn activation_quant_runs(&self) -> u64 {
        let total =
            self.graph.op_eval_count(OpKind::QuantizeI16) + self.graph.op_eval_count(OpKind::QuantizeI8);
        total - self.param_quant_runs()
    }

    /// One-line counter summary for benchmark reports.
    pub fn counter_line(&self) -> String {
        format!(
            "param-quant={} act-quant={} gemm-f32={} gemm-i16={} gemm-i8={} tuned={}",
            self.param_quant_runs(),
            self.activation_quant_runs(),
            self.graph.op_eval_count(OpKind::GemmF32),
            self.graph.op_eval_count(OpKind::GemmI16),
            self.graph.op_eval_count(OpKind::GemmI8),
            self.graph.op_eval_count(OpKind::TunedGemm),
        )
    }
}
