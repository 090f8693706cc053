//! Dynamic computation graph with constant-node memoization.
//!
//! Graphs are append-only DAGs: children always precede their parents, so
//! node indices double as a topological order. Constness is computed when a
//! node is added — parameters and literals are constant, inputs are not,
//! and every other node is constant iff all of its children are. During a
//! forward pass the value of a constant node is computed once for the
//! lifetime of the graph and cached; later passes reuse the cache without
//! re-running the kernel. Per-node evaluation counters make that behaviour
//! observable in tests and benchmark reports.
//!
//! The `tuned-gemm` node holds two complete product subgraphs (float and
//! int16) as children and asks the shared [`TunerState`] which one to run;
//! only that route is evaluated — and timed — on a given pass.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::autotune::{tune_key, TunerState};
use crate::error::{Error, Result};
use crate::quant::{self, Int8Scheme, QuantizedTensor};
use crate::tensor::{self, Shape, Tensor};

/// Handle to a node. Only valid for the graph that produced it.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A value flowing through the graph: float or quantized.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Float(Tensor<f32>),
    Quant(QuantizedTensor),
}

impl Value {
    pub fn shape(&self) -> &Shape {
        match self {
            Value::Float(t) => t.shape(),
            Value::Quant(q) => q.shape(),
        }
    }

    pub fn as_float(&self) -> Result<&Tensor<f32>> {
        match self {
            Value::Float(t) => Ok(t),
            Value::Quant(_) => Err(Error::Graph("expected a float value, got a quantized one".into())),
        }
    }

    pub fn as_quant(&self) -> Result<&QuantizedTensor> {
        match self {
            Value::Quant(q) => Ok(q),
            Value::Float(_) => Err(Error::Graph("expected a quantized value, got a float one".into())),
        }
    }
}

/// Node operation. Payload-carrying variants hold their data inline.
#[derive(Clone, Debug)]
pub enum Op {
    /// Model parameter; constant during inference.
    Param(Tensor<f32>),
    /// Per-forward feed. An optional declared shape is enforced against feeds.
    Input { shape: Option<Shape> },
    /// Constant literal value.
    Literal(Value),
    Transpose,
    QuantizeI16,
    QuantizeI8(Int8Scheme),
    Clip(f32),
    GemmF32,
    /// Integer product; the second child is the pre-transposed operand.
    GemmI16,
    GemmI8,
    /// Children are the float route and the int16 route of the same product.
    TunedGemm,
    Add,
    Relu,
    Sigmoid,
    /// Children: value, gain, bias.
    LayerNorm { eps: f32 },
    Softmax,
    Concat,
    Slice { start: usize, len: usize },
    ScalarMul(f32),
}

/// Operation tag, used for counter queries and reports.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum OpKind {
    Param,
    Input,
    Literal,
    Transpose,
    QuantizeI16,
    QuantizeI8,
    Clip,
    GemmF32,
    GemmI16,
    GemmI8,
    TunedGemm,
    Add,
    Relu,
    Sigmoid,
    LayerNorm,
    Softmax,
    Concat,
    Slice,
    ScalarMul,
}

impl OpKind {
    pub fn name(self) -> &'static str {
        match self {
            OpKind::Param => "param",
            OpKind::Input => "input",
            OpKind::Literal => "constant-literal",
            OpKind::Transpose => "transpose",
            OpKind::QuantizeI16 => "quantize-i16",
            OpKind::QuantizeI8 => "quantize-i8",
            OpKind::Clip => "clip",
            OpKind::GemmF32 => "gemm-f32",
            OpKind::GemmI16 => "gemm-i16",
            OpKind::GemmI8 => "gemm-i8",
            OpKind::TunedGemm => "tuned-gemm",
            OpKind::Add => "add",
            OpKind::Relu => "relu",
            OpKind::Sigmoid => "sigmoid",
            OpKind::LayerNorm => "layer-norm",
            OpKind::Softmax => "softmax",
            OpKind::Concat => "concat",
            OpKind::Slice => "slice",
            OpKind::ScalarMul => "scalar-mul",
        }
    }
}

impl Op {
    pub fn kind(&self) -> OpKind {
        match self {
            Op::Param(_) => OpKind::Param,
            Op::Input { .. } => OpKind::Input,
            Op::Literal(_) => OpKind::Literal,
            Op::Transpose => OpKind::Transpose,
            Op::QuantizeI16 => OpKind::QuantizeI16,
            Op::QuantizeI8(_) => OpKind::QuantizeI8,
            Op::Clip(_) => OpKind::Clip,
            Op::GemmF32 => OpKind::GemmF32,
            Op::GemmI16 => OpKind::GemmI16,
            Op::GemmI8 => OpKind::GemmI8,
            Op::TunedGemm => OpKind::TunedGemm,
            Op::Add => OpKind::Add,
            Op::Relu => OpKind::Relu,
            Op::Sigmoid => OpKind::Sigmoid,
            Op::LayerNorm { .. } => OpKind::LayerNorm,
            Op::Softmax => OpKind::Softmax,
            Op::Concat => OpKind::Concat,
            Op::Slice { .. } => OpKind::Slice,
            Op::ScalarMul(_) => OpKind::ScalarMul,
        }
    }

    /// Expected child count; None means "one or more".
    fn arity(&self) -> Option<usize> {
        match self {
            Op::Param(_) | Op::Input { .. } | Op::Literal(_) => Some(0),
            Op::Transpose
            | Op::QuantizeI16
            | Op::QuantizeI8(_)
            | Op::Clip(_)
            | Op::Relu
            | Op::Sigmoid
            | Op::Softmax
            | Op::Slice { .. }
            | Op::ScalarMul(_) => Some(1),
            Op::Add | Op::GemmF32 | Op::GemmI16 | Op::GemmI8 | Op::TunedGemm => Some(2),
            Op::LayerNorm { .. } => Some(3),
            Op::Concat => None,
        }
    }
}

/// Integer precision selector for [`Graph::dot_int`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum IntPrecision {
    I16,
    I8,
}

struct Node {
    op: Op,
    children: Vec<NodeId>,
    is_constant: bool,
    memo: Option<Arc<Value>>,
    eval_count: u64,
}

/// Append-only inference graph.
pub struct Graph {
    nodes: Vec<Node>,
    memoize: bool,
    tuner: Option<Arc<Mutex<TunerState>>>,
}

/// Values produced by one forward pass, indexed by node.
pub struct Evaluation {
    values: Vec<Option<Arc<Value>>>,
}

impl Evaluation {
    pub fn get(&self, id: NodeId) -> Option<&Value> {
        self.values.get(id.0).and_then(|v| v.as_deref())
    }

    pub fn value(&self, id: NodeId) -> Result<&Value> {
        self.get(id)
            .ok_or_else(|| Error::Graph(format!("node {} was not evaluated in this pass", id.0)))
    }
}

pub const ALT_F32: &str = "f32";
pub const ALT_I16: &str = "i16";

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), memoize: true, tuner: None }
    }

    /// Enable or disable constant-node memoization. Outputs are identical
    /// either way; only the evaluation counters differ.
    pub fn set_memoize(&mut self, on: bool) {
        self.memoize = on;
    }

    pub fn memoize(&self) -> bool {
        self.memoize
    }

    pub fn set_tuner(&mut self, tuner: Arc<Mutex<TunerState>>) {
        self.tuner = Some(tuner);
    }

    pub fn tuner(&self) -> Option<Arc<Mutex<TunerState>>> {
        self.tuner.clone()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constness rule: parameters and literals are constant, inputs are not,
    /// anything else is constant iff all children are.
    pub fn mark_constness(&self, op: &Op, children: &[NodeId]) -> bool {
        match op {
            Op::Param(_) | Op::Literal(_) => true,
            Op::Input { .. } => false,
            _ => children.iter().all(|c| self.nodes[c.0].is_constant),
        }
    }

    /// Append a node. Children must already exist; arity is checked here.
    pub fn add_node(&mut self, op: Op, children: &[NodeId]) -> Result<NodeId> {
        for c in children {
            if c.0 >= self.nodes.len() {
                return Err(Error::Graph(format!("unknown child node {}", c.0)));
            }
        }
        match op.arity() {
            Some(n) if n != children.len() => {
                return Err(Error::Graph(format!(
                    "{} expects {n} children, got {}",
                    op.kind().name(),
                    children.len()
                )));
            }
            None if children.is_empty() => {
                return Err(Error::Graph("concat expects at least one child".into()));
            }
            _ => {}
        }
        if let Op::Clip(c) = op {
            if !(c > 0.0) {
                return Err(Error::Parameter(format!("clip bound must be positive, got {c}")));
            }
        }
        let is_constant = self.mark_constness(&op, children);
        self.nodes.push(Node {
            op,
            children: children.to_vec(),
            is_constant,
            memo: None,
            eval_count: 0,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn param(&mut self, t: Tensor<f32>) -> NodeId {
        self.add_node(Op::Param(t), &[]).expect("leaf node")
    }

    pub fn input(&mut self, shape: Option<Shape>) -> NodeId {
        self.add_node(Op::Input { shape }, &[]).expect("leaf node")
    }

    pub fn literal(&mut self, v: Value) -> NodeId {
        self.add_node(Op::Literal(v), &[]).expect("leaf node")
    }

    pub fn is_constant(&self, id: NodeId) -> bool {
        self.nodes[id.0].is_constant
    }

    pub fn op_kind(&self, id: NodeId) -> OpKind {
        self.nodes[id.0].op.kind()
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].children
    }

    /// How many times this node's kernel actually ran (cache hits excluded).
    pub fn eval_count(&self, id: NodeId) -> u64 {
        self.nodes[id.0].eval_count
    }

    /// Total kernel executions for an operation tag.
    pub fn op_eval_count(&self, kind: OpKind) -> u64 {
        self.nodes
            .iter()
            .filter(|n| n.op.kind() == kind)
            .map(|n| n.eval_count)
            .sum()
    }

    /// Kernel executions for an operation tag, constant nodes only.
    pub fn const_op_eval_count(&self, kind: OpKind) -> u64 {
        self.nodes
            .iter()
            .filter(|n| n.op.kind() == kind && n.is_constant)
            .map(|n| n.eval_count)
            .sum()
    }

    /// Build the quantized replacement for `A x B`: quantize(A) and
    /// quantize(transpose(B)) feeding the integer product. When `b` is
    /// constant the transpose and its quantization are constant too and get
    /// memoized after the first pass. Returns the product node.
    pub fn dot_int(
        &mut self,
        a: NodeId,
        b: NodeId,
        precision: IntPrecision,
        scheme: Option<Int8Scheme>,
    ) -> Result<NodeId> {
        if a.0 >= self.nodes.len() || b.0 >= self.nodes.len() {
            return Err(Error::Graph("dot_int operands must already be in the graph".into()));
        }
        let bt = self.add_node(Op::Transpose, &[b])?;
        match precision {
            IntPrecision::I16 => {
                let qa = self.add_node(Op::QuantizeI16, &[a])?;
                let qbt = self.add_node(Op::QuantizeI16, &[bt])?;
                self.add_node(Op::GemmI16, &[qa, qbt])
            }
            IntPrecision::I8 => {
                let s = scheme.unwrap_or_default();
                let qa = self.add_node(Op::QuantizeI8(s), &[a])?;
                let qbt = self.add_node(Op::QuantizeI8(s), &[bt])?;
                self.add_node(Op::GemmI8, &[qa, qbt])
            }
        }
    }

    /// Build a product whose kernel is chosen at runtime between the float
    /// route and the int16 route. Requires a tuner to be attached before the
    /// first forward pass touching the node.
    pub fn dot_tuned(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let f32_route = self.add_node(Op::GemmF32, &[a, b])?;
        let i16_route = self.dot_int(a, b, IntPrecision::I16, None)?;
        self.add_node(Op::TunedGemm, &[f32_route, i16_route])
    }

    /// All nodes reachable from `id` through child edges, `id` included.
    pub fn subtree(&self, id: NodeId) -> Vec<NodeId> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![id];
        let mut out = Vec::new();
        while let Some(n) = stack.pop() {
            if seen[n.0] {
                continue;
            }
            seen[n.0] = true;
            out.push(n);
            stack.extend(self.nodes[n.0].children.iter().copied());
        }
        out
    }

    /// Nodes that are not a child of any other node.
    pub fn sinks(&self) -> Vec<NodeId> {
        let mut is_child = vec![false; self.nodes.len()];
        for n in &self.nodes {
            for c in &n.children {
                is_child[c.0] = true;
            }
        }
        (0..self.nodes.len())
            .filter(|&i| !is_child[i])
            .map(NodeId)
            .collect()
    }

    /// Evaluate every sink node (and, transitively, everything they demand).
    pub fn forward(&mut self, feeds: &HashMap<NodeId, Tensor<f32>>) -> Result<Evaluation> {
        let outputs = self.sinks();
        self.forward_to(feeds, &outputs)
    }

    /// Evaluate the requested nodes only. A tuned product evaluates just the
    /// route the tuner picks on this pass.
    pub fn forward_to(
        &mut self,
        feeds: &HashMap<NodeId, Tensor<f32>>,
        outputs: &[NodeId],
    ) -> Result<Evaluation> {
        for id in feeds.keys() {
            if id.0 >= self.nodes.len() || self.nodes[id.0].op.kind() != OpKind::Input {
                return Err(Error::Feed(format!("feed target {} is not an input node", id.0)));
            }
        }
        let mut pass = Pass { values: vec![None; self.nodes.len()], feeds };
        for &out in outputs {
            if out.0 >= self.nodes.len() {
                return Err(Error::Graph(format!("unknown output node {}", out.0)));
            }
            self.eval_node(out, &mut pass)?;
        }
        Ok(Evaluation { values: pass.values })
    }

    fn eval_node(&mut self, id: NodeId, pass: &mut Pass<'_>) -> Result<Arc<Value>> {
        if let Some(v) = &pass.values[id.0] {
            return Ok(Arc::clone(v));
        }
        if self.memoize {
            if let Some(m) = &self.nodes[id.0].memo {
                let v = Arc::clone(m);
                pass.values[id.0] = Some(Arc::clone(&v));
                return Ok(v);
            }
        }
        let value = self.compute(id, pass)?;
        self.nodes[id.0].eval_count += 1;
        if self.memoize && self.nodes[id.0].is_constant {
            self.nodes[id.0].memo = Some(Arc::clone(&value));
        }
        pass.values[id.0] = Some(Arc::clone(&value));
        Ok(value)
    }

    fn compute(&mut self, id: NodeId, pass: &mut Pass<'_>) -> Result<Arc<Value>> {
        // Leaf ops first; they need no recursion and may hold payloads.
        match &self.nodes[id.0].op {
            Op::Param(t) => return Ok(Arc::new(Value::Float(t.clone()))),
            Op::Literal(v) => return Ok(Arc::new(v.clone())),
            Op::Input { shape } => {
                let fed = pass
                    .feeds
                    .get(&id)
                    .ok_or_else(|| Error::Feed(format!("input node {} has no feed", id.0)))?;
                if let Some(declared) = shape {
                    if declared != fed.shape() {
                        return Err(Error::Feed(format!(
                            "input node {} declared {declared}, fed {}",
                            id.0,
                            fed.shape()
                        )));
                    }
                }
                return Ok(Arc::new(Value::Float(fed.clone())));
            }
            _ => {}
        }
        let children = self.nodes[id.0].children.clone();
        let kernel = match &self.nodes[id.0].op {
            Op::Transpose => Kernel::Transpose,
            Op::QuantizeI16 => Kernel::QuantI16,
            Op::QuantizeI8(s) => Kernel::QuantI8(*s),
            Op::Clip(c) => Kernel::Clip(*c),
            Op::GemmF32 => Kernel::GemmF32,
            Op::GemmI16 => Kernel::GemmI16,
            Op::GemmI8 => Kernel::GemmI8,
            Op::TunedGemm => Kernel::Tuned,
            Op::Add => Kernel::Add,
            Op::Relu => Kernel::Relu,
            Op::Sigmoid => Kernel::Sigmoid,
            Op::LayerNorm { eps } => Kernel::LayerNorm(*eps),
            Op::Softmax => Kernel::Softmax,
            Op::Concat => Kernel::Concat,
            Op::Slice { start, len } => Kernel::Slice(*start, *len),
            Op::ScalarMul(s) => Kernel::ScalarMul(*s),
            Op::Param(_) | Op::Input { .. } | Op::Literal(_) => unreachable!("handled above"),
        };
        if let Kernel::Tuned = kernel {
            return self.eval_tuned(id, &children, pass);
        }
        let args: Vec<Arc<Value>> = children
            .iter()
            .map(|&c| self.eval_node(c, pass))
            .collect::<Result<_>>()?;
        let out = match kernel {
            Kernel::Transpose => match args[0].as_ref() {
                Value::Float(t) => Value::Float(tensor::transpose2d(t)?),
                Value::Quant(q) => Value::Quant(q.transpose2d()?),
            },
            Kernel::QuantI16 => Value::Quant(quant::quantize_i16(args[0].as_float()?)),
            Kernel::QuantI8(s) => Value::Quant(quant::quantize_i8(args[0].as_float()?, s)),
            Kernel::Clip(c) => Value::Float(quant::clip(args[0].as_float()?, c)?),
            Kernel::GemmF32 => Value::Float(tensor::gemm_f32(args[0].as_float()?, args[1].as_float()?)?),
            Kernel::GemmI16 => Value::Float(quant::gemm_i16(args[0].as_quant()?, args[1].as_quant()?)?),
            Kernel::GemmI8 => Value::Float(quant::gemm_i8(args[0].as_quant()?, args[1].as_quant()?)?),
            Kernel::Add => Value::Float(tensor::add(args[0].as_float()?, args[1].as_float()?)?),
            Kernel::Relu => Value::Float(tensor::relu(args[0].as_float()?)),
            Kernel::Sigmoid => Value::Float(tensor::sigmoid(args[0].as_float()?)),
            Kernel::LayerNorm(eps) => Value::Float(tensor::layer_norm(
                args[0].as_float()?,
                args[1].as_float()?,
                args[2].as_float()?,
                eps,
            )?),
            Kernel::Softmax => Value::Float(tensor::softmax_rows(args[0].as_float()?)?),
            Kernel::Concat => {
                let floats: Vec<&Tensor<f32>> = args
                    .iter()
                    .map(|v| v.as_float())
                    .collect::<Result<_>>()?;
                Value::Float(tensor::concat_last(&floats)?)
            }
            Kernel::Slice(start, len) => Value::Float(tensor::slice_last(args[0].as_float()?, start, len)?),
            Kernel::ScalarMul(s) => Value::Float(tensor::scalar_mul(args[0].as_float()?, s)),
            Kernel::Tuned => unreachable!("handled above"),
        };
        Ok(Arc::new(out))
    }

    fn eval_tuned(&mut self, _id: NodeId, children: &[NodeId], pass: &mut Pass<'_>) -> Result<Arc<Value>> {
        let routes = [children[0], children[1]];
        // Operand shapes come from the float route's children; evaluating
        // them here keeps operand fetch out of the timed section and shares
        // the per-pass cache with whichever route runs.
        let (a_id, b_id) = {
            let g = &self.nodes[routes[0].0];
            (g.children[0], g.children[1])
        };
        let a = self.eval_node(a_id, pass)?;
        let b = self.eval_node(b_id, pass)?;
        let key = tune_key(&[a.shape().clone(), b.shape().clone()], &[ALT_F32, ALT_I16])?;
        let tuner = self
            .tuner
            .clone()
            .ok_or_else(|| Error::Graph("tuned-gemm requires a tuner attached to the graph".into()))?;
        let mut guard = tuner.lock().map_err(|_| Error::Graph("tuner mutex poisoned".into()))?;
        guard.tuned_execute(key, &[ALT_F32, ALT_I16], |alt| self.eval_node(routes[alt], pass))
    }
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

struct Pass<'a> {
    values: Vec<Option<Arc<Value>>>,
    feeds: &'a HashMap<NodeId, Tensor<f32>>,
}

enum Kernel {
    Transpose,
    QuantI16,
    QuantI8(Int8Scheme),
    Clip(f32),
    GemmF32,
    GemmI16,
    GemmI8,
    Tuned,
    Add,
    Relu,
    Sigmoid,
    LayerNorm(f32),
    Softmax,
    Concat,
    Slice(usize, usize),
    ScalarMul(f32),
}
