//! Dense row-major tensors and the float kernels everything else builds on.
//!
//! Storage is a flat `Vec<T>` with row-major indexing. Activations are rank
//! 1-3 (batch folded into the leading dimension), parameters are rank 2.
//! There is no broadcasting machinery beyond a rank-1 bias add over the last
//! axis, and no views; every operation returns a fresh tensor.

use std::fmt;

use crate::error::{Error, Result};

/// Row-major shape. Every extent is at least 1.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Dimension("shape must have at least one extent".into()));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Dimension(format!("zero extent in shape {dims:?}")));
        }
        Ok(Shape(dims.to_vec()))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    /// The (rows, cols) of a rank-2 shape.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        if self.0.len() != 2 {
            return Err(Error::Dimension(format!("expected rank 2, got shape {self}")));
        }
        Ok((self.0[0], self.0[1]))
    }

    pub fn last_dim(&self) -> usize {
        *self.0.last().expect("shape is never empty")
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// Dense tensor over element type `T` (f32 activations/parameters, i8/i16
/// quantized codes, i32 accumulators).
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Copy> Tensor<T> {
    pub fn new(dims: &[usize], data: Vec<T>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape} wants {} elements, buffer has {}",
                shape.numel(),
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn filled(dims: &[usize], value: T) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let n = shape.numel();
        Ok(Tensor { shape, data: vec![value; n] })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn rank(&self) -> usize {
        self.shape.rank()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Reinterpret the buffer under a new shape with the same element count.
    pub fn reshape(&self, dims: &[usize]) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != self.data.len() {
            return Err(Error::Dimension(format!(
                "cannot reshape {} elements to {shape}",
                self.data.len()
            )));
        }
        Ok(Tensor { shape, data: self.data.clone() })
    }

    /// Row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> Result<&[T]> {
        let (rows, cols) = self.shape.dims2()?;
        if i >= rows {
            return Err(Error::Dimension(format!("row {i} out of {rows}")));
        }
        Ok(&self.data[i * cols..(i + 1) * cols])
    }
}

impl<T: Copy + fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{}{:?}", self.shape, self.data)
    }
}

/// Reference float matrix product, `C[i,j] = sum_k A[i,k] * B[k,j]`.
///
/// Accumulation is f32 in ascending-k order, so results are reproducible
/// bit for bit across runs and against a plainly written triple loop.
pub fn gemm_f32(a: &Tensor<f32>, b: &Tensor<f32>) -> Result<Tensor<f32>> {
    let (m, k) = a.shape().dims2()?;
    let (k2, n) = b.shape().dims2()?;
    if k != k2 {
        return Err(Error::Dimension(format!(
            "gemm inner dims disagree: {} vs {}",
            a.shape(),
            b.shape()
        )));
    }
    let ad = a.data();
    let bd = b.data();
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0f32;
            for p in 0..k {
                acc += ad[i * k + p] * bd[p * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    Tensor::new(&[m, n], out)
}

/// Swap the two axes of a rank-2 tensor. Element type is preserved.
pub fn transpose2d<T: Copy>(a: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, n) = a.shape().dims2()?;
    let src = a.data();
    let mut out = Vec::with_capacity(m * n);
    for j in 0..n {
        for i in 0..m {
            out.push(src[i * n + j]);
        }
    }
    Tensor::new(&[n, m], out)
}

/// Row-wise softmax of a rank-2 tensor, computed with max subtraction.
///
/// Each output row sums to 1, and the argmax of every row equals the argmax
/// of the corresponding input row (ties resolve to the lowest index in both).
pub fn softmax_rows(a: &Tensor<f32>) -> Result<Tensor<f32>> {
    let (m, n) = a.shape().dims2()?;
    let src = a.data();
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        softmax_slice(&src[i * n..(i + 1) * n], &mut out[i * n..(i + 1) * n]);
    }
    Tensor::new(&[m, n], out)
}

pub(crate) fn softmax_slice(src: &[f32], dst: &mut [f32]) {
    let max = src.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f32;
    for (d, &x) in dst.iter_mut().zip(src) {
        *d = (x - max).exp();
        sum += *d;
    }
    for d in dst.iter_mut() {
        *d /= sum;
    }
}

fn same_shape<T: Copy>(a: &Tensor<T>, b: &Tensor<T>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "{what}: shapes {} and {} disagree",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Elementwise sum. The right operand may also be rank 1 matching the left
/// operand's last axis, in which case it is broadcast row-wise (bias add).
pub fn add(a: &Tensor<f32>, b: &Tensor<f32>) -> Result<Tensor<f32>> {
    if b.rank() == 1 && a.rank() > 1 && b.numel() == a.shape().last_dim() {
        let w = b.numel();
        let mut out = a.data().to_vec();
        for (i, v) in out.iter_mut().enumerate() {
            *v += b.data()[i % w];
        }
        return Tensor::new(a.dims(), out);
    }
    same_shape(a, b, "add")?;
    let out = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
    Tensor::new(a.dims(), out)
}

pub fn relu(a: &Tensor<f32>) -> Tensor<f32> {
    map_unary(a, |x| x.max(0.0))
}

pub fn sigmoid(a: &Tensor<f32>) -> Tensor<f32> {
    map_unary(a, |x| 1.0 / (1.0 + (-x).exp()))
}

pub fn scalar_mul(a: &Tensor<f32>, s: f32) -> Tensor<f32> {
    map_unary(a, |x| x * s)
}

fn map_unary(a: &Tensor<f32>, op: impl Fn(f32) -> f32) -> Tensor<f32> {
    let out = a.data().iter().copied().map(op).collect();
    Tensor::new(a.dims(), out).expect("shape unchanged")
}

pub const LAYER_NORM_EPS: f32 = 1e-5;

/// Layer normalization over the last axis: `(x - mean) / sqrt(var + eps)`
/// scaled by `gain` and shifted by `bias` (both rank-1 of the last extent).
pub fn layer_norm(x: &Tensor<f32>, gain: &Tensor<f32>, bias: &Tensor<f32>, eps: f32) -> Result<Tensor<f32>> {
    let w = x.shape().last_dim();
    if gain.rank() != 1 || gain.numel() != w || bias.rank() != 1 || bias.numel() != w {
        return Err(Error::Dimension(format!(
            "layer_norm: gain/bias must be rank-1 of {w}, got {} and {}",
            gain.shape(),
            bias.shape()
        )));
    }
    let mut out = vec![0.0f32; x.numel()];
    for (src, dst) in x.data().chunks_exact(w).zip(out.chunks_exact_mut(w)) {
        let mean = src.iter().sum::<f32>() / w as f32;
        let var = src.iter().map(|&v| (v - mean) * (v - mean)).sum::<f32>() / w as f32;
        let inv = 1.0 / (var + eps).sqrt();
        for ((d, &s), (&g, &b)) in dst.iter_mut().zip(src).zip(gain.data().iter().zip(bias.data())) {
            *d = (s - mean) * inv * g + b;
        }
    }
    Tensor::new(x.dims(), out)
}

/// Concatenate along the last axis. All operands must agree on rank and on
/// every leading extent.
pub fn concat_last(parts: &[&Tensor<f32>]) -> Result<Tensor<f32>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Parameter("concat of zero tensors".into()))?;
    let lead = &first.dims()[..first.rank() - 1];
    let mut total_last = 0usize;
    for p in parts {
        if p.rank() != first.rank() || &p.dims()[..p.rank() - 1] != lead {
            return Err(Error::Dimension(format!(
                "concat_last: leading dims disagree: {} vs {}",
                first.shape(),
                p.shape()
            )));
        }
        total_last += p.shape().last_dim();
    }
    let rows: usize = lead.iter().product::<usize>().max(1);
    let mut out = Vec::with_capacity(rows * total_last);
    for r in 0..rows {
        for p in parts {
            let w = p.shape().last_dim();
            out.extend_from_slice(&p.data()[r * w..(r + 1) * w]);
        }
    }
    let mut dims = lead.to_vec();
    dims.push(total_last);
    Tensor::new(&dims, out)
}

/// Take `[start, start+len)` of the last axis.
pub fn slice_last(x: &Tensor<f32>, start: usize, len: usize) -> Result<Tensor<f32>> {
    let w = x.shape().last_dim();
    if len == 0 || start + len > w {
        return Err(Error::Dimension(format!(
            "slice_last: [{start}, {}) out of last extent {w}",
            start + len
        )));
    }
    let rows = x.numel() / w;
    let mut out = Vec::with_capacity(rows * len);
    for r in 0..rows {
        out.extend_from_slice(&x.data()[r * w + start..r * w + start + len]);
    }
    let mut dims = x.dims().to_vec();
    *dims.last_mut().unwrap() = len;
    Tensor::new(&dims, out)
}
