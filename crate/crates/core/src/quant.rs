//! Quantization schemes and the integer matrix products that replace the
//! float product at inference time.
//!
//! Two schemes are supported:
//!
//! - int16: values are multiplied by 2^10 and rounded, so the product of two
//!   codes carries scale 2^20. Accumulation is wrapping 32-bit (the hardware
//!   this models has no saturating 32-bit add), which bounds the usable
//!   model width; overflow is documented, not checked.
//! - int8: values are clipped to `[-c, c]` and scaled linearly to
//!   `[-127, 127]` (never -128). The product accumulates pair sums in a
//!   saturating 16-bit register, mirroring the packed multiply-add
//!   instruction the kernel maps to.
//!
//! Rounding is half-away-from-zero everywhere. Both integer products take
//! the right operand pre-transposed (`[n, k]`) so rows of either operand are
//! contiguous.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Fixed-point multiplier for the int16 scheme, 2^10.
pub const I16_SCALE: f32 = 1024.0;
/// Scale carried by an int16 product, 2^20.
pub const I16_PRODUCT_SCALE: f32 = 1_048_576.0;
/// Saturation bound of int16 quantization (symmetric; -32768 never produced).
pub const I16_MAX: i32 = 32767;

/// Clip-and-scale scheme for int8: codes are `round(clip(x, c) * 127 / c)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Int8Scheme {
    clip: f32,
}

impl Int8Scheme {
    pub fn new(clip: f32) -> Result<Self> {
        if !(clip > 0.0) {
            return Err(Error::Parameter(format!("int8 clip must be positive, got {clip}")));
        }
        Ok(Int8Scheme { clip })
    }

    pub fn clip(&self) -> f32 {
        self.clip
    }

    /// Codes per unit value, `127 / clip`.
    pub fn scale(&self) -> f32 {
        127.0 / self.clip
    }
}

impl Default for Int8Scheme {
    fn default() -> Self {
        Int8Scheme { clip: 2.0 }
    }
}

/// Integer tensor plus the metadata needed to interpret its codes.
#[derive(Clone, PartialEq, Debug)]
pub enum QuantizedTensor {
    I16(Tensor<i16>),
    I8 { data: Tensor<i8>, scheme: Int8Scheme },
}

impl QuantizedTensor {
    pub fn shape(&self) -> &crate::tensor::Shape {
        match self {
            QuantizedTensor::I16(t) => t.shape(),
            QuantizedTensor::I8 { data, .. } => data.shape(),
        }
    }

    pub fn as_i16(&self) -> Result<&Tensor<i16>> {
        match self {
            QuantizedTensor::I16(t) => Ok(t),
            QuantizedTensor::I8 { .. } => Err(Error::Parameter("expected an int16 tensor, got int8".into())),
        }
    }

    pub fn as_i8(&self) -> Result<(&Tensor<i8>, Int8Scheme)> {
        match self {
            QuantizedTensor::I8 { data, scheme } => Ok((data, *scheme)),
            QuantizedTensor::I16(_) => Err(Error::Parameter("expected an int8 tensor, got int16".into())),
        }
    }

    /// Swap the two axes of a rank-2 quantized tensor, scheme preserved.
    pub fn transpose2d(&self) -> Result<QuantizedTensor> {
        Ok(match self {
            QuantizedTensor::I16(t) => QuantizedTensor::I16(crate::tensor::transpose2d(t)?),
            QuantizedTensor::I8 { data, scheme } => QuantizedTensor::I8 {
                data: crate::tensor::transpose2d(data)?,
                scheme: *scheme,
            },
        })
    }
}

/// Clamp every element to `[-c, c]`.
pub fn clip(a: &Tensor<f32>, c: f32) -> Result<Tensor<f32>> {
    if !(c > 0.0) {
        return Err(Error::Parameter(format!("clip bound must be positive, got {c}")));
    }
    let out = a.data().iter().map(|&x| x.clamp(-c, c)).collect();
    Tensor::new(a.dims(), out)
}

fn round_away(x: f32) -> f32 {
    // f32::round is round-half-away-from-zero.
    x.round()
}

/// Quantize to int16 codes: `saturate(round(x * 1024))`, bounds +/-32767.
pub fn quantize_i16(a: &Tensor<f32>) -> QuantizedTensor {
    let out: Vec<i16> = a
        .data()
        .iter()
        .map(|&x| (round_away(x * I16_SCALE) as i32).clamp(-I16_MAX, I16_MAX) as i16)
        .collect();
    QuantizedTensor::I16(Tensor::new(a.dims(), out).expect("shape unchanged"))
}

/// Quantize to int8 codes: `round(clip(x, c) * 127 / c)`, range `[-127, 127]`.
pub fn quantize_i8(a: &Tensor<f32>, scheme: Int8Scheme) -> QuantizedTensor {
    let s = scheme.scale();
    let c = scheme.clip();
    let out: Vec<i8> = a
        .data()
        .iter()
        .map(|&x| round_away(x.clamp(-c, c) * s) as i8)
        .collect();
    QuantizedTensor::I8 {
        data: Tensor::new(a.dims(), out).expect("shape unchanged"),
        scheme,
    }
}

/// Map codes back to floats: `v / 1024` (int16) or `v * c / 127` (int8).
pub fn dequantize(q: &QuantizedTensor) -> Tensor<f32> {
    match q {
        QuantizedTensor::I16(t) => {
            let out = t.data().iter().map(|&v| v as f32 / I16_SCALE).collect();
            Tensor::new(t.dims(), out).expect("shape unchanged")
        }
        QuantizedTensor::I8 { data, scheme } => {
            let inv = scheme.clip() / 127.0;
            let out = data.data().iter().map(|&v| v as f32 * inv).collect();
            Tensor::new(data.dims(), out).expect("shape unchanged")
        }
    }
}

/// Int16 product of `A [m,k]` with pre-transposed `B^T [n,k]`.
///
/// Products and sums run in wrapping 32-bit integers in ascending-k order;
/// the accumulated value is divided by 2^20 in float. For wide enough k with
/// full-range codes the 32-bit accumulator can wrap; that regime is outside
/// the supported model sizes and intentionally not detected.
pub fn gemm_i16(aq: &QuantizedTensor, bqt: &QuantizedTensor) -> Result<Tensor<f32>> {
    let a = aq.as_i16()?;
    let bt = bqt.as_i16()?;
    let (m, k) = a.shape().dims2()?;
    let (n, k2) = bt.shape().dims2()?;
    if k != k2 {
        return Err(Error::Dimension(format!(
            "gemm_i16 inner dims disagree: {} vs transposed {}",
            a.shape(),
            bt.shape()
        )));
    }
    let ad = a.data();
    let btd = bt.data();
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc: i32 = 0;
            for p in 0..k {
                acc = acc.wrapping_add(ad[i * k + p] as i32 * btd[j * k + p] as i32);
            }
            out[i * n + j] = acc as f32 / I16_PRODUCT_SCALE;
        }
    }
    Tensor::new(&[m, n], out)
}

fn sat_i16(v: i32) -> i16 {
    v.clamp(i16::MIN as i32, i16::MAX as i32) as i16
}

/// Int8 product of `A [m,k]` with pre-transposed `B^T [n,k]`, both under the
/// same scheme.
///
/// Per output element, k is processed in adjacent pairs: each pair sum is
/// computed in 32-bit and saturated to int16, then added into an int16
/// accumulator with saturation, ascending pair order. Odd k behaves as if
/// padded with a zero column. The accumulator is scaled by `(c/127)^2`.
pub fn gemm_i8(aq: &QuantizedTensor, bqt: &QuantizedTensor) -> Result<Tensor<f32>> {
    let (a, sa) = aq.as_i8()?;
    let (bt, sb) = bqt.as_i8()?;
    if sa != sb {
        return Err(Error::Parameter(format!(
            "gemm_i8 operand schemes disagree: clip {} vs {}",
            sa.clip(),
            sb.clip()
        )));
    }
    let (m, k) = a.shape().dims2()?;
    let (n, k2) = bt.shape().dims2()?;
    if k != k2 {
        return Err(Error::Dimension(format!(
            "gemm_i8 inner dims disagree: {} vs transposed {}",
            a.shape(),
            bt.shape()
        )));
    }
    let unit = sa.clip() / 127.0;
    let out_scale = unit * unit;
    let ad = a.data();
    let btd = bt.data();
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc: i16 = 0;
            let mut p = 0;
            while p < k {
                let mut pair = ad[i * k + p] as i32 * btd[j * k + p] as i32;
                if p + 1 < k {
                    pair += ad[i * k + p + 1] as i32 * btd[j * k + p + 1] as i32;
                }
                acc = acc.saturating_add(sat_i16(pair));
                p += 2;
            }
            out[i * n + j] = acc as f32 * out_scale;
        }
    }
    Tensor::new(&[m, n], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{gemm_f32, transpose2d};

    fn t(dims: &[usize], data: &[f32]) -> Tensor<f32> {
        Tensor::new(dims, data.to_vec()).unwrap()
    }

    #[test]
    fn clip_examples() {
        let a = t(&[3], &[3.1, -5.0, 1.5]);
        let c = clip(&a, 2.0).unwrap();
        assert_eq!(c.data(), &[2.0, -2.0, 1.5]);

        let small = t(&[2], &[0.5, -1.0]);
        assert_eq!(clip(&small, 2.0).unwrap().data(), small.data());

        let once = clip(&a, 2.0).unwrap();
        let twice = clip(&once, 2.0).unwrap();
        assert_eq!(once.data(), twice.data());

        assert!(matches!(clip(&a, 0.0), Err(Error::Parameter(_))));
        assert!(matches!(clip(&a, -1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn quantize_i16_exact_multiples() {
        let q = quantize_i16(&t(&[3], &[1.0, 0.0, -0.5]));
        assert_eq!(q.as_i16().unwrap().data(), &[1024, 0, -512]);
    }

    #[test]
    fn quantize_i16_saturates_symmetric() {
        // 40 * 1024 = 40960 > 32767.
        let q = quantize_i16(&t(&[2], &[40.0, -40.0]));
        assert_eq!(q.as_i16().unwrap().data(), &[32767, -32767]);
    }

    #[test]
    fn quantize_i8_examples() {
        let scheme = Int8Scheme::default();
        let q = quantize_i8(&t(&[1], &[2.5]), scheme);
        assert_eq!(q.as_i8().unwrap().0.data(), &[127]);

        // 1.0 * 63.5 = 63.5 rounds away from zero to 64.
        let q = quantize_i8(&t(&[1], &[1.0]), scheme);
        assert_eq!(q.as_i8().unwrap().0.data(), &[64]);

        let q = quantize_i8(&t(&[2], &[-2.0, 0.0]), scheme);
        assert_eq!(q.as_i8().unwrap().0.data(), &[-127, 0]);
    }

    #[test]
    fn quantize_i8_never_produces_min() {
        let scheme = Int8Scheme::default();
        let xs: Vec<f32> = (0..10_000).map(|i| -4.0 + i as f32 * 8.0 / 10_000.0).collect();
        let q = quantize_i8(&Tensor::new(&[10_000], xs).unwrap(), scheme);
        let (codes, _) = q.as_i8().unwrap();
        assert!(codes.data().iter().all(|&v| (-127..=127).contains(&v)));
    }

    #[test]
    fn dequantize_trivials() {
        let q = QuantizedTensor::I16(Tensor::new(&[1], vec![1024i16]).unwrap());
        assert_eq!(dequantize(&q).data(), &[1.0]);
        let q = QuantizedTensor::I8 {
            data: Tensor::new(&[1], vec![127i8]).unwrap(),
            scheme: Int8Scheme::default(),
        };
        assert_eq!(dequantize(&q).data(), &[2.0]);
    }

    #[test]
    fn i16_roundtrip_error_bound() {
        // Half-step bound 2^-11 wherever |x| * 1024 <= 32767.
        for i in 0..20_000 {
            let x = -16.0 + i as f32 * 32.0 / 20_000.0;
            let q = quantize_i16(&t(&[1], &[x]));
            let back = dequantize(&q).data()[0];
            assert!(
                (back - x).abs() <= 1.0 / 2048.0 + 1e-7,
                "x={x} back={back}"
            );
        }
    }

    #[test]
    fn i8_roundtrip_error_bound() {
        let scheme = Int8Scheme::default();
        for i in 0..20_000 {
            let x = -3.0 + i as f32 * 6.0 / 20_000.0;
            let q = quantize_i8(&t(&[1], &[x]), scheme);
            let back = dequantize(&q).data()[0];
            let clipped = x.clamp(-2.0, 2.0);
            assert!(
                (back - clipped).abs() <= 2.0 / 254.0 + 1e-6,
                "x={x} back={back}"
            );
        }
    }

    #[test]
    fn gemm_i16_unit_example() {
        // 1024*512 + 2048*256 = 2^20, so the product is exactly 1.0.
        let aq = quantize_i16(&t(&[1, 2], &[1.0, 2.0]));
        let bqt = quantize_i16(&t(&[1, 2], &[0.5, 0.25]));
        let c = gemm_i16(&aq, &bqt).unwrap();
        assert_eq!(c.data(), &[1.0]);
    }

    #[test]
    fn gemm_i16_zero_operands() {
        let z = quantize_i16(&t(&[2, 3], &[0.0; 6]));
        let zt = quantize_i16(&t(&[4, 3], &[0.0; 12]));
        let c = gemm_i16(&z, &zt).unwrap();
        assert!(c.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gemm_i16_rejects_scheme_and_shape_misuse() {
        let a16 = quantize_i16(&t(&[1, 2], &[0.0, 0.0]));
        let b8 = quantize_i8(&t(&[1, 2], &[0.0, 0.0]), Int8Scheme::default());
        assert!(gemm_i16(&a16, &b8).is_err());
        let bad = quantize_i16(&t(&[1, 3], &[0.0; 3]));
        assert!(matches!(gemm_i16(&a16, &bad), Err(Error::Dimension(_))));
    }

    #[test]
    fn gemm_i16_tracks_float_product() {
        // |int product - float product| <= k * 2^-9 for inputs in [-1, 1].
        let mut state = 0x1234_5678u64;
        let mut rnd = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 33) as f32 / (1u32 << 31) as f32) - 1.0
        };
        for &k in &[1usize, 3, 16, 64] {
            let m = 4;
            let n = 5;
            let a = Tensor::new(&[m, k], (0..m * k).map(|_| rnd()).collect()).unwrap();
            let b = Tensor::new(&[k, n], (0..k * n).map(|_| rnd()).collect()).unwrap();
            let reference = gemm_f32(&a, &b).unwrap();
            let qa = quantize_i16(&a);
            let qbt = quantize_i16(&transpose2d(&b).unwrap());
            let c = gemm_i16(&qa, &qbt).unwrap();
            let bound = k as f32 / 512.0;
            for (x, y) in c.data().iter().zip(reference.data()) {
                assert!((x - y).abs() <= bound, "k={k} {x} vs {y}");
            }
        }
    }

    #[test]
    fn gemm_i8_zero_operands() {
        let s = Int8Scheme::default();
        let z = quantize_i8(&t(&[2, 4], &[0.0; 8]), s);
        let zt = quantize_i8(&t(&[3, 4], &[0.0; 12]), s);
        let c = gemm_i8(&z, &zt).unwrap();
        assert!(c.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gemm_i8_scalar_example() {
        // [1.0] -> code 64 on both sides; k padded to 2 with zeros.
        let s = Int8Scheme::default();
        let a = quantize_i8(&t(&[1, 1], &[1.0]), s);
        let b = quantize_i8(&t(&[1, 1], &[1.0]), s);
        let c = gemm_i8(&a, &b).unwrap();
        let expected = 4096.0 * (2.0f32 / 127.0) * (2.0 / 127.0);
        assert_eq!(c.data()[0], expected);
        assert!((c.data()[0] - 1.0158).abs() < 1e-3);
    }

    #[test]
    fn gemm_i8_saturation_pins_accumulator() {
        // Sixteen 2.0s quantize to 127; every pair sum is 32258 and the
        // running total pins at 32767 from the second pair on.
        let s = Int8Scheme::default();
        let a = quantize_i8(&t(&[1, 16], &[2.0; 16]), s);
        let b = quantize_i8(&t(&[1, 16], &[2.0; 16]), s);
        let c = gemm_i8(&a, &b).unwrap();
        let expected = 32767.0 * (2.0f32 / 127.0) * (2.0 / 127.0);
        assert_eq!(c.data()[0], expected);
        // Under 32-bit accumulation the same inputs give 16 * 16129 counts,
        // i.e. the true dot product 64.0 of the dequantized values.
        let wide = 16i32 * 127 * 127;
        assert!((wide as f32 * (2.0f32 / 127.0) * (2.0 / 127.0) - 64.0).abs() < 1e-3);
    }

    #[test]
    fn gemm_i8_rejects_scheme_mismatch() {
        let a = quantize_i8(&t(&[1, 2], &[0.0; 2]), Int8Scheme::new(2.0).unwrap());
        let b = quantize_i8(&t(&[1, 2], &[0.0; 2]), Int8Scheme::new(3.0).unwrap());
        assert!(matches!(gemm_i8(&a, &b), Err(Error::Parameter(_))));
    }
}
