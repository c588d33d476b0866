//! Power-of-two quantization with round-half-to-even and saturation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer format with a power-of-two scale: value = code * 2^scale_exp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuantSpec {
    pub bits: u32,
    pub signed: bool,
    pub scale_exp: i32,
}

impl QuantSpec {
    pub fn new(bits: u32, signed: bool, scale_exp: i32) -> Result<Self> {
        let spec = Self {
            bits,
            signed,
            scale_exp,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn signed(bits: u32, scale_exp: i32) -> Self {
        Self {
            bits,
            signed: true,
            scale_exp,
        }
    }

    pub fn unsigned(bits: u32, scale_exp: i32) -> Self {
        Self {
            bits,
            signed: false,
            scale_exp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=32).contains(&self.bits) {
            return Err(Error::QuantSpec(format!(
                "bitwidth {} outside 2..=32",
                self.bits
            )));
        }
        if !(-126..=126).contains(&self.scale_exp) {
            return Err(Error::QuantSpec(format!(
                "scale exponent {} outside -126..=126",
                self.scale_exp
            )));
        }
        Ok(())
    }

    pub fn scale(&self) -> f64 {
        (self.scale_exp as f64).exp2()
    }

    pub fn min_code(&self) -> i64 {
        if self.signed {
            -(1i64 << (self.bits - 1))
        } else {
            0
        }
    }

    pub fn max_code(&self) -> i64 {
        if self.signed {
            (1i64 << (self.bits - 1)) - 1
        } else {
            (1i64 << self.bits) - 1
        }
    }

    pub fn contains(&self, code: i64) -> bool {
        (self.min_code()..=self.max_code()).contains(&code)
    }

    /// Clamps `code` into range; the flag reports whether clamping happened.
    pub fn saturate(&self, code: i128) -> (i64, bool) {
        let lo = self.min_code() as i128;
        let hi = self.max_code() as i128;
        if code < lo {
            (lo as i64, true)
        } else if code > hi {
            (hi as i64, true)
        } else {
            (code as i64, false)
        }
    }

    pub fn with_scale_exp(self, scale_exp: i32) -> Self {
        Self { scale_exp, ..self }
    }
}

/// Integer codes plus the format that gives them meaning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedTensor {
    pub codes: Vec<i64>,
    pub spec: QuantSpec,
    pub shape: Vec<usize>,
    /// Number of entries that were clamped during quantization.
    pub saturated: usize,
}

impl QuantizedTensor {
    pub fn from_codes(codes: Vec<i64>, spec: QuantSpec, shape: Vec<usize>) -> Result<Self> {
        spec.validate()?;
        let n: usize = shape.iter().product();
        if n != codes.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} codes, got {}",
                codes.len()
            )));
        }
        if let Some(bad) = codes.iter().find(|c| !spec.contains(**c)) {
            return Err(Error::QuantSpec(format!(
                "code {bad} not representable in {}-bit {} format",
                spec.bits,
                if spec.signed { "signed" } else { "unsigned" }
            )));
        }
        Ok(Self {
            codes,
            spec,
            shape,
            saturated: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn dequantize(&self) -> Vec<f64> {
        dequantize(self)
    }
}

pub fn round_half_even(x: f64) -> f64 {
    x.round_ties_even()
}

/// Quantizes `values` (laid out as `shape`) into `spec`.
pub fn quantize(values: &[f64], shape: &[usize], spec: QuantSpec) -> Result<QuantizedTensor> {
    spec.validate()?;
    let n: usize = shape.iter().product();
    if n != values.len() {
        return Err(Error::Shape(format!(
            "shape {shape:?} needs {n} values, got {}",
            values.len()
        )));
    }
    let inv_scale = (-spec.scale_exp as f64).exp2();
    let mut saturated = 0;
    let codes = values
        .iter()
        .map(|&v| {
            let r = round_half_even(v * inv_scale);
            let (code, sat) = if r.is_nan() {
                (0, true)
            } else if r >= i128::MAX as f64 {
                (spec.max_code(), true)
            } else if r <= i128::MIN as f64 {
                (spec.min_code(), true)
            } else {
                spec.saturate(r as i128)
            };
            saturated += sat as usize;
            code
        })
        .collect();
    Ok(QuantizedTensor {
        codes,
        spec,
        shape: shape.to_vec(),
        saturated,
    })
}

pub fn dequantize(t: &QuantizedTensor) -> Vec<f64> {
    let scale = t.spec.scale();
    t.codes.iter().map(|&c| c as f64 * scale).collect()
}

/// Smallest exponent `e` with `max_abs <= max_code * 2^e`. Zero maps to 0.
pub fn choose_scale_exp(max_abs: f64, bits: u32, signed: bool) -> i32 {
    if !max_abs.is_finite() || max_abs <= 0.0 {
        return 0;
    }
    let qmax = QuantSpec {
        bits,
        signed,
        scale_exp: 0,
    }
    .max_code() as f64;
    let mut e = (max_abs / qmax).log2().ceil() as i32;
    while max_abs > qmax * ((e - 1) as f64).exp2() {
        if max_abs <= qmax * (e as f64).exp2() {
            break;
        }
        e += 1;
    }
    while max_abs <= qmax * ((e - 1) as f64).exp2() {
        e -= 1;
    }
    e.clamp(-126, 126)
}

/// Arithmetic right shift by `shift` bits with round-half-to-even.
pub fn round_shift(v: i128, shift: u32) -> i128 {
    if shift == 0 {
        return v;
    }
    if shift >= 127 {
        return 0;
    }
    let q = v >> shift;
    let rem = v - (q << shift);
    let half = 1i128 << (shift - 1);
    if rem > half || (rem == half && (q & 1) == 1) {
        q + 1
    } else {
        q
    }
}

/// Re-expresses a value `v * 2^from_exp` in units of `2^to_exp`, rounding
/// half to even when precision is dropped.
pub fn rescale(v: i128, from_exp: i32, to_exp: i32) -> i128 {
    if to_exp >= from_exp {
        round_shift(v, (to_exp - from_exp) as u32)
    } else {
        let s = (from_exp - to_exp) as u32;
        if s >= 126 {
            if v == 0 {
                0
            } else if v > 0 {
                i128::MAX
            } else {
                i128::MIN
            }
        } else {
            v.saturating_mul(1i128 << s)
        }
    }
}
