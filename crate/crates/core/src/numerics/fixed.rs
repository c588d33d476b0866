//! Fixed-point kernels for the integer execution path.
//!
//! Scalars are Q32.32 in an `i64`. Exponentials use range reduction to
//! `2^k * 2^f` with a cubic for `2^f`; reciprocal and inverse square root run
//! two Newton steps from a 64-entry seed table. Internal iterations use Q60 in
//! `i128`.
//!
//! Accuracy (relative error <= 2^-8) is guaranteed for exp inputs in
//! `[-16, 0]` and recip/rsqrt inputs in `[2^-14, 2^14]`. Inputs outside those
//! ranges are still computed, saturating on overflow.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

use super::quant::{rescale, round_shift, QuantSpec};
use crate::error::{Error, Result};

pub const FRAC_BITS: u32 = 32;

/// Q32.32 fixed-point scalar.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Fixed(i64);

impl Fixed {
    pub const ZERO: Fixed = Fixed(0);
    pub const ONE: Fixed = Fixed(1 << FRAC_BITS);
    pub const MAX: Fixed = Fixed(i64::MAX);
    pub const MIN: Fixed = Fixed(i64::MIN);
    /// Smallest positive value.
    pub const EPSILON: Fixed = Fixed(1);

    pub const fn from_raw(raw: i64) -> Self {
        Fixed(raw)
    }

    pub const fn raw(self) -> i64 {
        self.0
    }

    pub fn from_f64(v: f64) -> Self {
        let r = (v * (FRAC_BITS as f64).exp2()).round_ties_even();
        if r >= i64::MAX as f64 {
            Fixed::MAX
        } else if r <= i64::MIN as f64 {
            Fixed::MIN
        } else {
            Fixed(r as i64)
        }
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 * (-(FRAC_BITS as f64)).exp2()
    }

    /// Converts an integer code with scale `2^exp` into Q32.32.
    pub fn from_code(code: i128, exp: i32) -> Self {
        Fixed(clamp_i64(rescale(code, exp, -(FRAC_BITS as i32))))
    }

    /// Converts into an integer code with scale `2^exp` (no saturation).
    pub fn to_code(self, exp: i32) -> i128 {
        rescale(self.0 as i128, -(FRAC_BITS as i32), exp)
    }

    pub fn saturating_add(self, other: Fixed) -> Fixed {
        Fixed(self.0.saturating_add(other.0))
    }
}

impl Add for Fixed {
    type Output = Fixed;
    fn add(self, rhs: Fixed) -> Fixed {
        self.saturating_add(rhs)
    }
}

/// Rounded half to even, saturating.
impl Mul for Fixed {
    type Output = Fixed;

    fn mul(self, other: Fixed) -> Fixed {
        Fixed(clamp_i64(round_shift(
            self.0 as i128 * other.0 as i128,
            FRAC_BITS,
        )))
    }
}

impl Sub for Fixed {
    type Output = Fixed;
    fn sub(self, rhs: Fixed) -> Fixed {
        Fixed(self.0.saturating_sub(rhs.0))
    }
}

impl Neg for Fixed {
    type Output = Fixed;
    fn neg(self) -> Fixed {
        Fixed(self.0.saturating_neg())
    }
}

impl fmt::Debug for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fixed({})", self.to_f64())
    }
}

impl fmt::Display for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

fn clamp_i64(v: i128) -> i64 {
    v.clamp(i64::MIN as i128, i64::MAX as i128) as i64
}

const Q: u32 = 60;
const Q_ONE: i128 = 1 << Q;

// log2(e) in Q62.
const LOG2_E_Q62: i128 = 6_653_256_548_922_161_246;

// Cubic for 2^f on [0, 1) with the constant term pinned to 1, fitted for
// minimum max relative error (about 8.6e-5). Q32.
const EXP2_C1: i128 = 2_985_503_196;
const EXP2_C2: i128 = 977_727_733;
const EXP2_C3: i128 = 331_001_277;

const SEED_ENTRIES: usize = 64;

fn recip_seeds() -> &'static [i128; SEED_ENTRIES] {
    static TABLE: OnceLock<[i128; SEED_ENTRIES]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0i128; SEED_ENTRIES];
        for (i, s) in t.iter_mut().enumerate() {
            // left endpoint of [1 + i/64, 1 + (i+1)/64)
            let m = 1.0 + i as f64 / SEED_ENTRIES as f64;
            *s = ((1.0 / m) * (Q as f64).exp2()).round() as i128;
        }
        t
    })
}

fn rsqrt_seeds() -> &'static [i128; SEED_ENTRIES] {
    static TABLE: OnceLock<[i128; SEED_ENTRIES]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0i128; SEED_ENTRIES];
        for (i, s) in t.iter_mut().enumerate() {
            // left endpoint of the i-th sub-interval of [1, 4)
            let m = 1.0 + 3.0 * i as f64 / SEED_ENTRIES as f64;
            *s = ((1.0 / m.sqrt()) * (Q as f64).exp2()).round() as i128;
        }
        t
    })
}

/// Shifts a Q60 value into Q32.32 after multiplying by `2^exp2`.
fn q60_to_fixed(y: i128, exp2: i32) -> Fixed {
    // raw = y * 2^-60 * 2^exp2 * 2^32
    let shift = exp2 + FRAC_BITS as i32 - Q as i32;
    if shift >= 0 {
        if shift >= 64 {
            return Fixed::MAX;
        }
        Fixed(clamp_i64(y.saturating_mul(1i128 << shift)))
    } else {
        Fixed(clamp_i64(round_shift(y, (-shift) as u32)))
    }
}

fn msb(raw: i64) -> i32 {
    63 - raw.leading_zeros() as i32
}

/// `e^x`.
pub fn fixed_exp(x: Fixed) -> Fixed {
    let y = round_shift(x.0 as i128 * LOG2_E_Q62, 62);
    let k = (y >> FRAC_BITS) as i64;
    let f = y & ((1i128 << FRAC_BITS) - 1);

    let mut t = EXP2_C3;
    t = EXP2_C2 + round_shift(t * f, FRAC_BITS);
    t = EXP2_C1 + round_shift(t * f, FRAC_BITS);
    let p = (1i128 << FRAC_BITS) + round_shift(t * f, FRAC_BITS);

    if k >= 0 {
        if k >= 63 {
            return Fixed::MAX;
        }
        Fixed(clamp_i64(p.saturating_mul(1i128 << k)))
    } else {
        Fixed(clamp_i64(round_shift(p, (-k).min(127) as u32)))
    }
}

/// `1 / x` for `x > 0`.
pub fn fixed_recip(x: Fixed) -> Result<Fixed> {
    if x.0 <= 0 {
        return Err(Error::Domain(format!("fixed_recip of non-positive {x}")));
    }
    let n = msb(x.0);
    // mantissa in [1, 2), Q60
    let m = if n <= Q as i32 {
        (x.0 as i128) << (Q as i32 - n)
    } else {
        (x.0 as i128) >> (n - Q as i32)
    };
    let idx = ((m >> (Q - 6)) & 63) as usize;
    let mut y = recip_seeds()[idx];
    for _ in 0..2 {
        let e = round_shift(m * y, Q);
        y = round_shift(y * (2 * Q_ONE - e), Q);
    }
    // x = m * 2^(n-32), so 1/x = y * 2^(32-n)
    Ok(q60_to_fixed(y, FRAC_BITS as i32 - n))
}

/// `1 / sqrt(x)` for `x > 0`.
pub fn fixed_rsqrt(x: Fixed) -> Result<Fixed> {
    if x.0 <= 0 {
        return Err(Error::Domain(format!("fixed_rsqrt of non-positive {x}")));
    }
    let e = msb(x.0) - FRAC_BITS as i32;
    let even = e - e.rem_euclid(2);
    // m = x / 2^even in [1, 4), Q60
    let shift = Q as i32 - FRAC_BITS as i32 - even;
    let m = if shift >= 0 {
        (x.0 as i128) << shift
    } else {
        (x.0 as i128) >> (-shift)
    };
    let idx = (((m - Q_ONE) * SEED_ENTRIES as i128) / (3 * Q_ONE)).clamp(0, 63) as usize;
    let mut y = rsqrt_seeds()[idx];
    for _ in 0..2 {
        let y2 = round_shift(y * y, Q);
        let my2 = round_shift(m * y2, Q);
        y = round_shift(y * (3 * Q_ONE - my2), Q + 1);
    }
    Ok(q60_to_fixed(y, -even / 2))
}

/// Softmax over Q32.32 scores. Empty input yields empty output.
pub fn fixed_softmax(scores: &[Fixed]) -> Vec<Fixed> {
    let Some(&max) = scores.iter().max() else {
        return Vec::new();
    };
    let exps: Vec<Fixed> = scores.iter().map(|&s| fixed_exp(s - max)).collect();
    let sum = exps.iter().fold(Fixed::ZERO, |acc, &e| acc + e);
    // the max entry contributes exactly 1, so sum >= 1
    let inv = fixed_recip(sum).expect("softmax denominator is at least one");
    exps.into_iter().map(|e| e * inv).collect()
}

/// Integer RMSNorm.
///
/// `x` holds codes with scale `2^x_exp`, `gain` codes with scale
/// `2^gain_exp`. `eps` is added to the mean square. The result is rounded into
/// `out` and saturated; the second value counts clamped entries.
pub fn fixed_rmsnorm(
    x: &[i64],
    x_exp: i32,
    gain: &[i64],
    gain_exp: i32,
    eps: Fixed,
    out: QuantSpec,
) -> Result<(Vec<i64>, usize)> {
    if x.len() != gain.len() || x.is_empty() {
        return Err(Error::Shape(format!(
            "fixed_rmsnorm: input has {} entries, gain has {}",
            x.len(),
            gain.len()
        )));
    }
    let sum_sq: i128 = x.iter().map(|&v| v as i128 * v as i128).sum();
    let n = x.len() as i128;
    // mean square in Q32.32; sum_sq carries scale 2^(2 * x_exp)
    let scaled = rescale(sum_sq, 2 * x_exp, -(FRAC_BITS as i32));
    let mean = Fixed(clamp_i64((2 * scaled + n).div_euclid(2 * n)));
    let inv = fixed_rsqrt(mean + eps)?;
    let prod_exp = x_exp + gain_exp - FRAC_BITS as i32;
    let mut saturated = 0;
    let codes = x
        .iter()
        .zip(gain)
        .map(|(&v, &g)| {
            let p = (v as i128 * g as i128) * inv.0 as i128;
            let (c, sat) = out.saturate(rescale(p, prod_exp, out.scale_exp));
            saturated += sat as usize;
            c
        })
        .collect();
    Ok((codes, saturated))
}
