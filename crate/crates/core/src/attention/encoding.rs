//! Signed key components carried in unsigned traces.
//!
//! The keys rule computes `2 * (x1 - 64)`, so a key component `k` is stored as
//! `u = k / 2 + 64`. Integer keys must therefore be even.

use crate::error::{Error, Result};
use crate::numerics::QuantSpec;
use crate::plasticity::{Bounds, SynapseScalar};

pub const KEY_TRACE_OFFSET: i64 = 64;

/// Trace value for key component `k`, clamped into `bounds`.
pub fn encode_key<T: SynapseScalar>(k: T, bounds: &Bounds<T>) -> (T, bool) {
    bounds.clamp(SynapseScalar::sat_add(
        k.halve(),
        T::from_i64(KEY_TRACE_OFFSET),
    ))
}

/// Integer form: `u = k/2 + 64`, saturated into the unsigned trace format.
pub fn encode_signed_trace(k: i64, trace: &QuantSpec) -> Result<(i64, bool)> {
    if k % 2 != 0 {
        return Err(Error::Domain(format!("key code {k} is odd")));
    }
    Ok(encode_key(k, &Bounds::from_spec(trace)))
}

pub fn decode_signed_trace(u: i64) -> i64 {
    2 * (u - KEY_TRACE_OFFSET)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_examples() {
        let spec = QuantSpec::unsigned(8, 0);
        assert_eq!(encode_signed_trace(40, &spec).unwrap(), (84, false));
        assert_eq!(decode_signed_trace(84), 40);
        assert_eq!(encode_signed_trace(0, &spec).unwrap(), (64, false));
        assert_eq!(encode_signed_trace(-128, &spec).unwrap(), (0, false));
        assert_eq!(encode_signed_trace(-130, &spec).unwrap(), (0, true));
        assert_eq!(encode_signed_trace(382, &spec).unwrap(), (255, false));
        assert_eq!(encode_signed_trace(384, &spec).unwrap(), (255, true));
        assert!(encode_signed_trace(3, &spec).is_err());
    }

    #[test]
    fn float_encoding_inverts() {
        for k in [-3.75, 0.0, 1e-3, 17.125] {
            let (u, sat) = encode_key(k, &Bounds::non_negative());
            assert!(!sat);
            assert!((2.0 * (u - 64.0) - k).abs() < 1e-12);
        }
    }
}
