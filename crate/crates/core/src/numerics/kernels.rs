use crate::error::{Error, Result};

/// Default RMSNorm epsilon in float mode.
pub const DEFAULT_RMS_EPS: f64 = 1e-6;

/// `out[i] = gain[i] * x[i] / sqrt(mean(x^2) + eps)`.
pub fn rmsnorm(x: &[f64], gain: &[f64], eps: f64) -> Result<Vec<f64>> {
    if x.len() != gain.len() {
        return Err(Error::Shape(format!(
            "rmsnorm: input has {} entries, gain has {}",
            x.len(),
            gain.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::Shape("rmsnorm: empty input".into()));
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Domain(format!(
            "rmsnorm: eps must be > 0, got {eps}"
        )));
    }
    let mean_sq = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let inv = 1.0 / (mean_sq + eps).sqrt();
    Ok(x.iter().zip(gain).map(|(v, g)| g * v * inv).collect())
}

/// Numerically stable softmax. An empty input yields an empty output.
pub fn softmax(a: &[f64]) -> Vec<f64> {
    let max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = a.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.max(0.0)).collect()
}

pub fn relu_in_place(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmsnorm_of_constant_vector_is_gain() {
        let out = rmsnorm(&[3.0; 4], &[1.0; 4], 1e-300).unwrap();
        for v in out {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rmsnorm_zero_is_fixed_point() {
        assert_eq!(rmsnorm(&[0.0; 5], &[2.0; 5], 1e-6).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn rmsnorm_rejects_gain_mismatch() {
        assert!(rmsnorm(&[1.0, 2.0], &[1.0], 1e-6).is_err());
    }

    #[test]
    fn softmax_basics() {
        assert_eq!(softmax(&[0.0; 4]), vec![0.25; 4]);
        assert_eq!(softmax(&[-37.5]), vec![1.0]);
        let a = [0.3, -1.2, 4.0];
        let b: Vec<f64> = a.iter().map(|v| v + 123.25).collect();
        for (x, y) in softmax(&a).iter().zip(softmax(&b)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn relu_examples() {
        assert_eq!(relu(&[-1.0, 0.0, 2.0]), vec![0.0, 0.0, 2.0]);
        assert_eq!(relu(&[-3.0, -0.5]), vec![0.0, 0.0]);
        assert_eq!(relu(&[0.0, 1.5, 7.0]), vec![0.0, 1.5, 7.0]);
    }
}
