use crate::error::{Error, Result};
use crate::numerics::{fixed_rsqrt, fixed_softmax, rescale, Fixed, QuantSpec, QuantizedTensor};

/// Exact `W x` accumulators. The result carries scale `2^(w_exp + x_exp)`.
pub fn int_vmm_acc(w: &QuantizedTensor, x: &[i64]) -> Result<Vec<i128>> {
    let [rows, cols] = w.shape[..] else {
        return Err(Error::Shape(format!(
            "expected a matrix, got shape {:?}",
            w.shape
        )));
    };
    if x.len() != cols {
        return Err(Error::Shape(format!(
            "matrix has {cols} columns, vector has {} entries",
            x.len()
        )));
    }
    Ok((0..rows)
        .map(|r| {
            w.codes[r * cols..(r + 1) * cols]
                .iter()
                .zip(x)
                .map(|(&a, &b)| a as i128 * b as i128)
                .sum()
        })
        .collect())
}

/// Rounds accumulators (scale `2^acc_exp`) plus an optional bias into `out`.
/// Returns the codes and the number of clamped entries.
pub fn requantize(
    acc: &[i128],
    acc_exp: i32,
    bias: Option<&QuantizedTensor>,
    out: QuantSpec,
) -> Result<(Vec<i64>, usize)> {
    if let Some(b) = bias {
        if b.codes.len() != acc.len() {
            return Err(Error::Shape(format!(
                "bias has {} entries for {} outputs",
                b.codes.len(),
                acc.len()
            )));
        }
    }
    // align at the finer of the two scales so the bias adds exactly
    let exp = match bias {
        Some(b) => acc_exp.min(b.spec.scale_exp),
        None => acc_exp,
    };
    let mut saturated = 0;
    let codes = acc
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let mut v = rescale(a, acc_exp, exp);
            if let Some(b) = bias {
                v = v.saturating_add(rescale(b.codes[i] as i128, b.spec.scale_exp, exp));
            }
            let (c, sat) = out.saturate(rescale(v, exp, out.scale_exp));
            saturated += sat as usize;
            c
        })
        .collect();
    Ok((codes, saturated))
}

/// Cache code of a key accumulator: the nearest even code of `key`, so the
/// unsigned trace encoding `k/2 + 64` is lossless. Also reports clamping.
pub fn even_key_code(acc: i128, acc_exp: i32, key: QuantSpec) -> (i64, bool) {
    let half = rescale(acc, acc_exp, key.scale_exp + 1);
    let lo = key.min_code().div_euclid(2) as i128;
    let hi = key.max_code().div_euclid(2) as i128;
    let clamped = half.clamp(lo, hi);
    (2 * clamped as i64, clamped != half)
}

/// Attention probabilities as codes of `prob`, from integer scores with scale
/// `2^score_exp`. `scale_dim` applies `1/sqrt(scale_dim)` first.
pub fn probabilities(
    scores: &[i64],
    score_exp: i32,
    scale_dim: Option<usize>,
    prob: QuantSpec,
) -> Result<Vec<i64>> {
    let mut s: Vec<Fixed> = scores
        .iter()
        .map(|&v| Fixed::from_code(v as i128, score_exp))
        .collect();
    if let Some(d) = scale_dim {
        let r = fixed_rsqrt(Fixed::from_code(d as i128, 0))?;
        s.iter_mut().for_each(|v| *v = *v * r);
    }
    Ok(fixed_softmax(&s)
        .into_iter()
        .map(|p| prob.saturate(p.to_code(prob.scale_exp)).0)
        .collect())
}

/// Elementwise saturating sum of two code vectors in the same format.
pub fn saturating_add(a: &[i64], b: &[i64], spec: QuantSpec) -> (Vec<i64>, usize) {
    let mut saturated = 0;
    let out = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let (c, sat) = spec.saturate(x as i128 + y as i128);
            saturated += sat as usize;
            c
        })
        .collect();
    (out, saturated)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vmm_and_requantize() {
        let w =
            QuantizedTensor::from_codes(vec![1, 2, -3, 4], QuantSpec::signed(8, -2), vec![2, 2])
                .unwrap();
        let acc = int_vmm_acc(&w, &[8, 4]).unwrap();
        assert_eq!(acc, vec![16, -8]);
        let b =
            QuantizedTensor::from_codes(vec![1, -1], QuantSpec::signed(16, -4), vec![2]).unwrap();
        // acc scale 2^-3: 2.0 and -1.0; bias 1/16 and -1/16
        let (codes, sat) = requantize(&acc, -3, Some(&b), QuantSpec::signed(16, -4)).unwrap();
        assert_eq!((codes, sat), (vec![33, -17], 0));
        let (codes, sat) = requantize(&acc, -3, None, QuantSpec::signed(4, -2)).unwrap();
        assert_eq!((codes, sat), (vec![7, -4], 1));
    }

    #[test]
    fn even_keys() {
        let spec = QuantSpec::signed(8, 0);
        assert_eq!(even_key_code(5, 0, spec), (4, false));
        assert_eq!(even_key_code(7, 0, spec), (8, false));
        assert_eq!(even_key_code(-3, 0, spec), (-4, false));
        assert_eq!(even_key_code(127, 0, spec), (126, true));
        assert_eq!(even_key_code(-500, 0, spec), (-128, true));
        assert_eq!(even_key_code(40, -1, spec), (20, false));
    }

    #[test]
    fn probabilities_sum_to_one() {
        let prob = QuantSpec::signed(16, -14);
        let p = probabilities(&[0, 100, -50], -6, None, prob).unwrap();
        let sum: i64 = p.iter().sum();
        assert!((sum - (1 << 14)).abs() <= 3);
        assert_eq!(
            probabilities(&[7], 0, Some(4), prob).unwrap(),
            vec![1 << 14]
        );
    }

    #[test]
    fn add_saturates() {
        let spec = QuantSpec::signed(8, 0);
        assert_eq!(
            saturating_add(&[100, -3], &[100, 1], spec),
            (vec![127, -2], 1)
        );
    }
}
