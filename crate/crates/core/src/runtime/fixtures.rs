//! Hand-wired models with known behaviour, for exercising the harness
//! without a trained checkpoint.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    AttentionWeights, EncoderWeights, LayerWeights, MlpWeights, Model, ModelConfig, OutputHead,
};
use crate::numerics::Matrix;

/// One-layer nearest-neighbour classifier.
///
/// The encoder copies the token (pixels centred around 0.5), the query and key
/// projections compare pixels, the query marker suppresses attention to the
/// query itself, and the values carry the support labels to the output head.
/// Width is the smallest multiple of 8 holding pixels, labels and the marker.
pub fn retrieval_model(pixels: usize, classes: usize, shots: usize, beta: f64) -> Result<Model> {
    if beta.is_nan() || beta <= 0.0 {
        return Err(Error::Config(format!(
            "retrieval sharpness {beta} must be positive"
        )));
    }
    let input = pixels + classes + 1;
    let d = input.div_ceil(8) * 8;
    let config = ModelConfig::few_shot(1, d, 1, pixels, classes, shots);
    config.validate()?;
    let labels = pixels..pixels + classes;
    let marker = pixels + classes;

    let encoder = EncoderWeights {
        weight: Matrix::from_fn(d, input, |i, j| if i == j { 1.0 } else { 0.0 }),
        bias: (0..d)
            .map(|i| if i < pixels { -0.5 } else { 0.0 })
            .collect(),
        norm_gain: vec![1.0; d],
    };
    let mut attn = AttentionWeights::zeros(d);
    for p in 0..pixels {
        attn.wq.set(p, p, beta);
        attn.wk.set(p, p, 1.0);
    }
    attn.wq.set(marker, marker, -4.0);
    attn.wk.set(marker, marker, 1.0);
    for l in labels.clone() {
        attn.wv.set(l, l, 1.0);
        attn.wo.set(l, l, 1.0);
    }
    let head = OutputHead {
        final_gain: None,
        weight: Matrix::from_fn(classes, d, |c, j| if j == pixels + c { 4.0 } else { 0.0 }),
        bias: vec![0.0; classes],
    };
    Ok(Model {
        config,
        encoder,
        layers: vec![LayerWeights {
            attn,
            mlp: MlpWeights::zeros(d),
        }],
        head,
    })
}

/// `count` tokens of `dim` features drawn uniformly from `[0, 1)`.
pub fn random_tokens(count: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::AttentionKind;
    use crate::runtime::{evaluate, synthetic, Engine, SyntheticSpec};

    #[test]
    fn retrieval_beats_chance() {
        let ds = synthetic(&SyntheticSpec::default()).unwrap();
        let m = retrieval_model(16, 5, 1, 1.0).unwrap();
        assert_eq!(m.config.d_model, 24);
        let r = evaluate(
            &Engine::Float(&m, AttentionKind::Reference),
            &ds,
            5,
            1,
            200,
            3,
        )
        .unwrap();
        assert!(r.accuracy > 0.9, "accuracy {}", r.accuracy);
    }
}
