mod common;

use plastickv::model::{AttentionWeights, LayerWeights, MlpWeights, Model, ModelConfig};
use plastickv::numerics::{rmsnorm, vmm, Matrix};
use plastickv::reference::{AttentionKind, FloatDecoder, TransformerLayer};
use plastickv::runtime::random_tokens;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::max_abs_diff;

#[test]
fn vmm_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (r, c) in [(1, 1), (3, 7), (16, 16), (64, 5)] {
        let m = Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
        let x: Vec<f64> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert!(max_abs_diff(&vmm(&m, &x).unwrap(), &common::matvec(&m, &x)) < 1e-12);
    }
    assert!(vmm(&Matrix::zeros(2, 3), &[1.0; 4]).is_err());
}

#[test]
fn rmsnorm_matches_formula() {
    let x = [3.0, -4.0, 0.0, 1.0];
    let g = [1.0, 2.0, 0.5, -1.0];
    let ms: f64 = (9.0 + 16.0 + 0.0 + 1.0) / 4.0;
    let want: Vec<f64> = x
        .iter()
        .zip(&g)
        .map(|(x, g)| x * g / (ms + 1e-6).sqrt())
        .collect();
    assert!(max_abs_diff(&rmsnorm(&x, &g, 1e-6).unwrap(), &want) < 1e-12);
    // All-zero input stays finite thanks to eps.
    assert_eq!(rmsnorm(&[0.0; 4], &g, 1e-6).unwrap(), vec![0.0; 4]);
}

#[test]
fn mlp_and_embedding_match_formulas() {
    let config = ModelConfig::few_shot(1, 16, 2, 10, 3, 2);
    let model = Model::random(config.clone(), 3).unwrap();
    let x = random_tokens(1, 16, 4).remove(0);
    let mlp = &model.layers[0].mlp;
    assert!(max_abs_diff(&mlp.forward(&x, 1e-6).unwrap(), &common::mlp(mlp, &x, 1e-6)) < 1e-12);

    let input = random_tokens(1, config.input_dim(), 5).remove(0);
    let e = model.encoder.embed(&input, false, 1e-6).unwrap();
    let h: Vec<f64> = common::matvec(&model.encoder.weight, &input)
        .iter()
        .zip(&model.encoder.bias)
        .map(|(a, b)| a + b)
        .collect();
    assert!(max_abs_diff(&e, &common::rmsnorm(&h, &model.encoder.norm_gain, 1e-6)) < 1e-12);
    let relu: Vec<f64> = h.iter().map(|v| v.max(0.0)).collect();
    let e = model.encoder.embed(&input, true, 1e-6).unwrap();
    assert!(max_abs_diff(&e, &common::rmsnorm(&relu, &model.encoder.norm_gain, 1e-6)) < 1e-12);
}

#[test]
fn zero_weight_layer_is_identity() {
    let d = 8;
    let w = LayerWeights {
        attn: AttentionWeights::zeros(d),
        mlp: MlpWeights::zeros(d),
    };
    for kind in [AttentionKind::Reference, AttentionKind::Plastic] {
        let mut layer = TransformerLayer::new(&w, kind, 2, 4, false, 1e-6).unwrap();
        for (t, x) in random_tokens(6, d, 9).iter().enumerate() {
            assert_eq!(&layer.layer_step(x, t).unwrap(), x);
        }
    }
}

#[test]
fn decoder_matches_full_oracle() {
    for (heads, window, final_norm) in [(1, 7, false), (2, 3, true), (4, 1, false)] {
        let mut config = ModelConfig::few_shot(2, 16, heads, 6, 3, 2);
        config.window = window;
        config.final_norm = final_norm;
        let model = Model::random(config.clone(), 21).unwrap();
        let inputs = random_tokens(config.max_seq_len, config.input_dim(), 22);
        let hidden = common::forward(&model, &inputs);
        for kind in [AttentionKind::Reference, AttentionKind::Plastic] {
            let mut dec = FloatDecoder::new(&model, kind).unwrap();
            for (x, h) in inputs.iter().zip(&hidden) {
                let s = dec.step_scores(x).unwrap();
                assert!(max_abs_diff(&s, &common::scores(&model, h)) < 1e-9);
            }
        }
    }
}
