mod common;

use std::collections::HashMap;

use plastickv::attention::{PlasticAttentionLayer, SlotScheduler};
use plastickv::model::{AttentionWeights, Model, ModelConfig};
use plastickv::quantized::{calibrate, quantize_model, CalibrationOptions, IntDecoder};
use plastickv::reference::{AttentionKind, FloatDecoder};
use plastickv::runtime::random_tokens;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::max_abs_diff;

#[test]
fn first_token_attends_only_to_itself() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let w = AttentionWeights::random(16, &mut rng);
    let x = random_tokens(1, 16, 3).remove(0);
    let mut layer = PlasticAttentionLayer::new(&w, 4, 5, false, 1e-6).unwrap();
    let z = layer.attend_step(&x, 0).unwrap();
    for probe in layer.last_step() {
        assert_eq!(probe.p, vec![1.0]);
        assert_eq!(probe.y, probe.v);
    }
    // With one token the output is W_o v + b_o.
    let xn = common::rmsnorm(&x, &w.norm_gain, 1e-6);
    let v = common::matvec(&w.wv, &xn);
    let want: Vec<f64> = common::matvec(&w.wo, &v)
        .iter()
        .zip(&w.bo)
        .map(|(a, b)| a + b)
        .collect();
    assert!(max_abs_diff(&z, &want) < 1e-12);
}

#[test]
fn physical_slot_order_is_invisible() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (d, heads, window) = (16, 2, 6);
    let w = AttentionWeights::random(d, &mut rng);
    let xs = random_tokens(20, d, 6);
    let mut plain = PlasticAttentionLayer::new(&w, heads, window, true, 1e-6).unwrap();
    let schedulers = (0..heads)
        .map(|_| {
            let mut order: Vec<usize> = (0..window).collect();
            order.shuffle(&mut rng);
            SlotScheduler::new(window).with_slot_order(order).unwrap()
        })
        .collect();
    let mut shuffled = PlasticAttentionLayer::with_schedulers(&w, schedulers, true, 1e-6).unwrap();
    for (t, x) in xs.iter().enumerate() {
        let a = plain.attend_step(x, t).unwrap();
        let b = shuffled.attend_step(x, t).unwrap();
        assert!(max_abs_diff(&a, &b) < 1e-12);
    }
    assert!(SlotScheduler::new(3)
        .with_slot_order(vec![0, 0, 1])
        .is_err());
}

#[test]
fn steps_must_arrive_in_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let w = AttentionWeights::random(8, &mut rng);
    let mut layer = PlasticAttentionLayer::new(&w, 1, 4, false, 1e-6).unwrap();
    assert!(layer.attend_step(&[0.5; 8], 1).is_err());
    layer.attend_step(&[0.5; 8], 0).unwrap();
    assert!(layer.attend_step(&[0.5; 8], 0).is_err());
    assert!(layer.attend_step(&[0.5; 7], 1).is_err());
}

fn causal_model() -> Model {
    let mut config = ModelConfig::few_shot(2, 16, 2, 8, 3, 2);
    config.window = 4;
    Model::random(config, 31).unwrap()
}

#[test]
fn float_outputs_do_not_see_the_future() {
    let model = causal_model();
    let t = model.config.max_seq_len;
    let inputs = random_tokens(t, model.config.input_dim(), 32);
    for kind in [AttentionKind::Reference, AttentionKind::Plastic] {
        for cut in 0..t {
            let mut perturbed = inputs.clone();
            for x in &mut perturbed[cut + 1..] {
                x.iter_mut().for_each(|v| *v = 1.0 - *v);
            }
            let mut a = FloatDecoder::new(&model, kind).unwrap();
            let mut b = FloatDecoder::new(&model, kind).unwrap();
            for (x, y) in inputs.iter().zip(&perturbed).take(cut + 1) {
                assert_eq!(a.step(x).unwrap(), b.step(y).unwrap());
            }
        }
    }
}

#[test]
fn integer_outputs_do_not_see_the_future() {
    let model = causal_model();
    let t = model.config.max_seq_len;
    let dim = model.config.input_dim();
    let calib: Vec<_> = (0..4).map(|s| random_tokens(t, dim, 40 + s)).collect();
    let qc = calibrate(&model, &calib, &CalibrationOptions::default()).unwrap();
    let (qm, _) = quantize_model(&model, qc, &HashMap::new()).unwrap();
    let inputs = random_tokens(t, dim, 50);
    for cut in 0..t {
        let mut perturbed = inputs.clone();
        for x in &mut perturbed[cut + 1..] {
            x.iter_mut().for_each(|v| *v = 1.0 - *v);
        }
        let mut a = IntDecoder::new(&qm, AttentionKind::Plastic).unwrap();
        let mut b = IntDecoder::new(&qm, AttentionKind::Plastic).unwrap();
        let mut full = Vec::new();
        for (x, y) in inputs.iter().zip(&perturbed) {
            let ha = a.step(x).unwrap();
            let hb = b.step(y).unwrap();
            full.push((ha, hb));
        }
        for (ha, hb) in &full[..=cut] {
            assert_eq!(ha, hb);
        }
    }
}
