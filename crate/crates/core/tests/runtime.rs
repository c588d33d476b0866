use std::collections::HashMap;

use plastickv::model::{Model, ModelConfig};
use plastickv::quantized::{calibrate, quantize_model, CalibrationOptions};
use plastickv::reference::AttentionKind;
use plastickv::runtime::{
    evaluate, random_tokens, retrieval_model, run_episode, sample_episode, synthetic, Checkpoint,
    DType, Engine, SyntheticSpec, TensorData,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_data() -> plastickv::runtime::ImageSet {
    synthetic(&SyntheticSpec {
        classes: 30,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

fn quantized(model: &Model, seed: u64) -> plastickv::quantized::QuantModel {
    let ds = small_data();
    let (n, k) = (
        model.config.classes,
        (model.config.max_seq_len - 1) / model.config.classes,
    );
    let calib: Vec<_> = (0..16)
        .map(|i| sample_episode(&ds, n, k, seed + i).unwrap().inputs())
        .collect();
    let qc = calibrate(model, &calib, &CalibrationOptions::default()).unwrap();
    quantize_model(model, qc, &HashMap::new()).unwrap().0
}

#[test]
fn float_checkpoint_round_trip() {
    let model = Model::random(ModelConfig::tiny(16, 5, 1), 3).unwrap();
    let ck = Checkpoint::from_model(&model);
    let bytes = ck.to_bytes().unwrap();
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.to_bytes().unwrap(), bytes);
    assert_eq!(back.digest(), ck.digest());
    let restored = back.to_model().unwrap();
    for ((_, _, a), (_, _, b)) in model.tensors().iter().zip(restored.tensors().iter()) {
        for (x, y) in a.iter().zip(b) {
            assert_eq!(*x as f32 as f64, *y);
        }
    }
}

#[test]
fn quantized_checkpoint_round_trip() {
    let model = retrieval_model(16, 5, 1, 8.0).unwrap();
    let qm = quantized(&model, 1);
    let ck = Checkpoint::from_quant(&qm).unwrap();
    assert!(ck.is_quantized());
    assert!(ck.header.tensors.iter().any(|e| e.dtype == DType::Int8));
    let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
    assert_eq!(back.to_quant().unwrap().tensors(), qm.tensors());

    // int8 codes with scale exponent -6 dequantize to code / 64.
    let codes = TensorData::Int(vec![-128, -1, 0, 1, 64, 127]);
    assert_eq!(
        codes.to_f64(-6),
        vec![-2.0, -1.0 / 64.0, 0.0, 1.0 / 64.0, 1.0, 127.0 / 64.0]
    );
}

#[test]
fn bad_checkpoints_are_rejected() {
    let model = Model::random(ModelConfig::tiny(16, 5, 1), 3).unwrap();
    let ck = Checkpoint::from_model(&model);
    let bytes = ck.to_bytes().unwrap();
    for cut in [0, 3, 8, 12, bytes.len() / 2, bytes.len() - 1] {
        assert!(
            Checkpoint::from_bytes(&bytes[..cut]).is_err(),
            "truncated at {cut}"
        );
    }

    let mut renamed = ck.clone();
    renamed.header.tensors[1].name = "encoder.mystery".into();
    assert!(Checkpoint::from_bytes(&renamed.to_bytes().unwrap()).is_err());

    let mut extra = ck.clone();
    extra.header.tensors.push(plastickv::runtime::TensorEntry {
        name: "extra".into(),
        shape: vec![2],
        dtype: DType::Float32,
        scale_exp: 0,
    });
    extra.data.push(TensorData::Float(vec![0.0, 0.0]));
    assert!(Checkpoint::from_bytes(&extra.to_bytes().unwrap()).is_err());

    let mut nan = ck.clone();
    if let TensorData::Float(v) = &mut nan.data[0] {
        v[0] = f32::NAN;
    }
    assert!(Checkpoint::from_bytes(&nan.to_bytes().unwrap()).is_err());
}

#[test]
fn query_labels_are_uniform() {
    let ds = small_data();
    let n = 5;
    let mut counts = vec![0usize; n];
    for i in 0..10_000 {
        let ep = sample_episode(&ds, n, 1, i).unwrap();
        counts[ep.query_label] += 1;
        assert_eq!(ep.len(), n + 1);
    }
    for c in counts {
        let f = c as f64 / 10_000.0;
        assert!((f - 0.2).abs() <= 0.02, "label frequency {f}");
    }
}

#[test]
fn support_order_does_not_change_query_scores() {
    let ds = small_data();
    let retrieval = retrieval_model(16, 5, 2, 8.0).unwrap();
    let mut config = ModelConfig::few_shot(1, 32, 2, 16, 5, 2);
    config.final_norm = true;
    let random = Model::random(config, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for model in [&retrieval, &random] {
        for kind in [AttentionKind::Reference, AttentionKind::Plastic] {
            let engine = Engine::Float(model, kind);
            for s in 0..20 {
                let ep = sample_episode(&ds, 5, 2, s).unwrap();
                let mut shuffled = ep.clone();
                shuffled.support.shuffle(&mut rng);
                let a = run_episode(&engine, &ep).unwrap();
                let b = run_episode(&engine, &shuffled).unwrap();
                for (x, y) in a.scores.iter().zip(&b.scores) {
                    assert!((x - y).abs() < 1e-5);
                }
            }
        }
    }
}

#[test]
fn plastic_and_tensor_caches_agree_on_episodes() {
    let ds = small_data();
    let model = Model::random(ModelConfig::tiny(16, 5, 1), 12).unwrap();
    let a = evaluate(
        &Engine::Float(&model, AttentionKind::Reference),
        &ds,
        5,
        1,
        256,
        3,
    )
    .unwrap();
    let b = evaluate(
        &Engine::Float(&model, AttentionKind::Plastic),
        &ds,
        5,
        1,
        256,
        3,
    )
    .unwrap();
    let agree = a
        .predictions()
        .iter()
        .zip(b.predictions())
        .filter(|(x, y)| **x == *y)
        .count();
    assert!(agree as f64 / 256.0 >= 0.99);
    let worst = a
        .outcomes
        .iter()
        .zip(&b.outcomes)
        .flat_map(|(x, y)| x.scores.iter().zip(&y.scores).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max);
    assert!(worst < 1e-4, "max score diff {worst}");
}

#[test]
fn quantization_costs_little_accuracy() {
    let ds = small_data();
    let model = retrieval_model(16, 5, 1, 8.0).unwrap();
    let qm = quantized(&model, 100);
    let float = evaluate(
        &Engine::Float(&model, AttentionKind::Plastic),
        &ds,
        5,
        1,
        512,
        5,
    )
    .unwrap();
    for kind in [AttentionKind::Reference, AttentionKind::Plastic] {
        let q = evaluate(&Engine::Int(&qm, kind), &ds, 5, 1, 512, 5).unwrap();
        assert!(
            float.accuracy - q.accuracy <= 0.05,
            "{} vs {}",
            float.accuracy,
            q.accuracy
        );
    }
}

#[test]
fn embeddings_separate_distinct_inputs() {
    let model = Model::random(ModelConfig::tiny(16, 5, 1), 2).unwrap();
    let inputs = random_tokens(32, model.config.input_dim(), 6);
    let e: Vec<Vec<f64>> = inputs
        .iter()
        .map(|x| model.encoder.embed(x, false, model.config.rms_eps).unwrap())
        .collect();
    for i in 0..e.len() {
        assert!(e[i].iter().all(|v| v.is_finite()));
        for j in 0..i {
            let d: f64 = e[i].iter().zip(&e[j]).map(|(a, b)| (a - b).powi(2)).sum();
            assert!(d.sqrt() > 1e-3);
        }
    }
}

#[test]
fn evaluation_is_reproducible_across_thread_counts() {
    let ds = small_data();
    let model = Model::random(ModelConfig::tiny(16, 5, 1), 1).unwrap();
    let engine = Engine::Float(&model, AttentionKind::Plastic);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| evaluate(&engine, &ds, 5, 1, 200, 77).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a, b);
    assert_ne!(
        a.predictions(),
        evaluate(&engine, &ds, 5, 1, 200, 78).unwrap().predictions()
    );
}
