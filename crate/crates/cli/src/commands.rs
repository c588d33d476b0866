use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Instant;

use serde_json::{json, Value};

use plastickv::attention::PlasticAttentionLayer;
use plastickv::model::{Model, ModelConfig, QuantConfig};
use plastickv::quantized::{
    calibrate, quantize_model, CalibrationOptions, IntAttentionState, IntDecoder, QuantModel,
};
use plastickv::reference::{
    forward_parallel, AttentionKind, AttentionState, FloatDecoder, RefAttentionBlock,
};
use plastickv::runtime::{
    config_digest, derive_seed, evaluate, float_engine_state, int_engine_state, load_omniglot,
    random_tokens, retrieval_model, sample_episode, synthetic, Checkpoint, Dataset, Engine,
    EvalMode, OmniglotSplit, SyntheticSpec,
};

use crate::config::FileConfig;
use crate::manifest::RunManifest;
use crate::{
    usage, BenchArgs, DataArgs, EquivArgs, EvalArgs, Failure, InitArgs, InitKind, InspectArgs,
    QuantizeArgs,
};

const DATA_ENV: &str = "PLASTICKV_DATA";
const EQUIV_TOL: f64 = 1e-5;

type CmdResult = Result<RunManifest, Failure>;

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn parse_mode(s: &str) -> Result<EvalMode, Failure> {
    s.parse().map_err(usage)
}

fn read_checkpoint(path: &PathBuf) -> Result<Checkpoint, Failure> {
    Checkpoint::read(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn shots_of(config: &ModelConfig) -> usize {
    ((config.max_seq_len.saturating_sub(1)) / config.classes).max(1)
}

/// Omniglot when a data root is configured, otherwise the synthetic set.
fn dataset(
    args: &DataArgs,
    file: &FileConfig,
    split: Option<&str>,
    config: &ModelConfig,
    shots: usize,
    seed: u64,
) -> Result<(Box<dyn Dataset>, Value), Failure> {
    let root = if args.synthetic {
        None
    } else {
        args.data
            .clone()
            .or_else(|| file.data.clone())
            .or_else(|| std::env::var_os(DATA_ENV).map(PathBuf::from))
    };
    match root {
        Some(root) => {
            let side = (config.pixels as f64).sqrt().round() as u32;
            if (side * side) as usize != config.pixels {
                return Err(usage(format!(
                    "model has {} pixels, which is not a square image",
                    config.pixels
                )));
            }
            let split = match split.unwrap_or("evaluation") {
                "evaluation" => OmniglotSplit::Evaluation,
                "background" => OmniglotSplit::Background,
                other => return Err(usage(format!("unknown split {other:?}"))),
            };
            let ds = load_omniglot(&root, split, side, config.pixel_polarity)?;
            let desc = json!({
                "kind": "omniglot",
                "root": root.display().to_string(),
                "split": format!("{split:?}").to_lowercase(),
                "classes": ds.classes(),
            });
            Ok((Box::new(ds), desc))
        }
        None => {
            let spec = SyntheticSpec {
                classes: SyntheticSpec::default().classes.max(config.classes),
                samples_per_class: SyntheticSpec::default().samples_per_class.max(shots + 1),
                pixels: config.pixels,
                seed: derive_seed(seed, "synthetic-dataset", 0),
                ..SyntheticSpec::default()
            };
            let desc = json!({
                "kind": "synthetic",
                "classes": spec.classes,
                "samples_per_class": spec.samples_per_class,
                "pixels": spec.pixels,
                "noise": spec.noise,
            });
            Ok((Box::new(synthetic(&spec)?), desc))
        }
    }
}

fn calibration_sequences(
    ds: &dyn Dataset,
    config: &ModelConfig,
    episodes: usize,
    seed: u64,
) -> Result<Vec<Vec<Vec<f64>>>, Failure> {
    let shots = shots_of(config);
    (0..episodes)
        .map(|i| {
            let ep = sample_episode(
                ds,
                config.classes,
                shots,
                derive_seed(seed, "calibration", i as u64),
            )?;
            Ok(ep.inputs())
        })
        .collect()
}

pub fn eval(a: &EvalArgs, file: &FileConfig) -> CmdResult {
    let f = &file.eval;
    let path = a
        .checkpoint
        .clone()
        .or_else(|| f.checkpoint.clone())
        .ok_or_else(|| usage("--checkpoint is required"))?;
    let n = a.n.or(f.n).unwrap_or(5);
    let k = a.k.or(f.k).unwrap_or(1);
    let episodes = a.episodes.or(f.episodes).unwrap_or(1024);
    let seed = a.seed.or(file.seed).unwrap_or(0);
    let mode = parse_mode(a.mode.as_deref().or(f.mode.as_deref()).unwrap_or("float"))?;
    let compare = a
        .compare
        .as_deref()
        .or(f.compare.as_deref())
        .map(parse_mode)
        .transpose()?;
    if episodes == 0 {
        return Err(usage("--episodes must be at least 1"));
    }
    if n == 0 || k == 0 {
        return Err(usage("--n and --k must be at least 1"));
    }

    let start = Instant::now();
    let ckpt = read_checkpoint(&path)?;
    let config = ckpt.header.config.clone();
    if config.classes != n {
        return Err(usage(format!(
            "checkpoint is {}-way, --n is {n}",
            config.classes
        )));
    }
    if n * k + 1 > config.max_seq_len {
        return Err(usage(format!(
            "{n}-way {k}-shot needs {} tokens, checkpoint allows {}",
            n * k + 1,
            config.max_seq_len
        )));
    }
    let split = a.data.split.as_deref().or(f.split.as_deref());
    let (ds, ds_desc) = dataset(&a.data, file, split, &config, k, seed)?;

    let model = ckpt.to_model()?;
    let needs_int = mode.is_integer() || compare.is_some_and(|m| m.is_integer());
    let mut quantized_on_load = false;
    let qmodel: Option<QuantModel> = if !needs_int {
        None
    } else if ckpt.is_quantized() {
        Some(ckpt.to_quant()?)
    } else {
        quantized_on_load = true;
        let seqs = calibration_sequences(ds.as_ref(), &config, 16, seed)?;
        let qc = calibrate(&model, &seqs, &CalibrationOptions::default())?;
        Some(quantize_model(&model, qc, &HashMap::new())?.0)
    };
    let engine = |m: EvalMode| match m.is_integer() {
        true => Engine::Int(qmodel.as_ref().expect("built above"), m.attention()),
        false => Engine::Float(&model, m.attention()),
    };

    let report = evaluate(&engine(mode), ds.as_ref(), n, k, episodes, seed)?;
    let mut results = json!({
        "mode": mode.name(),
        "n": n,
        "k": k,
        "accuracy": report.accuracy,
        "correct": report.correct,
        "ci95": [report.ci95.0, report.ci95.1],
        "dataset": ds_desc,
        "quantized_on_load": quantized_on_load,
    });
    eprintln!(
        "{mode} {n}-way {k}-shot: accuracy {:.2}% (95% CI {:.2}% - {:.2}%) over {episodes} episodes",
        100.0 * report.accuracy,
        100.0 * report.ci95.0,
        100.0 * report.ci95.1
    );
    if let Some(other) = compare {
        let second = evaluate(&engine(other), ds.as_ref(), n, k, episodes, seed)?;
        let same = report
            .predictions()
            .iter()
            .zip(second.predictions())
            .filter(|(x, y)| **x == *y)
            .count();
        let max_score_diff = report
            .outcomes
            .iter()
            .zip(&second.outcomes)
            .flat_map(|(x, y)| x.scores.iter().zip(&y.scores).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let agreement = same as f64 / episodes as f64;
        eprintln!(
            "{other}: accuracy {:.2}%, prediction agreement {:.2}%",
            100.0 * second.accuracy,
            100.0 * agreement
        );
        results["compare"] = json!({
            "mode": other.name(),
            "accuracy": second.accuracy,
            "ci95": [second.ci95.0, second.ci95.1],
            "agreement": agreement,
            "max_score_diff": max_score_diff,
        });
    }
    let mut m = RunManifest::new("eval", seed);
    m.config_digest = Some(ckpt.config_digest());
    m.checkpoint_digest = Some(ckpt.digest());
    m.episodes = episodes;
    m.timing.total_ms = ms(start);
    m.timing.detail.insert(
        "per_episode_ms".into(),
        json!(m.timing.total_ms / episodes as f64),
    );
    m.results = results;
    Ok(m)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn equiv(a: &EquivArgs, file: &FileConfig) -> CmdResult {
    let f = &file.equiv;
    let d = a.d.or(f.d).unwrap_or(16);
    let h = a.h.or(f.h).unwrap_or(1);
    let t = a.t.or(f.t).unwrap_or(8);
    let w = a.w.or(f.w).unwrap_or(t);
    let layers = a.layers.or(f.layers).unwrap_or(1);
    let scaled = a.scaled || f.scaled.unwrap_or(false);
    let tol = a.tolerance.or(f.tolerance).unwrap_or(EQUIV_TOL);
    let seed = a.seed.or(file.seed).unwrap_or(0);
    if tol.is_nan() || tol <= 0.0 {
        return Err(usage("--tolerance must be positive"));
    }
    if d == 0 || h == 0 || t == 0 || w == 0 || layers == 0 {
        return Err(usage("--d, --h, --t, --w and --layers must be positive"));
    }
    if !d.is_multiple_of(h) {
        return Err(usage(format!("--d {d} is not divisible by --h {h}")));
    }
    let start = Instant::now();
    let mut config = ModelConfig::few_shot(layers, d, h, 4, 2, 1);
    config.window = w;
    config.max_seq_len = t;
    config.scaled_attention = scaled;
    let model = Model::random(config.clone(), derive_seed(seed, "model", 0))?;
    let tokens = random_tokens(t, config.input_dim(), derive_seed(seed, "tokens", 0));

    // one attention block on the embedded tokens
    let attn = &model.layers[0].attn;
    let mut reference = RefAttentionBlock::new(attn, h, Some(w), scaled, config.rms_eps)?;
    let mut plastic = PlasticAttentionLayer::new(attn, h, w, scaled, config.rms_eps)?;
    let mut block_diff: f64 = 0.0;
    for (i, tok) in tokens.iter().enumerate() {
        let x = model.embed(tok)?;
        block_diff = block_diff.max(max_diff(&reference.step(&x)?, &plastic.attend_step(&x, i)?));
    }

    // whole decoder, token by token and in parallel
    let mut r = FloatDecoder::new(&model, AttentionKind::Reference)?;
    let mut p = FloatDecoder::new(&model, AttentionKind::Plastic)?;
    let parallel = forward_parallel(&model, &tokens)?;
    let (mut model_diff, mut parallel_diff): (f64, f64) = (0.0, 0.0);
    for (tok, par) in tokens.iter().zip(&parallel) {
        let hr = r.step(tok)?;
        let hp = p.step(tok)?;
        model_diff = model_diff.max(max_diff(&hr, &hp));
        parallel_diff = parallel_diff.max(max_diff(&hp, par));
    }
    let passed = block_diff < tol && model_diff < tol && parallel_diff < tol;
    eprintln!(
        "d={d} h={h} t={t} w={w} layers={layers}: block diff {block_diff:.3e}, decoder diff {model_diff:.3e}, parallel diff {parallel_diff:.3e} -> {}",
        if passed { "pass" } else { "FAIL" }
    );
    let mut m = RunManifest::new("equiv", seed);
    m.config_digest = Some(config_digest(&config));
    m.timing.total_ms = ms(start);
    m.results = json!({
        "d": d, "h": h, "t": t, "w": w, "layers": layers, "scaled": scaled,
        "tolerance": tol,
        "block_max_abs_diff": block_diff,
        "decoder_max_abs_diff": model_diff,
        "parallel_max_abs_diff": parallel_diff,
        "passed": passed,
    });
    if passed {
        Ok(m)
    } else {
        Err(Failure::Check(
            Box::new(m),
            format!("max difference not below {tol:e}"),
        ))
    }
}

pub fn quantize(a: &QuantizeArgs, file: &FileConfig) -> CmdResult {
    let f = &file.quantize;
    let seed = a.seed.or(file.seed).unwrap_or(0);
    let d = CalibrationOptions::default();
    let requested = [
        a.weight_bits.or(f.weight_bits),
        a.vector_bits.or(f.vector_bits),
        a.activation_bits.or(f.activation_bits),
        a.cache_bits.or(f.cache_bits),
        a.trace_bits.or(f.trace_bits),
    ];
    let prob_exp = a.prob_exp.or(f.prob_exp);
    let headroom = a.headroom.or(f.headroom);
    let opts = CalibrationOptions {
        weight_bits: requested[0].unwrap_or(d.weight_bits),
        vector_bits: requested[1].unwrap_or(d.vector_bits),
        activation_bits: requested[2].unwrap_or(d.activation_bits),
        cache_bits: requested[3].unwrap_or(d.cache_bits),
        trace_bits: requested[4].unwrap_or(d.trace_bits),
        prob_exp: prob_exp.unwrap_or(d.prob_exp),
        headroom: headroom.unwrap_or(d.headroom),
    };
    let episodes = a
        .calibration_episodes
        .or(f.calibration_episodes)
        .unwrap_or(64);
    if episodes == 0 {
        return Err(usage("--calibration-episodes must be at least 1"));
    }

    let start = Instant::now();
    let ckpt = read_checkpoint(&a.input)?;
    let model = ckpt.to_model()?;
    let config = model.config.clone();

    // an already-quantized input keeps its formats unless asked otherwise
    let existing = ckpt.header.config.quant.clone().filter(|q| {
        let have = [
            q.weight_bits,
            q.vector_bits,
            q.activation.bits,
            q.cache_bits,
            q.trace_bits,
        ];
        requested
            .iter()
            .zip(have)
            .all(|(r, h)| r.is_none_or(|r| r == h))
            && prob_exp.is_none_or(|p| p == q.prob_exp)
            && headroom.is_none()
    });
    let (quant, keep, calibrated): (QuantConfig, HashMap<String, i32>, bool) = match existing {
        Some(q) => {
            let keep = ckpt
                .header
                .tensors
                .iter()
                .map(|e| (e.name.clone(), e.scale_exp))
                .collect();
            (q, keep, false)
        }
        None => {
            let (ds, _) = dataset(
                &a.data,
                file,
                a.data.split.as_deref(),
                &config,
                shots_of(&config),
                seed,
            )?;
            let seqs = calibration_sequences(ds.as_ref(), &config, episodes, seed)?;
            (calibrate(&model, &seqs, &opts)?, HashMap::new(), true)
        }
    };
    let (qmodel, stats) = quantize_model(&model, quant.clone(), &keep)?;
    let out = Checkpoint::from_quant(&qmodel)?;
    out.write(&a.output)?;

    let mut bound_ok = true;
    let tensors: Vec<Value> = stats
        .iter()
        .map(|s| {
            let half_step = (s.scale_exp as f64).exp2() / 2.0;
            let ok = s.max_abs_error <= half_step;
            bound_ok &= ok;
            json!({
                "name": s.name,
                "bits": s.bits,
                "scale_exp": s.scale_exp,
                "saturated": s.saturated,
                "max_abs_error": s.max_abs_error,
                "within_half_step": ok,
            })
        })
        .collect();
    let saturated: usize = stats.iter().map(|s| s.saturated).sum();
    let total: usize = qmodel.tensors().iter().map(|(_, t)| t.len()).sum();
    let rate = saturated as f64 / total as f64;
    let warning = (rate > 0.01).then(|| format!("{:.2}% of weights saturated", 100.0 * rate));
    if let Some(w) = &warning {
        eprintln!("warning: {w}");
    }
    eprintln!(
        "wrote {} ({} tensors, {saturated} saturated weights)",
        a.output.display(),
        stats.len()
    );
    let mut m = RunManifest::new("quantize", seed);
    m.config_digest = Some(out.config_digest());
    m.checkpoint_digest = Some(out.digest());
    m.episodes = if calibrated { episodes } else { 0 };
    m.timing.total_ms = ms(start);
    m.results = json!({
        "input_digest": ckpt.digest(),
        "output": a.output.display().to_string(),
        "calibrated": calibrated,
        "quant": quant,
        "saturated": saturated,
        "saturation_rate": rate,
        "warning": warning,
        "error_bound_ok": bound_ok,
        "tensors": tensors,
    });
    if bound_ok {
        Ok(m)
    } else {
        Err(Failure::Check(
            Box::new(m),
            "a tensor exceeds the half-step error bound".into(),
        ))
    }
}

fn manifest_json(ckpt: &Checkpoint) -> Value {
    json!(ckpt
        .header
        .tensors
        .iter()
        .map(|e| json!({
            "name": e.name,
            "shape": e.shape,
            "dtype": e.dtype,
            "scale_exp": e.scale_exp,
        }))
        .collect::<Vec<_>>())
}

pub fn inspect(a: &InspectArgs, file: &FileConfig) -> CmdResult {
    let f = &file.inspect;
    let seed = a.seed.or(file.seed).unwrap_or(0);
    let tokens = a.tokens.or(f.tokens).unwrap_or(0);
    let mode = parse_mode(a.mode.as_deref().or(f.mode.as_deref()).unwrap_or("plastic"))?;
    if mode.attention() != AttentionKind::Plastic {
        return Err(usage(
            "inspect shows the plastic cache: use --mode plastic or quant-plastic",
        ));
    }
    let start = Instant::now();
    let ckpt = read_checkpoint(&a.checkpoint)?;
    let config = ckpt.header.config.clone();
    if tokens > config.max_seq_len {
        return Err(usage(format!(
            "--tokens {tokens} exceeds max_seq_len {}",
            config.max_seq_len
        )));
    }
    let inputs = if tokens == 0 {
        Vec::new()
    } else {
        let shots = shots_of(&config);
        let (ds, _) = dataset(&a.data, file, a.data.split.as_deref(), &config, shots, seed)?;
        let ep = sample_episode(
            ds.as_ref(),
            config.classes,
            shots,
            derive_seed(seed, "inspect", 0),
        )?;
        let mut inputs = ep.inputs();
        if tokens > inputs.len() {
            return Err(usage(format!(
                "--tokens {tokens} exceeds the episode length {}",
                inputs.len()
            )));
        }
        inputs.truncate(tokens);
        inputs
    };

    let mut all_match = true;
    let mut layers_json = Vec::new();
    let state;
    if mode.is_integer() {
        let qmodel = if ckpt.is_quantized() {
            ckpt.to_quant()?
        } else {
            return Err(usage(
                "quant-plastic inspection needs a quantized checkpoint",
            ));
        };
        let mut dec = IntDecoder::new(&qmodel, AttentionKind::Plastic)?;
        for x in &inputs {
            dec.step(x)?;
        }
        for (l, layer) in dec.layers().iter().enumerate() {
            let IntAttentionState::Plastic(heads) = layer.attention() else {
                unreachable!()
            };
            let heads_json: Vec<Value> = heads
                .iter()
                .enumerate()
                .map(|(h, head)| {
                    let s = head.scheduler();
                    let mut j = json!({"head": h, "steps": s.steps(), "filled": s.filled(), "next_slot": s.next_slot()});
                    if let Some(p) = layer.last_step().heads.get(h) {
                        let row = head.keys().row(p.slot);
                        let ok = row == &p.k[..];
                        all_match &= ok;
                        j["last_slot"] = json!(p.slot);
                        j["k_t"] = json!(p.k);
                        j["keys_row"] = json!(row);
                        j["values_column"] = json!(head.values().column(p.slot));
                        j["keys_row_matches_k_t"] = json!(ok);
                    }
                    j
                })
                .collect();
            layers_json.push(json!({"layer": l, "heads": heads_json}));
        }
        state = int_engine_state(&dec, &config)?;
    } else {
        let model = ckpt.to_model()?;
        let mut dec = FloatDecoder::new(&model, AttentionKind::Plastic)?;
        for x in &inputs {
            dec.step(x)?;
        }
        for (l, layer) in dec.layers().iter().enumerate() {
            let AttentionState::Plastic(p) = layer.attention() else {
                unreachable!()
            };
            let heads_json: Vec<Value> = p
                .heads()
                .iter()
                .enumerate()
                .map(|(h, head)| {
                    let s = head.scheduler();
                    let mut j = json!({"head": h, "steps": s.steps(), "filled": s.filled(), "next_slot": s.next_slot()});
                    if let Some(pr) = p.last_step().get(h) {
                        let row = head.keys().row(pr.slot);
                        // the float rule computes w + (k - w), exact up to rounding
                        let diff = max_diff(row, &pr.k);
                        let ok = diff <= 1e-9 * (1.0 + pr.k.iter().fold(0.0f64, |m, v| m.max(v.abs())));
                        all_match &= ok;
                        j["last_slot"] = json!(pr.slot);
                        j["k_t"] = json!(pr.k);
                        j["keys_row"] = json!(row);
                        j["values_column"] = json!(head.values().column(pr.slot));
                        j["keys_row_max_abs_diff"] = json!(diff);
                        j["keys_row_matches_k_t"] = json!(ok);
                    }
                    j
                })
                .collect();
            layers_json.push(json!({"layer": l, "heads": heads_json}));
        }
        state = float_engine_state(&dec, &config)?;
    }
    if let Some(p) = &a.state_out {
        state.write(p)?;
    }
    let mut m = RunManifest::new("inspect", seed);
    m.config_digest = Some(ckpt.config_digest());
    m.checkpoint_digest = Some(ckpt.digest());
    m.timing.total_ms = ms(start);
    m.results = json!({
        "kind": ckpt.header.kind,
        "config": config,
        "tensors": manifest_json(&ckpt),
        "mode": mode.name(),
        "tokens": tokens,
        "cache": if tokens == 0 { json!("empty") } else { json!(layers_json) },
        "keys_rows_match": all_match,
        "state_digest": state.digest(),
    });
    if all_match {
        Ok(m)
    } else {
        Err(Failure::Check(
            Box::new(m),
            "a keys row differs from the key just written".into(),
        ))
    }
}

pub fn bench(a: &BenchArgs, file: &FileConfig) -> CmdResult {
    let f = &file.bench;
    let ds = a.d.clone().or_else(|| f.d.clone()).unwrap_or(vec![32, 64]);
    let ts =
        a.t.clone()
            .or_else(|| f.t.clone())
            .unwrap_or(vec![16, 32, 64]);
    let ws = a.w.clone().or_else(|| f.w.clone()).unwrap_or(vec![8]);
    let reps = a.reps.or(f.reps).unwrap_or(3);
    let seed = a.seed.or(file.seed).unwrap_or(0);
    if reps == 0
        || [&ds, &ts, &ws]
            .iter()
            .any(|v| v.is_empty() || v.contains(&0))
    {
        return Err(usage(
            "bench sweeps and --reps must be non-empty and positive",
        ));
    }
    let start = Instant::now();
    let mut rows = Vec::new();
    for &d in &ds {
        for &t in &ts {
            let mut config = ModelConfig::few_shot(1, d, 1, 4, 2, 1);
            config.window = t;
            config.max_seq_len = t;
            let reference = Model::random(config.clone(), derive_seed(seed, "bench", d as u64))?;
            let tokens =
                random_tokens(t, config.input_dim(), derive_seed(seed, "tokens", t as u64));
            let time = |model: &Model, kind| -> Result<f64, Failure> {
                let s = Instant::now();
                for _ in 0..reps {
                    let mut dec = FloatDecoder::new(model, kind)?;
                    for x in &tokens {
                        dec.step(x)?;
                    }
                }
                Ok(s.elapsed().as_secs_f64() * 1e6 / (reps * t) as f64)
            };
            let ref_us = time(&reference, AttentionKind::Reference)?;
            for &w in &ws {
                let mut plastic = reference.clone();
                plastic.config.window = w;
                let plastic_us = time(&plastic, AttentionKind::Plastic)?;
                eprintln!("d={d:4} t={t:4} w={w:4}: reference {ref_us:9.1} us/token, plastic {plastic_us:9.1} us/token");
                rows.push(json!({
                    "d": d, "t": t, "w": w,
                    "reference_us_per_token": ref_us,
                    "plastic_us_per_token": plastic_us,
                }));
            }
        }
    }
    let mut m = RunManifest::new("bench", seed);
    m.timing.total_ms = ms(start);
    m.timing.detail.insert("sweep".into(), json!(rows));
    m.results = json!({"reps": reps, "points": rows.len()});
    Ok(m)
}

pub fn init(a: &InitArgs, _file: &FileConfig) -> CmdResult {
    let start = Instant::now();
    let mut model = match a.kind {
        InitKind::Random => {
            let mut config =
                ModelConfig::few_shot(a.layers, a.d_model, a.heads, a.pixels, a.classes, a.shots);
            config.final_norm = a.final_norm;
            config.encoder_relu = a.encoder_relu;
            config.scaled_attention = a.scaled;
            Model::random(config, a.seed).map_err(usage)?
        }
        InitKind::Retrieval => {
            retrieval_model(a.pixels, a.classes, a.shots, a.beta).map_err(usage)?
        }
    };
    if let Some(w) = a.window {
        model.config.window = w;
        model.config.validate().map_err(usage)?;
    }
    let ckpt = Checkpoint::from_model(&model);
    ckpt.write(&a.output)?;
    let mut m = RunManifest::new("init", a.seed);
    m.config_digest = Some(ckpt.config_digest());
    m.checkpoint_digest = Some(ckpt.digest());
    m.timing.total_ms = ms(start);
    m.results = json!({
        "output": a.output.display().to_string(),
        "kind": format!("{:?}", a.kind).to_lowercase(),
        "config": model.config,
    });
    Ok(m)
}
