//! Direct-formula oracles shared by the integration tests. Nothing here calls
//! the library's kernels; only weight containers are borrowed.
#![allow(dead_code)]

use std::io::Write;

use plastickv::model::{AttentionWeights, MlpWeights, Model};
use plastickv::numerics::Matrix;

pub fn matvec(m: &Matrix, x: &[f64]) -> Vec<f64> {
    assert_eq!(m.cols(), x.len());
    let mut out = vec![0.0; m.rows()];
    for (i, o) in out.iter_mut().enumerate() {
        for (j, xj) in x.iter().enumerate() {
            *o += m.get(i, j) * xj;
        }
    }
    out
}

pub fn rmsnorm(x: &[f64], g: &[f64], eps: f64) -> Vec<f64> {
    let ms = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let r = (ms + eps).sqrt();
    x.iter().zip(g).map(|(v, g)| v / r * g).collect()
}

pub fn softmax(s: &[f64]) -> Vec<f64> {
    let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = s.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Attention block output for the last token of `xs`, attending to every
/// token in `xs`.
pub fn attention_last(
    w: &AttentionWeights,
    xs: &[Vec<f64>],
    heads: usize,
    scaled: bool,
    eps: f64,
) -> Vec<f64> {
    let d = w.wq.rows();
    let dh = d / heads;
    let norm: Vec<Vec<f64>> = xs.iter().map(|x| rmsnorm(x, &w.norm_gain, eps)).collect();
    let ks: Vec<Vec<f64>> = norm.iter().map(|x| matvec(&w.wk, x)).collect();
    let vs: Vec<Vec<f64>> = norm.iter().map(|x| matvec(&w.wv, x)).collect();
    let q = matvec(&w.wq, norm.last().unwrap());
    let mut y = vec![0.0; d];
    for h in 0..heads {
        let r = h * dh..(h + 1) * dh;
        let scale = if scaled {
            1.0 / (dh as f64).sqrt()
        } else {
            1.0
        };
        let scores: Vec<f64> = ks
            .iter()
            .map(|k| r.clone().map(|i| q[i] * k[i]).sum::<f64>() * scale)
            .collect();
        let p = softmax(&scores);
        for (pi, v) in p.iter().zip(&vs) {
            for i in r.clone() {
                y[i] += pi * v[i];
            }
        }
    }
    add(&matvec(&w.wo, &y), &w.bo)
}

/// Per-token attention block outputs with a sliding window of `window` tokens.
pub fn attention_windowed(
    w: &AttentionWeights,
    xs: &[Vec<f64>],
    heads: usize,
    window: usize,
    scaled: bool,
    eps: f64,
) -> Vec<Vec<f64>> {
    (0..xs.len())
        .map(|t| {
            let lo = (t + 1).saturating_sub(window);
            attention_last(w, &xs[lo..=t], heads, scaled, eps)
        })
        .collect()
}

pub fn mlp(b: &MlpWeights, x: &[f64], eps: f64) -> Vec<f64> {
    let xn = rmsnorm(x, &b.norm_gain, eps);
    let h: Vec<f64> = matvec(&b.w1, &xn).into_iter().map(|v| v.max(0.0)).collect();
    add(&matvec(&b.w2, &h), &b.b2)
}

/// Final hidden state at every position of a full model.
pub fn forward(model: &Model, inputs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let c = &model.config;
    let mut xs: Vec<Vec<f64>> = inputs
        .iter()
        .map(|i| {
            let mut h = add(&matvec(&model.encoder.weight, i), &model.encoder.bias);
            if c.encoder_relu {
                h.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            rmsnorm(&h, &model.encoder.norm_gain, c.rms_eps)
        })
        .collect();
    for layer in &model.layers {
        let z = attention_windowed(
            &layer.attn,
            &xs,
            c.heads,
            c.window,
            c.scaled_attention,
            c.rms_eps,
        );
        xs = xs
            .iter()
            .zip(&z)
            .map(|(x, z)| {
                let h = add(x, z);
                add(&h, &mlp(&layer.mlp, &h, c.rms_eps))
            })
            .collect();
    }
    xs
}

pub fn scores(model: &Model, hidden: &[f64]) -> Vec<f64> {
    let x = match &model.head.final_gain {
        Some(g) => rmsnorm(hidden, g, model.config.rms_eps),
        None => hidden.to_vec(),
    };
    add(&matvec(&model.head.weight, &x), &model.head.bias)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Writes straight to stderr so the line shows even when output is captured.
pub fn report(name: &str, passed: bool, detail: &str) {
    let line = format!(
        "[{}] {name}: {detail}\n",
        if passed { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
}
