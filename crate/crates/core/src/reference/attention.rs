use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::model::{AttentionWeights, Qkv};
use crate::numerics::softmax;

/// Attention over a growing (or sliding) tensor KV-cache.
#[derive(Debug, Clone)]
pub struct RefAttentionBlock<'w> {
    weights: &'w AttentionWeights,
    heads: usize,
    window: Option<usize>,
    scaled: bool,
    eps: f64,
    keys: VecDeque<Vec<f64>>,
    values: VecDeque<Vec<f64>>,
    steps: usize,
}

impl<'w> RefAttentionBlock<'w> {
    /// `window: None` keeps every token.
    pub fn new(
        weights: &'w AttentionWeights,
        heads: usize,
        window: Option<usize>,
        scaled: bool,
        eps: f64,
    ) -> Result<Self> {
        let d = weights.d_model();
        if heads == 0 || !d.is_multiple_of(heads) {
            return Err(Error::Shape(format!(
                "{heads} heads do not divide width {d}"
            )));
        }
        if window == Some(0) {
            return Err(Error::Config("window must be at least 1".into()));
        }
        Ok(Self {
            weights,
            heads,
            window,
            scaled,
            eps,
            keys: VecDeque::new(),
            values: VecDeque::new(),
            steps: 0,
        })
    }

    pub fn weights(&self) -> &'w AttentionWeights {
        self.weights
    }

    /// Cached keys, oldest first.
    pub fn keys(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.keys.iter()
    }

    pub fn values(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.values.iter()
    }

    pub fn cached(&self) -> usize {
        self.keys.len()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        let qkv = self.weights.project(x, self.eps)?;
        Ok(self.step_projected(&qkv)?.1)
    }

    /// Returns the head mix `y` and the block output `z`.
    pub(crate) fn step_projected(&mut self, qkv: &Qkv) -> Result<(Vec<f64>, Vec<f64>)> {
        self.keys.push_back(qkv.k.clone());
        self.values.push_back(qkv.v.clone());
        if let Some(w) = self.window {
            while self.keys.len() > w {
                self.keys.pop_front();
                self.values.pop_front();
            }
        }
        self.steps += 1;
        let keys: Vec<&[f64]> = self.keys.iter().map(Vec::as_slice).collect();
        let values: Vec<&[f64]> = self.values.iter().map(Vec::as_slice).collect();
        let y = attend(&qkv.q, &keys, &values, self.heads, self.scaled);
        let z = self.weights.output(&y)?;
        Ok((y, z))
    }
}

/// Multi-head attention of one query over the given keys/values.
fn attend(q: &[f64], keys: &[&[f64]], values: &[&[f64]], heads: usize, scaled: bool) -> Vec<f64> {
    let d = q.len();
    let dh = d / heads;
    let scale = if scaled {
        1.0 / (dh as f64).sqrt()
    } else {
        1.0
    };
    let mut y = vec![0.0; d];
    for h in 0..heads {
        let r = h * dh..(h + 1) * dh;
        let scores: Vec<f64> = keys
            .iter()
            .map(|k| {
                let dot: f64 = q[r.clone()]
                    .iter()
                    .zip(&k[r.clone()])
                    .map(|(a, b)| a * b)
                    .sum();
                dot * scale
            })
            .collect();
        let p = softmax(&scores);
        for (pj, v) in p.iter().zip(values) {
            for (yi, vi) in y[r.clone()].iter_mut().zip(&v[r.clone()]) {
                *yi += pj * vi;
            }
        }
    }
    y
}

/// All positions at once with a causal mask; with `window = Some(W)` token
/// `t` sees tokens `max(0, t + 1 - W)..=t`.
pub fn attention_parallel(
    weights: &AttentionWeights,
    xs: &[Vec<f64>],
    heads: usize,
    window: Option<usize>,
    scaled: bool,
    eps: f64,
) -> Result<Vec<Vec<f64>>> {
    let d = weights.d_model();
    if heads == 0 || !d.is_multiple_of(heads) {
        return Err(Error::Shape(format!(
            "{heads} heads do not divide width {d}"
        )));
    }
    let qkv: Vec<Qkv> = xs
        .iter()
        .map(|x| weights.project(x, eps))
        .collect::<Result<_>>()?;
    (0..xs.len())
        .map(|t| {
            let first = match window {
                Some(w) => (t + 1).saturating_sub(w),
                None => 0,
            };
            let keys: Vec<&[f64]> = qkv[first..=t].iter().map(|e| e.k.as_slice()).collect();
            let values: Vec<&[f64]> = qkv[first..=t].iter().map(|e| e.v.as_slice()).collect();
            weights.output(&attend(&qkv[t].q, &keys, &values, heads, scaled))
        })
        .collect()
}
