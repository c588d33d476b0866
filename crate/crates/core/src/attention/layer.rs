use crate::error::{Error, Result};
use crate::model::AttentionWeights;
use crate::numerics::softmax;
use crate::plasticity::Bounds;

use super::head::{HeadProbe, PlasticAttentionHead};
use super::scheduler::SlotScheduler;

/// Float-mode attention block whose KV-cache is a set of plastic heads.
#[derive(Debug, Clone)]
pub struct PlasticAttentionLayer<'w> {
    weights: &'w AttentionWeights,
    heads: Vec<PlasticAttentionHead<f64>>,
    scaled: bool,
    eps: f64,
    trace_clamps: u64,
    probe: Vec<HeadProbe<f64>>,
}

impl<'w> PlasticAttentionLayer<'w> {
    pub fn new(
        weights: &'w AttentionWeights,
        heads: usize,
        window: usize,
        scaled: bool,
        eps: f64,
    ) -> Result<Self> {
        let schedulers = (0..heads).map(|_| SlotScheduler::new(window)).collect();
        Self::with_schedulers(weights, schedulers, scaled, eps)
    }

    /// One scheduler per head, e.g. to relabel physical slots.
    pub fn with_schedulers(
        weights: &'w AttentionWeights,
        schedulers: Vec<SlotScheduler>,
        scaled: bool,
        eps: f64,
    ) -> Result<Self> {
        let d = weights.d_model();
        let h = schedulers.len();
        if h == 0 || !d.is_multiple_of(h) {
            return Err(Error::Shape(format!("{h} heads do not divide width {d}")));
        }
        let heads = schedulers
            .into_iter()
            .map(|s| {
                PlasticAttentionHead::with_scheduler(
                    d / h,
                    s,
                    Bounds::unbounded(),
                    Bounds::non_negative(),
                )
            })
            .collect();
        Ok(Self {
            weights,
            heads,
            scaled,
            eps,
            trace_clamps: 0,
            probe: Vec::new(),
        })
    }

    pub fn heads(&self) -> &[PlasticAttentionHead<f64>] {
        &self.heads
    }

    /// Per-head record of the most recent step.
    pub fn last_step(&self) -> &[HeadProbe<f64>] {
        &self.probe
    }

    /// Key components clamped by the unsigned trace encoding so far.
    pub fn trace_clamps(&self) -> u64 {
        self.trace_clamps
    }

    pub fn steps(&self) -> usize {
        self.heads[0].scheduler().steps()
    }

    /// Processes token `t` and returns the attention block output `z_t`.
    ///
    /// Per head: the key is written before the query is propagated and the
    /// value before the attention weights are, so token `t` attends to itself.
    pub fn attend_step(&mut self, x: &[f64], t: usize) -> Result<Vec<f64>> {
        let d = self.weights.d_model();
        if x.len() != d {
            return Err(Error::Shape(format!(
                "token has {} entries, width is {d}",
                x.len()
            )));
        }
        let slot = self.heads[0].scheduler().begin(t)?;
        let qkv = self.weights.project(x, self.eps)?;
        let dh = d / self.heads.len();
        let scale = if self.scaled {
            1.0 / (dh as f64).sqrt()
        } else {
            1.0
        };

        let mut y = Vec::with_capacity(d);
        let mut probe = Vec::with_capacity(self.heads.len());
        for (h, head) in self.heads.iter_mut().enumerate() {
            let slot = if h == 0 {
                slot
            } else {
                head.scheduler().begin(t)?
            };
            let range = h * dh..(h + 1) * dh;
            let (q, k, v) = (&qkv.q[range.clone()], &qkv.k[range.clone()], &qkv.v[range]);

            self.trace_clamps += head.write_key(slot, k)? as u64;
            let slots = head.scheduler().slot_mask(t);
            let mut scores = head.scores(q, &slots)?;
            if self.scaled {
                scores.iter_mut().for_each(|s| *s *= scale);
            }
            let p = softmax(&scores);
            head.write_value(slot, v)?;
            let yh = head.mix(&p, &slots)?;
            y.extend_from_slice(&yh);
            head.advance();

            probe.push(HeadProbe {
                slot,
                slots,
                q: q.to_vec(),
                k: k.to_vec(),
                v: v.to_vec(),
                scores,
                p,
                y: yh,
            });
        }
        self.probe = probe;
        self.weights.output(&y)
    }
}
