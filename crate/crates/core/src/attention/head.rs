use crate::error::{Error, Result};
use crate::plasticity::{
    dense_spikes, Bounds, GradedSpike, GradedSpikeConfig, LearningConnection, PostTrace, PreTrace,
    SynapseScalar,
};
use crate::rulelang::{parse_rule, RuleExpr, KEYS_RULE, VALUES_RULE};

use super::encoding::encode_key;
use super::scheduler::SlotScheduler;

/// What one head saw and produced during a token step.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadProbe<T> {
    pub slot: usize,
    /// Visible slots, oldest first.
    pub slots: Vec<usize>,
    pub q: Vec<T>,
    /// Key as written into the cache.
    pub k: Vec<T>,
    /// Value as written into the cache.
    pub v: Vec<T>,
    pub scores: Vec<T>,
    pub p: Vec<T>,
    pub y: Vec<T>,
}

/// One attention head's KV-cache held in two learning connections.
#[derive(Debug, Clone)]
pub struct PlasticAttentionHead<T: SynapseScalar> {
    keys: LearningConnection<T>,
    values: LearningConnection<T>,
    scheduler: SlotScheduler,
}

pub(crate) fn keys_rule() -> RuleExpr {
    parse_rule(KEYS_RULE).expect("keys rule parses")
}

pub(crate) fn values_rule() -> RuleExpr {
    parse_rule(VALUES_RULE).expect("values rule parses")
}

impl<T: SynapseScalar> PlasticAttentionHead<T> {
    pub fn new(
        d_head: usize,
        window: usize,
        weight_bounds: Bounds<T>,
        trace_bounds: Bounds<T>,
    ) -> Self {
        Self::with_scheduler(
            d_head,
            SlotScheduler::new(window),
            weight_bounds,
            trace_bounds,
        )
    }

    pub fn with_scheduler(
        d_head: usize,
        scheduler: SlotScheduler,
        weight_bounds: Bounds<T>,
        trace_bounds: Bounds<T>,
    ) -> Self {
        let window = scheduler.window();
        Self {
            keys: LearningConnection::new(
                window,
                d_head,
                keys_rule(),
                GradedSpikeConfig::Overwrite,
                weight_bounds,
                trace_bounds,
            ),
            values: LearningConnection::new(
                d_head,
                window,
                values_rule(),
                GradedSpikeConfig::Overwrite,
                weight_bounds,
                trace_bounds,
            ),
            scheduler,
        }
    }

    pub fn d_head(&self) -> usize {
        self.keys.pres()
    }

    pub fn keys(&self) -> &LearningConnection<T> {
        &self.keys
    }

    pub fn values(&self) -> &LearningConnection<T> {
        &self.values
    }

    pub fn scheduler(&self) -> &SlotScheduler {
        &self.scheduler
    }

    pub(crate) fn advance(&mut self) {
        self.scheduler.advance();
    }

    fn check_len(&self, what: &str, got: usize) -> Result<()> {
        if got != self.d_head() {
            return Err(Error::Shape(format!(
                "{what} has {got} components, head width is {}",
                self.d_head()
            )));
        }
        Ok(())
    }

    /// Loads `k` into trace `x1` as graded spikes and fires slot `slot`,
    /// so the keys rule overwrites that row with `k`.
    ///
    /// Returns the number of components clamped by the trace encoding.
    pub fn write_key(&mut self, slot: usize, k: &[T]) -> Result<usize> {
        self.check_len("key", k.len())?;
        let bounds = self.keys.trace_bounds();
        let mut clamped = 0;
        let spikes: Vec<GradedSpike<T>> = k
            .iter()
            .enumerate()
            .map(|(j, &kj)| {
                let (u, sat) = encode_key(kj, &bounds);
                clamped += sat as usize;
                GradedSpike::new(j, u)
            })
            .collect();
        self.keys.write_pre_trace(&spikes, PreTrace::X1)?;
        self.keys.trigger_post(slot)?;
        Ok(clamped)
    }

    /// Sets `y2 = max(v, 0)`, `y3 = max(-v, 0)`, `y1 = 1` and fires the
    /// pre-synaptic neuron of `slot`, so the values rule overwrites that
    /// column with `v`.
    pub fn write_value(&mut self, slot: usize, v: &[T]) -> Result<()> {
        self.check_len("value", v.len())?;
        let zero = T::zero();
        let pos: Vec<T> = v.iter().map(|&x| if x > zero { x } else { zero }).collect();
        let neg: Vec<T> = v
            .iter()
            .map(|&x| if x < zero { x.negate() } else { zero })
            .collect();
        self.values.write_post_trace(&pos, PostTrace::Y2)?;
        self.values.write_post_trace(&neg, PostTrace::Y3)?;
        self.values
            .write_post_trace(&vec![T::from_i64(1); v.len()], PostTrace::Y1)?;
        self.values.trigger_pre(slot)
    }

    /// Query against the keys matrix, for the listed slots only.
    pub fn scores(&self, q: &[T], slots: &[usize]) -> Result<Vec<T>> {
        self.check_len("query", q.len())?;
        self.keys.propagate_rows(&dense_spikes(q), slots)
    }

    /// Attention weights `p[i]` for slot `slots[i]`, sent through the values matrix.
    pub fn mix(&self, p: &[T], slots: &[usize]) -> Result<Vec<T>> {
        if p.len() != slots.len() {
            return Err(Error::Shape(format!(
                "{} attention weights for {} slots",
                p.len(),
                slots.len()
            )));
        }
        let spikes: Vec<GradedSpike<T>> = slots
            .iter()
            .zip(p)
            .map(|(&s, &w)| GradedSpike::new(s, w))
            .collect();
        self.values.propagate(&spikes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn int_head(d: usize, w: usize) -> PlasticAttentionHead<i64> {
        PlasticAttentionHead::new(d, w, Bounds::new(-128, 127), Bounds::new(0, 255))
    }

    #[test]
    fn key_write_fills_row() {
        let mut h = int_head(3, 4);
        assert_eq!(h.write_key(2, &[40, -128, 126]).unwrap(), 0);
        assert_eq!(h.keys().row(2), &[40, -128, 126]);
        assert_eq!(h.keys().row(0), &[0, 0, 0]);
        // rewriting the same key is a no-op after the first time
        let before = h.keys().weights().to_vec();
        h.write_key(2, &[40, -128, 126]).unwrap();
        assert_eq!(h.keys().weights(), &before[..]);
    }

    #[test]
    fn value_write_fills_column() {
        let mut h = int_head(3, 4);
        h.write_value(1, &[9, -7, 0]).unwrap();
        assert_eq!(h.values().column(1), vec![9, -7, 0]);
        h.write_value(1, &[-1, 2, 3]).unwrap();
        assert_eq!(h.values().column(1), vec![-1, 2, 3]);
        assert_eq!(h.values().column(0), vec![0, 0, 0]);
    }

    #[test]
    fn scores_and_mix() {
        let mut h = int_head(2, 3);
        h.write_key(0, &[2, 4]).unwrap();
        h.write_key(1, &[-6, 8]).unwrap();
        h.write_value(0, &[1, 2]).unwrap();
        h.write_value(1, &[3, -4]).unwrap();
        assert_eq!(h.scores(&[1, 1], &[0, 1]).unwrap(), vec![6, 2]);
        assert_eq!(h.mix(&[2, 5], &[0, 1]).unwrap(), vec![17, -16]);
        assert!(h.mix(&[1], &[0, 1]).is_err());
        assert!(h.scores(&[1, 1, 1], &[0]).is_err());
    }

    #[test]
    fn out_of_range_key_is_clamped_and_counted() {
        let mut h = int_head(1, 1);
        assert_eq!(h.write_key(0, &[-200]).unwrap(), 1);
        assert_eq!(h.keys().row(0), &[-128]);
    }
}
