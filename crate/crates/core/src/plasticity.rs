//! Plastic dense connections driven by graded spikes, traces and
//! sum-of-products learning rules.
//!
//! Weights are stored post-major: entry `(i, j)` connects pre-neuron `j` to
//! post-neuron `i`. A post-synaptic trigger on `i` rewrites row `i`; a
//! pre-synaptic trigger on `j` rewrites column `j`.

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::QuantSpec;
use crate::rulelang::{FactorBinding, RuleArith, RuleExpr, Var};

/// Storage type for weights and traces.
///
/// `i64` holds integer codes and evaluates rules exactly; `f64` is the float
/// mode used for oracle checks.
pub trait SynapseScalar: RuleArith + Default + PartialOrd + Send + Sync + 'static {
    fn zero() -> Self;
    fn from_i64(v: i64) -> Self;
    fn to_f64(self) -> f64;
    /// `acc + w * x` without wraparound.
    fn mac(acc: Self, w: Self, x: Self) -> Self;
    fn sat_add(a: Self, b: Self) -> Self;
    /// Exact halving; integer inputs must be even.
    fn halve(self) -> Self;
    fn negate(self) -> Self;
    /// Applies `dw` to `w` and clamps into `bounds`.
    fn apply(w: Self, dw: Self::Acc, bounds: &Bounds<Self>) -> (Self, bool);
}

impl SynapseScalar for i64 {
    fn zero() -> Self {
        0
    }
    fn from_i64(v: i64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn mac(acc: i64, w: i64, x: i64) -> i64 {
        acc.saturating_add(w.saturating_mul(x))
    }
    fn sat_add(a: i64, b: i64) -> i64 {
        a.saturating_add(b)
    }
    fn halve(self) -> i64 {
        debug_assert!(self % 2 == 0, "halving odd code {self}");
        self >> 1
    }
    fn negate(self) -> i64 {
        self.saturating_neg()
    }
    fn apply(w: i64, dw: i128, bounds: &Bounds<i64>) -> (i64, bool) {
        let next = (w as i128).saturating_add(dw);
        let lo = bounds.lo as i128;
        let hi = bounds.hi as i128;
        if next < lo {
            (bounds.lo, true)
        } else if next > hi {
            (bounds.hi, true)
        } else {
            (next as i64, false)
        }
    }
}

impl SynapseScalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn mac(acc: f64, w: f64, x: f64) -> f64 {
        acc + w * x
    }
    fn sat_add(a: f64, b: f64) -> f64 {
        a + b
    }
    fn halve(self) -> f64 {
        self * 0.5
    }
    fn negate(self) -> f64 {
        -self
    }
    fn apply(w: f64, dw: f64, bounds: &Bounds<f64>) -> (f64, bool) {
        bounds.clamp(w + dw)
    }
}

/// Inclusive value range for weights or traces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: SynapseScalar> Bounds<T> {
    pub fn new(lo: T, hi: T) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: T) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn clamp(&self, v: T) -> (T, bool) {
        if v < self.lo {
            (self.lo, true)
        } else if v > self.hi {
            (self.hi, true)
        } else {
            (v, false)
        }
    }
}

impl Bounds<i64> {
    pub fn from_spec(spec: &QuantSpec) -> Self {
        Self {
            lo: spec.min_code(),
            hi: spec.max_code(),
        }
    }
}

impl Bounds<f64> {
    pub fn unbounded() -> Self {
        Self {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn non_negative() -> Self {
        Self {
            lo: 0.0,
            hi: f64::INFINITY,
        }
    }
}

/// An event carrying a graded payload to one neuron.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradedSpike<T> {
    pub neuron: usize,
    pub payload: T,
}

impl<T> GradedSpike<T> {
    pub fn new(neuron: usize, payload: T) -> Self {
        Self { neuron, payload }
    }
}

/// Dense spike list: neuron `j` carries `values[j]`.
pub fn dense_spikes<T: Copy>(values: &[T]) -> Vec<GradedSpike<T>> {
    values
        .iter()
        .enumerate()
        .map(|(j, &v)| GradedSpike::new(j, v))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradedSpikeConfig {
    /// Payload replaces the trace.
    Overwrite,
    /// Payload is added to the trace, with saturation.
    Accumulate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreTrace {
    X1,
    X2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PostTrace {
    Y1,
    Y2,
    Y3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceState<T> {
    pub x1: Vec<T>,
    pub x2: Vec<T>,
    pub y1: Vec<T>,
    pub y2: Vec<T>,
    pub y3: Vec<T>,
}

impl<T: SynapseScalar> TraceState<T> {
    fn zeros(pres: usize, posts: usize) -> Self {
        Self {
            x1: vec![T::zero(); pres],
            x2: vec![T::zero(); pres],
            y1: vec![T::zero(); posts],
            y2: vec![T::zero(); posts],
            y3: vec![T::zero(); posts],
        }
    }

    pub fn pre(&self, which: PreTrace) -> &[T] {
        match which {
            PreTrace::X1 => &self.x1,
            PreTrace::X2 => &self.x2,
        }
    }

    pub fn post(&self, which: PostTrace) -> &[T] {
        match which {
            PostTrace::Y1 => &self.y1,
            PostTrace::Y2 => &self.y2,
            PostTrace::Y3 => &self.y3,
        }
    }

    fn pre_mut(&mut self, which: PreTrace) -> &mut Vec<T> {
        match which {
            PreTrace::X1 => &mut self.x1,
            PreTrace::X2 => &mut self.x2,
        }
    }

    fn post_mut(&mut self, which: PostTrace) -> &mut Vec<T> {
        match which {
            PostTrace::Y1 => &mut self.y1,
            PostTrace::Y2 => &mut self.y2,
            PostTrace::Y3 => &mut self.y3,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaturationStats {
    pub weight: u64,
    pub trace: u64,
}

/// A plastic weight matrix with its learning rule and trace state.
#[derive(Debug, Clone)]
pub struct LearningConnection<T: SynapseScalar> {
    pres: usize,
    posts: usize,
    weights: Vec<T>,
    rule: RuleExpr,
    traces: TraceState<T>,
    spike_cfg: GradedSpikeConfig,
    weight_bounds: Bounds<T>,
    trace_bounds: Bounds<T>,
    stats: SaturationStats,
}

impl<T: SynapseScalar> LearningConnection<T> {
    /// A `posts x pres` connection with zero weights and traces.
    pub fn new(
        posts: usize,
        pres: usize,
        rule: RuleExpr,
        spike_cfg: GradedSpikeConfig,
        weight_bounds: Bounds<T>,
        trace_bounds: Bounds<T>,
    ) -> Self {
        Self {
            pres,
            posts,
            weights: vec![T::zero(); posts * pres],
            rule,
            traces: TraceState::zeros(pres, posts),
            spike_cfg,
            weight_bounds,
            trace_bounds,
            stats: SaturationStats::default(),
        }
    }

    pub fn with_weights(mut self, weights: Vec<T>) -> Result<Self> {
        if weights.len() != self.posts * self.pres {
            return Err(Error::Shape(format!(
                "connection is {}x{}, got {} weights",
                self.posts,
                self.pres,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !self.weight_bounds.contains(*w)) {
            return Err(Error::Domain("initial weight outside weight bounds".into()));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn pres(&self) -> usize {
        self.pres
    }

    pub fn posts(&self) -> usize {
        self.posts
    }

    pub fn rule(&self) -> &RuleExpr {
        &self.rule
    }

    pub fn spike_cfg(&self) -> GradedSpikeConfig {
        self.spike_cfg
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn weight(&self, post: usize, pre: usize) -> T {
        self.weights[post * self.pres + pre]
    }

    pub fn row(&self, post: usize) -> &[T] {
        &self.weights[post * self.pres..(post + 1) * self.pres]
    }

    pub fn column(&self, pre: usize) -> Vec<T> {
        (0..self.posts).map(|i| self.weight(i, pre)).collect()
    }

    pub fn traces(&self) -> &TraceState<T> {
        &self.traces
    }

    pub fn weight_bounds(&self) -> Bounds<T> {
        self.weight_bounds
    }

    pub fn trace_bounds(&self) -> Bounds<T> {
        self.trace_bounds
    }

    pub fn stats(&self) -> SaturationStats {
        self.stats
    }

    fn check_pre(&self, j: usize) -> Result<()> {
        if j >= self.pres {
            return Err(Error::IndexOutOfRange {
                what: "pre-synaptic neurons",
                index: j,
                len: self.pres,
            });
        }
        Ok(())
    }

    fn check_post(&self, i: usize) -> Result<()> {
        if i >= self.posts {
            return Err(Error::IndexOutOfRange {
                what: "post-synaptic neurons",
                index: i,
                len: self.posts,
            });
        }
        Ok(())
    }

    fn assemble(&self, spikes: &[GradedSpike<T>]) -> Result<Vec<T>> {
        let mut dense = vec![T::zero(); self.pres];
        for s in spikes {
            self.check_pre(s.neuron)?;
            dense[s.neuron] = T::sat_add(dense[s.neuron], s.payload);
        }
        Ok(dense)
    }

    /// Weights times the dense input assembled from `spikes`.
    pub fn propagate(&self, spikes: &[GradedSpike<T>]) -> Result<Vec<T>> {
        let all: Vec<usize> = (0..self.posts).collect();
        self.propagate_rows(spikes, &all)
    }

    /// Like [`propagate`](Self::propagate), but only for the listed post rows.
    pub fn propagate_rows(&self, spikes: &[GradedSpike<T>], rows: &[usize]) -> Result<Vec<T>> {
        let x = self.assemble(spikes)?;
        rows.iter()
            .map(|&i| {
                self.check_post(i)?;
                Ok(self
                    .row(i)
                    .iter()
                    .zip(&x)
                    .fold(T::zero(), |acc, (&w, &v)| T::mac(acc, w, v)))
            })
            .collect()
    }

    /// Loads graded spike payloads into a pre-synaptic trace.
    pub fn write_pre_trace(&mut self, spikes: &[GradedSpike<T>], which: PreTrace) -> Result<()> {
        for s in spikes {
            self.check_pre(s.neuron)?;
        }
        let bounds = self.trace_bounds;
        let mode = self.spike_cfg;
        let mut saturated = 0;
        let trace = self.traces.pre_mut(which);
        for s in spikes {
            let proposed = match mode {
                GradedSpikeConfig::Overwrite => s.payload,
                GradedSpikeConfig::Accumulate => T::sat_add(trace[s.neuron], s.payload),
            };
            let (v, sat) = bounds.clamp(proposed);
            saturated += sat as u64;
            trace[s.neuron] = v;
        }
        self.stats.trace += saturated;
        Ok(())
    }

    /// Overwrites a whole post-synaptic trace array.
    pub fn write_post_trace(&mut self, values: &[T], which: PostTrace) -> Result<()> {
        if values.len() != self.posts {
            return Err(Error::Shape(format!(
                "post trace needs {} values, got {}",
                self.posts,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !self.trace_bounds.contains(**v)) {
            return Err(Error::TraceRange {
                value: format!("{bad:?}"),
                lo: format!("{:?}", self.trace_bounds.lo),
                hi: format!("{:?}", self.trace_bounds.hi),
            });
        }
        self.traces.post_mut(which).copy_from_slice(values);
        Ok(())
    }

    fn binding(&self, post: usize, pre: usize, x0: bool, y0: bool) -> FactorBinding<T> {
        let spike = |on: bool| T::from_i64(on as i64);
        FactorBinding::new()
            .with(Var::X0, spike(x0))
            .with(Var::Y0, spike(y0))
            .with(Var::X1, self.traces.x1[pre])
            .with(Var::X2, self.traces.x2[pre])
            .with(Var::Y1, self.traces.y1[post])
            .with(Var::Y2, self.traces.y2[post])
            .with(Var::Y3, self.traces.y3[post])
            .with(Var::W, self.weight(post, pre))
    }

    fn update(&mut self, post: usize, pre: usize, x0: bool, y0: bool) -> Result<()> {
        let b = self.binding(post, pre, x0, y0);
        let dw = self.rule.evaluate(&b)?;
        let idx = post * self.pres + pre;
        let (w, sat) = T::apply(self.weights[idx], dw, &self.weight_bounds);
        self.weights[idx] = w;
        self.stats.weight += sat as u64;
        Ok(())
    }

    /// Post-synaptic spike on `post`: applies the rule to every synapse of row `post`.
    pub fn trigger_post(&mut self, post: usize) -> Result<()> {
        self.check_post(post)?;
        for pre in 0..self.pres {
            self.update(post, pre, false, true)?;
        }
        Ok(())
    }

    /// Pre-synaptic spike on `pre`: applies the rule to every synapse of column `pre`.
    pub fn trigger_pre(&mut self, pre: usize) -> Result<()> {
        self.check_pre(pre)?;
        for post in 0..self.posts {
            self.update(post, pre, true, false)?;
        }
        Ok(())
    }
}
