use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{Model, QuantConfig};
use crate::numerics::{choose_scale_exp, QuantSpec};
use crate::reference::{ActivationObserver, AttentionKind, FloatDecoder, Site};

/// Bitwidths and margins used when deriving integer formats.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CalibrationOptions {
    pub weight_bits: u32,
    pub vector_bits: u32,
    pub activation_bits: u32,
    pub cache_bits: u32,
    pub trace_bits: u32,
    pub prob_exp: i32,
    /// Observed maxima are multiplied by this before choosing scales.
    pub headroom: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            weight_bits: 8,
            vector_bits: 16,
            activation_bits: 16,
            cache_bits: 8,
            trace_bits: 8,
            prob_exp: -14,
            headroom: 1.25,
        }
    }
}

#[derive(Default)]
struct Maxima {
    global: f64,
    sites: HashMap<(Option<usize>, Site), f64>,
}

impl ActivationObserver for Maxima {
    fn observe(&mut self, layer: Option<usize>, site: Site, values: &[f64]) {
        let m = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.global = self.global.max(m);
        let e = self.sites.entry((layer, site)).or_insert(0.0);
        *e = e.max(m);
    }
}

/// Runs the float reference over `sequences` and derives the activation
/// format and per-layer key/value cache scales from the observed maxima.
pub fn calibrate(
    model: &Model,
    sequences: &[Vec<Vec<f64>>],
    opts: &CalibrationOptions,
) -> Result<QuantConfig> {
    if sequences.is_empty() {
        return Err(Error::Config(
            "calibration needs at least one sequence".into(),
        ));
    }
    if opts.headroom.is_nan() || opts.headroom < 1.0 {
        return Err(Error::Config(format!("headroom {} below 1", opts.headroom)));
    }
    let mut obs = Maxima::default();
    for seq in sequences {
        let mut dec = FloatDecoder::new(model, AttentionKind::Reference)?;
        for tok in seq {
            dec.step_observed(tok, &mut obs)?;
        }
    }
    let site = |l: usize, s: Site| obs.sites.get(&(Some(l), s)).copied().unwrap_or(0.0);
    let act_exp = choose_scale_exp(obs.global * opts.headroom, opts.activation_bits, true);
    let layers = model.config.layers;
    let quant = QuantConfig {
        weight_bits: opts.weight_bits,
        vector_bits: opts.vector_bits,
        activation: QuantSpec::new(opts.activation_bits, true, act_exp)?,
        prob_exp: opts.prob_exp,
        cache_bits: opts.cache_bits,
        trace_bits: opts.trace_bits,
        key_exps: (0..layers)
            .map(|l| choose_scale_exp(site(l, Site::Key) * opts.headroom, opts.cache_bits, true))
            .collect(),
        value_exps: (0..layers)
            .map(|l| choose_scale_exp(site(l, Site::Value) * opts.headroom, opts.cache_bits, true))
            .collect(),
    };
    quant.validate(layers)?;
    Ok(quant)
}
