use crate::attention::PlasticAttentionLayer;
use crate::error::{Error, Result};
use crate::model::{LayerWeights, MlpWeights, Model};
use crate::numerics::{relu_in_place, rmsnorm, vmm};

use super::attention::{attention_parallel, RefAttentionBlock};

/// Which attention implementation a float decoder runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionKind {
    /// Tensor KV-cache.
    Reference,
    /// Learning-connection KV-cache.
    Plastic,
}

/// Named activation sites, used for calibrating integer formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Site {
    Input,
    EncoderHidden,
    Embedding,
    AttnNorm,
    Query,
    Key,
    Value,
    AttnMix,
    AttnOut,
    Residual,
    MlpNorm,
    MlpHidden,
    MlpOut,
    LayerOut,
    FinalNorm,
    Scores,
}

pub trait ActivationObserver {
    fn observe(&mut self, layer: Option<usize>, site: Site, values: &[f64]);
}

/// `w2 * relu(w1 * rmsnorm(x)) + b2`.
pub fn mlp_step(block: &MlpWeights, x: &[f64], eps: f64) -> Result<Vec<f64>> {
    block.forward(x, eps)
}

#[derive(Debug, Clone)]
pub enum AttentionState<'w> {
    Reference(RefAttentionBlock<'w>),
    Plastic(PlasticAttentionLayer<'w>),
}

/// Attention block plus MLP block joined by residual connections.
#[derive(Debug, Clone)]
pub struct TransformerLayer<'w> {
    attn: AttentionState<'w>,
    mlp: &'w MlpWeights,
    eps: f64,
}

impl<'w> TransformerLayer<'w> {
    pub fn new(
        weights: &'w LayerWeights,
        kind: AttentionKind,
        heads: usize,
        window: usize,
        scaled: bool,
        eps: f64,
    ) -> Result<Self> {
        let attn = match kind {
            AttentionKind::Reference => AttentionState::Reference(RefAttentionBlock::new(
                &weights.attn,
                heads,
                Some(window),
                scaled,
                eps,
            )?),
            AttentionKind::Plastic => AttentionState::Plastic(PlasticAttentionLayer::new(
                &weights.attn,
                heads,
                window,
                scaled,
                eps,
            )?),
        };
        Ok(Self {
            attn,
            mlp: &weights.mlp,
            eps,
        })
    }

    pub fn attention(&self) -> &AttentionState<'w> {
        &self.attn
    }

    fn attend(&mut self, x: &[f64], t: usize) -> Result<Vec<f64>> {
        match &mut self.attn {
            AttentionState::Reference(block) => {
                if block.steps() != t {
                    return Err(Error::StepOrder {
                        expected: block.steps(),
                        got: t,
                    });
                }
                block.step(x)
            }
            AttentionState::Plastic(layer) => layer.attend_step(x, t),
        }
    }

    /// `h = x + attn(x)`, `out = h + mlp(h)`.
    pub fn layer_step(&mut self, x: &[f64], t: usize) -> Result<Vec<f64>> {
        let z = self.attend(x, t)?;
        let h: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a + b).collect();
        let m = self.mlp.forward(&h, self.eps)?;
        Ok(h.iter().zip(&m).map(|(a, b)| a + b).collect())
    }

    fn layer_step_observed(
        &mut self,
        x: &[f64],
        layer: usize,
        obs: &mut dyn ActivationObserver,
    ) -> Result<Vec<f64>> {
        let AttentionState::Reference(block) = &mut self.attn else {
            return Err(Error::Config(
                "observation needs reference attention".into(),
            ));
        };
        let l = Some(layer);
        let qkv = block.weights().project(x, self.eps)?;
        obs.observe(l, Site::AttnNorm, &qkv.xn);
        obs.observe(l, Site::Query, &qkv.q);
        obs.observe(l, Site::Key, &qkv.k);
        obs.observe(l, Site::Value, &qkv.v);
        let (y, z) = block.step_projected(&qkv)?;
        obs.observe(l, Site::AttnMix, &y);
        obs.observe(l, Site::AttnOut, &z);
        let h: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a + b).collect();
        obs.observe(l, Site::Residual, &h);

        let xn = rmsnorm(&h, &self.mlp.norm_gain, self.eps)?;
        obs.observe(l, Site::MlpNorm, &xn);
        let mut hidden = vmm(&self.mlp.w1, &xn)?;
        relu_in_place(&mut hidden);
        obs.observe(l, Site::MlpHidden, &hidden);
        let mut m = vmm(&self.mlp.w2, &hidden)?;
        m.iter_mut().zip(&self.mlp.b2).for_each(|(m, b)| *m += b);
        obs.observe(l, Site::MlpOut, &m);
        let out: Vec<f64> = h.iter().zip(&m).map(|(a, b)| a + b).collect();
        obs.observe(l, Site::LayerOut, &out);
        Ok(out)
    }
}

/// Token-by-token float execution of a whole model.
#[derive(Debug, Clone)]
pub struct FloatDecoder<'m> {
    model: &'m Model,
    layers: Vec<TransformerLayer<'m>>,
    steps: usize,
}

impl<'m> FloatDecoder<'m> {
    pub fn new(model: &'m Model, kind: AttentionKind) -> Result<Self> {
        let c = &model.config;
        let layers = model
            .layers
            .iter()
            .map(|w| {
                TransformerLayer::new(w, kind, c.heads, c.window, c.scaled_attention, c.rms_eps)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            model,
            layers,
            steps: 0,
        })
    }

    pub fn layers(&self) -> &[TransformerLayer<'m>] {
        &self.layers
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn check_capacity(&self) -> Result<()> {
        if self.steps >= self.model.config.max_seq_len {
            return Err(Error::Shape(format!(
                "sequence longer than max_seq_len {}",
                self.model.config.max_seq_len
            )));
        }
        Ok(())
    }

    /// Feeds one raw token and returns the final hidden state.
    pub fn step(&mut self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_capacity()?;
        let mut x = self.model.embed(input)?;
        for layer in &mut self.layers {
            x = layer.layer_step(&x, self.steps)?;
        }
        self.steps += 1;
        Ok(x)
    }

    /// Feeds one raw token and returns the class scores at that position.
    pub fn step_scores(&mut self, input: &[f64]) -> Result<Vec<f64>> {
        let h = self.step(input)?;
        self.model.scores(&h)
    }

    /// Like [`step_scores`](Self::step_scores) while reporting every
    /// intermediate activation. Reference attention only.
    pub fn step_observed(
        &mut self,
        input: &[f64],
        obs: &mut dyn ActivationObserver,
    ) -> Result<Vec<f64>> {
        self.check_capacity()?;
        let c = &self.model.config;
        if input.len() != c.input_dim() {
            return Err(Error::Shape(format!(
                "token has {} features, model expects {}",
                input.len(),
                c.input_dim()
            )));
        }
        obs.observe(None, Site::Input, input);
        let enc = &self.model.encoder;
        let mut h = vmm(&enc.weight, input)?;
        h.iter_mut().zip(&enc.bias).for_each(|(h, b)| *h += b);
        if c.encoder_relu {
            relu_in_place(&mut h);
        }
        obs.observe(None, Site::EncoderHidden, &h);
        let mut x = rmsnorm(&h, &enc.norm_gain, c.rms_eps)?;
        obs.observe(None, Site::Embedding, &x);
        for (l, layer) in self.layers.iter_mut().enumerate() {
            x = layer.layer_step_observed(&x, l, obs)?;
        }
        self.steps += 1;
        if let Some(g) = &self.model.head.final_gain {
            x = rmsnorm(&x, g, c.rms_eps)?;
            obs.observe(None, Site::FinalNorm, &x);
        }
        let mut s = vmm(&self.model.head.weight, &x)?;
        s.iter_mut()
            .zip(&self.model.head.bias)
            .for_each(|(s, b)| *s += b);
        obs.observe(None, Site::Scores, &s);
        Ok(s)
    }
}

/// One layer over a whole sequence with a causal mask.
pub fn layer_parallel(
    weights: &LayerWeights,
    xs: &[Vec<f64>],
    heads: usize,
    window: Option<usize>,
    scaled: bool,
    eps: f64,
) -> Result<Vec<Vec<f64>>> {
    let zs = attention_parallel(&weights.attn, xs, heads, window, scaled, eps)?;
    xs.iter()
        .zip(zs)
        .map(|(x, z)| {
            let h: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a + b).collect();
            let m = weights.mlp.forward(&h, eps)?;
            Ok(h.iter().zip(&m).map(|(a, b)| a + b).collect())
        })
        .collect()
}

/// Final hidden state at every position, computed with causal masks.
pub fn forward_parallel(model: &Model, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let c = &model.config;
    if inputs.len() > c.max_seq_len {
        return Err(Error::Shape(format!(
            "sequence of {} tokens exceeds max_seq_len {}",
            inputs.len(),
            c.max_seq_len
        )));
    }
    let mut xs: Vec<Vec<f64>> = inputs
        .iter()
        .map(|i| model.embed(i))
        .collect::<Result<_>>()?;
    for layer in &model.layers {
        xs = layer_parallel(
            layer,
            &xs,
            c.heads,
            Some(c.window),
            c.scaled_attention,
            c.rms_eps,
        )?;
    }
    Ok(xs)
}
