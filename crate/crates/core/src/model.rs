//! Model hyperparameters and float weights shared by every execution path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{relu_in_place, rmsnorm, vmm, Matrix, QuantSpec, DEFAULT_RMS_EPS};

/// Pixel polarity applied when images are loaded from disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelPolarity {
    /// Ink maps to 1, background to 0.
    #[default]
    InkHigh,
    /// Pixels are used as stored (background 1 for Omniglot).
    AsStored,
}

/// Integer-path formats. Per-tensor weight scales live with the tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantConfig {
    /// Bitwidth of matrix weights.
    pub weight_bits: u32,
    /// Bitwidth of bias and gain vectors.
    pub vector_bits: u32,
    /// Residual-stream and graded-spike activation format.
    pub activation: QuantSpec,
    /// Scale exponent of attention probabilities sent as graded spikes.
    pub prob_exp: i32,
    /// Bitwidth of the KV-cache weights (signed).
    pub cache_bits: u32,
    /// Bitwidth of the unsigned learning traces.
    pub trace_bits: u32,
    /// Per-layer scale exponent of cached keys.
    pub key_exps: Vec<i32>,
    /// Per-layer scale exponent of cached values.
    pub value_exps: Vec<i32>,
}

impl QuantConfig {
    pub fn validate(&self, layers: usize) -> Result<()> {
        self.activation.validate()?;
        for (what, bits, range) in [
            ("weight", self.weight_bits, 2..=16),
            ("vector", self.vector_bits, 2..=16),
            // the keys rule offset of 64 caps cached keys at 8 bits
            ("cache", self.cache_bits, 2..=8),
            ("trace", self.trace_bits, 8..=16),
        ] {
            if !range.contains(&bits) {
                return Err(Error::Config(format!(
                    "{what} bits {bits} outside {}..={}",
                    range.start(),
                    range.end()
                )));
            }
        }
        if !self.activation.signed || self.activation.bits > 24 {
            return Err(Error::Config(
                "activation format must be signed and at most 24 bits".into(),
            ));
        }
        if self.key_exps.len() != layers || self.value_exps.len() != layers {
            return Err(Error::Config(format!(
                "need {layers} key/value cache exponents, got {}/{}",
                self.key_exps.len(),
                self.value_exps.len()
            )));
        }
        Ok(())
    }

    pub fn cache_spec(&self, exp: i32) -> QuantSpec {
        QuantSpec::signed(self.cache_bits, exp)
    }

    pub fn trace_spec(&self) -> QuantSpec {
        QuantSpec::unsigned(self.trace_bits, 0)
    }

    pub fn prob_spec(&self) -> QuantSpec {
        QuantSpec::signed(self.activation.bits, self.prob_exp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub d_model: usize,
    pub heads: usize,
    /// Sliding attention window (number of cache slots).
    pub window: usize,
    pub max_seq_len: usize,
    /// Flattened image size.
    pub pixels: usize,
    /// Classes per episode.
    pub classes: usize,
    #[serde(default)]
    pub scaled_attention: bool,
    #[serde(default)]
    pub final_norm: bool,
    #[serde(default)]
    pub encoder_relu: bool,
    #[serde(default = "default_eps")]
    pub rms_eps: f64,
    #[serde(default)]
    pub pixel_polarity: PixelPolarity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quant: Option<QuantConfig>,
}

fn default_eps() -> f64 {
    DEFAULT_RMS_EPS
}

impl ModelConfig {
    /// Few-shot model with `window = max_seq_len = classes * shots + 1`.
    pub fn few_shot(
        layers: usize,
        d_model: usize,
        heads: usize,
        pixels: usize,
        classes: usize,
        shots: usize,
    ) -> Self {
        let t = classes * shots + 1;
        Self {
            layers,
            d_model,
            heads,
            window: t,
            max_seq_len: t,
            pixels,
            classes,
            scaled_attention: false,
            final_norm: false,
            encoder_relu: false,
            rms_eps: DEFAULT_RMS_EPS,
            pixel_polarity: PixelPolarity::InkHigh,
            quant: None,
        }
    }

    /// 4 layers, width 128, one head.
    pub fn tiny(pixels: usize, classes: usize, shots: usize) -> Self {
        Self::few_shot(4, 128, 1, pixels, classes, shots)
    }

    /// 6 layers, width 256, eight heads.
    pub fn small(pixels: usize, classes: usize, shots: usize) -> Self {
        Self::few_shot(6, 256, 8, pixels, classes, shots)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.layers == 0 || self.d_model == 0 || self.heads == 0 {
            return bad("layers, d_model and heads must be positive".into());
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return bad(format!(
                "d_model {} not divisible by heads {}",
                self.d_model, self.heads
            ));
        }
        if self.window == 0 {
            return bad("window must be at least 1".into());
        }
        if self.max_seq_len == 0 {
            return bad("max_seq_len must be at least 1".into());
        }
        if self.classes < 1 || self.pixels < 1 {
            return bad("pixels and classes must be positive".into());
        }
        if self.rms_eps.is_nan() || self.rms_eps <= 0.0 {
            return bad(format!("rms_eps must be positive, got {}", self.rms_eps));
        }
        if let Some(q) = &self.quant {
            q.validate(self.layers)?;
        }
        Ok(())
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn d_hidden(&self) -> usize {
        4 * self.d_model
    }

    /// Token width: pixels, one channel per label, one query-marker channel.
    pub fn input_dim(&self) -> usize {
        self.pixels + self.classes + 1
    }

    /// `(name, shape)` of every tensor a checkpoint of this config holds.
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.d_model;
        let mut out = vec![
            ("encoder.weight".to_string(), vec![d, self.input_dim()]),
            ("encoder.bias".to_string(), vec![d]),
            ("encoder.norm_gain".to_string(), vec![d]),
        ];
        for l in 0..self.layers {
            let p = format!("layers.{l}");
            out.extend([
                (format!("{p}.attn.norm_gain"), vec![d]),
                (format!("{p}.attn.wq"), vec![d, d]),
                (format!("{p}.attn.wk"), vec![d, d]),
                (format!("{p}.attn.wv"), vec![d, d]),
                (format!("{p}.attn.wo"), vec![d, d]),
                (format!("{p}.attn.bo"), vec![d]),
                (format!("{p}.mlp.norm_gain"), vec![d]),
                (format!("{p}.mlp.w1"), vec![4 * d, d]),
                (format!("{p}.mlp.w2"), vec![d, 4 * d]),
                (format!("{p}.mlp.b2"), vec![d]),
            ]);
        }
        if self.final_norm {
            out.push(("final_norm.gain".to_string(), vec![d]));
        }
        out.push(("head.weight".to_string(), vec![self.classes, d]));
        out.push(("head.bias".to_string(), vec![self.classes]));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub norm_gain: Vec<f64>,
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub bo: Vec<f64>,
}

/// Projected query, key and value of one token, all heads concatenated.
#[derive(Debug, Clone, PartialEq)]
pub struct Qkv {
    /// Normalized input.
    pub xn: Vec<f64>,
    pub q: Vec<f64>,
    pub k: Vec<f64>,
    pub v: Vec<f64>,
}

impl AttentionWeights {
    pub fn d_model(&self) -> usize {
        self.wq.rows()
    }

    /// RMSNorm then the bias-free q/k/v projections.
    pub fn project(&self, x: &[f64], eps: f64) -> Result<Qkv> {
        let xn = rmsnorm(x, &self.norm_gain, eps)?;
        Ok(Qkv {
            q: vmm(&self.wq, &xn)?,
            k: vmm(&self.wk, &xn)?,
            v: vmm(&self.wv, &xn)?,
            xn,
        })
    }

    /// `wo * y + bo`.
    pub fn output(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut z = vmm(&self.wo, y)?;
        z.iter_mut().zip(&self.bo).for_each(|(z, b)| *z += b);
        Ok(z)
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            norm_gain: vec![1.0; d],
            wq: Matrix::zeros(d, d),
            wk: Matrix::zeros(d, d),
            wv: Matrix::zeros(d, d),
            wo: Matrix::zeros(d, d),
            bo: vec![0.0; d],
        }
    }

    pub fn random(d: usize, rng: &mut impl Rng) -> Self {
        Self {
            norm_gain: gain_vector(d, rng),
            wq: random_matrix(d, d, rng),
            wk: random_matrix(d, d, rng),
            wv: random_matrix(d, d, rng),
            wo: random_matrix(d, d, rng),
            bo: random_vector(d, 0.1, rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpWeights {
    pub norm_gain: Vec<f64>,
    pub w1: Matrix,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl MlpWeights {
    /// `w2 * relu(w1 * rmsnorm(x)) + b2`.
    pub fn forward(&self, x: &[f64], eps: f64) -> Result<Vec<f64>> {
        let xn = rmsnorm(x, &self.norm_gain, eps)?;
        let mut h = vmm(&self.w1, &xn)?;
        relu_in_place(&mut h);
        let mut z = vmm(&self.w2, &h)?;
        z.iter_mut().zip(&self.b2).for_each(|(z, b)| *z += b);
        Ok(z)
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            norm_gain: vec![1.0; d],
            w1: Matrix::zeros(4 * d, d),
            w2: Matrix::zeros(d, 4 * d),
            b2: vec![0.0; d],
        }
    }

    pub fn random(d: usize, rng: &mut impl Rng) -> Self {
        Self {
            norm_gain: gain_vector(d, rng),
            w1: random_matrix(4 * d, d, rng),
            w2: random_matrix(d, 4 * d, rng),
            b2: random_vector(d, 0.1, rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub attn: AttentionWeights,
    pub mlp: MlpWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub norm_gain: Vec<f64>,
}

impl EncoderWeights {
    /// `rmsnorm(weight * input + bias)`, with an optional ReLU before the norm.
    pub fn embed(&self, input: &[f64], relu: bool, eps: f64) -> Result<Vec<f64>> {
        let mut h = vmm(&self.weight, input)?;
        h.iter_mut().zip(&self.bias).for_each(|(h, b)| *h += b);
        if relu {
            relu_in_place(&mut h);
        }
        rmsnorm(&h, &self.norm_gain, eps)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputHead {
    pub final_gain: Option<Vec<f64>>,
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl OutputHead {
    pub fn scores(&self, x: &[f64], eps: f64) -> Result<Vec<f64>> {
        let xn;
        let x = match &self.final_gain {
            Some(g) => {
                xn = rmsnorm(x, g, eps)?;
                &xn
            }
            None => x,
        };
        let mut s = vmm(&self.weight, x)?;
        s.iter_mut().zip(&self.bias).for_each(|(s, b)| *s += b);
        Ok(s)
    }
}

/// Float weights of the full few-shot model.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub encoder: EncoderWeights,
    pub layers: Vec<LayerWeights>,
    pub head: OutputHead,
}

impl Model {
    /// Random weights: matrices ~ N(0, 1/fan_in), gains near 1, small biases.
    pub fn random(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d_model;
        let encoder = EncoderWeights {
            weight: random_matrix(d, config.input_dim(), &mut rng),
            bias: random_vector(d, 0.1, &mut rng),
            norm_gain: gain_vector(d, &mut rng),
        };
        let layers = (0..config.layers)
            .map(|_| LayerWeights {
                attn: AttentionWeights::random(d, &mut rng),
                mlp: MlpWeights::random(d, &mut rng),
            })
            .collect();
        let head = OutputHead {
            final_gain: config.final_norm.then(|| gain_vector(d, &mut rng)),
            weight: random_matrix(config.classes, d, &mut rng),
            bias: random_vector(config.classes, 0.1, &mut rng),
        };
        Ok(Self {
            config,
            encoder,
            layers,
            head,
        })
    }

    /// Every tensor as `(name, shape, values)` in canonical order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        let mut by_name = self.tensor_map();
        self.config
            .tensor_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let values = by_name
                    .remove(&name)
                    .expect("tensor_map covers every shape");
                (name, shape, values)
            })
            .collect()
    }

    fn tensor_map(&self) -> std::collections::HashMap<String, Vec<f64>> {
        let mut m = std::collections::HashMap::new();
        m.insert(
            "encoder.weight".into(),
            self.encoder.weight.as_slice().to_vec(),
        );
        m.insert("encoder.bias".into(), self.encoder.bias.clone());
        m.insert("encoder.norm_gain".into(), self.encoder.norm_gain.clone());
        for (l, layer) in self.layers.iter().enumerate() {
            let p = format!("layers.{l}");
            let a = &layer.attn;
            m.insert(format!("{p}.attn.norm_gain"), a.norm_gain.clone());
            m.insert(format!("{p}.attn.wq"), a.wq.as_slice().to_vec());
            m.insert(format!("{p}.attn.wk"), a.wk.as_slice().to_vec());
            m.insert(format!("{p}.attn.wv"), a.wv.as_slice().to_vec());
            m.insert(format!("{p}.attn.wo"), a.wo.as_slice().to_vec());
            m.insert(format!("{p}.attn.bo"), a.bo.clone());
            let f = &layer.mlp;
            m.insert(format!("{p}.mlp.norm_gain"), f.norm_gain.clone());
            m.insert(format!("{p}.mlp.w1"), f.w1.as_slice().to_vec());
            m.insert(format!("{p}.mlp.w2"), f.w2.as_slice().to_vec());
            m.insert(format!("{p}.mlp.b2"), f.b2.clone());
        }
        if let Some(g) = &self.head.final_gain {
            m.insert("final_norm.gain".into(), g.clone());
        }
        m.insert("head.weight".into(), self.head.weight.as_slice().to_vec());
        m.insert("head.bias".into(), self.head.bias.clone());
        m
    }

    /// Rebuilds a model from named tensors; shapes must match the config.
    pub fn from_tensors(
        config: ModelConfig,
        mut tensors: std::collections::HashMap<String, (Vec<usize>, Vec<f64>)>,
    ) -> Result<Self> {
        config.validate()?;
        let shapes = config.tensor_shapes();
        for (name, shape) in &shapes {
            match tensors.get(name) {
                None => return Err(Error::Checkpoint(format!("missing tensor {name}"))),
                Some((s, v)) => {
                    if s != shape || v.len() != shape.iter().product::<usize>() {
                        return Err(Error::Checkpoint(format!(
                            "tensor {name} has shape {s:?}, expected {shape:?}"
                        )));
                    }
                }
            }
        }
        if tensors.len() != shapes.len() {
            let mut extra: Vec<_> = tensors
                .keys()
                .filter(|k| !shapes.iter().any(|(n, _)| n == *k))
                .cloned()
                .collect();
            extra.sort();
            return Err(Error::Checkpoint(format!("unknown tensors {extra:?}")));
        }
        let mut vector = |name: &str| tensors.remove(name).expect("checked above").1;
        let d = config.d_model;
        let encoder_weight = vector("encoder.weight");
        let encoder = EncoderWeights {
            weight: Matrix::new(d, config.input_dim(), encoder_weight)?,
            bias: vector("encoder.bias"),
            norm_gain: vector("encoder.norm_gain"),
        };
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let p = format!("layers.{l}");
            let attn = AttentionWeights {
                norm_gain: vector(&format!("{p}.attn.norm_gain")),
                wq: Matrix::new(d, d, vector(&format!("{p}.attn.wq")))?,
                wk: Matrix::new(d, d, vector(&format!("{p}.attn.wk")))?,
                wv: Matrix::new(d, d, vector(&format!("{p}.attn.wv")))?,
                wo: Matrix::new(d, d, vector(&format!("{p}.attn.wo")))?,
                bo: vector(&format!("{p}.attn.bo")),
            };
            let mlp = MlpWeights {
                norm_gain: vector(&format!("{p}.mlp.norm_gain")),
                w1: Matrix::new(4 * d, d, vector(&format!("{p}.mlp.w1")))?,
                w2: Matrix::new(d, 4 * d, vector(&format!("{p}.mlp.w2")))?,
                b2: vector(&format!("{p}.mlp.b2")),
            };
            layers.push(LayerWeights { attn, mlp });
        }
        let final_gain = config.final_norm.then(|| vector("final_norm.gain"));
        let head = OutputHead {
            final_gain,
            weight: Matrix::new(config.classes, d, vector("head.weight"))?,
            bias: vector("head.bias"),
        };
        Ok(Self {
            config,
            encoder,
            layers,
            head,
        })
    }

    pub fn embed(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.config.input_dim() {
            return Err(Error::Shape(format!(
                "token has {} features, model expects {}",
                input.len(),
                self.config.input_dim()
            )));
        }
        self.encoder
            .embed(input, self.config.encoder_relu, self.config.rms_eps)
    }

    pub fn scores(&self, hidden: &[f64]) -> Result<Vec<f64>> {
        self.head.scores(hidden, self.config.rms_eps)
    }
}

pub(crate) fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let normal = Normal::new(0.0, 1.0 / (cols as f64).sqrt()).expect("valid std");
    Matrix::from_fn(rows, cols, |_, _| normal.sample(rng))
}

pub(crate) fn random_vector(n: usize, std: f64, rng: &mut impl Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, std).expect("valid std");
    (0..n).map(|_| normal.sample(rng)).collect()
}

fn gain_vector(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.8..1.2)).collect()
}
