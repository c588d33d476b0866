use std::collections::VecDeque;

use crate::attention::{HeadProbe, PlasticAttentionHead};
use crate::error::{Error, Result};
use crate::numerics::{fixed_rmsnorm, quantize, Fixed, QuantSpec, QuantizedTensor};
use crate::plasticity::Bounds;
use crate::reference::AttentionKind;

use super::model::QuantModel;
use super::ops::{even_key_code, int_vmm_acc, probabilities, requantize, saturating_add};

/// Clamping counters of the integer path.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct IntStats {
    /// Activation codes clamped to the activation format.
    pub activation: u64,
    /// Keys clamped to the cache format.
    pub key: u64,
    /// Values clamped to the cache format.
    pub value: u64,
}

impl IntStats {
    fn merge(&mut self, other: IntStats) {
        self.activation += other.activation;
        self.key += other.key;
        self.value += other.value;
    }
}

#[derive(Debug, Clone)]
struct LayerTensors<'m> {
    attn_gain: &'m QuantizedTensor,
    wq: &'m QuantizedTensor,
    wk: &'m QuantizedTensor,
    wv: &'m QuantizedTensor,
    wo: &'m QuantizedTensor,
    bo: &'m QuantizedTensor,
    mlp_gain: &'m QuantizedTensor,
    w1: &'m QuantizedTensor,
    w2: &'m QuantizedTensor,
    b2: &'m QuantizedTensor,
}

impl<'m> LayerTensors<'m> {
    fn load(model: &'m QuantModel, l: usize) -> Result<Self> {
        let t = |s: &str| model.tensor(&format!("layers.{l}.{s}"));
        Ok(Self {
            attn_gain: t("attn.norm_gain")?,
            wq: t("attn.wq")?,
            wk: t("attn.wk")?,
            wv: t("attn.wv")?,
            wo: t("attn.wo")?,
            bo: t("attn.bo")?,
            mlp_gain: t("mlp.norm_gain")?,
            w1: t("mlp.w1")?,
            w2: t("mlp.w2")?,
            b2: t("mlp.b2")?,
        })
    }
}

/// Integer KV-cache of one layer.
#[derive(Debug, Clone)]
pub enum IntAttentionState {
    /// Per head, the cached key and value codes, oldest first.
    Reference {
        keys: Vec<VecDeque<Vec<i64>>>,
        values: Vec<VecDeque<Vec<i64>>>,
        window: usize,
        steps: usize,
    },
    Plastic(Vec<PlasticAttentionHead<i64>>),
}

/// Record of the most recent step of a layer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IntLayerProbe {
    /// Normalized layer input that the projections saw.
    pub xn: Vec<i64>,
    pub heads: Vec<HeadProbe<i64>>,
}

/// One integer transformer layer.
#[derive(Debug, Clone)]
pub struct IntLayer<'m> {
    w: LayerTensors<'m>,
    state: IntAttentionState,
    act: QuantSpec,
    key: QuantSpec,
    value: QuantSpec,
    prob: QuantSpec,
    heads: usize,
    scaled: bool,
    eps: Fixed,
    probe: IntLayerProbe,
}

impl<'m> IntLayer<'m> {
    fn new(model: &'m QuantModel, l: usize, kind: AttentionKind) -> Result<Self> {
        let c = model.config();
        let qc = model.quant();
        let key = qc.cache_spec(qc.key_exps[l]);
        let value = qc.cache_spec(qc.value_exps[l]);
        let dh = c.d_head();
        let state = match kind {
            AttentionKind::Reference => IntAttentionState::Reference {
                keys: vec![VecDeque::new(); c.heads],
                values: vec![VecDeque::new(); c.heads],
                window: c.window,
                steps: 0,
            },
            AttentionKind::Plastic => {
                let trace = Bounds::from_spec(&qc.trace_spec());
                let weights = Bounds::from_spec(&qc.cache_spec(0));
                IntAttentionState::Plastic(
                    (0..c.heads)
                        .map(|_| PlasticAttentionHead::new(dh, c.window, weights, trace))
                        .collect(),
                )
            }
        };
        Ok(Self {
            w: LayerTensors::load(model, l)?,
            state,
            act: qc.activation,
            key,
            value,
            prob: qc.prob_spec(),
            heads: c.heads,
            scaled: c.scaled_attention,
            eps: Fixed::from_code(1, qc.activation.scale_exp),
            probe: IntLayerProbe::default(),
        })
    }

    pub fn attention(&self) -> &IntAttentionState {
        &self.state
    }

    pub fn last_step(&self) -> &IntLayerProbe {
        &self.probe
    }

    pub fn key_spec(&self) -> QuantSpec {
        self.key
    }

    pub fn value_spec(&self) -> QuantSpec {
        self.value
    }

    fn norm(&self, x: &[i64], gain: &QuantizedTensor) -> Result<(Vec<i64>, usize)> {
        fixed_rmsnorm(
            x,
            self.act.scale_exp,
            &gain.codes,
            gain.spec.scale_exp,
            self.eps,
            self.act,
        )
    }

    fn step(&mut self, x: &[i64], t: usize) -> Result<(Vec<i64>, IntStats)> {
        let a = self.act.scale_exp;
        let mut st = IntStats::default();
        let (xn, s) = self.norm(x, self.w.attn_gain)?;
        st.activation += s as u64;

        let (q, s) = requantize(
            &int_vmm_acc(self.w.wq, &xn)?,
            self.w.wq.spec.scale_exp + a,
            None,
            self.act,
        )?;
        st.activation += s as u64;
        let k_exp = self.w.wk.spec.scale_exp + a;
        let k: Vec<i64> = int_vmm_acc(self.w.wk, &xn)?
            .into_iter()
            .map(|acc| {
                let (c, sat) = even_key_code(acc, k_exp, self.key);
                st.key += sat as u64;
                c
            })
            .collect();
        let (v, s) = requantize(
            &int_vmm_acc(self.w.wv, &xn)?,
            self.w.wv.spec.scale_exp + a,
            None,
            self.value,
        )?;
        st.value += s as u64;

        let dh = q.len() / self.heads;
        let score_exp = a + self.key.scale_exp;
        let mix_exp = self.prob.scale_exp + self.value.scale_exp;
        let scale_dim = self.scaled.then_some(dh);
        let mut y_acc: Vec<i128> = Vec::with_capacity(q.len());
        let mut probes = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let r = h * dh..(h + 1) * dh;
            let (qh, kh, vh) = (&q[r.clone()], &k[r.clone()], &v[r]);
            let probe = match &mut self.state {
                IntAttentionState::Plastic(heads) => {
                    let head = &mut heads[h];
                    let slot = head.scheduler().begin(t)?;
                    st.key += head.write_key(slot, kh)? as u64;
                    let slots = head.scheduler().slot_mask(t);
                    let scores = head.scores(qh, &slots)?;
                    let p = probabilities(&scores, score_exp, scale_dim, self.prob)?;
                    head.write_value(slot, vh)?;
                    let y = head.mix(&p, &slots)?;
                    head.advance();
                    HeadProbe {
                        slot,
                        slots,
                        q: qh.to_vec(),
                        k: kh.to_vec(),
                        v: vh.to_vec(),
                        scores,
                        p,
                        y,
                    }
                }
                IntAttentionState::Reference {
                    keys,
                    values,
                    window,
                    steps,
                } => {
                    if *steps != t {
                        return Err(Error::StepOrder {
                            expected: *steps,
                            got: t,
                        });
                    }
                    let (keys, values) = (&mut keys[h], &mut values[h]);
                    keys.push_back(kh.to_vec());
                    values.push_back(vh.to_vec());
                    if keys.len() > *window {
                        keys.pop_front();
                        values.pop_front();
                    }
                    let scores: Vec<i64> = keys
                        .iter()
                        .map(|kc| kc.iter().zip(qh).map(|(a, b)| a * b).sum())
                        .collect();
                    let p = probabilities(&scores, score_exp, scale_dim, self.prob)?;
                    let mut y = vec![0i64; dh];
                    for (pi, vc) in p.iter().zip(values.iter()) {
                        y.iter_mut().zip(vc).for_each(|(y, v)| *y += pi * v);
                    }
                    if h + 1 == self.heads {
                        *steps += 1;
                    }
                    HeadProbe {
                        slot: t % *window,
                        slots: Vec::new(),
                        q: qh.to_vec(),
                        k: kh.to_vec(),
                        v: vh.to_vec(),
                        scores,
                        p,
                        y,
                    }
                }
            };
            y_acc.extend(probe.y.iter().map(|&v| v as i128));
            probes.push(probe);
        }
        let (y, s) = requantize(&y_acc, mix_exp, None, self.act)?;
        st.activation += s as u64;
        let (z, s) = requantize(
            &int_vmm_acc(self.w.wo, &y)?,
            self.w.wo.spec.scale_exp + a,
            Some(self.w.bo),
            self.act,
        )?;
        st.activation += s as u64;
        let (h, s) = saturating_add(x, &z, self.act);
        st.activation += s as u64;

        let (hn, s) = self.norm(&h, self.w.mlp_gain)?;
        st.activation += s as u64;
        let (mut hidden, s) = requantize(
            &int_vmm_acc(self.w.w1, &hn)?,
            self.w.w1.spec.scale_exp + a,
            None,
            self.act,
        )?;
        st.activation += s as u64;
        hidden.iter_mut().for_each(|v| *v = (*v).max(0));
        let (m, s) = requantize(
            &int_vmm_acc(self.w.w2, &hidden)?,
            self.w.w2.spec.scale_exp + a,
            Some(self.w.b2),
            self.act,
        )?;
        st.activation += s as u64;
        let (out, s) = saturating_add(&h, &m, self.act);
        st.activation += s as u64;

        self.probe = IntLayerProbe { xn, heads: probes };
        Ok((out, st))
    }
}

/// Token-by-token integer execution of a quantized model.
#[derive(Debug, Clone)]
pub struct IntDecoder<'m> {
    model: &'m QuantModel,
    layers: Vec<IntLayer<'m>>,
    steps: usize,
    stats: IntStats,
}

impl<'m> IntDecoder<'m> {
    pub fn new(model: &'m QuantModel, kind: AttentionKind) -> Result<Self> {
        let layers = (0..model.config().layers)
            .map(|l| IntLayer::new(model, l, kind))
            .collect::<Result<_>>()?;
        Ok(Self {
            model,
            layers,
            steps: 0,
            stats: IntStats::default(),
        })
    }

    pub fn layers(&self) -> &[IntLayer<'m>] {
        &self.layers
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn stats(&self) -> IntStats {
        self.stats
    }

    pub fn activation_spec(&self) -> QuantSpec {
        self.model.quant().activation
    }

    /// Feeds one raw token and returns the final hidden codes.
    pub fn step(&mut self, input: &[f64]) -> Result<Vec<i64>> {
        let c = self.model.config();
        if self.steps >= c.max_seq_len {
            return Err(Error::Shape(format!(
                "sequence longer than max_seq_len {}",
                c.max_seq_len
            )));
        }
        if input.len() != c.input_dim() {
            return Err(Error::Shape(format!(
                "token has {} features, model expects {}",
                input.len(),
                c.input_dim()
            )));
        }
        let act = self.activation_spec();
        let a = act.scale_exp;
        let mut st = IntStats::default();
        let inq = quantize(input, &[input.len()], act)?;
        st.activation += inq.saturated as u64;

        let ew = self.model.tensor("encoder.weight")?;
        let (mut h, s) = requantize(
            &int_vmm_acc(ew, &inq.codes)?,
            ew.spec.scale_exp + a,
            Some(self.model.tensor("encoder.bias")?),
            act,
        )?;
        st.activation += s as u64;
        if c.encoder_relu {
            h.iter_mut().for_each(|v| *v = (*v).max(0));
        }
        let gain = self.model.tensor("encoder.norm_gain")?;
        let eps = Fixed::from_code(1, a);
        let (mut x, s) = fixed_rmsnorm(&h, a, &gain.codes, gain.spec.scale_exp, eps, act)?;
        st.activation += s as u64;
        for layer in &mut self.layers {
            let (out, s) = layer.step(&x, self.steps)?;
            st.merge(s);
            x = out;
        }
        self.steps += 1;
        self.stats.merge(st);
        Ok(x)
    }

    /// Class score codes (activation format) for final hidden codes.
    pub fn score_codes(&mut self, hidden: &[i64]) -> Result<Vec<i64>> {
        let act = self.activation_spec();
        let a = act.scale_exp;
        let mut x = hidden.to_vec();
        if self.model.config().final_norm {
            let g = self.model.tensor("final_norm.gain")?;
            let (xn, s) = fixed_rmsnorm(
                &x,
                a,
                &g.codes,
                g.spec.scale_exp,
                Fixed::from_code(1, a),
                act,
            )?;
            self.stats.activation += s as u64;
            x = xn;
        }
        let w = self.model.tensor("head.weight")?;
        let (s, sat) = requantize(
            &int_vmm_acc(w, &x)?,
            w.spec.scale_exp + a,
            Some(self.model.tensor("head.bias")?),
            act,
        )?;
        self.stats.activation += sat as u64;
        Ok(s)
    }

    /// Feeds one raw token and returns dequantized class scores.
    pub fn step_scores(&mut self, input: &[f64]) -> Result<Vec<f64>> {
        let h = self.step(input)?;
        let codes = self.score_codes(&h)?;
        let scale = self.activation_spec().scale();
        Ok(codes.into_iter().map(|c| c as f64 * scale).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Model, ModelConfig};
    use crate::quantized::{calibrate, quantize_model, CalibrationOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seqs(n: usize, len: usize, dim: usize, seed: u64) -> Vec<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                (0..len)
                    .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
                    .collect()
            })
            .collect()
    }

    fn setup(window: usize) -> (Model, QuantModel, Vec<Vec<Vec<f64>>>) {
        let mut cfg = ModelConfig::few_shot(2, 16, 2, 8, 3, 2);
        cfg.window = window;
        let model = Model::random(cfg.clone(), 5).unwrap();
        let data = seqs(4, cfg.max_seq_len, cfg.input_dim(), 11);
        let qc = calibrate(&model, &data, &CalibrationOptions::default()).unwrap();
        let (qm, _) = quantize_model(&model, qc, &Default::default()).unwrap();
        (model, qm, data)
    }

    #[test]
    fn plastic_and_reference_caches_agree() {
        for window in [3, 7] {
            let (_, qm, data) = setup(window);
            for seq in &data {
                let mut r = IntDecoder::new(&qm, AttentionKind::Reference).unwrap();
                let mut p = IntDecoder::new(&qm, AttentionKind::Plastic).unwrap();
                for tok in seq {
                    assert_eq!(r.step_scores(tok).unwrap(), p.step_scores(tok).unwrap());
                    for (lr, lp) in r.layers().iter().zip(p.layers()) {
                        let IntAttentionState::Reference { keys, values, .. } = lr.attention()
                        else {
                            panic!()
                        };
                        let IntAttentionState::Plastic(heads) = lp.attention() else {
                            panic!()
                        };
                        for (h, head) in heads.iter().enumerate() {
                            let probe = &lp.last_step().heads[h];
                            assert_eq!(head.keys().row(probe.slot), &keys[h].back().unwrap()[..]);
                            assert_eq!(
                                head.values().column(probe.slot),
                                *values[h].back().unwrap()
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn integer_scores_track_float() {
        let (model, qm, data) = setup(7);
        let deq = qm.dequantize().unwrap();
        let mut worst: f64 = 0.0;
        for seq in &data {
            let mut f =
                crate::reference::FloatDecoder::new(&deq, AttentionKind::Reference).unwrap();
            let mut i = IntDecoder::new(&qm, AttentionKind::Plastic).unwrap();
            for tok in seq {
                let a = f.step_scores(tok).unwrap();
                let b = i.step_scores(tok).unwrap();
                for (x, y) in a.iter().zip(&b) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
        let _ = model;
        assert!(worst < 0.25, "max score gap {worst}");
    }
}
