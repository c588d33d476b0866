//! Snapshots of the plastic KV-cache in the checkpoint container.

use serde_json::json;

use super::checkpoint::{
    Checkpoint, CheckpointHeader, DType, TensorData, TensorEntry, KIND_ENGINE_STATE,
};
use crate::attention::PlasticAttentionHead;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::plasticity::SynapseScalar;
use crate::quantized::{IntAttentionState, IntDecoder};
use crate::reference::{AttentionState, FloatDecoder};

fn head_tensors<T: SynapseScalar>(
    l: usize,
    h: usize,
    head: &PlasticAttentionHead<T>,
    int: Option<(i32, i32)>,
    entries: &mut Vec<TensorEntry>,
    data: &mut Vec<TensorData>,
) {
    let w = head.scheduler().window();
    let dh = head.d_head();
    for (what, shape, values, exp) in [
        ("keys", vec![w, dh], head.keys().weights(), int.map(|e| e.0)),
        (
            "values",
            vec![dh, w],
            head.values().weights(),
            int.map(|e| e.1),
        ),
    ] {
        entries.push(TensorEntry {
            name: format!("layers.{l}.heads.{h}.{what}"),
            shape,
            dtype: if int.is_some() {
                DType::Int8
            } else {
                DType::Float32
            },
            scale_exp: exp.unwrap_or(0),
        });
        data.push(match int {
            Some(_) => TensorData::Int(values.iter().map(|v| v.to_f64() as i64).collect()),
            None => TensorData::Float(values.iter().map(|v| v.to_f64() as f32).collect()),
        });
    }
}

fn finish(
    config: &ModelConfig,
    steps: usize,
    entries: Vec<TensorEntry>,
    data: Vec<TensorData>,
) -> Checkpoint {
    let window = config.window;
    Checkpoint {
        header: CheckpointHeader {
            kind: KIND_ENGINE_STATE.into(),
            config: config.clone(),
            tensors: entries,
            meta: json!({
                "steps": steps,
                "filled": steps.min(window),
                "next_slot": steps % window,
            }),
        },
        data,
    }
}

/// Keys and values of every plastic head of a float decoder.
pub fn float_engine_state(dec: &FloatDecoder<'_>, config: &ModelConfig) -> Result<Checkpoint> {
    let (mut entries, mut data) = (Vec::new(), Vec::new());
    for (l, layer) in dec.layers().iter().enumerate() {
        let AttentionState::Plastic(p) = layer.attention() else {
            return Err(Error::Config("engine state needs plastic attention".into()));
        };
        for (h, head) in p.heads().iter().enumerate() {
            head_tensors(l, h, head, None, &mut entries, &mut data);
        }
    }
    Ok(finish(config, dec.steps(), entries, data))
}

/// Keys and values of every plastic head of an integer decoder.
pub fn int_engine_state(dec: &IntDecoder<'_>, config: &ModelConfig) -> Result<Checkpoint> {
    let (mut entries, mut data) = (Vec::new(), Vec::new());
    for (l, layer) in dec.layers().iter().enumerate() {
        let IntAttentionState::Plastic(heads) = layer.attention() else {
            return Err(Error::Config("engine state needs plastic attention".into()));
        };
        let exps = (layer.key_spec().scale_exp, layer.value_spec().scale_exp);
        for (h, head) in heads.iter().enumerate() {
            head_tensors(l, h, head, Some(exps), &mut entries, &mut data);
        }
    }
    Ok(finish(config, dec.steps(), entries, data))
}
