use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, QuantConfig};
use crate::numerics::{choose_scale_exp, quantize, QuantSpec, QuantizedTensor};

/// Per-tensor outcome of quantizing float weights.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TensorQuantStats {
    pub name: String,
    pub bits: u32,
    pub scale_exp: i32,
    pub saturated: usize,
    /// Largest `|dequantized - original|` over entries that were not clamped.
    pub max_abs_error: f64,
}

/// Integer weights of the few-shot model. Tensors are kept in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantModel {
    config: ModelConfig,
    tensors: Vec<(String, QuantizedTensor)>,
    index: HashMap<String, usize>,
}

fn is_matrix(shape: &[usize]) -> bool {
    shape.len() == 2
}

impl QuantModel {
    /// Builds from named integer tensors. `config.quant` must be set and every
    /// tensor's bitwidth must match the bitwidth it declares for its group.
    pub fn from_tensors(
        config: ModelConfig,
        mut tensors: HashMap<String, QuantizedTensor>,
    ) -> Result<Self> {
        config.validate()?;
        let qc = quant_config(&config)?.clone();
        let shapes = config.tensor_shapes();
        let mut ordered = Vec::with_capacity(shapes.len());
        for (name, shape) in &shapes {
            let t = tensors
                .remove(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if &t.shape != shape {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has shape {:?}, expected {shape:?}",
                    t.shape
                )));
            }
            let bits = if is_matrix(shape) {
                qc.weight_bits
            } else {
                qc.vector_bits
            };
            if t.spec.bits != bits || !t.spec.signed {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} is {}-bit, config expects signed {bits}-bit",
                    t.spec.bits
                )));
            }
            ordered.push((name.clone(), t));
        }
        if !tensors.is_empty() {
            let mut extra: Vec<_> = tensors.into_keys().collect();
            extra.sort();
            return Err(Error::Checkpoint(format!("unknown tensors {extra:?}")));
        }
        let index = ordered
            .iter()
            .enumerate()
            .map(|(i, (n, _))| (n.clone(), i))
            .collect();
        Ok(Self {
            config,
            tensors: ordered,
            index,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn quant(&self) -> &QuantConfig {
        self.config.quant.as_ref().expect("checked at construction")
    }

    pub fn tensors(&self) -> &[(String, QuantizedTensor)] {
        &self.tensors
    }

    pub fn tensor(&self, name: &str) -> Result<&QuantizedTensor> {
        self.index
            .get(name)
            .map(|&i| &self.tensors[i].1)
            .ok_or_else(|| Error::Checkpoint(format!("no tensor {name}")))
    }

    /// Float model holding exactly the dequantized codes.
    pub fn dequantize(&self) -> Result<Model> {
        let map = self
            .tensors
            .iter()
            .map(|(n, t)| (n.clone(), (t.shape.clone(), t.dequantize())))
            .collect();
        Model::from_tensors(self.config.clone(), map)
    }
}

fn quant_config(config: &ModelConfig) -> Result<&QuantConfig> {
    let qc = config
        .quant
        .as_ref()
        .ok_or_else(|| Error::Config("model config has no quantization formats".into()))?;
    qc.validate(config.layers)?;
    Ok(qc)
}

/// Quantizes every tensor of `model` with a per-tensor power-of-two scale.
///
/// The scale is the smallest that covers the tensor's largest magnitude,
/// unless `keep` names an exponent for that tensor.
pub fn quantize_model(
    model: &Model,
    quant: QuantConfig,
    keep: &HashMap<String, i32>,
) -> Result<(QuantModel, Vec<TensorQuantStats>)> {
    let mut config = model.config.clone();
    config.quant = Some(quant.clone());
    quant_config(&config)?;
    let mut stats = Vec::new();
    let mut tensors = HashMap::new();
    for (name, shape, values) in model.tensors() {
        let bits = if is_matrix(&shape) {
            quant.weight_bits
        } else {
            quant.vector_bits
        };
        let exp = match keep.get(&name) {
            Some(&e) => e,
            None => {
                let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                choose_scale_exp(max, bits, true)
            }
        };
        let t = quantize(&values, &shape, QuantSpec::signed(bits, exp))?;
        let scale = t.spec.scale();
        let max_abs_error = values
            .iter()
            .zip(&t.codes)
            .filter(|(_, c)| **c != t.spec.min_code() && **c != t.spec.max_code())
            .map(|(v, c)| (*c as f64 * scale - v).abs())
            .fold(0.0, f64::max);
        stats.push(TensorQuantStats {
            name: name.clone(),
            bits,
            scale_exp: exp,
            saturated: t.saturated,
            max_abs_error,
        });
        tensors.insert(name, t);
    }
    Ok((QuantModel::from_tensors(config, tensors)?, stats))
}
