//! `PTXF` tensor container.
//!
//! Layout: magic `PTXF`, one version byte, a little-endian `u32` header
//! length, a JSON header, then every tensor blob in manifest order. Blobs are
//! little-endian `f32`, `i8` or `i16`.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::numerics::{QuantSpec, QuantizedTensor};
use crate::quantized::QuantModel;

pub const MAGIC: &[u8; 4] = b"PTXF";
pub const VERSION: u8 = 1;
pub const KIND_MODEL: &str = "model";
pub const KIND_ENGINE_STATE: &str = "engine_state";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    Float32,
    Int8,
    Int16,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::Float32 => 4,
            DType::Int8 => 1,
            DType::Int16 => 2,
        }
    }

    fn for_bits(bits: u32) -> Result<Self> {
        match bits {
            2..=8 => Ok(DType::Int8),
            9..=16 => Ok(DType::Int16),
            _ => Err(Error::Checkpoint(format!(
                "no integer element type holds {bits} bits"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: DType,
    /// Dequantized value is `code * 2^scale_exp`; 0 for float tensors.
    #[serde(default)]
    pub scale_exp: i32,
}

impl TensorEntry {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn byte_len(&self) -> usize {
        self.numel() * self.dtype.size()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: String,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub meta: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    Float(Vec<f32>),
    Int(Vec<i64>),
}

impl TensorData {
    pub fn to_f64(&self, scale_exp: i32) -> Vec<f64> {
        match self {
            TensorData::Float(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::Int(v) => {
                let s = (scale_exp as f64).exp2();
                v.iter().map(|&c| c as f64 * s).collect()
            }
        }
    }
}

/// In-memory container: header plus one payload per manifest entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub data: Vec<TensorData>,
}

impl Checkpoint {
    /// Float checkpoint. Weights are stored as `f32`.
    pub fn from_model(model: &Model) -> Self {
        let mut entries = Vec::new();
        let mut data = Vec::new();
        for (name, shape, values) in model.tensors() {
            entries.push(TensorEntry {
                name,
                shape,
                dtype: DType::Float32,
                scale_exp: 0,
            });
            data.push(TensorData::Float(
                values.iter().map(|&v| v as f32).collect(),
            ));
        }
        let mut config = model.config.clone();
        config.quant = None;
        Self {
            header: CheckpointHeader {
                kind: KIND_MODEL.into(),
                config,
                tensors: entries,
                meta: serde_json::Value::Null,
            },
            data,
        }
    }

    pub fn from_quant(model: &QuantModel) -> Result<Self> {
        let mut entries = Vec::new();
        let mut data = Vec::new();
        for (name, t) in model.tensors() {
            entries.push(TensorEntry {
                name: name.clone(),
                shape: t.shape.clone(),
                dtype: DType::for_bits(t.spec.bits)?,
                scale_exp: t.spec.scale_exp,
            });
            data.push(TensorData::Int(t.codes.clone()));
        }
        Ok(Self {
            header: CheckpointHeader {
                kind: KIND_MODEL.into(),
                config: model.config().clone(),
                tensors: entries,
                meta: serde_json::Value::Null,
            },
            data,
        })
    }

    pub fn is_quantized(&self) -> bool {
        self.header.config.quant.is_some()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let len = u32::try_from(header.len())
            .map_err(|_| Error::Checkpoint("header larger than 4 GiB".into()))?;
        let mut out = Vec::with_capacity(9 + header.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&self.blobs()?);
        Ok(out)
    }

    fn blobs(&self) -> Result<Vec<u8>> {
        if self.data.len() != self.header.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "{} payloads for {} manifest entries",
                self.data.len(),
                self.header.tensors.len()
            )));
        }
        let mut out = Vec::new();
        for (e, d) in self.header.tensors.iter().zip(&self.data) {
            match (e.dtype, d) {
                (DType::Float32, TensorData::Float(v)) if v.len() == e.numel() => v
                    .iter()
                    .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                (DType::Int8, TensorData::Int(v)) if v.len() == e.numel() => {
                    for &c in v {
                        let c = i8::try_from(c).map_err(|_| range_err(&e.name, c))?;
                        out.extend_from_slice(&c.to_le_bytes());
                    }
                }
                (DType::Int16, TensorData::Int(v)) if v.len() == e.numel() => {
                    for &c in v {
                        let c = i16::try_from(c).map_err(|_| range_err(&e.name, c))?;
                        out.extend_from_slice(&c.to_le_bytes());
                    }
                }
                _ => {
                    return Err(Error::Checkpoint(format!(
                        "payload of {} does not match its manifest entry",
                        e.name
                    )))
                }
            }
        }
        Ok(out)
    }

    /// Parses and validates a container. Nothing is returned on error.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let need = |needed: usize, offset: usize| {
            if bytes.len() < offset + needed {
                Err(Error::Truncated {
                    needed,
                    offset,
                    len: bytes.len(),
                })
            } else {
                Ok(())
            }
        };
        need(4, 0)?;
        if &bytes[..4] != MAGIC {
            return Err(Error::Checkpoint(format!("bad magic {:?}", &bytes[..4])));
        }
        need(1, 4)?;
        if bytes[4] != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} (expected {VERSION})",
                bytes[4]
            )));
        }
        need(4, 5)?;
        let hlen = u32::from_le_bytes(bytes[5..9].try_into().expect("four bytes")) as usize;
        need(hlen, 9)?;
        let header: CheckpointHeader = serde_json::from_slice(&bytes[9..9 + hlen])?;
        let mut offset = 9 + hlen;
        let total: usize = header.tensors.iter().map(TensorEntry::byte_len).sum();
        need(total, offset)?;
        if bytes.len() != offset + total {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after the last tensor",
                bytes.len() - offset - total
            )));
        }
        let mut data = Vec::with_capacity(header.tensors.len());
        for e in &header.tensors {
            let blob = &bytes[offset..offset + e.byte_len()];
            offset += e.byte_len();
            data.push(match e.dtype {
                DType::Float32 => TensorData::Float(
                    blob.chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")))
                        .collect(),
                ),
                DType::Int8 => TensorData::Int(blob.iter().map(|&b| b as i8 as i64).collect()),
                DType::Int16 => TensorData::Int(
                    blob.chunks_exact(2)
                        .map(|c| i16::from_le_bytes([c[0], c[1]]) as i64)
                        .collect(),
                ),
            });
        }
        let ckpt = Self { header, data };
        ckpt.validate()?;
        tracing::info!(
            kind = %ckpt.header.kind,
            digest = %ckpt.digest(),
            config_digest = %ckpt.config_digest(),
            "loaded checkpoint"
        );
        Ok(ckpt)
    }

    fn validate(&self) -> Result<()> {
        let h = &self.header;
        let mut seen = std::collections::HashSet::new();
        for e in &h.tensors {
            if !seen.insert(e.name.as_str()) {
                return Err(Error::Checkpoint(format!("duplicate tensor {}", e.name)));
            }
        }
        let non_finite = self
            .data
            .iter()
            .any(|d| matches!(d, TensorData::Float(v) if v.iter().any(|x| !x.is_finite())));
        if non_finite {
            return Err(Error::Checkpoint("non-finite float tensor".into()));
        }
        match h.kind.as_str() {
            KIND_MODEL => {
                h.config.validate()?;
                let shapes = h.config.tensor_shapes();
                if shapes.len() != h.tensors.len() {
                    let unknown: Vec<_> = h
                        .tensors
                        .iter()
                        .filter(|e| !shapes.iter().any(|(n, _)| *n == e.name))
                        .map(|e| e.name.clone())
                        .collect();
                    return Err(Error::Checkpoint(format!(
                        "manifest has {} tensors, config needs {} (unknown: {unknown:?})",
                        h.tensors.len(),
                        shapes.len()
                    )));
                }
                for (e, (name, shape)) in h.tensors.iter().zip(&shapes) {
                    if &e.name != name {
                        return Err(Error::Checkpoint(format!(
                            "unexpected tensor {} where {name} belongs",
                            e.name
                        )));
                    }
                    if &e.shape != shape {
                        return Err(Error::Checkpoint(format!(
                            "tensor {name} has shape {:?}, config implies {shape:?}",
                            e.shape
                        )));
                    }
                }
                if let Some(q) = &h.config.quant {
                    q.validate(h.config.layers)?;
                    for (e, d) in h.tensors.iter().zip(&self.data) {
                        let bits = if e.shape.len() == 2 {
                            q.weight_bits
                        } else {
                            q.vector_bits
                        };
                        let TensorData::Int(codes) = d else {
                            return Err(Error::Checkpoint(format!(
                                "quantized checkpoint stores {} as float",
                                e.name
                            )));
                        };
                        let spec = QuantSpec::new(bits, true, e.scale_exp)?;
                        if let Some(c) = codes.iter().find(|c| !spec.contains(**c)) {
                            return Err(Error::Checkpoint(format!(
                                "tensor {} code {c} exceeds {bits} bits",
                                e.name
                            )));
                        }
                    }
                }
                Ok(())
            }
            KIND_ENGINE_STATE => Ok(()),
            other => Err(Error::Checkpoint(format!(
                "unknown checkpoint kind {other:?}"
            ))),
        }
    }

    /// Float model. Integer tensors are dequantized.
    pub fn to_model(&self) -> Result<Model> {
        self.expect_kind(KIND_MODEL)?;
        let map: HashMap<_, _> = self
            .header
            .tensors
            .iter()
            .zip(&self.data)
            .map(|(e, d)| (e.name.clone(), (e.shape.clone(), d.to_f64(e.scale_exp))))
            .collect();
        let mut config = self.header.config.clone();
        config.quant = None;
        Model::from_tensors(config, map)
    }

    /// Integer model; only for checkpoints that carry integer formats.
    pub fn to_quant(&self) -> Result<QuantModel> {
        self.expect_kind(KIND_MODEL)?;
        let q = self
            .header
            .config
            .quant
            .as_ref()
            .ok_or_else(|| Error::Checkpoint("checkpoint is not quantized".into()))?;
        let mut map = HashMap::new();
        for (e, d) in self.header.tensors.iter().zip(&self.data) {
            let TensorData::Int(codes) = d else {
                return Err(Error::Checkpoint(format!(
                    "{} is not an integer tensor",
                    e.name
                )));
            };
            let bits = if e.shape.len() == 2 {
                q.weight_bits
            } else {
                q.vector_bits
            };
            let t = QuantizedTensor::from_codes(
                codes.clone(),
                QuantSpec::new(bits, true, e.scale_exp)?,
                e.shape.clone(),
            )?;
            map.insert(e.name.clone(), t);
        }
        QuantModel::from_tensors(self.header.config.clone(), map)
    }

    fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.header.kind != kind {
            return Err(Error::Checkpoint(format!(
                "expected a {kind} checkpoint, found {}",
                self.header.kind
            )));
        }
        Ok(())
    }

    /// SHA-256 over all tensor blobs, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.blobs().unwrap_or_default()))
    }

    pub fn config_digest(&self) -> String {
        config_digest(&self.header.config)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn range_err(name: &str, code: i64) -> Error {
    Error::Checkpoint(format!(
        "tensor {name} code {code} does not fit its element type"
    ))
}

/// SHA-256 of the canonical JSON form of a config, hex encoded.
pub fn config_digest(config: &ModelConfig) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(json))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Model {
        Model::random(ModelConfig::few_shot(1, 8, 2, 4, 2, 1), 1).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let ck = Checkpoint::from_model(&model());
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        let again = Checkpoint::from_model(&back.to_model().unwrap());
        assert_eq!(again.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn header_layout() {
        let bytes = Checkpoint::from_model(&model()).to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"PTXF");
        assert_eq!(bytes[4], 1);
        let hlen = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[9..9 + hlen]).unwrap();
        assert_eq!(header["kind"], "model");
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = Checkpoint::from_model(&model()).to_bytes().unwrap();
        for cut in [0, 3, 7, 20, bytes.len() - 1] {
            assert!(Checkpoint::from_bytes(&bytes[..cut]).is_err());
        }
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::Truncated { .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'Q';
        assert!(matches!(
            Checkpoint::from_bytes(&bad),
            Err(Error::Checkpoint(_))
        ));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(
            Checkpoint::from_bytes(&bad),
            Err(Error::Checkpoint(_))
        ));
        let mut long = bytes;
        long.push(0);
        assert!(Checkpoint::from_bytes(&long).is_err());
    }
}
