//! Integer execution path.
//!
//! Weights are stored as power-of-two scaled integer codes, activations as
//! 16-bit codes of one calibrated format, and the KV-cache as 8-bit codes in
//! integer learning connections. Every arithmetic step is exact integer math
//! followed by round-half-even rescaling with saturation.

mod calibrate;
mod decoder;
mod model;
mod ops;

pub use calibrate::{calibrate, CalibrationOptions};
pub use decoder::{IntAttentionState, IntDecoder, IntLayer, IntLayerProbe, IntStats};
pub use model::{quantize_model, QuantModel, TensorQuantStats};
pub use ops::{even_key_code, int_vmm_acc, probabilities, requantize, saturating_add};
