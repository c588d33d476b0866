//! Autoregressive decoder-only transformer inference in which the attention
//! KV-cache lives in plastic weight matrices, rewritten token by token through
//! local sum-of-products learning rules.
//!
//! * [`numerics`]: dense kernels, fixed-point exp/recip/rsqrt, quantization.
//! * [`rulelang`]: parser and evaluator for plasticity rule expressions.
//! * [`plasticity`]: learning connections with graded spikes and traces.
//! * [`attention`]: self-attention realized on learning connections.
//! * [`reference`]: dense reference transformer (step and parallel modes).
//! * [`quantized`]: integer execution of the same model.
//! * [`runtime`]: checkpoints, episodes, evaluation.

pub mod attention;
pub mod error;
pub mod model;
pub mod numerics;
pub mod plasticity;
pub mod quantized;
pub mod reference;
pub mod rulelang;
pub mod runtime;

pub use error::{Error, Result};
