//! Dense reference transformer.
//!
//! Runs token by token with an explicit tensor KV-cache, or over a whole
//! sequence at once with a causal (and optionally banded) mask. Serves as the
//! oracle for the plastic attention path.

mod attention;
mod decoder;

pub use attention::{attention_parallel, RefAttentionBlock};
pub use decoder::{
    forward_parallel, layer_parallel, mlp_step, ActivationObserver, AttentionKind, AttentionState,
    FloatDecoder, Site, TransformerLayer,
};
