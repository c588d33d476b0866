//! Self-attention realized on learning connections.
//!
//! Each head owns two plastic matrices. The keys connection (`W x d_head`)
//! stores one key per row and is written by the two-factor keys rule when its
//! slot neuron fires; the values connection (`d_head x W`) stores one value per
//! column and is written by the three-factor values rule when the slot's
//! pre-synaptic neuron fires. Slots are reused first-in first-out, which gives
//! sliding-window attention once more than `W` tokens have been seen.

mod encoding;
mod head;
mod layer;
mod scheduler;

pub use encoding::{decode_signed_trace, encode_key, encode_signed_trace, KEY_TRACE_OFFSET};
pub use head::{HeadProbe, PlasticAttentionHead};
pub use layer::PlasticAttentionLayer;
pub use scheduler::SlotScheduler;
