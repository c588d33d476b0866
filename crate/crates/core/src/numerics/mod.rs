//! Dense linear algebra, the float and fixed-point nonlinear kernels, and
//! power-of-two quantization.
//!
//! Everything here is a pure function of its inputs.

pub mod fixed;
mod kernels;
mod linalg;
pub mod quant;

pub use fixed::{fixed_exp, fixed_recip, fixed_rmsnorm, fixed_rsqrt, fixed_softmax, Fixed};
pub use kernels::{relu, relu_in_place, rmsnorm, softmax, DEFAULT_RMS_EPS};
pub use linalg::{vmm, vmm_into, Matrix};
pub use quant::{
    choose_scale_exp, dequantize, quantize, rescale, round_half_even, round_shift, QuantSpec,
    QuantizedTensor,
};
