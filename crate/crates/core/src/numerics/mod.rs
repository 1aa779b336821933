//! Dense tensors, reverse-mode autodiff and the optimizer used for toy-scale
//! training.
//!
//! Values live in [`Tensor`]; differentiable computation is recorded on a
//! [`Tape`] and replayed backwards. The raw loops shared by the tape and the
//! inference path sit in [`kernels`].

pub mod checkpoint;
pub mod kernels;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use optim::{AdamW, AdamWConfig, OptimizerState};
pub use tape::{Tape, Var};
pub use tensor::{DType, Scalar, Tensor};

use crate::Result;

/// Matrix product of two rank-2 tensors.
pub fn matmul<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    let mut tape = Tape::new();
    let (va, vb) = (tape.constant(a.clone()), tape.constant(b.clone()));
    let out = tape.matmul(va, vb)?;
    Ok(tape.take_value(out))
}

/// Valid (unpadded) strided 1-D convolution over `[time, channels_in]`.
pub fn conv1d<S: Scalar>(input: &Tensor<S>, kernel: &Tensor<S>, stride: usize) -> Result<Tensor<S>> {
    let mut tape = Tape::new();
    let (vi, vk) = (tape.constant(input.clone()), tape.constant(kernel.clone()));
    let out = tape.conv1d(vi, vk, stride)?;
    Ok(tape.take_value(out))
}

/// Row-wise softmax of a rank-2 tensor.
pub fn softmax_rows<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>> {
    let mut tape = Tape::new();
    let v = tape.constant(x.clone());
    let out = tape.softmax(v)?;
    Ok(tape.take_value(out))
}

/// Mean token-level negative log-likelihood of `targets` under `logits`.
pub fn softmax_cross_entropy<S: Scalar>(logits: &Tensor<S>, targets: &[usize]) -> Result<S> {
    let mut tape = Tape::new();
    let v = tape.constant(logits.clone());
    let out = tape.cross_entropy(v, targets)?;
    Ok(tape.value(out).data()[0])
}

/// Output length of a valid convolution.
pub fn conv_output_len(time: usize, width: usize, stride: usize) -> Option<usize> {
    if stride == 0 || width == 0 || time < width {
        None
    } else {
        Some((time - width) / stride + 1)
    }
}
