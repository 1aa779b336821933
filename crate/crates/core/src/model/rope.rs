//! Rotary position embedding on `[seq, heads, head_dim]` tensors.

use crate::numerics::kernels::RopeTable;
use crate::numerics::{Scalar, Tensor};
use crate::{Error, Result};

/// Rotates each pair `(2i, 2i+1)` of every head by `pos · theta^(-2i/head_dim)`.
pub fn rope_apply<S: Scalar>(x: &Tensor<S>, positions: &[usize], theta: f64) -> Result<Tensor<S>> {
    let (seq, heads, head_dim) = match x.shape()[..] {
        [s, h, d] => (s, h, d),
        _ => return Err(Error::shape("rope_apply", format!("expected [seq, heads, head_dim], got {:?}", x.shape()))),
    };
    if head_dim % 2 != 0 {
        return Err(Error::Config(format!("head_dim {head_dim} must be even")));
    }
    if positions.len() != seq {
        return Err(Error::shape("rope_apply", format!("{} positions for {seq} rows", positions.len())));
    }
    let table = RopeTable::new(positions, head_dim, theta);
    let mut out = x.clone();
    table.rotate(out.data_mut(), heads, false);
    Ok(out)
}
