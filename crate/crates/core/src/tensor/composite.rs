//! Multi-primitive operations built on the tape.

use alloc::vec::Vec;

use super::tape::{Axis, Tape, Var};
use crate::error::{Error, Result};
use crate::real::Real;

/// Depthwise pass followed by 1×1 pointwise mixing, `x: [n × d] → [n × d_out]`.
/// Rows with `mask[i] == false` are zeroed before convolving so they never
/// reach real positions.
pub fn depthwise_separable_conv1d<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    depth_kernels: Var,
    point_kernels: Var,
    mask: &[bool],
) -> Result<Var> {
    let x = tape.mask_rows(x, mask)?;
    let depth = tape.depthwise_conv1d(x, depth_kernels)?;
    tape.matmul(depth, point_kernels)
}

/// Scaled dot-product self-attention, `softmax(QKᵀ/√d_head)·V` per head,
/// heads concatenated. Keys with `key_mask[j] == false` get zero weight.
pub fn self_attention<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    wq: Var,
    wk: Var,
    wv: Var,
    key_mask: &[bool],
    heads: usize,
) -> Result<Var> {
    let (n, d) = tape.value(x).dims2()?;
    if heads == 0 || d % heads != 0 {
        return Err(Error::Config(alloc::format!("{heads} heads do not divide width {d}")));
    }
    if key_mask.len() != n {
        return Err(Error::shape("self_attention", tape.shape(x), &[key_mask.len()]));
    }
    let q = tape.matmul(x, wq)?;
    let k = tape.matmul(x, wk)?;
    let v = tape.matmul(x, wv)?;
    let dh = d / heads;
    let scale = T::one() / T::lit(dh as f64).sqrt();
    let mask: Vec<bool> = (0..n).flat_map(|_| key_mask.iter().copied()).collect();
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            (
                tape.slice_cols(q, h * dh, (h + 1) * dh)?,
                tape.slice_cols(k, h * dh, (h + 1) * dh)?,
                tape.slice_cols(v, h * dh, (h + 1) * dh)?,
            )
        };
        let kt = tape.transpose(kh)?;
        let logits = tape.matmul(qh, kt)?;
        let logits = tape.scale(logits, scale)?;
        let weights = tape.masked_softmax(logits, Axis::Cols, &mask)?;
        outs.push(tape.matmul(weights, vh)?);
    }
    if outs.len() == 1 {
        Ok(outs[0])
    } else {
        tape.concat_cols(&outs)
    }
}
