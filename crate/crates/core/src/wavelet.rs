//! Single-level orthonormal 2-D Haar transform on feature maps.
//!
//! The low/high filter pair is (1/sqrt2, 1/sqrt2) and (1/sqrt2, -1/sqrt2),
//! applied with stride 2 along both axes. Per 2x2 block [[p, q], [r, s]]:
//!   ll = (p+q+r+s)/2   lh = (p+q-r-s)/2
//!   hl = (p-q+r-s)/2   hh = (p-q-r+s)/2
//! The transform is orthogonal, so it preserves energy exactly and its
//! adjoint equals its inverse; backward passes reuse the opposite kernel.

use crate::tensor::{Shape, Tensor};
use crate::{shape_err, Result};

/// Forward transform: (n, c, h, w) -> (n, 4c, h/2, w/2). The output stacks
/// the four subbands along channels as contiguous blocks [LL, LH, HL, HH],
/// each holding all c input channels in order.
pub fn dwt_stack(x: &Tensor) -> Result<Tensor> {
    let Shape { n, c, h, w } = x.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(shape_err(
            "dwt",
            format!("spatial dims must be even, got {}x{}", h, w),
        ));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(Shape::new(n, 4 * c, oh, ow));
    let xv = x.data();
    let ov = out.data_mut();
    let oplane = oh * ow;
    for ni in 0..n {
        for ci in 0..c {
            let src = (ni * c + ci) * h * w;
            // Base offsets of this channel inside each subband block.
            let b_ll = ((ni * 4 * c) + ci) * oplane;
            let b_lh = ((ni * 4 * c) + c + ci) * oplane;
            let b_hl = ((ni * 4 * c) + 2 * c + ci) * oplane;
            let b_hh = ((ni * 4 * c) + 3 * c + ci) * oplane;
            for oy in 0..oh {
                for ox in 0..ow {
                    let p = xv[src + (2 * oy) * w + 2 * ox];
                    let q = xv[src + (2 * oy) * w + 2 * ox + 1];
                    let r = xv[src + (2 * oy + 1) * w + 2 * ox];
                    let s = xv[src + (2 * oy + 1) * w + 2 * ox + 1];
                    let o = oy * ow + ox;
                    ov[b_ll + o] = (p + q + r + s) * 0.5;
                    ov[b_lh + o] = (p + q - r - s) * 0.5;
                    ov[b_hl + o] = (p - q + r - s) * 0.5;
                    ov[b_hh + o] = (p - q - r + s) * 0.5;
                }
            }
        }
    }
    Ok(out)
}

/// Inverse transform: (n, 4c, h, w) -> (n, c, 2h, 2w). Exact inverse of
/// `dwt_stack` up to f32 rounding.
pub fn idwt_stack(x: &Tensor) -> Result<Tensor> {
    let Shape { n, c: c4, h: oh, w: ow } = x.shape();
    if c4 % 4 != 0 {
        return Err(shape_err(
            "idwt",
            format!("channel count {} not divisible by 4", c4),
        ));
    }
    let c = c4 / 4;
    let mut out = Tensor::zeros(Shape::new(n, c, oh * 2, ow * 2));
    let xv = x.data();
    let ov = out.data_mut();
    let oplane = oh * ow;
    let (h, w) = (oh * 2, ow * 2);
    for ni in 0..n {
        for ci in 0..c {
            let dst = (ni * c + ci) * h * w;
            let b_ll = ((ni * 4 * c) + ci) * oplane;
            let b_lh = ((ni * 4 * c) + c + ci) * oplane;
            let b_hl = ((ni * 4 * c) + 2 * c + ci) * oplane;
            let b_hh = ((ni * 4 * c) + 3 * c + ci) * oplane;
            for oy in 0..oh {
                for ox in 0..ow {
                    let o = oy * ow + ox;
                    let a = xv[b_ll + o];
                    let b = xv[b_lh + o];
                    let g = xv[b_hl + o];
                    let d = xv[b_hh + o];
                    ov[dst + (2 * oy) * w + 2 * ox] = (a + b + g + d) * 0.5;
                    ov[dst + (2 * oy) * w + 2 * ox + 1] = (a + b - g - d) * 0.5;
                    ov[dst + (2 * oy + 1) * w + 2 * ox] = (a - b + g - d) * 0.5;
                    ov[dst + (2 * oy + 1) * w + 2 * ox + 1] = (a - b - g + d) * 0.5;
                }
            }
        }
    }
    Ok(out)
}
