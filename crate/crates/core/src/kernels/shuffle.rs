//! Channel/space rearrangement: pixel shuffle and channel concat/slice.

use crate::tensor::{Shape, Tensor};
use crate::{shape_err, Result};

/// Rearrange (n, c*s^2, h, w) into (n, c, h*s, w*s). The s^2 sub-channels of
/// each output channel fill the s-by-s cell row major: sub-channel dy*s + dx
/// lands at offset (dy, dx) inside the cell.
pub fn pixel_shuffle(x: &Tensor, s: usize) -> Result<Tensor> {
    let Shape { n, c, h, w } = x.shape();
    if s == 0 || c % (s * s) != 0 {
        return Err(shape_err(
            "pixel_shuffle",
            format!("channels {} not divisible by {}^2", c, s),
        ));
    }
    let co = c / (s * s);
    let mut out = Tensor::zeros(Shape::new(n, co, h * s, w * s));
    let xv = x.data();
    let ov = out.data_mut();
    let (oh, ow) = (h * s, w * s);
    for ni in 0..n {
        for ci in 0..co {
            for y in 0..oh {
                for xo in 0..ow {
                    let sub = (y % s) * s + (xo % s);
                    let src = ((ni * c + ci * s * s + sub) * h + y / s) * w + xo / s;
                    ov[((ni * co + ci) * oh + y) * ow + xo] = xv[src];
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of `pixel_shuffle`: (n, c, h*s, w*s) -> (n, c*s^2, h, w).
pub fn pixel_unshuffle(x: &Tensor, s: usize) -> Result<Tensor> {
    let Shape { n, c, h, w } = x.shape();
    if s == 0 || h % s != 0 || w % s != 0 {
        return Err(shape_err(
            "pixel_unshuffle",
            format!("spatial dims {}x{} not divisible by {}", h, w, s),
        ));
    }
    let (oh, ow) = (h / s, w / s);
    let co = c * s * s;
    let mut out = Tensor::zeros(Shape::new(n, co, oh, ow));
    let xv = x.data();
    let ov = out.data_mut();
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..h {
                for xo in 0..w {
                    let sub = (y % s) * s + (xo % s);
                    let dst = ((ni * co + ci * s * s + sub) * oh + y / s) * ow + xo / s;
                    ov[dst] = xv[((ni * c + ci) * h + y) * w + xo];
                }
            }
        }
    }
    Ok(out)
}

/// Concatenate along the channel axis. All inputs must agree on n, h, w.
pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| shape_err("concat_channels", "no inputs"))?;
    let Shape { n, h, w, .. } = first.shape();
    let mut c_total = 0;
    for p in parts {
        let s = p.shape();
        if s.n != n || s.h != h || s.w != w {
            return Err(shape_err(
                "concat_channels",
                format!("incompatible part {} (expected n={}, h={}, w={})", s, n, h, w),
            ));
        }
        c_total += s.c;
    }
    let mut out = Tensor::zeros(Shape::new(n, c_total, h, w));
    let plane = h * w;
    let ov = out.data_mut();
    for ni in 0..n {
        let mut c_off = 0;
        for p in parts {
            let pc = p.shape().c;
            let pv = p.data();
            let src = ni * pc * plane;
            let dst = (ni * c_total + c_off) * plane;
            ov[dst..dst + pc * plane].copy_from_slice(&pv[src..src + pc * plane]);
            c_off += pc;
        }
    }
    Ok(out)
}

/// Copy channels [start, start+len) into a new tensor.
pub fn slice_channels(x: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    let Shape { n, c, h, w } = x.shape();
    if start + len > c {
        return Err(shape_err(
            "slice_channels",
            format!("range {}..{} out of {} channels", start, start + len, c),
        ));
    }
    let plane = h * w;
    let mut out = Tensor::zeros(Shape::new(n, len, h, w));
    let xv = x.data();
    let ov = out.data_mut();
    for ni in 0..n {
        let src = (ni * c + start) * plane;
        let dst = ni * len * plane;
        ov[dst..dst + len * plane].copy_from_slice(&xv[src..src + len * plane]);
    }
    Ok(out)
}
