//! Raw f32 compute kernels behind the tape operations.
//!
//! Every kernel is sequential with a fixed reduction order, so identical
//! inputs always produce bit-identical outputs.

mod conv;
mod elementwise;
mod linalg;
mod norm;
mod shuffle;

pub use conv::{conv2d_bwd, conv2d_fwd, ConvGeom};
pub use elementwise::*;
pub use linalg::{bmm_nn, bmm_nt, bmm_tn};
pub use norm::{
    l2norm_spatial_bwd, l2norm_spatial_fwd, layer_norm_bwd, layer_norm_fwd, softmax_bwd,
    softmax_fwd, Axis, LayerNormSaved,
};
pub use shuffle::{concat_channels, pixel_shuffle, pixel_unshuffle, slice_channels};

/// y[i] += a * x[i]; the workhorse loop, written so it auto-vectorizes.
#[inline]
pub(crate) fn axpy(y: &mut [f32], a: f32, x: &[f32]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Dot product with four independent accumulators. The split order is fixed,
/// so results are deterministic (though not identical to a naive sum).
#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let chunks = a.len() / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0f32, 0.0f32, 0.0f32, 0.0f32);
    for i in 0..chunks {
        let j = i * 4;
        s0 += a[j] * b[j];
        s1 += a[j + 1] * b[j + 1];
        s2 += a[j + 2] * b[j + 2];
        s3 += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0f32;
    for j in chunks * 4..a.len() {
        tail += a[j] * b[j];
    }
    (s0 + s1) + (s2 + s3) + tail
}
