//! Layer normalization, spatial L2 normalization, and softmax over one axis.

use crate::tensor::{Shape, Tensor};

/// Per-location statistics saved by the layer-norm forward pass for backward.
#[derive(Clone, Debug)]
pub struct LayerNormSaved {
    pub mean: Vec<f32>,
    pub rstd: Vec<f32>,
}

/// Normalize the channel vector at each spatial location to zero mean and
/// unit variance, then apply the per-channel affine (gamma, beta).
pub fn layer_norm_fwd(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f32) -> (Tensor, LayerNormSaved) {
    let Shape { n, c, h, w } = x.shape();
    let plane = h * w;
    let mut out = Tensor::zeros(x.shape());
    let mut saved = LayerNormSaved { mean: vec![0.0; n * plane], rstd: vec![0.0; n * plane] };
    let xv = x.data();
    let gv = gamma.data();
    let bv = beta.data();
    let ov = out.data_mut();
    for ni in 0..n {
        for p in 0..plane {
            let base = ni * c * plane + p;
            let mut mean = 0.0f32;
            for ci in 0..c {
                mean += xv[base + ci * plane];
            }
            mean /= c as f32;
            let mut var = 0.0f32;
            for ci in 0..c {
                let d = xv[base + ci * plane] - mean;
                var += d * d;
            }
            var /= c as f32;
            let rstd = 1.0 / (var + eps).sqrt();
            saved.mean[ni * plane + p] = mean;
            saved.rstd[ni * plane + p] = rstd;
            for ci in 0..c {
                ov[base + ci * plane] = (xv[base + ci * plane] - mean) * rstd * gv[ci] + bv[ci];
            }
        }
    }
    (out, saved)
}

/// Gradients for input, gamma, and beta.
pub fn layer_norm_bwd(
    x: &Tensor,
    gamma: &Tensor,
    saved: &LayerNormSaved,
    grad_out: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let Shape { n, c, h, w } = x.shape();
    let plane = h * w;
    let mut dx = Tensor::zeros(x.shape());
    let mut dgamma = Tensor::zeros(gamma.shape());
    let mut dbeta = Tensor::zeros(gamma.shape());
    let xv = x.data();
    let gv = gamma.data();
    let gov = grad_out.data();
    let dxv = dx.data_mut();
    let dgv = dgamma.data_mut();
    let dbv = dbeta.data_mut();
    for ni in 0..n {
        for p in 0..plane {
            let base = ni * c * plane + p;
            let mean = saved.mean[ni * plane + p];
            let rstd = saved.rstd[ni * plane + p];
            // gh = grad * gamma; two channel means feed the input gradient.
            let mut sum_gh = 0.0f32;
            let mut sum_gh_xhat = 0.0f32;
            for ci in 0..c {
                let xhat = (xv[base + ci * plane] - mean) * rstd;
                let gh = gov[base + ci * plane] * gv[ci];
                sum_gh += gh;
                sum_gh_xhat += gh * xhat;
            }
            let inv_c = 1.0 / c as f32;
            for ci in 0..c {
                let xhat = (xv[base + ci * plane] - mean) * rstd;
                let gh = gov[base + ci * plane] * gv[ci];
                dxv[base + ci * plane] =
                    rstd * (gh - inv_c * sum_gh - xhat * inv_c * sum_gh_xhat);
                dgv[ci] += gov[base + ci * plane] * xhat;
                dbv[ci] += gov[base + ci * plane];
            }
        }
    }
    (dx, dgamma, dbeta)
}

/// L2-normalize each channel over its spatial extent:
/// y = x / sqrt(sum_hw x^2 + eps). Returns the output and 1/norm per (n, c).
pub fn l2norm_spatial_fwd(x: &Tensor, eps: f64) -> (Tensor, Vec<f32>) {
    let Shape { n, c, h, w } = x.shape();
    let plane = h * w;
    let mut out = Tensor::zeros(x.shape());
    let mut rnorm = vec![0.0f32; n * c];
    let xv = x.data();
    let ov = out.data_mut();
    for nc in 0..n * c {
        let row = &xv[nc * plane..(nc + 1) * plane];
        let mut s = 0.0f64;
        for &v in row {
            s += (v as f64) * (v as f64);
        }
        let r = (1.0 / (s + eps).sqrt()) as f32;
        rnorm[nc] = r;
        for (o, &v) in ov[nc * plane..(nc + 1) * plane].iter_mut().zip(row) {
            *o = v * r;
        }
    }
    (out, rnorm)
}

/// dx = r*g - x * r^3 * <g, x> per channel.
pub fn l2norm_spatial_bwd(x: &Tensor, rnorm: &[f32], grad_out: &Tensor) -> Tensor {
    let Shape { n, c, h, w } = x.shape();
    let plane = h * w;
    let mut dx = Tensor::zeros(x.shape());
    let xv = x.data();
    let gv = grad_out.data();
    let dxv = dx.data_mut();
    for nc in 0..n * c {
        let row = &xv[nc * plane..(nc + 1) * plane];
        let gr = &gv[nc * plane..(nc + 1) * plane];
        let mut dotgx = 0.0f64;
        for (&g, &v) in gr.iter().zip(row) {
            dotgx += (g as f64) * (v as f64);
        }
        let r = rnorm[nc] as f64;
        let k = (r * r * r * dotgx) as f32;
        let rf = rnorm[nc];
        for ((d, &g), &v) in dxv[nc * plane..(nc + 1) * plane].iter_mut().zip(gr).zip(row) {
            *d = rf * g - v * k;
        }
    }
    dx
}

/// Axis selector for softmax.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Axis {
    Channel,
    Height,
    Width,
}

fn axis_geometry(shape: Shape, axis: Axis) -> (usize, usize) {
    // Returns (lane length, lane stride); lanes enumerate all other indices.
    match axis {
        Axis::Channel => (shape.c, shape.h * shape.w),
        Axis::Height => (shape.h, shape.w),
        Axis::Width => (shape.w, 1),
    }
}

fn for_each_lane(shape: Shape, axis: Axis, mut f: impl FnMut(usize, usize, usize)) {
    // Calls f(start, len, stride) for every lane along `axis`.
    let (len, stride) = axis_geometry(shape, axis);
    let Shape { n, c, h, w } = shape;
    match axis {
        Axis::Channel => {
            for ni in 0..n {
                for p in 0..h * w {
                    f(ni * c * h * w + p, len, stride);
                }
            }
        }
        Axis::Height => {
            for nc in 0..n * c {
                for x in 0..w {
                    f(nc * h * w + x, len, stride);
                }
            }
        }
        Axis::Width => {
            for row in 0..n * c * h {
                f(row * w, len, stride);
            }
        }
    }
}

/// Numerically-stable softmax along one axis.
pub fn softmax_fwd(x: &Tensor, axis: Axis) -> Tensor {
    let mut out = x.clone();
    let ov = out.data_mut();
    for_each_lane(x.shape(), axis, |start, len, stride| {
        let mut mx = f32::NEG_INFINITY;
        for i in 0..len {
            mx = mx.max(ov[start + i * stride]);
        }
        let mut sum = 0.0f32;
        for i in 0..len {
            let e = (ov[start + i * stride] - mx).exp();
            ov[start + i * stride] = e;
            sum += e;
        }
        for i in 0..len {
            ov[start + i * stride] /= sum;
        }
    });
    out
}

/// dx = y * (g - sum(g*y)) per lane, with y the softmax output.
pub fn softmax_bwd(y: &Tensor, axis: Axis, grad_out: &Tensor) -> Tensor {
    let mut dx = Tensor::zeros(y.shape());
    let yv = y.data();
    let gv = grad_out.data();
    let dxv = dx.data_mut();
    for_each_lane(y.shape(), axis, |start, len, stride| {
        let mut dot = 0.0f32;
        for i in 0..len {
            dot += gv[start + i * stride] * yv[start + i * stride];
        }
        for i in 0..len {
            let idx = start + i * stride;
            dxv[idx] = yv[idx] * (gv[idx] - dot);
        }
    });
    dx
}
