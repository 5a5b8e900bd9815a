//! Pointwise maps and full reductions.

use crate::tensor::Tensor;

pub fn add(a: &Tensor, b: &Tensor) -> Tensor {
    let mut out = a.clone();
    let o = out.data_mut();
    for (oi, bi) in o.iter_mut().zip(b.data()) {
        *oi += bi;
    }
    out
}

pub fn sub(a: &Tensor, b: &Tensor) -> Tensor {
    let mut out = a.clone();
    let o = out.data_mut();
    for (oi, bi) in o.iter_mut().zip(b.data()) {
        *oi -= bi;
    }
    out
}

pub fn mul(a: &Tensor, b: &Tensor) -> Tensor {
    let mut out = a.clone();
    let o = out.data_mut();
    for (oi, bi) in o.iter_mut().zip(b.data()) {
        *oi *= bi;
    }
    out
}

pub fn scale(x: &Tensor, k: f32) -> Tensor {
    let mut out = x.clone();
    for v in out.data_mut() {
        *v *= k;
    }
    out
}

pub fn exp(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for v in out.data_mut() {
        *v = v.exp();
    }
    out
}

const GELU_C: f32 = 0.797_884_56; // sqrt(2/pi)
const GELU_A: f32 = 0.044_715;

/// GELU, tanh approximation: 0.5x(1 + tanh(c(x + a x^3))).
pub fn gelu(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for v in out.data_mut() {
        let x = *v;
        *v = 0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh());
    }
    out
}

/// Elementwise derivative of the tanh-approximated GELU.
pub fn gelu_grad(x: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut out = grad_out.clone();
    let o = out.data_mut();
    for (gi, &xi) in o.iter_mut().zip(x.data()) {
        let u = GELU_C * (xi + GELU_A * xi * xi * xi);
        let t = u.tanh();
        let du = GELU_C * (1.0 + 3.0 * GELU_A * xi * xi);
        *gi *= 0.5 * (1.0 + t) + 0.5 * xi * (1.0 - t * t) * du;
    }
    out
}

/// Multiply every element by a scalar held in a (1,1,1,1) tensor.
pub fn broadcast_mul(x: &Tensor, s: f32) -> Tensor {
    scale(x, s)
}

/// Sum of all elements, accumulated in f64, returned as a scalar tensor.
pub fn sum_all(x: &Tensor) -> Tensor {
    let s: f64 = x.data().iter().map(|&v| v as f64).sum();
    Tensor::scalar(s as f32)
}

/// Mean absolute difference, accumulated in f64.
pub fn l1_mean(a: &Tensor, b: &Tensor) -> Tensor {
    let s: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| ((x - y) as f64).abs())
        .sum();
    Tensor::scalar((s / a.numel() as f64) as f32)
}

/// d/da of mean |a-b|: sign(a-b)/N scaled by the upstream scalar.
/// The subgradient at equality is taken as 0.
pub fn l1_mean_bwd(a: &Tensor, b: &Tensor, upstream: f32) -> Tensor {
    let n = a.numel() as f32;
    let mut out = Tensor::zeros(a.shape());
    let o = out.data_mut();
    for ((oi, &x), &y) in o.iter_mut().zip(a.data()).zip(b.data()) {
        let d = x - y;
        *oi = if d > 0.0 {
            upstream / n
        } else if d < 0.0 {
            -upstream / n
        } else {
            0.0
        };
    }
    out
}
