//! Straight-line reference forwards for the attention blocks, their
//! transformer wrappers, and the gated feed-forward network. Parameters are
//! looked up by dotted name from a `ParamMap`, using the same naming scheme
//! as the optimized engine's checkpoints.

use crate::nn;
use crate::wavelet;
use crate::{dft, Arr, ParamMap};

const LN_EPS: f64 = 1e-6;
const L2_EPS: f64 = 1e-12;

fn get<'a>(p: &'a ParamMap, name: &str) -> &'a Arr {
    p.get(name).unwrap_or_else(|| panic!("missing parameter {name}"))
}

fn conv(p: &ParamMap, prefix: &str, x: &Arr, padding: usize, groups: usize) -> Arr {
    let w = get(p, &format!("{prefix}.weight"));
    let bias_name = format!("{prefix}.bias");
    let bias = p.get(&bias_name).map(|b| b.data.as_slice());
    nn::conv2d(x, w, bias, 1, padding, groups)
}

fn norm(p: &ParamMap, prefix: &str, x: &Arr) -> Arr {
    let gamma = get(p, &format!("{prefix}.gamma"));
    let beta = get(p, &format!("{prefix}.beta"));
    nn::layer_norm(x, &gamma.data, &beta.data, LN_EPS)
}

fn scalar(p: &ParamMap, name: &str) -> f64 {
    let a = get(p, name);
    assert_eq!(a.numel(), 1);
    a.data[0]
}

/// Q/K/V formation shared by both attention blocks: pointwise conv to 3c,
/// depthwise 3x3, split in thirds, L2-normalize Q and K over space.
fn qkv(p: &ParamMap, prefix: &str, x: &Arr) -> (Arr, Arr, Arr) {
    let c = x.dims[1];
    let t = conv(p, &format!("{prefix}.qkv_point"), x, 0, 1);
    let t = conv(p, &format!("{prefix}.qkv_depth"), &t, 1, 3 * c);
    let q = nn::l2norm_spatial(&t.slice_channels(0, c), L2_EPS);
    let k = nn::l2norm_spatial(&t.slice_channels(c, c), L2_EPS);
    let v = t.slice_channels(2 * c, c);
    (q, k, v)
}

/// Spatial-domain modulation attention.
pub fn sma_forward(p: &ParamMap, prefix: &str, x: &Arr) -> Arr {
    let (q, k, v) = qkv(p, prefix, x);
    let alpha_inv = (-scalar(p, &format!("{prefix}.log_alpha"))).exp();
    let attn = nn::channel_attention(&q, &k, &v, alpha_inv);
    conv(p, &format!("{prefix}.proj"), &attn, 0, 1)
}

/// Wavelet-domain modulation attention. `fourier` swaps the Haar pair for an
/// FFT real/imag stacking (the frequency-domain ablation variant).
pub fn wma_forward(p: &ParamMap, prefix: &str, x: &Arr, dynamic: bool, fourier: bool) -> Arr {
    let reduced = conv(p, &format!("{prefix}.reduce"), x, 0, 1);
    let stack = if fourier {
        let (re, im) = dft::dft2(&reduced);
        Arr::concat_channels(&[&re, &im])
    } else {
        wavelet::dwt_stack(&reduced)
    };
    let c = stack.dims[1];
    let (q, k, v) = qkv(p, prefix, &stack);
    let alpha_inv = (-scalar(p, &format!("{prefix}.log_alpha"))).exp();
    let mut attn = nn::channel_attention(&q, &k, &v, alpha_inv);
    if dynamic {
        let weights = conv(p, &format!("{prefix}.dynamic"), &stack, 3, c / 4);
        for i in 0..attn.data.len() {
            attn.data[i] *= weights.data[i];
        }
    }
    let restored = if fourier {
        let half = c / 2;
        let re = attn.slice_channels(0, half);
        let im = attn.slice_channels(half, half);
        dft::idft2_real(&re, &im)
    } else {
        wavelet::idwt_stack(&attn)
    };
    conv(p, &format!("{prefix}.expand"), &restored, 0, 1)
}

/// Gated-depthwise feed-forward network.
pub fn ffn_forward(p: &ParamMap, prefix: &str, x: &Arr) -> Arr {
    let t = conv(p, &format!("{prefix}.expand"), x, 0, 1);
    let wide = t.dims[1];
    let t = conv(p, &format!("{prefix}.depth"), &t, 1, wide);
    let half = wide / 2;
    let gate = nn::gelu_arr(&t.slice_channels(0, half));
    let value = t.slice_channels(half, half);
    let mut gated = Arr::zeros(gate.dims);
    for i in 0..gated.data.len() {
        gated.data[i] = gate.data[i] * value.data[i];
    }
    conv(p, &format!("{prefix}.project"), &gated, 0, 1)
}

fn add(a: &Arr, b: &Arr) -> Arr {
    assert_eq!(a.dims, b.dims);
    Arr::from_vec(a.dims, a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect())
}

/// Pre-norm attention residual, then pre-norm FFN residual (spatial block).
pub fn smt_forward(p: &ParamMap, prefix: &str, x: &Arr) -> Arr {
    let attn = sma_forward(p, &format!("{prefix}.attn"), &norm(p, &format!("{prefix}.norm1"), x));
    let mid = add(&attn, x);
    let ffn = ffn_forward(p, &format!("{prefix}.ffn"), &norm(p, &format!("{prefix}.norm2"), &mid));
    add(&ffn, &mid)
}

/// Pre-norm attention residual, then pre-norm FFN residual (wavelet block).
pub fn wmt_forward(p: &ParamMap, prefix: &str, x: &Arr, dynamic: bool, fourier: bool) -> Arr {
    let attn = wma_forward(
        p,
        &format!("{prefix}.attn"),
        &norm(p, &format!("{prefix}.norm1"), x),
        dynamic,
        fourier,
    );
    let mid = add(&attn, x);
    let ffn = ffn_forward(p, &format!("{prefix}.ffn"), &norm(p, &format!("{prefix}.norm2"), &mid));
    add(&ffn, &mid)
}
