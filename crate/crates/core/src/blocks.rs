//! Attention blocks, their transformer wrappers, and the gated feed-forward
//! unit, plus the parameter layout each one contributes to a model.
//!
//! Layout builders and forwards walk parameters in the same dotted-name
//! scheme ("prefix.qkv_point.weight", ...), so a store built from the specs
//! always satisfies the forwards.

use crate::kernels::Axis;
use crate::params::{BoundParams, Init, LeafSpec};
use crate::tape::{Tape, Var};
use crate::tensor::Shape;
use crate::Result;

/// Channel-axis layer-norm epsilon.
pub const LN_EPS: f32 = 1e-6;
/// Spatial L2-normalization epsilon for Q and K.
pub const L2_EPS: f64 = 1e-12;
/// Weight initialization: truncated normal with this standard deviation.
pub const INIT_STD: f64 = 0.02;

fn spec(name: String, shape: Shape, init: Init) -> LeafSpec {
    LeafSpec { name, shape, init }
}

/// Convolution weights (truncated normal) and optional zero bias.
pub(crate) fn conv_specs(
    out: &mut Vec<LeafSpec>,
    prefix: &str,
    co: usize,
    cig: usize,
    k: usize,
    bias: bool,
) {
    out.push(spec(
        format!("{prefix}.weight"),
        Shape::new(co, cig, k, k),
        Init::TruncNormal { std: INIT_STD },
    ));
    if bias {
        out.push(spec(format!("{prefix}.bias"), Shape::new(1, co, 1, 1), Init::Zeros));
    }
}

/// Layer-norm gamma (ones) and beta (zeros).
pub(crate) fn norm_specs(out: &mut Vec<LeafSpec>, prefix: &str, c: usize) {
    out.push(spec(format!("{prefix}.gamma"), Shape::new(1, c, 1, 1), Init::Ones));
    out.push(spec(format!("{prefix}.beta"), Shape::new(1, c, 1, 1), Init::Zeros));
}

fn qkv_specs(out: &mut Vec<LeafSpec>, prefix: &str, c: usize) {
    conv_specs(out, &format!("{prefix}.qkv_point"), 3 * c, c, 1, true);
    conv_specs(out, &format!("{prefix}.qkv_depth"), 3 * c, 1, 3, true);
    out.push(spec(format!("{prefix}.log_alpha"), Shape::scalar(), Init::Zeros));
}

/// Spatial-domain attention parameters.
pub fn sma_specs(out: &mut Vec<LeafSpec>, prefix: &str, c: usize) {
    qkv_specs(out, prefix, c);
    conv_specs(out, &format!("{prefix}.proj"), c, c, 1, true);
}

/// Wavelet-domain attention parameters. The `fourier` variant reduces to
/// c/2 channels (its transform stacks two planes per channel rather than
/// four subbands), keeping the transformed stack at c channels either way.
pub fn wma_specs(out: &mut Vec<LeafSpec>, prefix: &str, c: usize, fourier: bool) {
    let inner = if fourier { c / 2 } else { c / 4 };
    conv_specs(out, &format!("{prefix}.reduce"), inner, c, 1, true);
    qkv_specs(out, prefix, c);
    conv_specs(out, &format!("{prefix}.dynamic"), c, 4, 7, true);
    conv_specs(out, &format!("{prefix}.expand"), c, inner, 1, true);
}

/// Gated feed-forward parameters at expansion ratio `r`.
pub fn ffn_specs(out: &mut Vec<LeafSpec>, prefix: &str, c: usize, r: usize) {
    let wide = 2 * r * c;
    conv_specs(out, &format!("{prefix}.expand"), wide, c, 1, true);
    conv_specs(out, &format!("{prefix}.depth"), wide, 1, 3, true);
    conv_specs(out, &format!("{prefix}.project"), c, r * c, 1, true);
}

/// Spatial transformer block: norm + attention residual, norm + FFN residual.
pub fn smt_specs(out: &mut Vec<LeafSpec>, prefix: &str, c: usize, r: usize) {
    norm_specs(out, &format!("{prefix}.norm1"), c);
    sma_specs(out, &format!("{prefix}.attn"), c);
    norm_specs(out, &format!("{prefix}.norm2"), c);
    ffn_specs(out, &format!("{prefix}.ffn"), c, r);
}

/// Wavelet transformer block: same wrapper around the wavelet attention.
pub fn wmt_specs(out: &mut Vec<LeafSpec>, prefix: &str, c: usize, r: usize, fourier: bool) {
    norm_specs(out, &format!("{prefix}.norm1"), c);
    wma_specs(out, &format!("{prefix}.attn"), c, fourier);
    norm_specs(out, &format!("{prefix}.norm2"), c);
    ffn_specs(out, &format!("{prefix}.ffn"), c, r);
}

/// Convolution with the store's weight and (if present) bias.
pub(crate) fn conv_fwd(
    p: &BoundParams,
    prefix: &str,
    x: &Var,
    padding: usize,
    groups: usize,
) -> Result<Var> {
    let w = p.var(&format!("{prefix}.weight"))?;
    let b = p.try_var(&format!("{prefix}.bias"));
    p.tape().conv2d(x, w, b, 1, padding, groups)
}

pub(crate) fn norm_fwd(p: &BoundParams, prefix: &str, x: &Var) -> Result<Var> {
    let gamma = p.var(&format!("{prefix}.gamma"))?;
    let beta = p.var(&format!("{prefix}.beta"))?;
    p.tape().layer_norm(x, gamma, beta, LN_EPS)
}

/// Q/K/V formation shared by both attention blocks: pointwise conv to 3c,
/// depthwise 3x3, split in thirds, L2-normalize Q and K over space.
fn qkv_fwd(p: &BoundParams, prefix: &str, x: &Var) -> Result<(Var, Var, Var)> {
    let c = x.shape().c;
    let t = conv_fwd(p, &format!("{prefix}.qkv_point"), x, 0, 1)?;
    let t = conv_fwd(p, &format!("{prefix}.qkv_depth"), &t, 1, 3 * c)?;
    let tape = p.tape();
    let q = tape.l2norm_spatial(&tape.slice_channels(&t, 0, c)?, L2_EPS);
    let k = tape.l2norm_spatial(&tape.slice_channels(&t, c, c)?, L2_EPS);
    let v = tape.slice_channels(&t, 2 * c, c)?;
    Ok((q, k, v))
}

/// Channel attention: Q rows (c x hw) against K rows under a learned
/// temperature exp(-log_alpha), row softmax, applied to V.
fn channel_attention(tape: &Tape, q: &Var, k: &Var, v: &Var, log_alpha: &Var) -> Result<Var> {
    let Shape { n, c, h, w } = q.shape();
    let flat = Shape::new(n, 1, c, h * w);
    let qm = tape.reshape(q, flat)?;
    let km = tape.reshape(k, flat)?;
    let vm = tape.reshape(v, flat)?;
    let scores = tape.bmm_nt(&qm, &km)?;
    let alpha_inv = tape.exp(&tape.scale(log_alpha, -1.0));
    let scaled = tape.mul_scalar(&scores, &alpha_inv)?;
    let weights = tape.softmax(&scaled, Axis::Width);
    let out = tape.bmm_nn(&weights, &vm)?;
    tape.reshape(&out, q.shape())
}

/// Spatial-domain modulation attention.
pub fn sma_forward(p: &BoundParams, prefix: &str, x: &Var) -> Result<Var> {
    let (q, k, v) = qkv_fwd(p, prefix, x)?;
    let log_alpha = p.var(&format!("{prefix}.log_alpha"))?;
    let attn = channel_attention(p.tape(), &q, &k, &v, log_alpha)?;
    conv_fwd(p, &format!("{prefix}.proj"), &attn, 0, 1)
}

/// Wavelet-domain modulation attention: reduce channels, transform, attend
/// in the transformed domain, optionally modulate with dynamic per-window
/// weights, transform back, expand channels. `fourier` swaps the Haar pair
/// for an FFT real/imag stacking.
pub fn wma_forward(
    p: &BoundParams,
    prefix: &str,
    x: &Var,
    dynamic: bool,
    fourier: bool,
) -> Result<Var> {
    let tape = p.tape();
    let reduced = conv_fwd(p, &format!("{prefix}.reduce"), x, 0, 1)?;
    let stack = if fourier { tape.fft2(&reduced) } else { tape.dwt(&reduced)? };
    let c = stack.shape().c;
    let (q, k, v) = qkv_fwd(p, prefix, &stack)?;
    let log_alpha = p.var(&format!("{prefix}.log_alpha"))?;
    let mut attn = channel_attention(tape, &q, &k, &v, log_alpha)?;
    if dynamic {
        let weights = conv_fwd(p, &format!("{prefix}.dynamic"), &stack, 3, c / 4)?;
        attn = tape.mul(&attn, &weights)?;
    }
    let restored = if fourier { tape.ifft2_real(&attn)? } else { tape.idwt(&attn)? };
    conv_fwd(p, &format!("{prefix}.expand"), &restored, 0, 1)
}

/// Gated-depthwise feed-forward network.
pub fn ffn_forward(p: &BoundParams, prefix: &str, x: &Var) -> Result<Var> {
    let t = conv_fwd(p, &format!("{prefix}.expand"), x, 0, 1)?;
    let wide = t.shape().c;
    let t = conv_fwd(p, &format!("{prefix}.depth"), &t, 1, wide)?;
    let tape = p.tape();
    let half = wide / 2;
    let gate = tape.gelu(&tape.slice_channels(&t, 0, half)?);
    let value = tape.slice_channels(&t, half, half)?;
    let gated = tape.mul(&gate, &value)?;
    conv_fwd(p, &format!("{prefix}.project"), &gated, 0, 1)
}

/// Pre-norm attention residual, then pre-norm FFN residual (spatial block).
pub fn smt_forward(p: &BoundParams, prefix: &str, x: &Var) -> Result<Var> {
    let tape = p.tape();
    let normed = norm_fwd(p, &format!("{prefix}.norm1"), x)?;
    let attn = sma_forward(p, &format!("{prefix}.attn"), &normed)?;
    let mid = tape.add(&attn, x)?;
    let normed = norm_fwd(p, &format!("{prefix}.norm2"), &mid)?;
    let ffn = ffn_forward(p, &format!("{prefix}.ffn"), &normed)?;
    tape.add(&ffn, &mid)
}

/// Pre-norm attention residual, then pre-norm FFN residual (wavelet block).
pub fn wmt_forward(
    p: &BoundParams,
    prefix: &str,
    x: &Var,
    dynamic: bool,
    fourier: bool,
) -> Result<Var> {
    let tape = p.tape();
    let normed = norm_fwd(p, &format!("{prefix}.norm1"), x)?;
    let attn = wma_forward(p, &format!("{prefix}.attn"), &normed, dynamic, fourier)?;
    let mid = tape.add(&attn, x)?;
    let normed = norm_fwd(p, &format!("{prefix}.norm2"), &mid)?;
    let ffn = ffn_forward(p, &format!("{prefix}.ffn"), &normed)?;
    tape.add(&ffn, &mid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamStore;
    use crate::tensor::Tensor;

    fn random_input(shape: Shape, seed: u64) -> Tensor {
        let mut r = crate::rng::SeededRng::new(seed);
        let v = (0..shape.numel()).map(|_| r.trunc_normal(0.5)).collect();
        Tensor::from_vec(shape, v).unwrap()
    }

    fn store_for(build: impl Fn(&mut Vec<LeafSpec>)) -> ParamStore {
        let mut specs = Vec::new();
        build(&mut specs);
        ParamStore::init(&specs, 7)
    }

    #[test]
    fn spatial_block_preserves_shape() {
        let store = store_for(|s| smt_specs(s, "b", 8, 2));
        let tape = Tape::training();
        let p = BoundParams::bind(&tape, &store);
        let x = tape.leaf(random_input(Shape::new(2, 8, 6, 6), 1));
        let y = smt_forward(&p, "b", &x).unwrap();
        assert_eq!(y.shape(), x.shape());
    }

    #[test]
    fn wavelet_block_preserves_shape() {
        let store = store_for(|s| wmt_specs(s, "b", 8, 2, false));
        let tape = Tape::inference();
        let p = BoundParams::bind(&tape, &store);
        let x = tape.leaf(random_input(Shape::new(1, 8, 6, 8), 2));
        let y = wmt_forward(&p, "b", &x, true, false).unwrap();
        assert_eq!(y.shape(), x.shape());
    }

    #[test]
    fn fourier_variant_preserves_shape() {
        let store = store_for(|s| wmt_specs(s, "b", 8, 2, true));
        let tape = Tape::inference();
        let p = BoundParams::bind(&tape, &store);
        let x = tape.leaf(random_input(Shape::new(1, 8, 5, 7), 3));
        let y = wmt_forward(&p, "b", &x, true, true).unwrap();
        assert_eq!(y.shape(), x.shape());
    }

    #[test]
    fn attention_weight_counts_match_hand_formulas() {
        // c = 8: qkv point 8*24 (+24), depth 24*9 (+24), alpha 1, proj 64 (+8).
        let store = store_for(|s| sma_specs(s, "a", 8));
        assert_eq!(store.param_count(), 192 + 24 + 216 + 24 + 1 + 64 + 8);

        // Wavelet attention at c = 8: reduce 8*2 (+2), qkv as above,
        // dynamic 8*4*49 (+8), expand 2*8 (+8).
        let store = store_for(|s| wma_specs(s, "a", 8, false));
        let qkv = 192 + 24 + 216 + 24 + 1;
        assert_eq!(store.param_count(), 18 + qkv + 1576 + 24);
    }

    #[test]
    fn gradients_flow_to_every_block_parameter() {
        let store = store_for(|s| wmt_specs(s, "b", 8, 1, false));
        let tape = Tape::training();
        let p = BoundParams::bind(&tape, &store);
        let x = tape.leaf(random_input(Shape::new(1, 8, 4, 4), 5));
        let y = wmt_forward(&p, "b", &x, true, false).unwrap();
        let loss = tape.l1_loss(&y, &Var::constant(Tensor::zeros(y.shape()))).unwrap();
        let grads = tape.backward(&loss).unwrap();
        for (i, v) in p.vars().iter().enumerate() {
            assert!(
                grads.reaches(v),
                "no gradient reached parameter {}",
                store.entry(i).0
            );
        }
    }
}
