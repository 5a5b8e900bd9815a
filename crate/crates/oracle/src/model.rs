//! Straight-line reference forward of the full super-resolution network.

use crate::blocks;
use crate::nn;
use crate::{Arr, ParamMap};

/// Architecture knobs the reference forward needs.
#[derive(Clone, Copy, Debug)]
pub struct RefConfig {
    pub channels: usize,
    pub n_groups: usize,
    pub n_blocks: usize,
    pub scale: usize,
    pub dynamic: bool,
    pub fourier_domain: bool,
}

fn conv(p: &ParamMap, prefix: &str, x: &Arr, padding: usize) -> Arr {
    let w = p.get(&format!("{prefix}.weight")).expect("missing conv weight");
    let bias = p.get(&format!("{prefix}.bias")).map(|b| b.data.as_slice());
    nn::conv2d(x, w, bias, 1, padding, 1)
}

fn add(a: &Arr, b: &Arr) -> Arr {
    Arr::from_vec(a.dims, a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect())
}

/// Shallow conv, cascaded residual groups of spatial+wavelet blocks, global
/// residual, reconstruction conv, pixel shuffle.
pub fn model_forward(p: &ParamMap, cfg: &RefConfig, x: &Arr) -> Arr {
    let f0 = conv(p, "head", x, 1);
    let mut t = f0.clone();
    for gi in 0..cfg.n_groups {
        let g_in = t.clone();
        for bi in 0..cfg.n_blocks {
            let prefix = format!("groups.{gi}.blocks.{bi}");
            t = blocks::smt_forward(p, &format!("{prefix}.smt"), &t);
            t = blocks::wmt_forward(
                p,
                &format!("{prefix}.wmt"),
                &t,
                cfg.dynamic,
                cfg.fourier_domain,
            );
        }
        t = conv(p, &format!("groups.{gi}.conv"), &t, 1);
        t = add(&t, &g_in);
    }
    let fd = add(&f0, &t);
    let pre_shuffle = conv(p, "tail", &fd, 1);
    nn::pixel_shuffle(&pre_shuffle, cfg.scale)
}
