//! Grouped 2-D convolution: im2col + matmul in general, with direct paths for
//! 1x1 and depthwise kernels. Zero padding, square strides.

use super::{axpy, dot};
use crate::tensor::{Shape, Tensor};
use crate::{shape_err, Result};

/// Validated geometry of one convolution call.
#[derive(Clone, Copy, Debug)]
pub struct ConvGeom {
    pub n: usize,
    pub ci: usize,
    pub h: usize,
    pub w: usize,
    pub co: usize,
    pub cig: usize,
    pub kh: usize,
    pub kw: usize,
    pub oh: usize,
    pub ow: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl ConvGeom {
    pub fn resolve(
        x: Shape,
        w: Shape,
        bias: Option<Shape>,
        stride: usize,
        padding: usize,
        groups: usize,
    ) -> Result<ConvGeom> {
        let (n, ci, h, wd) = (x.n, x.c, x.h, x.w);
        let (co, cig, kh, kw) = (w.n, w.c, w.h, w.w);
        if groups == 0 || stride == 0 {
            return Err(shape_err("conv2d", "stride and groups must be positive"));
        }
        if ci % groups != 0 {
            return Err(shape_err(
                "conv2d",
                format!("input channels {ci} not divisible by groups {groups}"),
            ));
        }
        if co % groups != 0 {
            return Err(shape_err(
                "conv2d",
                format!("output channels {co} not divisible by groups {groups}"),
            ));
        }
        if cig != ci / groups {
            return Err(shape_err(
                "conv2d",
                format!(
                    "weight expects {cig} input channels per group, input provides {} (ci={ci}, groups={groups})",
                    ci / groups
                ),
            ));
        }
        if let Some(b) = bias {
            if b != Shape::new(1, co, 1, 1) {
                return Err(shape_err(
                    "conv2d",
                    format!("bias shape {b} must be (1, {co}, 1, 1)"),
                ));
            }
        }
        if h + 2 * padding < kh || wd + 2 * padding < kw {
            return Err(shape_err(
                "conv2d",
                format!("kernel {kh}x{kw} larger than padded input {h}x{wd} (padding {padding})"),
            ));
        }
        let oh = (h + 2 * padding - kh) / stride + 1;
        let ow = (wd + 2 * padding - kw) / stride + 1;
        Ok(ConvGeom { n, ci, h, w: wd, co, cig, kh, kw, oh, ow, stride, padding, groups })
    }

    pub fn out_shape(&self) -> Shape {
        Shape::new(self.n, self.co, self.oh, self.ow)
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.padding == 0 && self.groups == 1
    }

    fn is_depthwise(&self) -> bool {
        self.groups == self.ci && self.co == self.ci && self.stride == 1
    }
}

/// Gather one (group, sample) patch matrix: rows indexed by (cig, ky, kx),
/// columns by output position.
fn im2col(x: &[f32], g: &ConvGeom, base_c: usize, col: &mut [f32]) {
    let p = g.oh * g.ow;
    let plane = g.h * g.w;
    for icg in 0..g.cig {
        let xc = &x[(base_c + icg) * plane..(base_c + icg + 1) * plane];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = &mut col[((icg * g.kh + ky) * g.kw + kx) * p..][..p];
                let mut i = 0;
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if iy < 0 || iy as usize >= g.h {
                        row[i..i + g.ow].fill(0.0);
                        i += g.ow;
                        continue;
                    }
                    let xr = &xc[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        row[i] = if ix >= 0 && (ix as usize) < g.w { xr[ix as usize] } else { 0.0 };
                        i += 1;
                    }
                }
            }
        }
    }
}

/// Scatter-add the patch matrix back into the input gradient.
fn col2im(col: &[f32], g: &ConvGeom, base_c: usize, dx: &mut [f32]) {
    let p = g.oh * g.ow;
    let plane = g.h * g.w;
    for icg in 0..g.cig {
        let xc = &mut dx[(base_c + icg) * plane..(base_c + icg + 1) * plane];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = &col[((icg * g.kh + ky) * g.kw + kx) * p..][..p];
                let mut i = 0;
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if iy < 0 || iy as usize >= g.h {
                        i += g.ow;
                        continue;
                    }
                    let xr = &mut xc[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            xr[ix as usize] += row[i];
                        }
                        i += 1;
                    }
                }
            }
        }
    }
}

pub fn conv2d_fwd(x: &Tensor, w: &Tensor, bias: Option<&Tensor>, g: &ConvGeom) -> Tensor {
    let mut out = Tensor::zeros(g.out_shape());
    let xv = x.data();
    let wv = w.data();
    let ov = out.data_mut();
    let p = g.oh * g.ow;
    let in_plane = g.h * g.w;

    if g.is_pointwise() {
        for ni in 0..g.n {
            let xs = &xv[ni * g.ci * in_plane..];
            let os = &mut ov[ni * g.co * p..];
            for oc in 0..g.co {
                let row = &mut os[oc * p..(oc + 1) * p];
                if let Some(b) = bias {
                    row.fill(b.data()[oc]);
                }
                for ic in 0..g.ci {
                    axpy(row, wv[oc * g.ci + ic], &xs[ic * in_plane..(ic + 1) * in_plane]);
                }
            }
        }
        return out;
    }

    if g.is_depthwise() {
        for ni in 0..g.n {
            for c in 0..g.ci {
                let xc = &xv[(ni * g.ci + c) * in_plane..][..in_plane];
                let oc = &mut ov[(ni * g.co + c) * p..][..p];
                let wk = &wv[c * g.kh * g.kw..][..g.kh * g.kw];
                let b = bias.map_or(0.0, |b| b.data()[c]);
                let mut i = 0;
                for oy in 0..g.oh {
                    for ox in 0..g.ow {
                        let mut acc = b;
                        for ky in 0..g.kh {
                            let iy = (oy + ky) as isize - g.padding as isize;
                            if iy < 0 || iy as usize >= g.h {
                                continue;
                            }
                            for kx in 0..g.kw {
                                let ix = (ox + kx) as isize - g.padding as isize;
                                if ix >= 0 && (ix as usize) < g.w {
                                    acc += wk[ky * g.kw + kx] * xc[iy as usize * g.w + ix as usize];
                                }
                            }
                        }
                        oc[i] = acc;
                        i += 1;
                    }
                }
            }
        }
        return out;
    }

    let k = g.cig * g.kh * g.kw;
    let cog = g.co / g.groups;
    let mut col = vec![0.0f32; k * p];
    for ni in 0..g.n {
        for gi in 0..g.groups {
            im2col(&xv[ni * g.ci * in_plane..], g, gi * g.cig, &mut col);
            for ocg in 0..cog {
                let oc = gi * cog + ocg;
                let row = &mut ov[(ni * g.co + oc) * p..][..p];
                if let Some(b) = bias {
                    row.fill(b.data()[oc]);
                }
                for ck in 0..k {
                    axpy(row, wv[oc * k + ck], &col[ck * p..(ck + 1) * p]);
                }
            }
        }
    }
    out
}

/// Gradients w.r.t. input, weight, and bias. The patch matrix is recomputed
/// rather than saved to keep tape memory proportional to activations.
pub fn conv2d_bwd(
    x: &Tensor,
    w: &Tensor,
    g: &ConvGeom,
    grad_out: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let mut dx = Tensor::zeros(x.shape());
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros(Shape::new(1, g.co, 1, 1));
    let xv = x.data();
    let wv = w.data();
    let gv = grad_out.data();
    let p = g.oh * g.ow;
    let in_plane = g.h * g.w;

    {
        let dbv = db.data_mut();
        for ni in 0..g.n {
            for oc in 0..g.co {
                let gr = &gv[(ni * g.co + oc) * p..][..p];
                let mut acc = 0.0f64;
                for v in gr {
                    acc += *v as f64;
                }
                dbv[oc] += acc as f32;
            }
        }
    }

    if g.is_pointwise() {
        let dxv = dx.data_mut();
        for ni in 0..g.n {
            let base_x = ni * g.ci * in_plane;
            let base_g = ni * g.co * p;
            for ic in 0..g.ci {
                let row = &mut dxv[base_x + ic * in_plane..][..in_plane];
                for oc in 0..g.co {
                    axpy(row, wv[oc * g.ci + ic], &gv[base_g + oc * p..][..p]);
                }
            }
        }
        let dwv = dw.data_mut();
        for ni in 0..g.n {
            let base_x = ni * g.ci * in_plane;
            let base_g = ni * g.co * p;
            for oc in 0..g.co {
                let gr = &gv[base_g + oc * p..][..p];
                for ic in 0..g.ci {
                    dwv[oc * g.ci + ic] += dot(gr, &xv[base_x + ic * in_plane..][..in_plane]);
                }
            }
        }
        return (dx, dw, db);
    }

    if g.is_depthwise() {
        let dxv = dx.data_mut();
        let dwv = dw.data_mut();
        for ni in 0..g.n {
            for c in 0..g.ci {
                let xc = &xv[(ni * g.ci + c) * in_plane..][..in_plane];
                let gc = &gv[(ni * g.co + c) * p..][..p];
                let wk = &wv[c * g.kh * g.kw..][..g.kh * g.kw];
                let dxc = &mut dxv[(ni * g.ci + c) * in_plane..][..in_plane];
                let dwk = &mut dwv[c * g.kh * g.kw..][..g.kh * g.kw];
                let mut i = 0;
                for oy in 0..g.oh {
                    for ox in 0..g.ow {
                        let go = gc[i];
                        i += 1;
                        for ky in 0..g.kh {
                            let iy = (oy + ky) as isize - g.padding as isize;
                            if iy < 0 || iy as usize >= g.h {
                                continue;
                            }
                            for kx in 0..g.kw {
                                let ix = (ox + kx) as isize - g.padding as isize;
                                if ix >= 0 && (ix as usize) < g.w {
                                    let xi = iy as usize * g.w + ix as usize;
                                    dxc[xi] += wk[ky * g.kw + kx] * go;
                                    dwk[ky * g.kw + kx] += xc[xi] * go;
                                }
                            }
                        }
                    }
                }
            }
        }
        return (dx, dw, db);
    }

    let k = g.cig * g.kh * g.kw;
    let cog = g.co / g.groups;
    let mut col = vec![0.0f32; k * p];
    let mut dcol = vec![0.0f32; k * p];
    let dxv = dx.data_mut();
    let dwv = dw.data_mut();
    for ni in 0..g.n {
        for gi in 0..g.groups {
            im2col(&xv[ni * g.ci * in_plane..], g, gi * g.cig, &mut col);
            dcol.fill(0.0);
            for ocg in 0..cog {
                let oc = gi * cog + ocg;
                let gr = &gv[(ni * g.co + oc) * p..][..p];
                for ck in 0..k {
                    axpy(&mut dcol[ck * p..(ck + 1) * p], wv[oc * k + ck], gr);
                    dwv[oc * k + ck] += dot(gr, &col[ck * p..(ck + 1) * p]);
                }
            }
            col2im(&dcol, g, gi * g.cig, &mut dxv[ni * g.ci * in_plane..]);
        }
    }
    (dx, dw, db)
}
