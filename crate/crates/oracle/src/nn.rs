//! Reference neural-network primitives: direct-loop convolution, layer norm,
//! softmax, GELU, spatial L2 normalization, batched matmul, pixel shuffle.

use crate::Arr;

/// Grouped 2-D convolution by direct six-deep loops, zero padding.
/// weight dims: (co, ci/groups, kh, kw); bias length co or empty.
pub fn conv2d(x: &Arr, weight: &Arr, bias: Option<&[f64]>, stride: usize, padding: usize, groups: usize) -> Arr {
    let [n, ci, h, w] = x.dims;
    let [co, cig, kh, kw] = weight.dims;
    assert_eq!(ci % groups, 0);
    assert_eq!(co % groups, 0);
    assert_eq!(cig, ci / groups);
    let oh = (h + 2 * padding - kh) / stride + 1;
    let ow = (w + 2 * padding - kw) / stride + 1;
    let mut out = Arr::zeros([n, co, oh, ow]);
    for ni in 0..n {
        for oc in 0..co {
            let g = oc / (co / groups);
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = match bias {
                        Some(b) => b[oc],
                        None => 0.0,
                    };
                    for icg in 0..cig {
                        let ic = g * cig + icg;
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - padding as isize;
                                let ix = (ox * stride + kx) as isize - padding as isize;
                                if iy >= 0 && (iy as usize) < h && ix >= 0 && (ix as usize) < w {
                                    acc += x.at(ni, ic, iy as usize, ix as usize)
                                        * weight.at(oc, icg, ky, kx);
                                }
                            }
                        }
                    }
                    out.set(ni, oc, oy, ox, acc);
                }
            }
        }
    }
    out
}

/// Layer normalization over the channel axis at each spatial location.
pub fn layer_norm(x: &Arr, gamma: &[f64], beta: &[f64], eps: f64) -> Arr {
    let [n, c, h, w] = x.dims;
    assert_eq!(gamma.len(), c);
    assert_eq!(beta.len(), c);
    let mut out = Arr::zeros(x.dims);
    for ni in 0..n {
        for y in 0..h {
            for xx in 0..w {
                let mut mean = 0.0;
                for ci in 0..c {
                    mean += x.at(ni, ci, y, xx);
                }
                mean /= c as f64;
                let mut var = 0.0;
                for ci in 0..c {
                    let d = x.at(ni, ci, y, xx) - mean;
                    var += d * d;
                }
                var /= c as f64;
                let rstd = 1.0 / (var + eps).sqrt();
                for ci in 0..c {
                    let v = (x.at(ni, ci, y, xx) - mean) * rstd * gamma[ci] + beta[ci];
                    out.set(ni, ci, y, xx, v);
                }
            }
        }
    }
    out
}

/// GELU with the tanh approximation.
pub fn gelu(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_arr(x: &Arr) -> Arr {
    Arr::from_vec(x.dims, x.data.iter().map(|&v| gelu(v)).collect())
}

/// L2-normalize each channel over its spatial extent: y = x / sqrt(sum x^2 + eps).
pub fn l2norm_spatial(x: &Arr, eps: f64) -> Arr {
    let [n, c, h, w] = x.dims;
    let mut out = Arr::zeros(x.dims);
    for ni in 0..n {
        for ci in 0..c {
            let mut s = 0.0;
            for y in 0..h {
                for xx in 0..w {
                    let v = x.at(ni, ci, y, xx);
                    s += v * v;
                }
            }
            let r = 1.0 / (s + eps).sqrt();
            for y in 0..h {
                for xx in 0..w {
                    out.set(ni, ci, y, xx, x.at(ni, ci, y, xx) * r);
                }
            }
        }
    }
    out
}

/// Row-wise softmax over the last axis of a (n, 1, r, c) array.
pub fn softmax_rows(x: &Arr) -> Arr {
    let [n, one, r, c] = x.dims;
    assert_eq!(one, 1);
    let mut out = Arr::zeros(x.dims);
    for ni in 0..n {
        for ri in 0..r {
            let mut mx = f64::NEG_INFINITY;
            for ci in 0..c {
                mx = mx.max(x.at(ni, 0, ri, ci));
            }
            let mut sum = 0.0;
            for ci in 0..c {
                let e = (x.at(ni, 0, ri, ci) - mx).exp();
                out.set(ni, 0, ri, ci, e);
                sum += e;
            }
            for ci in 0..c {
                let v = out.at(ni, 0, ri, ci) / sum;
                out.set(ni, 0, ri, ci, v);
            }
        }
    }
    out
}

/// Channel attention: rows of Q (C x HW) against rows of K, temperature-scaled
/// softmax, then applied to V. Returns (n, c, h, w) like v.
pub fn channel_attention(q: &Arr, k: &Arr, v: &Arr, alpha_inv: f64) -> Arr {
    let [n, c, h, w] = q.dims;
    let hw = h * w;
    let mut scores = Arr::zeros([n, 1, c, c]);
    for ni in 0..n {
        for i in 0..c {
            for j in 0..c {
                let mut acc = 0.0;
                for p in 0..hw {
                    acc += q.data[q.idx(ni, i, p / w, p % w)] * k.data[k.idx(ni, j, p / w, p % w)];
                }
                scores.set(ni, 0, i, j, acc * alpha_inv);
            }
        }
    }
    let attn = softmax_rows(&scores);
    let mut out = Arr::zeros(v.dims);
    for ni in 0..n {
        for i in 0..c {
            for p in 0..hw {
                let mut acc = 0.0;
                for j in 0..c {
                    acc += attn.at(ni, 0, i, j) * v.data[v.idx(ni, j, p / w, p % w)];
                }
                out.set(ni, i, p / w, p % w, acc);
            }
        }
    }
    out
}

/// Sub-pixel rearrangement: (n, c*s^2, h, w) -> (n, c, h*s, w*s), channel
/// block dy*s+dx feeding output offset (dy, dx).
pub fn pixel_shuffle(x: &Arr, s: usize) -> Arr {
    let [n, c_in, h, w] = x.dims;
    assert_eq!(c_in % (s * s), 0);
    let c = c_in / (s * s);
    let mut out = Arr::zeros([n, c, h * s, w * s]);
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..(h * s) {
                for x2 in 0..(w * s) {
                    let v = x.at(ni, ci * s * s + (y % s) * s + (x2 % s), y / s, x2 / s);
                    out.set(ni, ci, y, x2, v);
                }
            }
        }
    }
    out
}
