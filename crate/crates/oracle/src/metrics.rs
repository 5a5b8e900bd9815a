//! Reference image-quality metrics and bicubic resampling.

use crate::Arr;

/// BT.601 studio-swing luma from RGB in [0,1]: (65.481R + 128.553G + 24.966B + 16)/255.
pub fn rgb_to_y(img: &Arr) -> Arr {
    let [n, c, h, w] = img.dims;
    assert_eq!(c, 3);
    let mut out = Arr::zeros([n, 1, h, w]);
    for ni in 0..n {
        for y in 0..h {
            for x in 0..w {
                let v = (65.481 * img.at(ni, 0, y, x)
                    + 128.553 * img.at(ni, 1, y, x)
                    + 24.966 * img.at(ni, 2, y, x)
                    + 16.0)
                    / 255.0;
                out.set(ni, 0, y, x, v);
            }
        }
    }
    out
}

/// 10*log10(peak^2 / MSE); +inf for identical inputs.
pub fn psnr(a: &[f64], b: &[f64], peak: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let mse: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// SSIM with an 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03, peak 1,
/// computed by direct 2-D window sums over valid positions only.
pub fn ssim(a: &Arr, b: &Arr) -> f64 {
    let [n, c, h, w] = a.dims;
    assert_eq!(a.dims, b.dims);
    assert_eq!(n, 1);
    assert_eq!(c, 1);
    let win = 11usize;
    assert!(h >= win && w >= win, "image smaller than the SSIM window");
    let sigma = 1.5;
    let mut kernel = [[0.0f64; 11]; 11];
    let mut ksum = 0.0;
    for i in 0..win {
        for j in 0..win {
            let dy = i as f64 - 5.0;
            let dx = j as f64 - 5.0;
            let g = (-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp();
            kernel[i][j] = g;
            ksum += g;
        }
    }
    for row in kernel.iter_mut() {
        for v in row.iter_mut() {
            *v /= ksum;
        }
    }
    let c1 = (0.01f64).powi(2);
    let c2 = (0.03f64).powi(2);
    let mut acc = 0.0;
    let mut count = 0usize;
    for cy in 0..=(h - win) {
        for cx in 0..=(w - win) {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..win {
                for j in 0..win {
                    let k = kernel[i][j];
                    let xv = a.at(0, 0, cy + i, cx + j);
                    let yv = b.at(0, 0, cy + i, cx + j);
                    mx += k * xv;
                    my += k * yv;
                    sxx += k * xv * xv;
                    syy += k * yv * yv;
                    sxy += k * xv * yv;
                }
            }
            let vx = sxx - mx * mx;
            let vy = syy - my * my;
            let cov = sxy - mx * my;
            let val = ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            acc += val;
            count += 1;
        }
    }
    acc / count as f64
}

/// Cubic interpolation kernel with a = -0.5.
fn cubic(t: f64) -> f64 {
    let a = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a
    } else {
        0.0
    }
}

/// 1-D bicubic weights for output index `i` on an axis resampled from
/// `in_n` to `out_n` samples, antialiased when shrinking, edges replicated.
/// Returns (source indices, weights summing to 1).
fn axis_weights(i: usize, in_n: usize, out_n: usize) -> (Vec<usize>, Vec<f64>) {
    let scale = out_n as f64 / in_n as f64;
    let src = (i as f64 + 0.5) / scale - 0.5;
    // On downscale the kernel is stretched by 1/scale to act as a low-pass.
    let kscale = if scale < 1.0 { scale } else { 1.0 };
    let radius = 2.0 / kscale;
    let lo = (src - radius).ceil() as isize;
    let hi = (src + radius).floor() as isize;
    let mut idx = Vec::new();
    let mut wts = Vec::new();
    let mut sum = 0.0;
    for j in lo..=hi {
        let wgt = cubic((j as f64 - src) * kscale) * kscale;
        if wgt != 0.0 {
            let jc = j.clamp(0, in_n as isize - 1) as usize;
            idx.push(jc);
            wts.push(wgt);
            sum += wgt;
        }
    }
    for w in wts.iter_mut() {
        *w /= sum;
    }
    (idx, wts)
}

/// Bicubic resize by a rational factor, computed per output pixel as a direct
/// 2-D kernel sum (outer product of the two 1-D weight vectors).
pub fn bicubic_resize(img: &Arr, num: usize, den: usize) -> Arr {
    let [n, c, h, w] = img.dims;
    assert!(h * num % den == 0 && w * num % den == 0, "output dims must be integral");
    let oh = h * num / den;
    let ow = w * num / den;
    let mut out = Arr::zeros([n, c, oh, ow]);
    for oy in 0..oh {
        let (yi, yw) = axis_weights(oy, h, oh);
        for ox in 0..ow {
            let (xi, xw) = axis_weights(ox, w, ow);
            for ni in 0..n {
                for ci in 0..c {
                    let mut acc = 0.0;
                    for (a, &sy) in yi.iter().enumerate() {
                        for (b, &sx) in xi.iter().enumerate() {
                            acc += yw[a] * xw[b] * img.at(ni, ci, sy, sx);
                        }
                    }
                    out.set(ni, ci, oy, ox, acc);
                }
            }
        }
    }
    out
}
