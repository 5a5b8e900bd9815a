//! Image quality metrics on the luma channel and bicubic resampling.
//!
//! Everything here accumulates in f64 regardless of the f32 tensor storage,
//! so metric values are stable against summation order at realistic sizes.

use crate::tensor::{expect_same_shape, Shape, Tensor};
use crate::{shape_err, Error, Result};

/// BT.601 studio-swing luma from RGB in [0,1]:
/// y = (65.481 r + 128.553 g + 24.966 b + 16) / 255.
pub fn rgb_to_y(img: &Tensor) -> Result<Tensor> {
    let Shape { n, c, h, w } = img.shape();
    if c != 3 {
        return Err(shape_err("rgb_to_y", format!("expected 3 channels, got {c}")));
    }
    let plane = h * w;
    let mut out = Tensor::zeros(Shape::new(n, 1, h, w));
    let xv = img.data();
    let ov = out.data_mut();
    for ni in 0..n {
        let r = &xv[ni * 3 * plane..][..plane];
        let g = &xv[ni * 3 * plane + plane..][..plane];
        let b = &xv[ni * 3 * plane + 2 * plane..][..plane];
        let dst = &mut ov[ni * plane..][..plane];
        for i in 0..plane {
            let y = (65.481 * r[i] as f64 + 128.553 * g[i] as f64 + 24.966 * b[i] as f64
                + 16.0)
                / 255.0;
            dst[i] = y as f32;
        }
    }
    Ok(out)
}

/// Peak signal-to-noise ratio, 10 log10(peak^2 / MSE). Identical inputs
/// return +infinity.
pub fn psnr(a: &Tensor, b: &Tensor, peak: f64) -> Result<f64> {
    expect_same_shape("psnr", a.shape(), b.shape())?;
    let mut acc = 0.0f64;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let d = x as f64 - y as f64;
        acc += d * d;
    }
    let mse = acc / a.numel() as f64;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (peak * peak / mse).log10())
    }
}

/// Structural similarity on a single-channel image pair: 11x11 Gaussian
/// window (sigma 1.5), K1 = 0.01, K2 = 0.03, peak 1, averaged over valid
/// window positions only. Identical inputs return exactly 1.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    expect_same_shape("ssim", a.shape(), b.shape())?;
    let Shape { n, c, h, w } = a.shape();
    if n != 1 || c != 1 {
        return Err(shape_err("ssim", format!("expected (1, 1, h, w), got {}", a.shape())));
    }
    const WIN: usize = 11;
    if h < WIN || w < WIN {
        return Err(shape_err(
            "ssim",
            format!("image {h}x{w} smaller than the {WIN}x{WIN} window"),
        ));
    }
    let sigma = 1.5f64;
    let mut kernel = [[0.0f64; WIN]; WIN];
    let mut ksum = 0.0;
    for (i, row) in kernel.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let dy = i as f64 - 5.0;
            let dx = j as f64 - 5.0;
            *v = (-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp();
            ksum += *v;
        }
    }
    for row in kernel.iter_mut() {
        for v in row.iter_mut() {
            *v /= ksum;
        }
    }
    let c1 = 0.01f64 * 0.01;
    let c2 = 0.03f64 * 0.03;
    let av = a.data();
    let bv = b.data();
    let mut acc = 0.0;
    let mut count = 0usize;
    for cy in 0..=(h - WIN) {
        for cx in 0..=(w - WIN) {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..WIN {
                let row = (cy + i) * w + cx;
                for j in 0..WIN {
                    let k = kernel[i][j];
                    let x = av[row + j] as f64;
                    let y = bv[row + j] as f64;
                    mx += k * x;
                    my += k * y;
                    sxx += k * x * x;
                    syy += k * y * y;
                    sxy += k * x * y;
                }
            }
            let vx = sxx - mx * mx;
            let vy = syy - my * my;
            let cov = sxy - mx * my;
            acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    Ok(acc / count as f64)
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

/// 1-D bicubic taps for output index `i` when resampling an axis from
/// `in_n` to `out_n`. Centers align via src = (i + 0.5) / scale - 0.5; on
/// downscale the kernel is stretched by 1/scale to act as a low-pass;
/// out-of-range taps clamp to the edge; weights are normalized to sum 1.
fn axis_weights(i: usize, in_n: usize, out_n: usize) -> (Vec<usize>, Vec<f64>) {
    let scale = out_n as f64 / in_n as f64;
    let src = (i as f64 + 0.5) / scale - 0.5;
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
            idx.push(j.clamp(0, in_n as isize - 1) as usize);
            wts.push(wgt);
            sum += wgt;
        }
    }
    for w in wts.iter_mut() {
        *w /= sum;
    }
    (idx, wts)
}

/// Bicubic resize by the rational factor num/den, separably along height
/// then width. Output dimensions must come out integral.
pub fn bicubic_resize(img: &Tensor, num: usize, den: usize) -> Result<Tensor> {
    if num == 0 || den == 0 {
        return Err(Error::Invalid("bicubic factor must be positive".into()));
    }
    let Shape { n, c, h, w } = img.shape();
    if (h * num) % den != 0 || (w * num) % den != 0 {
        return Err(Error::Invalid(format!(
            "bicubic {num}/{den} of {h}x{w} is not integral"
        )));
    }
    let oh = h * num / den;
    let ow = w * num / den;
    let ywts: Vec<_> = (0..oh).map(|i| axis_weights(i, h, oh)).collect();
    let xwts: Vec<_> = (0..ow).map(|i| axis_weights(i, w, ow)).collect();
    let mut out = Tensor::zeros(Shape::new(n, c, oh, ow));
    let xv = img.data();
    let ov = out.data_mut();
    let mut tmp = vec![0.0f64; oh * w];
    for nc in 0..n * c {
        let src = &xv[nc * h * w..][..h * w];
        for (oy, (yi, yw)) in ywts.iter().enumerate() {
            for x in 0..w {
                let mut acc = 0.0;
                for (a, &sy) in yi.iter().enumerate() {
                    acc += yw[a] * src[sy * w + x] as f64;
                }
                tmp[oy * w + x] = acc;
            }
        }
        let dst = &mut ov[nc * oh * ow..][..oh * ow];
        for oy in 0..oh {
            let row = &tmp[oy * w..][..w];
            for (ox, (xi, xw)) in xwts.iter().enumerate() {
                let mut acc = 0.0;
                for (b, &sx) in xi.iter().enumerate() {
                    acc += xw[b] * row[sx];
                }
                dst[oy * ow + ox] = acc as f32;
            }
        }
    }
    Ok(out)
}

/// Crop to the largest size divisible by `s` (top-left anchored).
pub fn mod_crop(img: &Tensor, s: usize) -> Tensor {
    let Shape { n, c, h, w } = img.shape();
    let (ch, cw) = (h - h % s, w - w % s);
    if (ch, cw) == (h, w) {
        return img.clone();
    }
    let mut out = Tensor::zeros(Shape::new(n, c, ch, cw));
    let xv = img.data();
    let ov = out.data_mut();
    for nc in 0..n * c {
        for y in 0..ch {
            let src = (nc * h + y) * w;
            let dst = (nc * ch + y) * cw;
            ov[dst..dst + cw].copy_from_slice(&xv[src..src + cw]);
        }
    }
    out
}

/// Remove `border` pixels from every side.
pub fn shave_border(img: &Tensor, border: usize) -> Result<Tensor> {
    let Shape { n, c, h, w } = img.shape();
    if h <= 2 * border || w <= 2 * border {
        return Err(shape_err(
            "shave_border",
            format!("cannot remove {border} px per side from {h}x{w}"),
        ));
    }
    let (ch, cw) = (h - 2 * border, w - 2 * border);
    let mut out = Tensor::zeros(Shape::new(n, c, ch, cw));
    let xv = img.data();
    let ov = out.data_mut();
    for nc in 0..n * c {
        for y in 0..ch {
            let src = (nc * h + y + border) * w + border;
            let dst = (nc * ch + y) * cw;
            ov[dst..dst + cw].copy_from_slice(&xv[src..src + cw]);
        }
    }
    Ok(out)
}

/// Y-channel PSNR and SSIM of an SR/HR pair after shaving `border` pixels.
pub fn evaluate_pair(sr: &Tensor, hr: &Tensor, border: usize) -> Result<(f64, f64)> {
    expect_same_shape("evaluate_pair", sr.shape(), hr.shape())?;
    let sy = shave_border(&rgb_to_y(sr)?, border)?;
    let hy = shave_border(&rgb_to_y(hr)?, border)?;
    Ok((psnr(&sy, &hy, 1.0)?, ssim(&sy, &hy)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_of_one_step_difference_is_the_8bit_ceiling() {
        // Uniform difference of exactly one 8-bit step: 20 log10(255).
        let a = Tensor::full(Shape::new(1, 1, 8, 8), 0.5);
        let b = Tensor::full(Shape::new(1, 1, 8, 8), 0.5 + 1.0 / 255.0);
        let v = psnr(&a, &b, 1.0).unwrap();
        assert!((v - 20.0 * 255.0f64.log10()).abs() < 0.01, "got {v}");
    }

    #[test]
    fn identical_images_hit_the_sentinels() {
        let mut r = crate::rng::SeededRng::new(5);
        let a = Tensor::from_vec(
            Shape::new(1, 1, 16, 16),
            (0..256).map(|_| r.uniform()).collect(),
        )
        .unwrap();
        assert!(psnr(&a, &a, 1.0).unwrap().is_infinite());
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn ssim_decreases_with_noise() {
        let mut r = crate::rng::SeededRng::new(6);
        let clean = Tensor::from_vec(
            Shape::new(1, 1, 20, 20),
            (0..400).map(|i| ((i % 20) as f32) / 20.0).collect(),
        )
        .unwrap();
        let mut noisy = clean.clone();
        for v in noisy.data_mut() {
            *v = (*v + 0.1 * r.trunc_normal(1.0)).clamp(0.0, 1.0);
        }
        let s = ssim(&clean, &noisy).unwrap();
        assert!(s < 0.99 && s > 0.0, "got {s}");
    }

    #[test]
    fn luma_of_primaries() {
        let white = Tensor::full(Shape::new(1, 3, 2, 2), 1.0);
        let y = rgb_to_y(&white).unwrap();
        assert!((y.data()[0] - 235.0 / 255.0).abs() < 1e-5);
        let black = Tensor::zeros(Shape::new(1, 3, 2, 2));
        let y = rgb_to_y(&black).unwrap();
        assert!((y.data()[0] - 16.0 / 255.0).abs() < 1e-6);
    }

    #[test]
    fn unit_factor_resize_is_identity() {
        let mut r = crate::rng::SeededRng::new(7);
        let img = Tensor::from_vec(
            Shape::new(1, 2, 6, 5),
            (0..60).map(|_| r.uniform()).collect(),
        )
        .unwrap();
        let out = bicubic_resize(&img, 3, 3).unwrap();
        assert!(out.max_abs_diff(&img) < 1e-6);
    }

    #[test]
    fn constant_image_survives_scaling_both_ways() {
        let img = Tensor::full(Shape::new(1, 1, 8, 12), 0.37);
        let up = bicubic_resize(&img, 2, 1).unwrap();
        assert_eq!(up.shape(), Shape::new(1, 1, 16, 24));
        assert!(up.data().iter().all(|v| (v - 0.37).abs() < 1e-5));
        let down = bicubic_resize(&img, 1, 4).unwrap();
        assert_eq!(down.shape(), Shape::new(1, 1, 2, 3));
        assert!(down.data().iter().all(|v| (v - 0.37).abs() < 1e-5));
    }

    #[test]
    fn rejects_non_integral_output() {
        let img = Tensor::zeros(Shape::new(1, 1, 7, 8));
        assert!(bicubic_resize(&img, 1, 2).is_err());
    }

    #[test]
    fn crop_helpers_cut_expected_regions() {
        let img = Tensor::from_vec(
            Shape::new(1, 1, 5, 7),
            (0..35).map(|i| i as f32).collect(),
        )
        .unwrap();
        let mc = mod_crop(&img, 3);
        assert_eq!(mc.shape(), Shape::new(1, 1, 3, 6));
        assert_eq!(mc.at(0, 0, 2, 5), 19.0);
        let sh = shave_border(&img, 1).unwrap();
        assert_eq!(sh.shape(), Shape::new(1, 1, 3, 5));
        assert_eq!(sh.at(0, 0, 0, 0), 8.0);
    }
}
