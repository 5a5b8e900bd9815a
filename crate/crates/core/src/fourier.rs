//! Per-channel 2-D FFT with complex planes carried as stacked channels.
//!
//! A real (n, c, h, w) map transforms to (n, 2c, h, w): the first c output
//! channels hold real parts and the last c hold imaginary parts, channel i
//! pairing with channel c+i. The forward transform is unnormalized; the
//! real-valued inverse divides by h*w, so ifft2_real(fft2(x)) returns x up
//! to rounding. Adjoints for both directions are exposed for the gradient
//! pass: the adjoint of the forward transform is the unnormalized inverse
//! (real part), and the adjoint of the real inverse is the forward
//! transform scaled by 1/(h*w).

use crate::tensor::{Shape, Tensor};
use crate::{shape_err, Result};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::sync::Arc;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f32>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f32>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// In-place 2-D transform of one h-by-w plane stored row major.
fn fft2_plane(buf: &mut [Complex<f32>], h: usize, w: usize, inverse: bool) {
    debug_assert_eq!(buf.len(), h * w);
    // All h row transforms in one call, then columns via transpose.
    plan(w, inverse).process(buf);
    let mut tr = vec![Complex::new(0.0, 0.0); h * w];
    for y in 0..h {
        for x in 0..w {
            tr[x * h + y] = buf[y * w + x];
        }
    }
    plan(h, inverse).process(&mut tr);
    for y in 0..h {
        for x in 0..w {
            buf[y * w + x] = tr[x * h + y];
        }
    }
}

/// Unnormalized forward transform: (n, c, h, w) -> (n, 2c, h, w).
pub fn fft2_stack(x: &Tensor) -> Tensor {
    let Shape { n, c, h, w } = x.shape();
    let plane = h * w;
    let mut out = Tensor::zeros(Shape::new(n, 2 * c, h, w));
    let xv = x.data();
    let ov = out.data_mut();
    let mut buf = vec![Complex::new(0.0f32, 0.0); plane];
    for ni in 0..n {
        for ci in 0..c {
            let src = (ni * c + ci) * plane;
            for (b, &v) in buf.iter_mut().zip(&xv[src..src + plane]) {
                *b = Complex::new(v, 0.0);
            }
            fft2_plane(&mut buf, h, w, false);
            let dre = (ni * 2 * c + ci) * plane;
            let dim = (ni * 2 * c + c + ci) * plane;
            for (i, b) in buf.iter().enumerate() {
                ov[dre + i] = b.re;
                ov[dim + i] = b.im;
            }
        }
    }
    out
}

fn inverse_real(x: &Tensor, normalize: bool) -> Result<Tensor> {
    let Shape { n, c: c2, h, w } = x.shape();
    if c2 % 2 != 0 {
        return Err(shape_err(
            "ifft2_real",
            format!("expected paired re/im channels, got c={}", c2),
        ));
    }
    let c = c2 / 2;
    let plane = h * w;
    let norm = if normalize { 1.0 / plane as f32 } else { 1.0 };
    let mut out = Tensor::zeros(Shape::new(n, c, h, w));
    let xv = x.data();
    let ov = out.data_mut();
    let mut buf = vec![Complex::new(0.0f32, 0.0); plane];
    for ni in 0..n {
        for ci in 0..c {
            let sre = (ni * c2 + ci) * plane;
            let sim = (ni * c2 + c + ci) * plane;
            for i in 0..plane {
                buf[i] = Complex::new(xv[sre + i], xv[sim + i]);
            }
            fft2_plane(&mut buf, h, w, true);
            let dst = (ni * c + ci) * plane;
            for (o, b) in ov[dst..dst + plane].iter_mut().zip(&buf) {
                *o = b.re * norm;
            }
        }
    }
    Ok(out)
}

/// Real part of the normalized inverse: (n, 2c, h, w) -> (n, c, h, w).
pub fn ifft2_real_stack(x: &Tensor) -> Result<Tensor> {
    inverse_real(x, true)
}

/// Gradient of `fft2_stack` with respect to its input: the real part of the
/// unnormalized inverse transform of the upstream complex gradient.
pub fn fft2_adjoint(grad: &Tensor) -> Result<Tensor> {
    inverse_real(grad, false)
}

/// Gradient of `ifft2_real_stack` with respect to its input: the forward
/// transform of the upstream gradient scaled by 1/(h*w).
pub fn ifft2_real_adjoint(grad: &Tensor) -> Tensor {
    let mut out = fft2_stack(grad);
    let norm = 1.0 / (grad.shape().h * grad.shape().w) as f32;
    for v in out.data_mut() {
        *v *= norm;
    }
    out
}

fn split_pairs(op: &'static str, x: &Tensor) -> Result<usize> {
    if x.shape().c % 2 != 0 {
        return Err(shape_err(
            op,
            format!("expected paired re/im channels, got c={}", x.shape().c),
        ));
    }
    Ok(x.shape().c / 2)
}

/// Per-bin magnitude sqrt(re^2 + im^2): (n, 2c, h, w) -> (n, c, h, w).
/// Exactly zero bins map to zero.
pub fn amplitude(x: &Tensor) -> Result<Tensor> {
    let c = split_pairs("amplitude", x)?;
    let Shape { n, h, w, .. } = x.shape();
    let plane = h * w;
    let mut out = Tensor::zeros(Shape::new(n, c, h, w));
    let xv = x.data();
    let ov = out.data_mut();
    for ni in 0..n {
        for ci in 0..c {
            let sre = (ni * 2 * c + ci) * plane;
            let sim = (ni * 2 * c + c + ci) * plane;
            let dst = (ni * c + ci) * plane;
            for i in 0..plane {
                let (re, im) = (xv[sre + i], xv[sim + i]);
                ov[dst + i] = (re * re + im * im).sqrt();
            }
        }
    }
    Ok(out)
}

/// Imaginary parts at or below this fraction of the bin magnitude count as
/// rounding noise on a mathematically real bin.
const PHASE_SNAP: f32 = 1e-4;

/// Angle of (re, im) in (-pi, pi], with bins that are real up to rounding
/// snapped onto the real axis. Real-input spectra have exactly real bins
/// (DC and Nyquist); without the snap, the sign of vanishing imaginary
/// noise would flip their phase between +pi and -pi at random.
fn canonical_phase(re: f32, im: f32) -> f32 {
    let a = (re * re + im * im).sqrt();
    if a == 0.0 {
        return 0.0;
    }
    if im.abs() <= PHASE_SNAP * a {
        return if re < 0.0 { std::f32::consts::PI } else { 0.0 };
    }
    im.atan2(re)
}

/// Per-bin angle in (-pi, pi]: (n, 2c, h, w) -> (n, c, h, w).
/// The zero bin (re = im = 0) maps to phase 0.
pub fn phase(x: &Tensor) -> Result<Tensor> {
    let c = split_pairs("phase", x)?;
    let Shape { n, h, w, .. } = x.shape();
    let plane = h * w;
    let mut out = Tensor::zeros(Shape::new(n, c, h, w));
    let xv = x.data();
    let ov = out.data_mut();
    for ni in 0..n {
        for ci in 0..c {
            let sre = (ni * 2 * c + ci) * plane;
            let sim = (ni * 2 * c + c + ci) * plane;
            let dst = (ni * c + ci) * plane;
            for i in 0..plane {
                ov[dst + i] = canonical_phase(xv[sre + i], xv[sim + i]);
            }
        }
    }
    Ok(out)
}

/// Gradient of `amplitude`: d/dre = re/a, d/dim = im/a, zero where a = 0.
pub fn amplitude_bwd(x: &Tensor, grad: &Tensor) -> Tensor {
    let c = grad.shape().c;
    let Shape { n, h, w, .. } = x.shape();
    let plane = h * w;
    let mut dx = Tensor::zeros(x.shape());
    let xv = x.data();
    let gv = grad.data();
    let dv = dx.data_mut();
    for ni in 0..n {
        for ci in 0..c {
            let sre = (ni * 2 * c + ci) * plane;
            let sim = (ni * 2 * c + c + ci) * plane;
            let gsrc = (ni * c + ci) * plane;
            for i in 0..plane {
                let (re, im) = (xv[sre + i], xv[sim + i]);
                let a = (re * re + im * im).sqrt();
                if a > 0.0 {
                    let g = gv[gsrc + i] / a;
                    dv[sre + i] = g * re;
                    dv[sim + i] = g * im;
                }
            }
        }
    }
    dx
}

/// Gradient of `phase`: d/dre = -im/r2, d/dim = re/r2 with r2 = re^2 + im^2,
/// zero at the origin.
pub fn phase_bwd(x: &Tensor, grad: &Tensor) -> Tensor {
    let c = grad.shape().c;
    let Shape { n, h, w, .. } = x.shape();
    let plane = h * w;
    let mut dx = Tensor::zeros(x.shape());
    let xv = x.data();
    let gv = grad.data();
    let dv = dx.data_mut();
    for ni in 0..n {
        for ci in 0..c {
            let sre = (ni * 2 * c + ci) * plane;
            let sim = (ni * 2 * c + c + ci) * plane;
            let gsrc = (ni * c + ci) * plane;
            for i in 0..plane {
                let (re, im) = (xv[sre + i], xv[sim + i]);
                let r2 = re * re + im * im;
                if r2 > 0.0 {
                    let g = gv[gsrc + i] / r2;
                    dv[sre + i] = -g * im;
                    dv[sim + i] = g * re;
                }
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dot(a: &Tensor, b: &Tensor) -> f64 {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| x as f64 * y as f64)
            .sum()
    }

    fn ramp(shape: Shape, k: usize, scale: f32) -> Tensor {
        let v = (0..shape.numel())
            .map(|i| ((i * k + 3) % 17) as f32 * scale - 1.0)
            .collect();
        Tensor::from_vec(shape, v).unwrap()
    }

    #[test]
    fn constant_image_transforms_to_dc_bin() {
        let x = Tensor::full(Shape::new(1, 1, 4, 4), 2.0);
        let y = fft2_stack(&x);
        assert!((y.at(0, 0, 0, 0) - 32.0).abs() < 1e-4);
        for i in 1..16 {
            assert!(y.data()[i].abs() < 1e-4);
            assert!(y.data()[16 + i].abs() < 1e-4);
        }
    }

    #[test]
    fn inverse_recovers_input() {
        let x = ramp(Shape::new(2, 3, 4, 6), 7, 0.21);
        let back = ifft2_real_stack(&fft2_stack(&x)).unwrap();
        assert!(back.max_abs_diff(&x) < 1e-5);
    }

    #[test]
    fn spectrum_energy_scales_by_plane_size() {
        let x = ramp(Shape::new(1, 2, 4, 4), 5, 0.3);
        let y = fft2_stack(&x);
        // Energy of the stacked re/im planes is sum |X|^2.
        assert!((y.energy() - 16.0 * x.energy()).abs() / y.energy() < 1e-5);
    }

    #[test]
    fn forward_adjoint_identity() {
        let x = ramp(Shape::new(1, 2, 4, 6), 11, 0.17);
        let g = ramp(Shape::new(1, 4, 4, 6), 13, 0.09);
        let lhs = dot(&fft2_stack(&x), &g);
        let rhs = dot(&x, &fft2_adjoint(&g).unwrap());
        assert!((lhs - rhs).abs() / lhs.abs().max(1.0) < 1e-4);
    }

    #[test]
    fn inverse_adjoint_identity() {
        let x = ramp(Shape::new(1, 4, 4, 4), 9, 0.13);
        let g = ramp(Shape::new(1, 2, 4, 4), 3, 0.11);
        let lhs = dot(&ifft2_real_stack(&x).unwrap(), &g);
        let rhs = dot(&x, &ifft2_real_adjoint(&g));
        assert!((lhs - rhs).abs() / lhs.abs().max(1.0) < 1e-4);
    }

    #[test]
    fn amplitude_and_phase_of_known_bin() {
        let x = Tensor::from_vec(Shape::new(1, 2, 1, 1), vec![3.0, 4.0]).unwrap();
        let a = amplitude(&x).unwrap();
        let p = phase(&x).unwrap();
        assert!((a.data()[0] - 5.0).abs() < 1e-6);
        assert!((p.data()[0] - (4.0f32).atan2(3.0)).abs() < 1e-6);
    }

    #[test]
    fn zero_bin_has_zero_amplitude_phase_and_gradient() {
        let x = Tensor::zeros(Shape::new(1, 2, 1, 1));
        let a = amplitude(&x).unwrap();
        let p = phase(&x).unwrap();
        assert_eq!(a.data()[0], 0.0);
        assert_eq!(p.data()[0], 0.0);
        let g = Tensor::full(Shape::new(1, 1, 1, 1), 1.0);
        assert_eq!(amplitude_bwd(&x, &g).data(), &[0.0, 0.0]);
        assert_eq!(phase_bwd(&x, &g).data(), &[0.0, 0.0]);
    }
}
