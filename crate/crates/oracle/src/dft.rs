//! Reference 2-D discrete Fourier transform, straight from the definition.
//! O(N^2) per output bin; fine for the tiny shapes used in tests.

use crate::Arr;
use std::f64::consts::PI;

/// Unnormalized forward DFT per channel:
/// X[u,v] = sum_{y,x} x[y,x] * exp(-2*pi*i*(u*y/h + v*x/w)). Returns (re, im).
pub fn dft2(x: &Arr) -> (Arr, Arr) {
    let [n, c, h, w] = x.dims;
    let mut re = Arr::zeros(x.dims);
    let mut im = Arr::zeros(x.dims);
    for ni in 0..n {
        for ci in 0..c {
            for u in 0..h {
                for v in 0..w {
                    let mut sr = 0.0;
                    let mut si = 0.0;
                    for y in 0..h {
                        for xx in 0..w {
                            let ang = -2.0 * PI
                                * (u as f64 * y as f64 / h as f64
                                    + v as f64 * xx as f64 / w as f64);
                            let val = x.at(ni, ci, y, xx);
                            sr += val * ang.cos();
                            si += val * ang.sin();
                        }
                    }
                    re.set(ni, ci, u, v, sr);
                    im.set(ni, ci, u, v, si);
                }
            }
        }
    }
    (re, im)
}

/// Real part of the normalized inverse DFT:
/// x[y,x] = Re( sum_{u,v} X[u,v] * exp(+2*pi*i*(u*y/h + v*x/w)) ) / (h*w).
pub fn idft2_real(re: &Arr, im: &Arr) -> Arr {
    let [n, c, h, w] = re.dims;
    assert_eq!(im.dims, re.dims);
    let mut out = Arr::zeros(re.dims);
    let norm = 1.0 / (h * w) as f64;
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = 0.0;
                    for u in 0..h {
                        for v in 0..w {
                            let ang = 2.0 * PI
                                * (u as f64 * y as f64 / h as f64
                                    + v as f64 * xx as f64 / w as f64);
                            acc += re.at(ni, ci, u, v) * ang.cos()
                                - im.at(ni, ci, u, v) * ang.sin();
                        }
                    }
                    out.set(ni, ci, y, xx, acc * norm);
                }
            }
        }
    }
    out
}

/// Imaginary parts at or below this fraction of the bin magnitude count as
/// rounding noise on a mathematically real bin (same rule as the engine).
const PHASE_SNAP: f64 = 1e-4;

/// Amplitude sqrt(re^2+im^2) and phase in (-pi, pi]; both 0 at (0, 0).
/// Bins that are real up to rounding are snapped onto the real axis so the
/// sign of vanishing imaginary noise cannot flip their phase by 2 pi.
pub fn amplitude_phase(re: &Arr, im: &Arr) -> (Arr, Arr) {
    let mut amp = Arr::zeros(re.dims);
    let mut ph = Arr::zeros(re.dims);
    for i in 0..re.data.len() {
        let (r, m) = (re.data[i], im.data[i]);
        let a = (r * r + m * m).sqrt();
        amp.data[i] = a;
        ph.data[i] = if a == 0.0 {
            0.0
        } else if m.abs() <= PHASE_SNAP * a {
            if r < 0.0 {
                std::f64::consts::PI
            } else {
                0.0
            }
        } else {
            m.atan2(r)
        };
    }
    (amp, ph)
}
