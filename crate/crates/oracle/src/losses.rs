//! Reference loss values: pixel L1, Fourier amplitude+phase L1, wavelet
//! subband L1, and their weighted total.

use crate::dft::{amplitude_phase, dft2};
use crate::wavelet::dwt_stack;
use crate::Arr;

/// Mean absolute error.
pub fn pixel_loss(sr: &Arr, hr: &Arr) -> f64 {
    assert_eq!(sr.dims, hr.dims);
    let n = sr.data.len() as f64;
    sr.data.iter().zip(&hr.data).map(|(a, b)| (a - b).abs()).sum::<f64>() / n
}

/// Mean absolute difference over the concatenated amplitude and phase planes
/// of the per-channel spectra of sr and hr.
pub fn frequency_loss(sr: &Arr, hr: &Arr) -> f64 {
    assert_eq!(sr.dims, hr.dims);
    let (sr_re, sr_im) = dft2(sr);
    let (hr_re, hr_im) = dft2(hr);
    let (sa, sp) = amplitude_phase(&sr_re, &sr_im);
    let (ha, hp) = amplitude_phase(&hr_re, &hr_im);
    let mut acc = 0.0;
    for i in 0..sa.data.len() {
        acc += (sa.data[i] - ha.data[i]).abs();
        acc += (sp.data[i] - hp.data[i]).abs();
    }
    acc / (2 * sa.data.len()) as f64
}

/// Mean absolute difference over the stacked Haar subbands of sr and hr.
pub fn wavelet_loss(sr: &Arr, hr: &Arr) -> f64 {
    assert_eq!(sr.dims, hr.dims);
    let a = dwt_stack(sr);
    let b = dwt_stack(hr);
    pixel_loss(&a, &b)
}

/// pixel_loss + lambda * frequency_loss.
pub fn total_loss(sr: &Arr, hr: &Arr, lambda: f64) -> f64 {
    pixel_loss(sr, hr) + lambda * frequency_loss(sr, hr)
}
