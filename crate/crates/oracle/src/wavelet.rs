//! Reference single-level orthonormal 2-D Haar transform.
//!
//! Filters are (1/sqrt2, 1/sqrt2) low-pass and (1/sqrt2, -1/sqrt2) high-pass,
//! applied along rows then columns with stride 2. For one 2x2 block
//! [[p, q], [r, s]] this collapses to
//!   ll = (p+q+r+s)/2    lh = (p+q-r-s)/2   (low rows, high columns)
//!   hl = (p-q+r-s)/2    hh = (p-q-r+s)/2   (high rows, low/high columns)

use crate::Arr;

/// Forward transform, subbands returned as (ll, lh, hl, hh), each (n,c,h/2,w/2).
pub fn dwt(x: &Arr) -> (Arr, Arr, Arr, Arr) {
    let [n, c, h, w] = x.dims;
    assert!(h % 2 == 0 && w % 2 == 0, "spatial dims must be even");
    let (oh, ow) = (h / 2, w / 2);
    let mut ll = Arr::zeros([n, c, oh, ow]);
    let mut lh = Arr::zeros([n, c, oh, ow]);
    let mut hl = Arr::zeros([n, c, oh, ow]);
    let mut hh = Arr::zeros([n, c, oh, ow]);
    for ni in 0..n {
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let p = x.at(ni, ci, 2 * oy, 2 * ox);
                    let q = x.at(ni, ci, 2 * oy, 2 * ox + 1);
                    let r = x.at(ni, ci, 2 * oy + 1, 2 * ox);
                    let s = x.at(ni, ci, 2 * oy + 1, 2 * ox + 1);
                    ll.set(ni, ci, oy, ox, (p + q + r + s) / 2.0);
                    lh.set(ni, ci, oy, ox, (p + q - r - s) / 2.0);
                    hl.set(ni, ci, oy, ox, (p - q + r - s) / 2.0);
                    hh.set(ni, ci, oy, ox, (p - q - r + s) / 2.0);
                }
            }
        }
    }
    (ll, lh, hl, hh)
}

/// Inverse transform; exact inverse of `dwt`.
pub fn idwt(ll: &Arr, lh: &Arr, hl: &Arr, hh: &Arr) -> Arr {
    let [n, c, oh, ow] = ll.dims;
    for s in [lh, hl, hh] {
        assert_eq!(s.dims, ll.dims, "subband shapes must match");
    }
    let mut out = Arr::zeros([n, c, oh * 2, ow * 2]);
    for ni in 0..n {
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let a = ll.at(ni, ci, oy, ox);
                    let b = lh.at(ni, ci, oy, ox);
                    let cc = hl.at(ni, ci, oy, ox);
                    let d = hh.at(ni, ci, oy, ox);
                    out.set(ni, ci, 2 * oy, 2 * ox, (a + b + cc + d) / 2.0);
                    out.set(ni, ci, 2 * oy, 2 * ox + 1, (a + b - cc - d) / 2.0);
                    out.set(ni, ci, 2 * oy + 1, 2 * ox, (a - b + cc - d) / 2.0);
                    out.set(ni, ci, 2 * oy + 1, 2 * ox + 1, (a - b - cc + d) / 2.0);
                }
            }
        }
    }
    out
}

/// Forward transform with subbands stacked along channels as [LL, LH, HL, HH].
pub fn dwt_stack(x: &Arr) -> Arr {
    let (ll, lh, hl, hh) = dwt(x);
    Arr::concat_channels(&[&ll, &lh, &hl, &hh])
}

/// Inverse of `dwt_stack`: input (n, 4c, h, w) -> (n, c, 2h, 2w).
pub fn idwt_stack(x: &Arr) -> Arr {
    let c4 = x.dims[1];
    assert_eq!(c4 % 4, 0);
    let c = c4 / 4;
    let ll = x.slice_channels(0, c);
    let lh = x.slice_channels(c, c);
    let hl = x.slice_channels(2 * c, c);
    let hh = x.slice_channels(3 * c, c);
    idwt(&ll, &lh, &hl, &hh)
}
