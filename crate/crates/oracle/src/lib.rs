//! Slow, obviously-correct reference implementations in f64.
//!
//! Everything in this crate is written as straight-line loops with no shared
//! plumbing, so it can serve as an independent second route when testing the
//! optimized f32 engine in `dmnet-core`. Nothing here is meant to be fast.

pub mod adam;
pub mod blocks;
pub mod dft;
pub mod fd;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod wavelet;

use std::collections::BTreeMap;

/// Dense 4-D array (batch, channel, height, width) of f64, row-major.
#[derive(Clone, Debug)]
pub struct Arr {
    pub dims: [usize; 4],
    pub data: Vec<f64>,
}

impl Arr {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Arr { dims, data: vec![0.0; dims.iter().product()] }
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<f64>) -> Self {
        assert_eq!(data.len(), dims.iter().product::<usize>(), "data length must match dims");
        Arr { dims, data }
    }

    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }

    #[inline]
    pub fn idx(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.dims[1] + c) * self.dims[2] + y) * self.dims[3] + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.idx(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: f64) {
        let i = self.idx(n, c, y, x);
        self.data[i] = v;
    }

    /// Concatenate along the channel axis.
    pub fn concat_channels(parts: &[&Arr]) -> Arr {
        let [n, _, h, w] = parts[0].dims;
        let c_total: usize = parts.iter().map(|p| p.dims[1]).sum();
        let mut out = Arr::zeros([n, c_total, h, w]);
        let mut base = 0;
        for p in parts {
            assert_eq!(p.dims[0], n);
            assert_eq!(p.dims[2], h);
            assert_eq!(p.dims[3], w);
            for ni in 0..n {
                for c in 0..p.dims[1] {
                    for y in 0..h {
                        for x in 0..w {
                            out.set(ni, base + c, y, x, p.at(ni, c, y, x));
                        }
                    }
                }
            }
            base += p.dims[1];
        }
        out
    }

    /// Channel slice [start, start+len).
    pub fn slice_channels(&self, start: usize, len: usize) -> Arr {
        let [n, c, h, w] = self.dims;
        assert!(start + len <= c);
        let mut out = Arr::zeros([n, len, h, w]);
        for ni in 0..n {
            for ci in 0..len {
                for y in 0..h {
                    for x in 0..w {
                        out.set(ni, ci, y, x, self.at(ni, start + ci, y, x));
                    }
                }
            }
        }
        out
    }
}

/// Named parameter set shared between the reference block/model forwards.
pub type ParamMap = BTreeMap<String, Arr>;
