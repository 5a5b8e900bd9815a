//! Bridges between the f32 engine and the f64 reference implementations,
//! used by the selfcheck command and the verification suites.

use dmnet_core::params::ParamStore;
use dmnet_core::rng::SeededRng;
use dmnet_core::{Shape, Tensor};
use dmnet_oracle::{Arr, ParamMap};

pub fn to_arr(t: &Tensor) -> Arr {
    let s = t.shape();
    Arr::from_vec(
        [s.n, s.c, s.h, s.w],
        t.data().iter().map(|&v| v as f64).collect(),
    )
}

pub fn to_tensor(a: &Arr) -> Tensor {
    let [n, c, h, w] = a.dims;
    Tensor::from_vec(
        Shape::new(n, c, h, w),
        a.data.iter().map(|&v| v as f32).collect(),
    )
    .expect("reference array carries a consistent shape")
}

/// Copy a parameter store into the name-keyed reference map.
pub fn store_to_map(store: &ParamStore) -> ParamMap {
    store.iter().map(|(name, t)| (name.to_string(), to_arr(t))).collect()
}

/// Uniform random tensor in [lo, hi).
pub fn rand_tensor(shape: Shape, rng: &mut SeededRng, lo: f32, hi: f32) -> Tensor {
    let data = (0..shape.numel()).map(|_| lo + (hi - lo) * rng.uniform()).collect();
    Tensor::from_vec(shape, data).expect("shape/data length agree by construction")
}

/// Overwrite every parameter with uniform values in [-spread, spread); the
/// default init is too tight to stress numerical parity.
pub fn randomize_store(store: &mut ParamStore, rng: &mut SeededRng, spread: f32) {
    for i in 0..store.len() {
        for v in store.tensor_mut(i).data_mut() {
            *v = spread * (2.0 * rng.uniform() - 1.0);
        }
    }
}
