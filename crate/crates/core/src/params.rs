//! Named parameter storage and its binding onto an autodiff tape.
//!
//! A `ParamStore` is an ordered list of (dotted name, tensor) pairs. The
//! order is fixed by the layout that created it, which makes weight
//! initialization, optimizer state, and checkpoints deterministic. Forward
//! passes never touch the store directly: `BoundParams::bind` registers
//! every tensor as a tape leaf once, and blocks look their weights up by
//! name.

use crate::rng::SeededRng;
use crate::tape::{Tape, Var};
use crate::tensor::{Shape, Tensor};
use crate::{Error, Result};
use std::collections::HashMap;

/// How a parameter tensor is filled at initialization.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    Zeros,
    Ones,
    /// Normal(0, std) with draws outside two standard deviations rejected.
    TruncNormal { std: f64 },
}

/// One named parameter in a layout.
#[derive(Clone, Debug)]
pub struct LeafSpec {
    pub name: String,
    pub shape: Shape,
    pub init: Init,
}

/// Ordered named parameter tensors.
#[derive(Clone)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    /// Fill a layout with freshly initialized tensors. The random stream is
    /// consumed in layout order, so equal (layout, seed) pairs always
    /// produce identical stores.
    pub fn init(specs: &[LeafSpec], seed: u64) -> ParamStore {
        let mut rng = SeededRng::new(seed);
        let entries = specs
            .iter()
            .map(|s| {
                let t = match s.init {
                    Init::Zeros => Tensor::zeros(s.shape),
                    Init::Ones => Tensor::full(s.shape, 1.0),
                    Init::TruncNormal { std } => {
                        let v = (0..s.shape.numel()).map(|_| rng.trunc_normal(std)).collect();
                        Tensor::from_vec(s.shape, v).expect("numel matches by construction")
                    }
                };
                (s.name.clone(), t)
            })
            .collect();
        ParamStore::from_entries(entries)
    }

    pub fn from_entries(entries: Vec<(String, Tensor)>) -> ParamStore {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (n, _))| (n.clone(), i))
            .collect();
        ParamStore { entries, index }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    /// Name and tensor at a layout position.
    pub fn entry(&self, i: usize) -> (&str, &Tensor) {
        let (n, t) = &self.entries[i];
        (n.as_str(), t)
    }

    /// Mutable tensor at a layout position (optimizer updates).
    pub fn tensor_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.entries[i].1
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.all_finite())
    }
}

/// A store's tensors registered as leaves on one tape, addressable by name.
pub struct BoundParams<'t> {
    tape: &'t Tape,
    vars: Vec<Var>,
    index: HashMap<String, usize>,
}

impl<'t> BoundParams<'t> {
    pub fn bind(tape: &'t Tape, store: &ParamStore) -> BoundParams<'t> {
        let vars = store.entries.iter().map(|(_, t)| tape.leaf(t.clone())).collect();
        BoundParams { tape, vars, index: store.index.clone() }
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn var(&self, name: &str) -> Result<&Var> {
        self.try_var(name)
            .ok_or_else(|| Error::Invalid(format!("unknown parameter {name}")))
    }

    pub fn try_var(&self, name: &str) -> Option<&Var> {
        self.index.get(name).map(|&i| &self.vars[i])
    }

    /// Leaves in store order; index-aligned with the originating store.
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}
