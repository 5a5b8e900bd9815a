//! Reverse-mode automatic differentiation over a recorded operation tape.
//!
//! `Tape::training()` records every operation so `backward` can replay the
//! graph in reverse; `Tape::inference()` records nothing, so intermediate
//! tensors free as soon as their `Var` goes out of scope. Saved backward
//! context holds cheap `Tensor` clones (shared storage), never deep copies.
//!
//! All `Var`s passed to a tape's methods must have been produced by that
//! same tape (or be untracked constants).

use crate::fourier;
use crate::kernels::{self, Axis, ConvGeom, LayerNormSaved};
use crate::tensor::{expect_same_shape, Shape, Tensor};
use crate::wavelet;
use crate::{shape_err, Error, Result};
use std::cell::RefCell;

/// A tensor tracked by a tape. `node` is absent for constants and for every
/// value produced under an inference tape.
#[derive(Clone)]
pub struct Var {
    tensor: Tensor,
    node: Option<usize>,
}

impl Var {
    /// Wrap a tensor that never receives gradients (targets, fixed inputs).
    pub fn constant(tensor: Tensor) -> Var {
        Var { tensor, node: None }
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn shape(&self) -> Shape {
        self.tensor.shape()
    }

    pub fn item(&self) -> Result<f32> {
        self.tensor.item()
    }

    /// The tensor value, detached from any tape bookkeeping.
    pub fn detach(&self) -> Tensor {
        self.tensor.clone()
    }
}

enum Op {
    Leaf,
    Add,
    Sub,
    Mul { a: Tensor, b: Tensor },
    Scale { k: f32 },
    Exp { y: Tensor },
    Gelu { x: Tensor },
    MulScalar { x: Tensor, s: f32 },
    Conv2d { x: Tensor, w: Tensor, geom: ConvGeom },
    LayerNorm { x: Tensor, gamma: Tensor, saved: LayerNormSaved },
    Softmax { y: Tensor, axis: Axis },
    L2NormSpatial { x: Tensor, rnorm: Vec<f32> },
    BmmNN { a: Tensor, b: Tensor },
    BmmNT { a: Tensor, b: Tensor },
    Reshape,
    ConcatChannels,
    SliceChannels { start: usize },
    PixelShuffle { s: usize },
    PixelUnshuffle { s: usize },
    Dwt,
    Idwt,
    Fft2,
    Ifft2Real,
    Amplitude { x: Tensor },
    Phase { x: Tensor },
    L1Loss { a: Tensor, b: Tensor },
    Sum,
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul { .. } => "mul",
            Op::Scale { .. } => "scale",
            Op::Exp { .. } => "exp",
            Op::Gelu { .. } => "gelu",
            Op::MulScalar { .. } => "mul_scalar",
            Op::Conv2d { .. } => "conv2d",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Softmax { .. } => "softmax",
            Op::L2NormSpatial { .. } => "l2norm_spatial",
            Op::BmmNN { .. } => "bmm_nn",
            Op::BmmNT { .. } => "bmm_nt",
            Op::Reshape => "reshape",
            Op::ConcatChannels => "concat_channels",
            Op::SliceChannels { .. } => "slice_channels",
            Op::PixelShuffle { .. } => "pixel_shuffle",
            Op::PixelUnshuffle { .. } => "pixel_unshuffle",
            Op::Dwt => "dwt",
            Op::Idwt => "idwt",
            Op::Fft2 => "fft2",
            Op::Ifft2Real => "ifft2_real",
            Op::Amplitude { .. } => "amplitude",
            Op::Phase { .. } => "phase",
            Op::L1Loss { .. } => "l1_loss",
            Op::Sum => "sum",
        }
    }
}

struct Node {
    op: Op,
    inputs: Vec<Option<usize>>,
    input_shapes: Vec<Shape>,
    shape: Shape,
}

/// Shape-level description of one recorded operation.
#[derive(Clone, Debug)]
pub struct OpInfo {
    pub name: &'static str,
    pub output: Shape,
    pub inputs: Vec<Shape>,
}

/// Gradients of one backward pass, addressed by the `Var`s of the same tape.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`. Returns zeros when the
    /// loss does not depend on it; errors when `var` was never tracked.
    pub fn of(&self, var: &Var) -> Result<Tensor> {
        let id = var.node.ok_or_else(|| {
            Error::Invalid("gradient requested for an untracked variable".into())
        })?;
        Ok(match &self.grads[id] {
            Some(t) => t.clone(),
            None => Tensor::zeros(var.shape()),
        })
    }

    /// True when the loss actually reached `var` during backward.
    pub fn reaches(&self, var: &Var) -> bool {
        var.node.is_some_and(|id| self.grads[id].is_some())
    }
}

/// Operation recorder. Create one per forward/backward cycle.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    recording: bool,
}

impl Tape {
    /// A tape that records operations for a later `backward` call.
    pub fn training() -> Tape {
        Tape { nodes: RefCell::new(Vec::new()), recording: true }
    }

    /// A tape that runs the same operations without recording anything.
    pub fn inference() -> Tape {
        Tape { nodes: RefCell::new(Vec::new()), recording: false }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    fn push(&self, op: Op, inputs: &[&Var], tensor: Tensor) -> Var {
        if !self.recording {
            return Var { tensor, node: None };
        }
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            op,
            inputs: inputs.iter().map(|v| v.node).collect(),
            input_shapes: inputs.iter().map(|v| v.shape()).collect(),
            shape: tensor.shape(),
        });
        Var { tensor, node: Some(id) }
    }

    /// Register a differentiable input (parameters, trainable tensors).
    pub fn leaf(&self, tensor: Tensor) -> Var {
        self.push(Op::Leaf, &[], tensor)
    }

    pub fn add(&self, a: &Var, b: &Var) -> Result<Var> {
        expect_same_shape("add", a.shape(), b.shape())?;
        let out = kernels::add(&a.tensor, &b.tensor);
        Ok(self.push(Op::Add, &[a, b], out))
    }

    pub fn sub(&self, a: &Var, b: &Var) -> Result<Var> {
        expect_same_shape("sub", a.shape(), b.shape())?;
        let out = kernels::sub(&a.tensor, &b.tensor);
        Ok(self.push(Op::Sub, &[a, b], out))
    }

    pub fn mul(&self, a: &Var, b: &Var) -> Result<Var> {
        expect_same_shape("mul", a.shape(), b.shape())?;
        let out = kernels::mul(&a.tensor, &b.tensor);
        let op = Op::Mul { a: a.tensor.clone(), b: b.tensor.clone() };
        Ok(self.push(op, &[a, b], out))
    }

    pub fn scale(&self, x: &Var, k: f32) -> Var {
        let out = kernels::scale(&x.tensor, k);
        self.push(Op::Scale { k }, &[x], out)
    }

    pub fn exp(&self, x: &Var) -> Var {
        let out = kernels::exp(&x.tensor);
        let op = Op::Exp { y: out.clone() };
        self.push(op, &[x], out)
    }

    pub fn gelu(&self, x: &Var) -> Var {
        let out = kernels::gelu(&x.tensor);
        self.push(Op::Gelu { x: x.tensor.clone() }, &[x], out)
    }

    /// Multiply every element of `x` by a tracked scalar `s`.
    pub fn mul_scalar(&self, x: &Var, s: &Var) -> Result<Var> {
        let sv = s.item()?;
        let out = kernels::broadcast_mul(&x.tensor, sv);
        let op = Op::MulScalar { x: x.tensor.clone(), s: sv };
        Ok(self.push(op, &[x, s], out))
    }

    pub fn conv2d(
        &self,
        x: &Var,
        w: &Var,
        bias: Option<&Var>,
        stride: usize,
        padding: usize,
        groups: usize,
    ) -> Result<Var> {
        let geom = ConvGeom::resolve(
            x.shape(),
            w.shape(),
            bias.map(|b| b.shape()),
            stride,
            padding,
            groups,
        )?;
        let out = kernels::conv2d_fwd(&x.tensor, &w.tensor, bias.map(|b| &b.tensor), &geom);
        let op = Op::Conv2d { x: x.tensor.clone(), w: w.tensor.clone(), geom };
        Ok(match bias {
            Some(b) => self.push(op, &[x, w, b], out),
            None => self.push(op, &[x, w], out),
        })
    }

    pub fn layer_norm(&self, x: &Var, gamma: &Var, beta: &Var, eps: f32) -> Result<Var> {
        let want = Shape::new(1, x.shape().c, 1, 1);
        if gamma.shape() != want || beta.shape() != want {
            return Err(shape_err(
                "layer_norm",
                format!(
                    "gamma {} / beta {} must both be {want}",
                    gamma.shape(),
                    beta.shape()
                ),
            ));
        }
        let (out, saved) = kernels::layer_norm_fwd(&x.tensor, &gamma.tensor, &beta.tensor, eps);
        let op = Op::LayerNorm { x: x.tensor.clone(), gamma: gamma.tensor.clone(), saved };
        Ok(self.push(op, &[x, gamma, beta], out))
    }

    pub fn softmax(&self, x: &Var, axis: Axis) -> Var {
        let out = kernels::softmax_fwd(&x.tensor, axis);
        let op = Op::Softmax { y: out.clone(), axis };
        self.push(op, &[x], out)
    }

    /// L2-normalize each channel over its spatial extent.
    pub fn l2norm_spatial(&self, x: &Var, eps: f64) -> Var {
        let (out, rnorm) = kernels::l2norm_spatial_fwd(&x.tensor, eps);
        let op = Op::L2NormSpatial { x: x.tensor.clone(), rnorm };
        self.push(op, &[x], out)
    }

    pub fn bmm_nn(&self, a: &Var, b: &Var) -> Result<Var> {
        let out = kernels::bmm_nn(&a.tensor, &b.tensor)?;
        let op = Op::BmmNN { a: a.tensor.clone(), b: b.tensor.clone() };
        Ok(self.push(op, &[a, b], out))
    }

    pub fn bmm_nt(&self, a: &Var, b: &Var) -> Result<Var> {
        let out = kernels::bmm_nt(&a.tensor, &b.tensor)?;
        let op = Op::BmmNT { a: a.tensor.clone(), b: b.tensor.clone() };
        Ok(self.push(op, &[a, b], out))
    }

    pub fn reshape(&self, x: &Var, shape: Shape) -> Result<Var> {
        let out = x.tensor.reshaped(shape)?;
        Ok(self.push(Op::Reshape, &[x], out))
    }

    pub fn concat_channels(&self, parts: &[&Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|v| &v.tensor).collect();
        let out = kernels::concat_channels(&tensors)?;
        Ok(self.push(Op::ConcatChannels, parts, out))
    }

    pub fn slice_channels(&self, x: &Var, start: usize, len: usize) -> Result<Var> {
        let out = kernels::slice_channels(&x.tensor, start, len)?;
        Ok(self.push(Op::SliceChannels { start }, &[x], out))
    }

    pub fn pixel_shuffle(&self, x: &Var, s: usize) -> Result<Var> {
        let out = kernels::pixel_shuffle(&x.tensor, s)?;
        Ok(self.push(Op::PixelShuffle { s }, &[x], out))
    }

    pub fn pixel_unshuffle(&self, x: &Var, s: usize) -> Result<Var> {
        let out = kernels::pixel_unshuffle(&x.tensor, s)?;
        Ok(self.push(Op::PixelUnshuffle { s }, &[x], out))
    }

    pub fn dwt(&self, x: &Var) -> Result<Var> {
        let out = wavelet::dwt_stack(&x.tensor)?;
        Ok(self.push(Op::Dwt, &[x], out))
    }

    pub fn idwt(&self, x: &Var) -> Result<Var> {
        let out = wavelet::idwt_stack(&x.tensor)?;
        Ok(self.push(Op::Idwt, &[x], out))
    }

    pub fn fft2(&self, x: &Var) -> Var {
        let out = fourier::fft2_stack(&x.tensor);
        self.push(Op::Fft2, &[x], out)
    }

    pub fn ifft2_real(&self, x: &Var) -> Result<Var> {
        let out = fourier::ifft2_real_stack(&x.tensor)?;
        Ok(self.push(Op::Ifft2Real, &[x], out))
    }

    pub fn amplitude(&self, x: &Var) -> Result<Var> {
        let out = fourier::amplitude(&x.tensor)?;
        Ok(self.push(Op::Amplitude { x: x.tensor.clone() }, &[x], out))
    }

    pub fn phase(&self, x: &Var) -> Result<Var> {
        let out = fourier::phase(&x.tensor)?;
        Ok(self.push(Op::Phase { x: x.tensor.clone() }, &[x], out))
    }

    /// Mean absolute difference, reduced to a scalar.
    pub fn l1_loss(&self, a: &Var, b: &Var) -> Result<Var> {
        expect_same_shape("l1_loss", a.shape(), b.shape())?;
        let out = kernels::l1_mean(&a.tensor, &b.tensor);
        let op = Op::L1Loss { a: a.tensor.clone(), b: b.tensor.clone() };
        Ok(self.push(op, &[a, b], out))
    }

    /// Sum of all elements, reduced to a scalar.
    pub fn sum(&self, x: &Var) -> Var {
        let out = kernels::sum_all(&x.tensor);
        self.push(Op::Sum, &[x], out)
    }

    /// Reverse sweep from a scalar loss. Gradients accumulate where a value
    /// feeds several consumers; leaves the loss never reaches report zeros
    /// through `Gradients::of`.
    pub fn backward(&self, loss: &Var) -> Result<Gradients> {
        let id = loss.node.ok_or_else(|| {
            Error::Invalid("backward requires a loss recorded on this tape".into())
        })?;
        if loss.tensor.numel() != 1 {
            return Err(shape_err(
                "backward",
                format!("loss must be a scalar, got {}", loss.shape()),
            ));
        }
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[id] = Some(Tensor::scalar(1.0));
        for i in (0..=id).rev() {
            let node = &nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            for (slot, contrib) in backward_op(node, &g)? {
                if let Some(src) = node.inputs[slot] {
                    accumulate(&mut grads[src], contrib);
                }
            }
        }
        Ok(Gradients { grads })
    }

    /// Shape-level summary of every recorded operation, in execution order.
    pub fn node_summaries(&self) -> Vec<OpInfo> {
        self.nodes
            .borrow()
            .iter()
            .map(|n| OpInfo {
                name: n.op.name(),
                output: n.shape,
                inputs: n.input_shapes.clone(),
            })
            .collect()
    }
}

fn accumulate(slot: &mut Option<Tensor>, contrib: Tensor) {
    match slot {
        None => *slot = Some(contrib),
        Some(prev) => *prev = kernels::add(prev, &contrib),
    }
}

fn backward_op(node: &Node, g: &Tensor) -> Result<Vec<(usize, Tensor)>> {
    Ok(match &node.op {
        Op::Leaf => Vec::new(),
        Op::Add => vec![(0, g.clone()), (1, g.clone())],
        Op::Sub => vec![(0, g.clone()), (1, kernels::scale(g, -1.0))],
        Op::Mul { a, b } => vec![(0, kernels::mul(g, b)), (1, kernels::mul(g, a))],
        Op::Scale { k } => vec![(0, kernels::scale(g, *k))],
        Op::Exp { y } => vec![(0, kernels::mul(g, y))],
        Op::Gelu { x } => vec![(0, kernels::gelu_grad(x, g))],
        Op::MulScalar { x, s } => {
            let mut acc = 0.0f64;
            for (&gv, &xv) in g.data().iter().zip(x.data()) {
                acc += gv as f64 * xv as f64;
            }
            vec![(0, kernels::scale(g, *s)), (1, Tensor::scalar(acc as f32))]
        }
        Op::Conv2d { x, w, geom } => {
            let (dx, dw, db) = kernels::conv2d_bwd(x, w, geom, g);
            let mut v = vec![(0, dx), (1, dw)];
            if node.inputs.len() == 3 {
                v.push((2, db));
            }
            v
        }
        Op::LayerNorm { x, gamma, saved } => {
            let (dx, dgamma, dbeta) = kernels::layer_norm_bwd(x, gamma, saved, g);
            vec![(0, dx), (1, dgamma), (2, dbeta)]
        }
        Op::Softmax { y, axis } => vec![(0, kernels::softmax_bwd(y, *axis, g))],
        Op::L2NormSpatial { x, rnorm } => {
            vec![(0, kernels::l2norm_spatial_bwd(x, rnorm, g))]
        }
        Op::BmmNN { a, b } => vec![(0, kernels::bmm_nt(g, b)?), (1, kernels::bmm_tn(a, g)?)],
        Op::BmmNT { a, b } => vec![(0, kernels::bmm_nn(g, b)?), (1, kernels::bmm_tn(g, a)?)],
        Op::Reshape => vec![(0, g.reshaped(node.input_shapes[0])?)],
        Op::ConcatChannels => {
            let mut v = Vec::with_capacity(node.input_shapes.len());
            let mut start = 0;
            for (i, s) in node.input_shapes.iter().enumerate() {
                v.push((i, kernels::slice_channels(g, start, s.c)?));
                start += s.c;
            }
            v
        }
        Op::SliceChannels { start } => {
            let src = node.input_shapes[0];
            let len = node.shape.c;
            let plane = src.h * src.w;
            let mut dx = Tensor::zeros(src);
            let gv = g.data();
            let dv = dx.data_mut();
            for ni in 0..src.n {
                let dst = (ni * src.c + start) * plane;
                let sg = ni * len * plane;
                dv[dst..dst + len * plane].copy_from_slice(&gv[sg..sg + len * plane]);
            }
            vec![(0, dx)]
        }
        Op::PixelShuffle { s } => vec![(0, kernels::pixel_unshuffle(g, *s)?)],
        Op::PixelUnshuffle { s } => vec![(0, kernels::pixel_shuffle(g, *s)?)],
        Op::Dwt => vec![(0, wavelet::idwt_stack(g)?)],
        Op::Idwt => vec![(0, wavelet::dwt_stack(g)?)],
        Op::Fft2 => vec![(0, fourier::fft2_adjoint(g)?)],
        Op::Ifft2Real => vec![(0, fourier::ifft2_real_adjoint(g))],
        Op::Amplitude { x } => vec![(0, fourier::amplitude_bwd(x, g))],
        Op::Phase { x } => vec![(0, fourier::phase_bwd(x, g))],
        Op::L1Loss { a, b } => {
            let up = g.item()?;
            let da = kernels::l1_mean_bwd(a, b, up);
            let db = kernels::scale(&da, -1.0);
            vec![(0, da), (1, db)]
        }
        Op::Sum => vec![(0, Tensor::full(node.input_shapes[0], g.item()?))],
    })
}
