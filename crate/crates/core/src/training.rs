//! Training loop: paired patch sampling, the dual-domain loss, Adam with a
//! cosine learning-rate schedule, and progress reporting through a sink.

use crate::metrics::{bicubic_resize, mod_crop};
use crate::model::{forward, ModelConfig};
use crate::params::ParamStore;
use crate::rng::SeededRng;
use crate::tape::{Tape, Var};
use crate::tensor::{expect_same_shape, Shape, Tensor};
use crate::{fourier, shape_err, wavelet, Error, Result};

/// Which frequency-domain penalty accompanies the pixel loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FreqLoss {
    /// L1 over Fourier amplitude and phase planes, averaged together.
    Fourier,
    /// L1 over the stacked Haar subbands.
    Wavelet,
}

impl std::str::FromStr for FreqLoss {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fourier" => Ok(FreqLoss::Fourier),
            "wavelet" => Ok(FreqLoss::Wavelet),
            other => Err(Error::Invalid(format!(
                "unknown frequency loss '{other}' (expected fourier or wavelet)"
            ))),
        }
    }
}

impl std::fmt::Display for FreqLoss {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FreqLoss::Fourier => "fourier",
            FreqLoss::Wavelet => "wavelet",
        })
    }
}

/// Everything a training run needs besides the data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    /// Weight of the frequency term; zero trains on pixel loss alone.
    pub lambda: f32,
    /// Peak learning rate; the schedule decays it to 1/100 of this.
    pub lr0: f64,
    pub iters: usize,
    pub batch: usize,
    /// Low-resolution patch side length.
    pub patch: usize,
    pub seed: u64,
    pub freq_loss: FreqLoss,
    /// Random horizontal flips and quarter rotations.
    pub augment: bool,
    pub log_every: usize,
    /// Checkpoint cadence in iterations; zero disables periodic snapshots.
    pub ckpt_every: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            return Err(Error::Invalid(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if self.iters == 0 || self.batch == 0 || self.log_every == 0 {
            return Err(Error::Invalid(
                "iters, batch and log_every must be positive".into(),
            ));
        }
        if self.patch < 4 {
            return Err(Error::Invalid(format!("patch must be at least 4, got {}", self.patch)));
        }
        if !self.model.fourier() && self.patch % 2 != 0 {
            return Err(Error::Invalid(
                "patch must be even when the wavelet branch is active".into(),
            ));
        }
        Ok(())
    }
}

/// Cosine decay from lr0 at t = 0 towards lr0/100 at t = total.
pub fn lr_at(lr0: f64, t: usize, total: usize) -> f64 {
    let lr_min = lr0 / 100.0;
    let phase = std::f64::consts::PI * t as f64 / total as f64;
    lr_min + (lr0 - lr_min) * (1.0 + phase.cos()) / 2.0
}

/// Adam moment buffers aligned with a parameter store, stored in f32 but
/// updated with f64 arithmetic per element.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.99;
pub const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    /// Fresh zeroed moments for every parameter in the store.
    pub fn new(store: &ParamStore) -> Self {
        let m = (0..store.len()).map(|i| Tensor::zeros(store.entry(i).1.shape())).collect();
        let v = (0..store.len()).map(|i| Tensor::zeros(store.entry(i).1.shape())).collect();
        AdamState { m, v, step: 0 }
    }

    /// Rebuild from persisted moments. Shapes must already be validated
    /// against the parameter store they will drive.
    pub fn from_parts(step: u64, m: Vec<Tensor>, v: Vec<Tensor>) -> Result<Self> {
        if m.len() != v.len() {
            return Err(Error::Invalid("mismatched moment table lengths".into()));
        }
        for (a, b) in m.iter().zip(&v) {
            expect_same_shape("adam_state", a.shape(), b.shape())?;
        }
        Ok(AdamState { m, v, step })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// First and second moment for parameter `i`, in store order.
    pub fn moments(&self, i: usize) -> (&Tensor, &Tensor) {
        (&self.m[i], &self.v[i])
    }
}

/// One bias-corrected Adam update over every parameter. `grads` must be in
/// store order, as produced by gathering over bound parameter vars.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState, grads: &[Tensor], lr: f64) {
    assert_eq!(grads.len(), store.len(), "gradient list must match the store");
    assert_eq!(state.len(), store.len(), "optimizer state must match the store");
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    for i in 0..grads.len() {
        let w = store.tensor_mut(i);
        assert_eq!(w.shape(), grads[i].shape(), "gradient shape must match parameter");
        let wv = w.data_mut();
        let gv = grads[i].data();
        let mv = state.m[i].data_mut();
        let vv = state.v[i].data_mut();
        for j in 0..wv.len() {
            let g = gv[j] as f64;
            let m = ADAM_BETA1 * mv[j] as f64 + (1.0 - ADAM_BETA1) * g;
            let v = ADAM_BETA2 * vv[j] as f64 + (1.0 - ADAM_BETA2) * g * g;
            mv[j] = m as f32;
            vv[j] = v as f32;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            wv[j] = (wv[j] as f64 - lr * m_hat / (v_hat.sqrt() + ADAM_EPS)) as f32;
        }
    }
}

/// Aligned low/high-resolution image pairs ready for patch sampling.
pub struct PairedData {
    lr: Vec<Tensor>,
    hr: Vec<Tensor>,
    scale: usize,
}

impl PairedData {
    /// Build pairs from high-resolution RGB images: each is cropped to a
    /// multiple of `scale` and paired with its bicubic 1/scale downscale.
    pub fn from_hr(images: &[Tensor], scale: usize) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Invalid("training set is empty".into()));
        }
        let mut lr = Vec::with_capacity(images.len());
        let mut hr = Vec::with_capacity(images.len());
        for (i, img) in images.iter().enumerate() {
            let Shape { n, c, h, w } = img.shape();
            if n != 1 || c != 3 {
                return Err(shape_err(
                    "paired_data",
                    format!("image {i}: expected (1, 3, h, w), got {}", img.shape()),
                ));
            }
            if h < scale || w < scale {
                return Err(Error::Invalid(format!(
                    "image {i} is {h}x{w}, smaller than the scale factor {scale}"
                )));
            }
            let cropped = mod_crop(img, scale);
            lr.push(bicubic_resize(&cropped, 1, scale)?);
            hr.push(cropped);
        }
        Ok(PairedData { lr, hr, scale })
    }

    /// Build from externally prepared pairs; high-resolution dimensions must
    /// be exactly `scale` times the low-resolution ones.
    pub fn from_pairs(lr: Vec<Tensor>, hr: Vec<Tensor>, scale: usize) -> Result<Self> {
        if lr.is_empty() || lr.len() != hr.len() {
            return Err(Error::Invalid("pair lists must be non-empty and equal length".into()));
        }
        for (i, (l, h)) in lr.iter().zip(&hr).enumerate() {
            let ls = l.shape();
            let hs = h.shape();
            if ls.n != 1 || ls.c != 3 || hs.n != 1 || hs.c != 3 {
                return Err(shape_err("paired_data", format!("pair {i}: expected (1, 3, h, w)")));
            }
            if hs.h != ls.h * scale || hs.w != ls.w * scale {
                return Err(shape_err(
                    "paired_data",
                    format!("pair {i}: {hs} is not {scale}x of {ls}"),
                ));
            }
        }
        Ok(PairedData { lr, hr, scale })
    }

    pub fn len(&self) -> usize {
        self.lr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lr.is_empty()
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn lr(&self, i: usize) -> &Tensor {
        &self.lr[i]
    }

    pub fn hr(&self, i: usize) -> &Tensor {
        &self.hr[i]
    }
}

fn crop(img: &Tensor, y0: usize, x0: usize, ch: usize, cw: usize) -> Tensor {
    let Shape { n, c, h, w } = img.shape();
    debug_assert!(n == 1 && y0 + ch <= h && x0 + cw <= w);
    let mut out = Tensor::zeros(Shape::new(1, c, ch, cw));
    let xv = img.data();
    let ov = out.data_mut();
    for ci in 0..c {
        for y in 0..ch {
            let src = (ci * h + y0 + y) * w + x0;
            let dst = (ci * ch + y) * cw;
            ov[dst..dst + cw].copy_from_slice(&xv[src..src + cw]);
        }
    }
    out
}

/// Mirror along the horizontal axis (columns reversed).
pub fn flip_h(img: &Tensor) -> Tensor {
    let Shape { n, c, h, w } = img.shape();
    let mut out = Tensor::zeros(img.shape());
    let xv = img.data();
    let ov = out.data_mut();
    for p in 0..n * c * h {
        let row = p * w;
        for x in 0..w {
            ov[row + x] = xv[row + w - 1 - x];
        }
    }
    out
}

/// Rotate by k quarter turns clockwise.
pub fn rot90(img: &Tensor, k: usize) -> Tensor {
    let mut cur = img.clone();
    for _ in 0..k % 4 {
        let Shape { n, c, h, w } = cur.shape();
        let mut out = Tensor::zeros(Shape::new(n, c, w, h));
        let xv = cur.data();
        let ov = out.data_mut();
        for p in 0..n * c {
            for y in 0..w {
                for x in 0..h {
                    ov[(p * w + y) * h + x] = xv[(p * h + (h - 1 - x)) * w + y];
                }
            }
        }
        cur = out;
    }
    cur
}

/// Draw a batch of aligned patch pairs. Per sample the draws are image
/// index, row offset, column offset, then (when augmenting) flip and
/// rotation, all from the given stream.
pub fn sample_batch(
    data: &PairedData,
    patch: usize,
    batch: usize,
    augment: bool,
    rng: &mut SeededRng,
) -> Result<(Tensor, Tensor)> {
    let s = data.scale();
    let mut lr_parts = Vec::with_capacity(batch);
    let mut hr_parts = Vec::with_capacity(batch);
    for _ in 0..batch {
        let i = rng.below(data.len());
        let l = data.lr(i);
        let h = data.hr(i);
        let Shape { h: lh, w: lw, .. } = l.shape();
        if lh < patch || lw < patch {
            return Err(Error::Invalid(format!(
                "image {i} is {lh}x{lw} after downscaling, smaller than patch {patch}"
            )));
        }
        let oy = rng.below(lh - patch + 1);
        let ox = rng.below(lw - patch + 1);
        let mut lp = crop(l, oy, ox, patch, patch);
        let mut hp = crop(h, s * oy, s * ox, s * patch, s * patch);
        if augment {
            if rng.flip() {
                lp = flip_h(&lp);
                hp = flip_h(&hp);
            }
            let k = rng.below(4);
            lp = rot90(&lp, k);
            hp = rot90(&hp, k);
        }
        lr_parts.push(lp);
        hr_parts.push(hp);
    }
    Ok((stack_batch(&lr_parts), stack_batch(&hr_parts)))
}

fn stack_batch(parts: &[Tensor]) -> Tensor {
    let Shape { c, h, w, .. } = parts[0].shape();
    let mut out = Tensor::zeros(Shape::new(parts.len(), c, h, w));
    let plane = c * h * w;
    let ov = out.data_mut();
    for (i, p) in parts.iter().enumerate() {
        ov[i * plane..][..plane].copy_from_slice(p.data());
    }
    out
}

/// Mean absolute error between equal-shaped tensors, in f64.
pub fn pixel_loss_value(a: &Tensor, b: &Tensor) -> Result<f64> {
    expect_same_shape("pixel_loss", a.shape(), b.shape())?;
    let mut acc = 0.0f64;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        acc += (x as f64 - y as f64).abs();
    }
    Ok(acc / a.numel() as f64)
}

/// Mean absolute difference over the concatenated Fourier amplitude and
/// phase planes of the two inputs.
pub fn frequency_loss_value(a: &Tensor, b: &Tensor) -> Result<f64> {
    expect_same_shape("frequency_loss", a.shape(), b.shape())?;
    let fa = fourier::fft2_stack(a);
    let fb = fourier::fft2_stack(b);
    let (aa, pa) = (fourier::amplitude(&fa)?, fourier::phase(&fa)?);
    let (ab, pb) = (fourier::amplitude(&fb)?, fourier::phase(&fb)?);
    let mut acc = 0.0f64;
    for i in 0..aa.numel() {
        acc += (aa.data()[i] as f64 - ab.data()[i] as f64).abs();
        acc += (pa.data()[i] as f64 - pb.data()[i] as f64).abs();
    }
    Ok(acc / (2 * aa.numel()) as f64)
}

/// Mean absolute difference over stacked Haar subbands of the two inputs.
pub fn wavelet_loss_value(a: &Tensor, b: &Tensor) -> Result<f64> {
    let wa = wavelet::dwt_stack(a)?;
    let wb = wavelet::dwt_stack(b)?;
    pixel_loss_value(&wa, &wb)
}

/// Tracked total loss for a prediction/target pair: pixel L1 plus
/// lambda times the chosen frequency term. With lambda = 0 only the pixel
/// term is built and the frequency var is None. Returns (total, pixel, fre).
pub fn losses_on_tape(
    tape: &Tape,
    sr: &Var,
    hr: &Tensor,
    lambda: f32,
    freq: FreqLoss,
) -> Result<(Var, Var, Option<Var>)> {
    let target = Var::constant(hr.clone());
    let pixel = tape.l1_loss(sr, &target)?;
    if lambda == 0.0 {
        return Ok((pixel.clone(), pixel, None));
    }
    let fre = match freq {
        FreqLoss::Fourier => {
            let fs = tape.fft2(sr);
            let amp_s = tape.amplitude(&fs)?;
            let ph_s = tape.phase(&fs)?;
            let fh = fourier::fft2_stack(hr);
            let amp_h = Var::constant(fourier::amplitude(&fh)?);
            let ph_h = Var::constant(fourier::phase(&fh)?);
            let la = tape.l1_loss(&amp_s, &amp_h)?;
            let lp = tape.l1_loss(&ph_s, &ph_h)?;
            tape.scale(&tape.add(&la, &lp)?, 0.5)
        }
        FreqLoss::Wavelet => {
            let ws = tape.dwt(sr)?;
            let wh = Var::constant(wavelet::dwt_stack(hr)?);
            tape.l1_loss(&ws, &wh)?
        }
    };
    let total = tape.add(&pixel, &tape.scale(&fre, lambda))?;
    Ok((total, pixel, Some(fre)))
}

/// One logged training step.
#[derive(Clone, Copy, Debug)]
pub struct TrainLogEntry {
    pub iter: usize,
    pub lr: f64,
    pub pixel: f64,
    pub fre: f64,
    pub total: f64,
}

impl std::fmt::Display for TrainLogEntry {
    /// The loss-log line format: `iter lr l_pixel l_fre l_total` as five
    /// space-separated decimal fields.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {:.8} {:.6} {:.6} {:.6}",
            self.iter, self.lr, self.pixel, self.fre, self.total
        )
    }
}

/// Receives training progress. All methods default to no-ops so callers
/// implement only what they need.
pub trait TrainSink {
    fn on_log(&mut self, _entry: &TrainLogEntry) {}

    /// Called every `ckpt_every` iterations with the current weights and
    /// optimizer state.
    fn on_checkpoint(&mut self, _iter: usize, _store: &ParamStore, _state: &AdamState) -> Result<()> {
        Ok(())
    }

    /// Called with the offending batch when the loss stops being finite,
    /// just before training aborts.
    fn on_divergence(&mut self, _lr_batch: &Tensor, _hr_batch: &Tensor) {}
}

/// Sink that ignores everything.
pub struct SilentSink;

impl TrainSink for SilentSink {}

/// Run the optimization loop over `store` in place. The sampler stream is
/// derived from the seed so that parameter initialization (which consumes
/// the raw seed) stays decoupled from batch order.
pub fn train_loop(
    cfg: &TrainConfig,
    data: &PairedData,
    store: &mut ParamStore,
    state: &mut AdamState,
    sink: &mut dyn TrainSink,
) -> Result<()> {
    cfg.validate()?;
    if data.scale() != cfg.model.scale {
        return Err(Error::Invalid(format!(
            "data prepared for scale {} but model uses {}",
            data.scale(),
            cfg.model.scale
        )));
    }
    for i in 0..data.len() {
        let Shape { h, w, .. } = data.lr(i).shape();
        if h < cfg.patch || w < cfg.patch {
            return Err(Error::Invalid(format!(
                "image {i} is {h}x{w} after downscaling, smaller than patch {}",
                cfg.patch
            )));
        }
    }
    let mut rng = SeededRng::new(cfg.seed ^ 0xA076_1D64_78BD_642F);
    for t in 0..cfg.iters {
        let lr = lr_at(cfg.lr0, t, cfg.iters);
        let (lrb, hrb) = sample_batch(data, cfg.patch, cfg.batch, cfg.augment, &mut rng)?;
        let (total_val, pixel_val, fre_val, sr_out, grads) = {
            let tape = Tape::training();
            let bound = crate::params::BoundParams::bind(&tape, store);
            let x = Var::constant(lrb.clone());
            let sr = forward(&bound, &cfg.model, &x)?;
            let (total, pixel, fre) =
                losses_on_tape(&tape, &sr, &hrb, cfg.lambda, cfg.freq_loss)?;
            let total_val = total.item()? as f64;
            let pixel_val = pixel.item()? as f64;
            let fre_val = match &fre {
                Some(v) => Some(v.item()? as f64),
                None => None,
            };
            if !total_val.is_finite() {
                sink.on_divergence(&lrb, &hrb);
                return Err(Error::NonFinite(format!(
                    "loss became {total_val} at iteration {t}"
                )));
            }
            let grads = tape.backward(&total)?;
            let mut gvec = Vec::with_capacity(store.len());
            for var in bound.vars() {
                gvec.push(grads.of(var)?);
            }
            (total_val, pixel_val, fre_val, sr.tensor().clone(), gvec)
        };
        adam_step(store, state, &grads, lr);
        if t % cfg.log_every == 0 || t + 1 == cfg.iters {
            let fre = match fre_val {
                Some(v) => v,
                // With a zero weight the frequency term is not on the tape;
                // evaluate it on the detached output purely for the log.
                None => match cfg.freq_loss {
                    FreqLoss::Fourier => frequency_loss_value(&sr_out, &hrb)?,
                    FreqLoss::Wavelet => wavelet_loss_value(&sr_out, &hrb)?,
                },
            };
            sink.on_log(&TrainLogEntry { iter: t, lr, pixel: pixel_val, fre, total: total_val });
        }
        if cfg.ckpt_every > 0 && (t + 1) % cfg.ckpt_every == 0 {
            sink.on_checkpoint(t + 1, store, state)?;
        }
    }
    Ok(())
}
