//! Python bindings for the DMNet super-resolution engine.
//!
//! The module mirrors the Rust API at image granularity: `Upscaler` owns a
//! model configuration plus its weights, and the free functions expose the
//! wavelet, Fourier, resampling, and metric primitives. All image arguments
//! are float32 numpy arrays in (channels, height, width) or
//! (batch, channels, height, width) layout with values in [0, 1]; results
//! come back with the rank of the input.

use std::path::Path;

use numpy::ndarray::{Array3, Array4};
use numpy::{IntoPyArray, PyReadonlyArray3, PyReadonlyArray4};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use dmnet_core::checkpoint;
use dmnet_core::metrics;
use dmnet_core::model::{macs_per_forward, FreqDomain, ModelConfig};
use dmnet_core::params::ParamStore;
use dmnet_core::training::{
    train_loop, AdamState, FreqLoss, PairedData, TrainConfig, TrainLogEntry, TrainSink,
};
use dmnet_core::{fourier, wavelet, Shape, Tensor};

fn core_err(e: dmnet_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A numpy image plus whether it arrived without a batch axis, so the
/// result can be returned with the same rank.
struct PyImage {
    tensor: Tensor,
    batched: bool,
}

fn image_from_py(x: &Bound<'_, PyAny>) -> PyResult<PyImage> {
    if let Ok(a) = x.extract::<PyReadonlyArray4<f32>>() {
        let v = a.as_array();
        let (n, c, h, w) = v.dim();
        let data: Vec<f32> = v.iter().copied().collect();
        let tensor = Tensor::from_vec(Shape::new(n, c, h, w), data).map_err(core_err)?;
        return Ok(PyImage { tensor, batched: true });
    }
    if let Ok(a) = x.extract::<PyReadonlyArray3<f32>>() {
        let v = a.as_array();
        let (c, h, w) = v.dim();
        let data: Vec<f32> = v.iter().copied().collect();
        let tensor = Tensor::from_vec(Shape::new(1, c, h, w), data).map_err(core_err)?;
        return Ok(PyImage { tensor, batched: false });
    }
    Err(PyValueError::new_err(
        "expected a float32 numpy array of shape (c, h, w) or (n, c, h, w)",
    ))
}

fn image_to_py(py: Python<'_>, t: &Tensor, batched: bool) -> PyResult<Py<PyAny>> {
    let Shape { n, c, h, w } = t.shape();
    let data = t.data().to_vec();
    if batched {
        let arr = Array4::from_shape_vec((n, c, h, w), data)
            .expect("tensor data length always matches its shape");
        Ok(arr.into_pyarray(py).into_any().unbind())
    } else {
        if n != 1 {
            return Err(PyValueError::new_err(
                "cannot drop the batch axis of a multi-image result",
            ));
        }
        let arr = Array3::from_shape_vec((c, h, w), data)
            .expect("tensor data length always matches its shape");
        Ok(arr.into_pyarray(py).into_any().unbind())
    }
}

fn parse_freq_domain(s: &str) -> PyResult<FreqDomain> {
    match s {
        "wavelet" => Ok(FreqDomain::Wavelet),
        "fourier" => Ok(FreqDomain::Fourier),
        _ => Err(PyValueError::new_err(format!(
            "freq_domain must be \"wavelet\" or \"fourier\", got {s:?}"
        ))),
    }
}

fn parse_freq_loss(s: &str) -> PyResult<FreqLoss> {
    match s {
        "fourier" => Ok(FreqLoss::Fourier),
        "wavelet" => Ok(FreqLoss::Wavelet),
        _ => Err(PyValueError::new_err(format!(
            "freq_loss must be \"fourier\" or \"wavelet\", got {s:?}"
        ))),
    }
}

fn domain_name(d: FreqDomain) -> &'static str {
    match d {
        FreqDomain::Wavelet => "wavelet",
        FreqDomain::Fourier => "fourier",
    }
}

/// Sink that keeps only the most recent loss entry.
struct LastEntry(Option<TrainLogEntry>);

impl TrainSink for LastEntry {
    fn on_log(&mut self, entry: &TrainLogEntry) {
        self.0 = Some(entry.clone());
    }
}

/// A super-resolution model: configuration plus named weights.
///
/// Construct one fresh with randomly initialized weights, or restore a
/// checkpoint written by this module or by the command-line trainer.
#[pyclass(module = "dmnet_py")]
pub struct Upscaler {
    train: TrainConfig,
    store: ParamStore,
}

#[pymethods]
impl Upscaler {
    #[new]
    #[pyo3(signature = (scale=4, channels=48, n_groups=3, n_blocks=3, ffn_ratio=2, dynamic=true, freq_domain="wavelet", seed=0))]
    fn new(
        scale: usize,
        channels: usize,
        n_groups: usize,
        n_blocks: usize,
        ffn_ratio: usize,
        dynamic: bool,
        freq_domain: &str,
        seed: u64,
    ) -> PyResult<Self> {
        let model = ModelConfig {
            scale,
            channels,
            n_groups,
            n_blocks,
            ffn_ratio,
            dynamic,
            freq_domain: parse_freq_domain(freq_domain)?,
        };
        model.validate().map_err(core_err)?;
        let store = model.init_params(seed);
        // Reference training recipe; train() and checkpoints may override.
        let train = TrainConfig {
            model,
            lambda: 0.1,
            lr0: 5e-4,
            iters: 500_000,
            batch: 32,
            patch: 64,
            seed,
            freq_loss: FreqLoss::Fourier,
            augment: true,
            log_every: 100,
            ckpt_every: 0,
        };
        Ok(Upscaler { train, store })
    }

    /// Restore a model from a checkpoint file. Optimizer state, if present,
    /// is ignored; training in Python always starts a fresh optimizer.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let ck = checkpoint::load(Path::new(path)).map_err(core_err)?;
        Ok(Upscaler { train: ck.train, store: ck.store })
    }

    /// Write the current weights and training configuration to a checkpoint
    /// readable by both this module and the command-line tool.
    fn save(&self, path: &str) -> PyResult<()> {
        checkpoint::save(Path::new(path), &self.train, &self.store, None).map_err(core_err)
    }

    /// Upscale one RGB image (3, h, w) or (1, 3, h, w) by the model's scale
    /// factor. Odd extents are reflection-padded internally and the output
    /// is cropped back to exactly (scale*h, scale*w).
    fn upscale(&self, py: Python<'_>, x: &Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
        let img = image_from_py(x)?;
        let out = dmnet_core::model::upscale(&self.train.model, &self.store, &img.tensor)
            .map_err(core_err)?;
        image_to_py(py, &out, img.batched)
    }

    /// Fit the weights to a list of HR images (each (3, h, w) float32).
    /// LR counterparts are produced by bicubic downsampling. Returns the
    /// final (pixel, frequency, total) loss triple.
    #[pyo3(signature = (hr_images, iters=200, lr0=1e-3, batch=2, patch=16, lam=0.1, freq_loss="fourier", augment=true, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        &mut self,
        hr_images: &Bound<'_, PyAny>,
        iters: usize,
        lr0: f64,
        batch: usize,
        patch: usize,
        lam: f32,
        freq_loss: &str,
        augment: bool,
        seed: u64,
    ) -> PyResult<(f64, f64, f64)> {
        let mut images = Vec::new();
        for item in hr_images.try_iter()? {
            let img = image_from_py(&item?)?;
            images.push(img.tensor);
        }
        let data = PairedData::from_hr(&images, self.train.model.scale).map_err(core_err)?;
        let cfg = TrainConfig {
            model: self.train.model.clone(),
            lambda: lam,
            lr0,
            iters,
            batch,
            patch,
            seed,
            freq_loss: parse_freq_loss(freq_loss)?,
            augment,
            log_every: 1,
            ckpt_every: 0,
        };
        let mut state = AdamState::new(&self.store);
        let mut sink = LastEntry(None);
        train_loop(&cfg, &data, &mut self.store, &mut state, &mut sink).map_err(core_err)?;
        self.train = cfg;
        let last = sink.0.expect("a positive iteration count always logs");
        Ok((last.pixel, last.fre, last.total))
    }

    /// Number of scalar weights.
    fn param_count(&self) -> usize {
        self.train.model.param_count()
    }

    /// Multiply-accumulate count of one forward pass on an (h, w) input.
    fn macs(&self, h: usize, w: usize) -> u64 {
        macs_per_forward(&self.train.model, h, w)
    }

    /// Architecture hyperparameters as a dict.
    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let m = &self.train.model;
        let d = PyDict::new(py);
        d.set_item("scale", m.scale)?;
        d.set_item("channels", m.channels)?;
        d.set_item("n_groups", m.n_groups)?;
        d.set_item("n_blocks", m.n_blocks)?;
        d.set_item("ffn_ratio", m.ffn_ratio)?;
        d.set_item("dynamic", m.dynamic)?;
        d.set_item("freq_domain", domain_name(m.freq_domain))?;
        Ok(d)
    }

    #[getter]
    fn scale(&self) -> usize {
        self.train.model.scale
    }

    fn __repr__(&self) -> String {
        let m = &self.train.model;
        format!(
            "Upscaler(scale={}, channels={}, n_groups={}, n_blocks={}, params={})",
            m.scale,
            m.channels,
            m.n_groups,
            m.n_blocks,
            m.param_count()
        )
    }
}

/// One level of the orthonormal Haar transform: (n, c, h, w) with even h, w
/// maps to (n, 4c, h/2, w/2), subbands stacked as channel blocks in the
/// order LL, LH, HL, HH.
#[pyfunction]
fn dwt2(py: Python<'_>, x: &Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
    let img = image_from_py(x)?;
    let out = wavelet::dwt_stack(&img.tensor).map_err(core_err)?;
    image_to_py(py, &out, img.batched)
}

/// Inverse of dwt2: (n, 4c, h, w) maps back to (n, c, 2h, 2w).
#[pyfunction]
fn idwt2(py: Python<'_>, x: &Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
    let img = image_from_py(x)?;
    let out = wavelet::idwt_stack(&img.tensor).map_err(core_err)?;
    image_to_py(py, &out, img.batched)
}

/// Per-channel 2-D discrete Fourier transform split into (amplitude, phase)
/// arrays, each shaped like the input. The transform is unnormalized; phase
/// lies in (-pi, pi].
#[pyfunction]
fn fft_amplitude_phase(
    py: Python<'_>,
    x: &Bound<'_, PyAny>,
) -> PyResult<(Py<PyAny>, Py<PyAny>)> {
    let img = image_from_py(x)?;
    let spec = fourier::fft2_stack(&img.tensor);
    let amp = fourier::amplitude(&spec).map_err(core_err)?;
    let ph = fourier::phase(&spec).map_err(core_err)?;
    Ok((image_to_py(py, &amp, img.batched)?, image_to_py(py, &ph, img.batched)?))
}

/// Resample by the rational factor num/den with the classic cubic kernel
/// (a = -0.5, symmetric edge handling).
#[pyfunction]
#[pyo3(signature = (x, num, den=1))]
fn bicubic_resize(py: Python<'_>, x: &Bound<'_, PyAny>, num: usize, den: usize) -> PyResult<Py<PyAny>> {
    let img = image_from_py(x)?;
    let out = metrics::bicubic_resize(&img.tensor, num, den).map_err(core_err)?;
    image_to_py(py, &out, img.batched)
}

/// Peak signal-to-noise ratio in dB between same-shaped arrays. Identical
/// inputs give +inf.
#[pyfunction]
#[pyo3(signature = (a, b, peak=1.0))]
fn psnr(a: &Bound<'_, PyAny>, b: &Bound<'_, PyAny>, peak: f64) -> PyResult<f64> {
    let (a, b) = (image_from_py(a)?, image_from_py(b)?);
    metrics::psnr(&a.tensor, &b.tensor, peak).map_err(core_err)
}

/// Mean structural similarity between same-shaped single-channel arrays,
/// Gaussian 11x11 windows on values in [0, 1].
#[pyfunction]
fn ssim(a: &Bound<'_, PyAny>, b: &Bound<'_, PyAny>) -> PyResult<f64> {
    let (a, b) = (image_from_py(a)?, image_from_py(b)?);
    metrics::ssim(&a.tensor, &b.tensor).map_err(core_err)
}

/// Standard super-resolution evaluation of an RGB pair: convert to the luma
/// channel, shave `border` pixels, return (psnr, ssim).
#[pyfunction]
fn evaluate_pair(sr: &Bound<'_, PyAny>, hr: &Bound<'_, PyAny>, border: usize) -> PyResult<(f64, f64)> {
    let (sr, hr) = (image_from_py(sr)?, image_from_py(hr)?);
    metrics::evaluate_pair(&sr.tensor, &hr.tensor, border).map_err(core_err)
}

#[pymodule]
fn dmnet_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Upscaler>()?;
    m.add_function(wrap_pyfunction!(dwt2, m)?)?;
    m.add_function(wrap_pyfunction!(idwt2, m)?)?;
    m.add_function(wrap_pyfunction!(fft_amplitude_phase, m)?)?;
    m.add_function(wrap_pyfunction!(bicubic_resize, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_pair, m)?)?;
    Ok(())
}
