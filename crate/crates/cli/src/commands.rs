//! The five subcommands: train, infer, eval, info, selfcheck (the last one
//! lives in its own module).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dmnet_core::checkpoint::{self, Checkpoint};
use dmnet_core::metrics::{bicubic_resize, evaluate_pair, mod_crop};
use dmnet_core::model::{macs_per_forward, upscale, ModelConfig};
use dmnet_core::params::ParamStore;
use dmnet_core::training::{
    train_loop, AdamState, PairedData, TrainConfig, TrainLogEntry, TrainSink,
};
use dmnet_core::{Shape, Tensor};

use crate::config::RunConfig;
use crate::pngio::{list_pngs, load_png, save_png};
use crate::report::{EvalEntry, EvalReport};

/// Load every PNG under `dir` as an HR image and pair it with a bicubic
/// downscale. `min_lr` rejects images whose downscaled side would be
/// smaller than the training patch, naming the offending file.
pub fn load_hr_dataset(
    dir: &Path,
    scale: usize,
    min_lr: Option<usize>,
) -> Result<(PairedData, Vec<String>)> {
    let files = list_pngs(dir)?;
    if files.is_empty() {
        bail!("no PNG images found in {}", dir.display());
    }
    let mut images = Vec::with_capacity(files.len());
    let mut names = Vec::with_capacity(files.len());
    for path in &files {
        let img = load_png(path)?;
        let Shape { h, w, .. } = img.shape();
        if let Some(patch) = min_lr {
            let (lh, lw) = (h / scale, w / scale);
            if lh < patch || lw < patch {
                bail!(
                    "image {} is {h}x{w} ({lh}x{lw} after x{scale} downscaling), \
                     smaller than the {patch}-pixel patch",
                    path.display(),
                );
            }
        }
        names.push(display_name(path));
        images.push(img);
    }
    let data = PairedData::from_hr(&images, scale)?;
    Ok((data, names))
}

fn display_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Sink that writes the loss log and periodic checkpoints under `out_dir`.
struct RunSink<'a> {
    log: BufWriter<File>,
    out_dir: &'a Path,
    cfg: &'a TrainConfig,
    log_error: Option<std::io::Error>,
}

impl<'a> RunSink<'a> {
    fn new(log_path: &Path, out_dir: &'a Path, cfg: &'a TrainConfig) -> Result<Self> {
        let file = File::create(log_path)
            .with_context(|| format!("creating {}", log_path.display()))?;
        Ok(RunSink { log: BufWriter::new(file), out_dir, cfg, log_error: None })
    }

    /// Flush the log and surface any write error swallowed along the way.
    fn finish(mut self) -> Result<()> {
        if let Err(e) = self.log.flush() {
            self.log_error.get_or_insert(e);
        }
        match self.log_error {
            Some(e) => Err(anyhow::Error::new(e).context("writing loss.log")),
            None => Ok(()),
        }
    }

    fn dump_raw(&self, name: &str, t: &Tensor) -> std::io::Result<()> {
        let mut bytes = Vec::with_capacity(4 * t.numel());
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(self.out_dir.join(name), bytes)
    }
}

impl TrainSink for RunSink<'_> {
    fn on_log(&mut self, entry: &TrainLogEntry) {
        if self.log_error.is_none() {
            if let Err(e) = writeln!(self.log, "{entry}") {
                self.log_error = Some(e);
            }
        }
    }

    fn on_checkpoint(
        &mut self,
        iter: usize,
        store: &ParamStore,
        state: &AdamState,
    ) -> dmnet_core::Result<()> {
        let path = self.out_dir.join(format!("ckpt_{iter}.dmn"));
        checkpoint::save(&path, self.cfg, store, Some(state))
    }

    fn on_divergence(&mut self, lr_batch: &Tensor, hr_batch: &Tensor) {
        // Best effort: the loop aborts right after this, so a failed dump
        // must not mask the underlying divergence error.
        let _ = self.dump_raw("diverged_lr.f32", lr_batch);
        let _ = self.dump_raw("diverged_hr.f32", hr_batch);
        let _ = std::fs::write(
            self.out_dir.join("diverged.txt"),
            format!(
                "loss went non-finite on this batch\n\
                 diverged_lr.f32: {} little-endian f32 values\n\
                 diverged_hr.f32: {} little-endian f32 values\n",
                lr_batch.shape(),
                hr_batch.shape(),
            ),
        );
    }
}

/// Train per the run config. Writes `loss.log`, periodic `ckpt_<iter>.dmn`
/// snapshots, and a final checkpoint; returns the final checkpoint path.
pub fn cmd_train(cfg: &RunConfig) -> Result<PathBuf> {
    let data_dir = cfg
        .data_dir
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("config sets no data_dir; training needs a directory of HR PNGs"))?;

    // The logging and snapshot cadences are not config-file keys; derive
    // them from the run length so short runs still produce useful logs.
    let mut tc = cfg.train;
    tc.log_every = (tc.iters / 100).clamp(1, 100);
    if tc.ckpt_every == 0 {
        tc.ckpt_every = tc.iters / 10;
    }

    let (data, _names) = load_hr_dataset(data_dir, tc.model.scale, Some(tc.patch))?;
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;

    let mut store = tc.model.init_params(tc.seed);
    let mut state = AdamState::new(&store);
    let log_path = cfg.out_dir.join("loss.log");
    let mut sink = RunSink::new(&log_path, &cfg.out_dir, &tc)?;
    let outcome = train_loop(&tc, &data, &mut store, &mut state, &mut sink);
    sink.finish()?;
    outcome?;

    let final_path = cfg.out_dir.join(format!("ckpt_{}.dmn", tc.iters));
    checkpoint::save(&final_path, &tc, &store, Some(&state))?;
    Ok(final_path)
}

/// Upscale one PNG with a trained checkpoint.
pub fn cmd_infer(ckpt_path: &Path, input: &Path, output: &Path) -> Result<()> {
    let ck = checkpoint::load(ckpt_path)?;
    let img = load_png(input)?;
    let sr = upscale(&ck.train.model, &ck.store, &img)?;
    save_png(output, &sr)
}

/// Evaluate a checkpoint on a directory of HR PNGs; LR inputs are bicubic
/// downscales of the (mod-cropped) HR images. Writes `report.txt` and
/// `report.kv` under `out_dir` and returns the report.
pub fn cmd_eval(
    ckpt_path: &Path,
    data_dir: &Path,
    scale_check: Option<usize>,
    out_dir: &Path,
) -> Result<EvalReport> {
    let ck = checkpoint::load(ckpt_path)?;
    let s = ck.train.model.scale;
    if let Some(want) = scale_check {
        if want != s {
            bail!("checkpoint {} was trained for scale {s}, not {want}", ckpt_path.display());
        }
    }
    let files = list_pngs(data_dir)?;
    if files.is_empty() {
        bail!("no PNG images found in {}", data_dir.display());
    }

    let mut entries = Vec::new();
    let mut rejected = Vec::new();
    for path in &files {
        match eval_one(&ck, path) {
            Ok((psnr, ssim)) => entries.push(EvalEntry { name: display_name(path), psnr, ssim }),
            Err(e) => {
                eprintln!("skipping {}: {e:#}", path.display());
                rejected.push(display_name(path));
            }
        }
    }
    if entries.is_empty() {
        bail!("no image in {} could be evaluated", data_dir.display());
    }

    let dataset = display_name(data_dir);
    let report = EvalReport::new(&dataset, s, s, entries)?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    std::fs::write(out_dir.join("report.txt"), report.text_table())?;
    std::fs::write(out_dir.join("report.kv"), report.key_values())?;
    if !rejected.is_empty() {
        eprintln!("rejected {} image(s): {}", rejected.len(), rejected.join(", "));
    }
    Ok(report)
}

fn eval_one(ck: &Checkpoint, path: &Path) -> Result<(f64, f64)> {
    let s = ck.train.model.scale;
    let hr = mod_crop(&load_png(path)?, s);
    let lr = bicubic_resize(&hr, 1, s)?;
    let sr = upscale(&ck.train.model, &ck.store, &lr)?;
    Ok(evaluate_pair(&sr, &hr, s)?)
}

/// Published reference totals for the 48-channel, 3x3-block recipe. The
/// FLOP figures follow the multiply-accumulate convention common in
/// super-resolution comparisons (one MAC counted as one FLOP).
const REFERENCE_PARAMS_X4: f64 = 587_000.0;
const REFERENCE_FLOPS_X2: f64 = 115.7e9;
const REFERENCE_FLOPS_X4: f64 = 29.8e9;

/// Parameter/FLOP report: per-module parameter counts, the total, and FLOPs
/// for a 1280x720 output, with reference comparisons for the published
/// configuration.
pub fn info_report(cfg: &ModelConfig) -> String {
    let mut out = format!(
        "scale x{}  channels {}  groups {} x {} blocks  ffn ratio {}  dynamic {}  domain {}\n\nparameters\n",
        cfg.scale,
        cfg.channels,
        cfg.n_groups,
        cfg.n_blocks,
        cfg.ffn_ratio,
        if cfg.dynamic { "on" } else { "off" },
        cfg.freq_domain,
    );

    // Aggregate leaf tensors by module: the path up to and including the
    // block-level component.
    let mut modules: Vec<(String, usize)> = Vec::new();
    for spec in cfg.param_layout() {
        let module = module_of(&spec.name);
        match modules.last_mut() {
            Some((name, count)) if *name == module => *count += spec.shape.numel(),
            _ => modules.push((module, spec.shape.numel())),
        }
    }
    let width = modules.iter().map(|(n, _)| n.len()).max().unwrap_or(8);
    for (name, count) in &modules {
        out.push_str(&format!("  {name:width$}  {count:>9}\n"));
    }
    let total = cfg.param_count();
    out.push_str(&format!("  {:width$}  {total:>9}\n", "total"));

    let (h_in, w_in) = input_for_720p(cfg.scale);
    let flops = macs_per_forward(cfg, h_in, w_in) as f64;
    out.push_str(&format!(
        "\nflops at 1280x720 output (input {w_in}x{h_in}): {:.2} G (multiply-accumulates)\n",
        flops / 1e9,
    ));

    if cfg.channels == 48 && cfg.n_groups == 3 && cfg.n_blocks == 3 && cfg.ffn_ratio == 2 {
        out.push_str("\nreference comparison (published recipe)\n");
        if cfg.scale == 4 {
            out.push_str(&format!(
                "  params    {total} vs 587K ({:+.1}%)\n",
                100.0 * (total as f64 - REFERENCE_PARAMS_X4) / REFERENCE_PARAMS_X4,
            ));
        }
        let target = match cfg.scale {
            2 => Some(REFERENCE_FLOPS_X2),
            4 => Some(REFERENCE_FLOPS_X4),
            _ => None,
        };
        if let Some(t) = target {
            out.push_str(&format!(
                "  flops     {:.2} G vs {:.1} G ({:+.1}%)\n",
                flops / 1e9,
                t / 1e9,
                100.0 * (flops - t) / t,
            ));
        }
        let ratio = flops_ratio_x2_x4(cfg);
        out.push_str(&format!("  flops x2 / flops x4 = {ratio:.3} (reference 3.88)\n"));
    }
    out
}

/// Input extent whose upscaled output covers 1280x720 (rounded up when the
/// scale does not divide evenly).
pub fn input_for_720p(scale: usize) -> (usize, usize) {
    (720usize.div_ceil(scale), 1280usize.div_ceil(scale))
}

/// FLOP ratio between the x2 and x4 variants of the same architecture,
/// both measured at a 1280x720 output (convention-independent).
pub fn flops_ratio_x2_x4(cfg: &ModelConfig) -> f64 {
    let at = |scale: usize| {
        let c = ModelConfig { scale, ..*cfg };
        let (h, w) = input_for_720p(scale);
        macs_per_forward(&c, h, w) as f64
    };
    at(2) / at(4)
}

fn module_of(name: &str) -> String {
    let parts: Vec<&str> = name.split('.').collect();
    let stop = parts
        .iter()
        .position(|p| matches!(*p, "head" | "tail" | "conv" | "smt" | "wmt"))
        .unwrap_or(parts.len() - 1);
    parts[..=stop].join(".")
}
