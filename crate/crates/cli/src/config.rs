//! Plain-text key=value run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every other line
//! must be `key = value`; unknown and repeated keys are rejected so a typo
//! cannot silently fall back to a default.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dmnet_core::model::{FreqDomain, ModelConfig};
use dmnet_core::training::{FreqLoss, TrainConfig};

/// Everything a command needs: the training surface plus file locations.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    /// Directory of high-resolution PNGs; required by `train` and unused
    /// elsewhere.
    pub data_dir: Option<PathBuf>,
    /// Where loss logs, checkpoints, and reports are written.
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    /// The reference recipe: 48 channels, 3 groups of 3 block pairs,
    /// expansion ratio 2, dual-domain loss weight 0.1, cosine schedule
    /// from 5e-4 over 500K iterations on 64-pixel patches.
    fn default() -> Self {
        RunConfig {
            train: TrainConfig {
                model: ModelConfig {
                    scale: 4,
                    channels: 48,
                    n_groups: 3,
                    n_blocks: 3,
                    ffn_ratio: 2,
                    dynamic: true,
                    freq_domain: FreqDomain::Wavelet,
                },
                lambda: 0.1,
                lr0: 5e-4,
                iters: 500_000,
                batch: 32,
                patch: 64,
                seed: 0,
                freq_loss: FreqLoss::Fourier,
                augment: true,
                log_every: 100,
                ckpt_every: 0,
            },
            data_dir: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Parse a config file's contents, starting from the defaults.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("line {}: expected key = value, got {raw:?}", lineno + 1);
            };
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                bail!("line {}: key {key:?} set twice", lineno + 1);
            }
            cfg.apply(key, value)
                .with_context(|| format!("line {}: key {key:?}", lineno + 1))?;
        }
        cfg.train
            .validate()
            .map_err(|e| anyhow::anyhow!("invalid configuration: {e}"))?;
        Ok(cfg)
    }

    /// Read and parse a config file.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        RunConfig::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "scale" => t.model.scale = parse_num(value)?,
            "channels" => t.model.channels = parse_num(value)?,
            "n_groups" => t.model.n_groups = parse_num(value)?,
            "n_blocks" => t.model.n_blocks = parse_num(value)?,
            "ffn_ratio" => t.model.ffn_ratio = parse_num(value)?,
            "lambda" => t.lambda = parse_num(value)?,
            "lr0" => t.lr0 = parse_num(value)?,
            "iters" => t.iters = parse_num(value)?,
            "batch" => t.batch = parse_num(value)?,
            "patch" => t.patch = parse_num(value)?,
            "seed" => t.seed = parse_num(value)?,
            "data_dir" => self.data_dir = Some(PathBuf::from(value)),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "ablation.dynamic" => t.model.dynamic = parse_bool(value)?,
            "ablation.freq_domain" => {
                t.model.freq_domain = value.parse::<FreqDomain>().map_err(anyhow::Error::new)?
            }
            "ablation.freq_loss" => {
                t.freq_loss = value.parse::<FreqLoss>().map_err(anyhow::Error::new)?
            }
            other => bail!("unknown key {other:?}"),
        }
        Ok(())
    }
}

fn parse_num<T>(value: &str) -> Result<T>
where
    T: std::str::FromStr,
    T::Err: std::error::Error + Send + Sync + 'static,
{
    value
        .parse::<T>()
        .with_context(|| format!("cannot parse {value:?}"))
}

fn parse_bool(value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => bail!("expected true or false, got {other:?}"),
    }
}
