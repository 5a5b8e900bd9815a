//! Evaluation reports: a human-readable table and a machine-readable
//! key-value form of the same numbers.

use anyhow::{bail, Result};

/// Scores of one evaluated image.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalEntry {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
}

/// Per-image scores plus their arithmetic means.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub dataset: String,
    pub scale: usize,
    /// Pixels cropped from each side before scoring.
    pub border: usize,
    pub entries: Vec<EvalEntry>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

impl EvalReport {
    /// Aggregate per-image entries; the means are recomputed here so they
    /// can never drift from the rows.
    pub fn new(dataset: &str, scale: usize, border: usize, entries: Vec<EvalEntry>) -> Result<EvalReport> {
        if entries.is_empty() {
            bail!("no images evaluated in {dataset:?}");
        }
        let n = entries.len() as f64;
        let mean_psnr = entries.iter().map(|e| e.psnr).sum::<f64>() / n;
        let mean_ssim = entries.iter().map(|e| e.ssim).sum::<f64>() / n;
        Ok(EvalReport { dataset: dataset.to_string(), scale, border, entries, mean_psnr, mean_ssim })
    }

    /// Human-readable table.
    pub fn text_table(&self) -> String {
        let width = self
            .entries
            .iter()
            .map(|e| e.name.len())
            .chain(["image".len(), "mean".len()])
            .max()
            .unwrap_or(5);
        let mut out = format!(
            "dataset {}  scale x{}  border {} px\n{:width$}  {:>10}  {:>8}\n",
            self.dataset, self.scale, self.border, "image", "psnr", "ssim",
        );
        for e in &self.entries {
            out.push_str(&format!(
                "{:width$}  {:>10.4}  {:>8.6}\n",
                e.name, e.psnr, e.ssim,
            ));
        }
        out.push_str(&format!(
            "{:width$}  {:>10.4}  {:>8.6}\n",
            "mean", self.mean_psnr, self.mean_ssim,
        ));
        out
    }

    /// Machine-readable form: one `image psnr ssim` line per image, then a
    /// final `mean psnr ssim` line.
    pub fn key_values(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!("{} {:.4} {:.6}\n", e.name, e.psnr, e.ssim));
        }
        out.push_str(&format!("mean {:.4} {:.6}\n", self.mean_psnr, self.mean_ssim));
        out
    }
}
