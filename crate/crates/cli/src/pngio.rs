//! PNG loading and saving for (1, 3, h, w) tensors in [0, 1].

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dmnet_core::{Shape, Tensor};
use image::{ImageFormat, ImageReader, RgbImage};

/// Decode an 8-bit RGB PNG into a (1, 3, h, w) tensor scaled to [0, 1].
pub fn load_png(path: &Path) -> Result<Tensor> {
    let reader = ImageReader::open(path)
        .with_context(|| format!("opening image {}", path.display()))?;
    let img = reader
        .decode()
        .with_context(|| format!("decoding image {}", path.display()))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        bail!("image {} is empty", path.display());
    }
    let mut data = vec![0.0f32; 3 * h * w];
    for (y, x, px) in img.enumerate_pixels().map(|(x, y, p)| (y as usize, x as usize, p)) {
        for ch in 0..3 {
            data[(ch * h + y) * w + x] = f32::from(px.0[ch]) / 255.0;
        }
    }
    Tensor::from_vec(Shape::new(1, 3, h, w), data).map_err(anyhow::Error::new)
}

/// Quantize one channel value: clamp to [0, 1], then round half away from
/// zero to an 8-bit level.
pub fn quantize(v: f32) -> u8 {
    let c = v.clamp(0.0, 1.0);
    (f64::from(c) * 255.0 + 0.5).floor() as u8
}

/// Encode a (1, 3, h, w) tensor as an 8-bit RGB PNG.
pub fn save_png(path: &Path, img: &Tensor) -> Result<()> {
    let Shape { n, c, h, w } = img.shape();
    if n != 1 || c != 3 {
        bail!("expected a (1, 3, h, w) image, got {}", img.shape());
    }
    let data = img.data();
    let mut out = RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = [
                quantize(data[(y) * w + x]),
                quantize(data[(h + y) * w + x]),
                quantize(data[(2 * h + y) * w + x]),
            ];
            out.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    out.save_with_format(path, ImageFormat::Png)
        .with_context(|| format!("writing image {}", path.display()))
}

/// All PNG files directly inside `dir`, sorted by file name so every run
/// visits the dataset in the same order.
pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir)
        .with_context(|| format!("reading directory {}", dir.display()))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry
            .with_context(|| format!("reading directory {}", dir.display()))?
            .path();
        let is_png = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if path.is_file() && is_png {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}
