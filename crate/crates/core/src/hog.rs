//! Whole-image histogram of oriented gradients.
//!
//! Unsigned gradients from `[-1, 0, 1]` differences, magnitude-weighted cell
//! histograms with linear interpolation between the two nearest bin centres,
//! and overlapping blocks normalized with the L2 / clip 0.2 / L2 scheme.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::{l2_norm, NORM_EPSILON};
use crate::types::{DescriptorVector, ImageGray};

pub const TECHNIQUE_ID: &str = "hog";
const BLOCK_CLIP: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HogConfig {
    pub cell_size: usize,
    pub block_size: usize,
    pub bin_count: usize,
    pub block_stride: usize,
    /// `(width, height)` every image is resampled to before description.
    pub working_resolution: (usize, usize),
}

impl Default for HogConfig {
    fn default() -> Self {
        Self {
            cell_size: 8,
            block_size: 16,
            bin_count: 9,
            block_stride: 8,
            working_resolution: (128, 128),
        }
    }
}

impl HogConfig {
    fn validate_structure(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("hog: {m}")));
        if self.cell_size == 0 {
            return bad("cell_size must be positive".into());
        }
        if self.block_size == 0 || !self.block_size.is_multiple_of(self.cell_size) {
            return bad(format!(
                "block_size {} is not a multiple of cell_size {}",
                self.block_size, self.cell_size
            ));
        }
        if self.block_stride == 0 || !self.block_stride.is_multiple_of(self.cell_size) {
            return bad(format!(
                "block_stride {} is not a multiple of cell_size {}",
                self.block_stride, self.cell_size
            ));
        }
        if self.bin_count < 2 {
            return bad(format!("bin_count {} below 2", self.bin_count));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_structure()?;
        let (w, h) = self.working_resolution;
        if w % self.cell_size != 0 || h % self.cell_size != 0 {
            return Err(Error::InvalidConfig(format!(
                "hog: working resolution {w}x{h} not divisible by cell_size {}",
                self.cell_size
            )));
        }
        if w < self.block_size || h < self.block_size {
            return Err(Error::InvalidConfig(format!(
                "hog: working resolution {w}x{h} smaller than one block"
            )));
        }
        Ok(())
    }

    pub fn cells_per_block_side(&self) -> usize {
        self.block_size / self.cell_size
    }

    /// `(blocks_x, blocks_y)` for a `width` x `height` image.
    pub fn block_grid(&self, width: usize, height: usize) -> (usize, usize) {
        (
            (width - self.block_size) / self.block_stride + 1,
            (height - self.block_size) / self.block_stride + 1,
        )
    }

    pub fn descriptor_dim(&self, width: usize, height: usize) -> usize {
        let (bx, by) = self.block_grid(width, height);
        let c = self.cells_per_block_side();
        bx * by * c * c * self.bin_count
    }

    fn check_image(&self, width: usize, height: usize) -> Result<()> {
        let mismatch = |reason: String| {
            Err(Error::ConfigImageMismatch {
                width,
                height,
                reason,
            })
        };
        if !width.is_multiple_of(self.cell_size) || !height.is_multiple_of(self.cell_size) {
            return mismatch(format!("not divisible by cell size {}", self.cell_size));
        }
        if width < self.block_size || height < self.block_size {
            return mismatch(format!("smaller than block size {}", self.block_size));
        }
        Ok(())
    }
}

/// Per-pixel gradient magnitude and unsigned orientation in degrees, `[0, 180)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub width: usize,
    pub height: usize,
    pub magnitude: Vec<f64>,
    pub angle: Vec<f64>,
}

/// `[-1, 0, 1]` central differences; one-sided differences on the border.
pub fn gradients(img: &ImageGray) -> Gradients {
    let (w, h) = (img.width(), img.height());
    let px = img.pixels();
    let diff = |i_lo: usize, i_hi: usize| px[i_hi] - px[i_lo];
    let mut magnitude = Vec::with_capacity(w * h);
    let mut angle = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let gx = match (x, w) {
                (_, 1) => 0.0,
                (0, _) => diff(y * w, y * w + 1),
                (x, w) if x == w - 1 => diff(y * w + x - 1, y * w + x),
                (x, _) => diff(y * w + x - 1, y * w + x + 1),
            };
            let gy = match (y, h) {
                (_, 1) => 0.0,
                (0, _) => diff(x, w + x),
                (y, h) if y == h - 1 => diff((y - 1) * w + x, y * w + x),
                (y, _) => diff((y - 1) * w + x, (y + 1) * w + x),
            };
            let mag = (gx * gx + gy * gy).sqrt();
            let mut a = if mag == 0.0 {
                0.0
            } else {
                gy.atan2(gx).to_degrees()
            };
            if a < 0.0 {
                a += 180.0;
            }
            if a >= 180.0 {
                a -= 180.0;
            }
            magnitude.push(mag);
            angle.push(a);
        }
    }
    Gradients {
        width: w,
        height: h,
        magnitude,
        angle,
    }
}

/// Grid of per-cell orientation histograms, row-major by cell then bin.
#[derive(Debug, Clone, PartialEq)]
pub struct CellHistograms {
    pub cells_x: usize,
    pub cells_y: usize,
    pub bins: usize,
    pub data: Vec<f64>,
}

impl CellHistograms {
    #[inline]
    pub fn cell(&self, cx: usize, cy: usize) -> &[f64] {
        let start = (cy * self.cells_x + cx) * self.bins;
        &self.data[start..start + self.bins]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.bins)
    }
}

/// Bin centres sit at `(k + 1/2) * 180 / bins`; each magnitude is split
/// linearly between the two nearest centres, wrapping at 180 degrees.
pub fn cell_histograms(grads: &Gradients, cfg: &HogConfig) -> Result<CellHistograms> {
    let cs = cfg.cell_size;
    if cs == 0 || cfg.bin_count < 2 {
        return Err(Error::InvalidConfig(
            "hog: bad cell size or bin count".into(),
        ));
    }
    if !grads.width.is_multiple_of(cs) || !grads.height.is_multiple_of(cs) {
        return Err(Error::ConfigImageMismatch {
            width: grads.width,
            height: grads.height,
            reason: format!("not divisible by cell size {cs}"),
        });
    }
    let bins = cfg.bin_count;
    let bin_width = 180.0 / bins as f64;
    let cells_x = grads.width / cs;
    let cells_y = grads.height / cs;
    let mut data = vec![0.0; cells_x * cells_y * bins];
    for y in 0..grads.height {
        for x in 0..grads.width {
            let i = y * grads.width + x;
            let mag = grads.magnitude[i];
            if mag == 0.0 {
                continue;
            }
            let pos = grads.angle[i] / bin_width - 0.5;
            let lower = pos.floor();
            let frac = pos - lower;
            let b0 = (lower as i64).rem_euclid(bins as i64) as usize;
            let b1 = (b0 + 1) % bins;
            let base = ((y / cs) * cells_x + x / cs) * bins;
            data[base + b0] += mag * (1.0 - frac);
            data[base + b1] += mag * frac;
        }
    }
    Ok(CellHistograms {
        cells_x,
        cells_y,
        bins,
        data,
    })
}

fn normalize_block(block: &mut [f64]) {
    let norm = l2_norm(block);
    if norm <= NORM_EPSILON {
        return;
    }
    for v in block.iter_mut() {
        *v = (*v / norm).min(BLOCK_CLIP);
    }
    let norm = l2_norm(block);
    if norm > NORM_EPSILON {
        for v in block.iter_mut() {
            *v /= norm;
        }
    }
}

/// HOG descriptor of `img` at its native size. Blocks slide by
/// `block_stride` in row-major order; within a block cells are row-major.
pub fn hog_descriptor(img: &ImageGray, cfg: &HogConfig) -> Result<DescriptorVector> {
    cfg.validate_structure()?;
    cfg.check_image(img.width(), img.height())?;
    let cells = cell_histograms(&gradients(img), cfg)?;
    let per_side = cfg.cells_per_block_side();
    let step = cfg.block_stride / cfg.cell_size;
    let (blocks_x, blocks_y) = cfg.block_grid(img.width(), img.height());
    let block_len = per_side * per_side * cfg.bin_count;

    let mut out = Vec::with_capacity(blocks_x * blocks_y * block_len);
    let mut block = Vec::with_capacity(block_len);
    for by in 0..blocks_y {
        for bx in 0..blocks_x {
            block.clear();
            for cy in 0..per_side {
                for cx in 0..per_side {
                    block.extend_from_slice(cells.cell(bx * step + cx, by * step + cy));
                }
            }
            normalize_block(&mut block);
            out.extend_from_slice(&block);
        }
    }
    DescriptorVector::new(TECHNIQUE_ID, out)
}

/// Resamples to the configured working resolution, then describes.
pub fn describe(img: &ImageGray, cfg: &HogConfig) -> Result<DescriptorVector> {
    let (w, h) = cfg.working_resolution;
    hog_descriptor(&img.resized(w, h)?, cfg)
}
