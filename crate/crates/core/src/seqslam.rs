//! Sequence matching over patch-normalized, downsampled frames.
//!
//! Frames are standardized patch by patch, compared pairwise by mean absolute
//! difference, optionally contrast-enhanced column by column, and each query
//! is scored by the cheapest straight trajectory through the last
//! `sequence_length` query frames over a grid of velocities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::ImageGray;

pub const TECHNIQUE_ID: &str = "seqslam";
const SIGMA_GUARD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeqSlamConfig {
    pub sequence_length: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub v_step: f64,
    /// `(width, height)` frames are resampled to.
    pub downsample_resolution: (usize, usize),
    pub patch_size: usize,
    /// Rows of local context used to standardize the difference matrix; 0 disables.
    pub enhancement_window: usize,
}

impl Default for SeqSlamConfig {
    fn default() -> Self {
        Self {
            sequence_length: 10,
            v_min: 0.8,
            v_max: 1.2,
            v_step: 0.1,
            downsample_resolution: (64, 32),
            patch_size: 8,
            enhancement_window: 10,
        }
    }
}

impl SeqSlamConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("seqslam: {m}")));
        if !(self.v_min > 0.0 && self.v_min <= self.v_max && self.v_max.is_finite()) {
            return bad(format!(
                "need 0 < v_min <= v_max, got {} / {}",
                self.v_min, self.v_max
            ));
        }
        if !(self.v_step > 0.0 && self.v_step.is_finite()) {
            return bad(format!("v_step {} must be positive", self.v_step));
        }
        if self.sequence_length < 2 {
            return bad(format!("sequence_length {} below 2", self.sequence_length));
        }
        let (w, h) = self.downsample_resolution;
        if self.patch_size == 0
            || w == 0
            || h == 0
            || w % self.patch_size != 0
            || h % self.patch_size != 0
        {
            return bad(format!(
                "downsample resolution {w}x{h} not divisible by patch_size {}",
                self.patch_size
            ));
        }
        Ok(())
    }

    /// `v_min, v_min + v_step, ...` up to and including `v_max`.
    pub fn velocities(&self) -> Vec<f64> {
        let steps = ((self.v_max - self.v_min) / self.v_step + 1e-9).floor() as usize;
        (0..=steps)
            .map(|m| self.v_min + m as f64 * self.v_step)
            .collect()
    }
}

/// A patch-normalized frame. Values are standardized, so they are not
/// intensities and may be negative.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedFrame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

/// Standardizes each non-overlapping `patch_size` square to mean 0 and
/// standard deviation 1. Patches with sigma below 1e-8 become zeros.
pub fn patch_normalize(img: &ImageGray, patch_size: usize) -> Result<NormalizedFrame> {
    let (w, h) = (img.width(), img.height());
    if patch_size == 0 || w % patch_size != 0 || h % patch_size != 0 {
        return Err(Error::ConfigImageMismatch {
            width: w,
            height: h,
            reason: format!("not divisible by patch size {patch_size}"),
        });
    }
    let px = img.pixels();
    let mut data = vec![0.0; w * h];
    let count = (patch_size * patch_size) as f64;
    for py in (0..h).step_by(patch_size) {
        for pxo in (0..w).step_by(patch_size) {
            let cells = || {
                (py..py + patch_size)
                    .flat_map(move |y| (pxo..pxo + patch_size).map(move |x| y * w + x))
            };
            let mean = cells().map(|i| px[i]).sum::<f64>() / count;
            let var = cells().map(|i| (px[i] - mean).powi(2)).sum::<f64>() / count;
            let sigma = var.sqrt();
            if sigma < SIGMA_GUARD {
                continue;
            }
            for i in cells() {
                data[i] = (px[i] - mean) / sigma;
            }
        }
    }
    Ok(NormalizedFrame {
        width: w,
        height: h,
        data,
    })
}

/// Resamples to the configured resolution, then patch-normalizes.
pub fn preprocess(img: &ImageGray, cfg: &SeqSlamConfig) -> Result<NormalizedFrame> {
    let (w, h) = cfg.downsample_resolution;
    patch_normalize(&img.resized(w, h)?, cfg.patch_size)
}

/// Mean absolute difference between two normalized frames of equal size.
pub fn frame_difference(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptySequence);
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

/// Reference-by-query dissimilarities, `rows` = references, `cols` = queries.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DifferenceMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptySequence);
        }
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDescriptor("non-finite difference".into()));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(rows * cols);
        for j in 0..rows {
            for i in 0..cols {
                values.push(f(j, i));
            }
        }
        Self::new(rows, cols, values)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Entry for reference `row`, query `col`.
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `D[j][i]` = mean absolute difference between reference `j` and query `i`.
pub fn difference_matrix(
    queries: &[NormalizedFrame],
    references: &[NormalizedFrame],
) -> Result<DifferenceMatrix> {
    if queries.is_empty() || references.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut values = Vec::with_capacity(queries.len() * references.len());
    for r in references {
        for q in queries {
            values.push(frame_difference(&r.data, &q.data)?);
        }
    }
    DifferenceMatrix::new(references.len(), queries.len(), values)
}

/// Standardizes every entry against the mean and sigma of the rows
/// `j - window/2 ..= j + window/2` (clipped) of its own column.
/// `window == 0` returns the matrix unchanged. The output is a z-score and
/// may be negative.
pub fn enhance_contrast(d: &DifferenceMatrix, window: usize) -> DifferenceMatrix {
    if window == 0 {
        return d.clone();
    }
    let half = window / 2;
    let mut values = vec![0.0; d.rows * d.cols];
    for i in 0..d.cols {
        for j in 0..d.rows {
            let lo = j.saturating_sub(half);
            let hi = (j + half).min(d.rows - 1);
            let n = (hi - lo + 1) as f64;
            let mean = (lo..=hi).map(|r| d.get(r, i)).sum::<f64>() / n;
            let var = (lo..=hi).map(|r| (d.get(r, i) - mean).powi(2)).sum::<f64>() / n;
            let sigma = var.sqrt();
            values[j * d.cols + i] = if sigma < SIGMA_GUARD {
                0.0
            } else {
                (d.get(j, i) - mean) / sigma
            };
        }
    }
    DifferenceMatrix {
        rows: d.rows,
        cols: d.cols,
        values,
    }
}

fn check_history(d: &DifferenceMatrix, query: usize, cfg: &SeqSlamConfig) -> Result<()> {
    if query + 1 < cfg.sequence_length || query >= d.cols {
        return Err(Error::InsufficientHistory {
            query,
            sequence_length: cfg.sequence_length,
        });
    }
    Ok(())
}

/// Minimum over velocities of the trajectory cost ending at
/// (reference `reference`, query `query`). The trajectory visits
/// `D[round(reference - v k)][query - k]` for `k = 0..sequence_length`;
/// samples outside the matrix are skipped and the sum is rescaled by
/// `sequence_length / valid_samples`.
pub fn sequence_score(
    d: &DifferenceMatrix,
    query: usize,
    reference: usize,
    cfg: &SeqSlamConfig,
) -> Result<f64> {
    check_history(d, query, cfg)?;
    if reference >= d.rows {
        return Err(Error::DimensionMismatch {
            expected: d.rows,
            actual: reference,
        });
    }
    Ok(score_unchecked(
        d,
        query,
        reference,
        cfg.sequence_length,
        &cfg.velocities(),
    ))
}

fn score_unchecked(
    d: &DifferenceMatrix,
    query: usize,
    reference: usize,
    length: usize,
    velocities: &[f64],
) -> f64 {
    let mut best = f64::INFINITY;
    for &v in velocities {
        let mut sum = 0.0;
        let mut valid = 0usize;
        for k in 0..length {
            let row = (reference as f64 - v * k as f64).round();
            if row < 0.0 || row >= d.rows as f64 {
                continue;
            }
            sum += d.get(row as usize, query - k);
            valid += 1;
        }
        let score = sum * length as f64 / valid as f64;
        if score < best {
            best = score;
        }
    }
    best
}

/// Reference index with the lowest sequence score (ties go to the smaller
/// index) and confidence `-score`.
pub fn best_match(d: &DifferenceMatrix, query: usize, cfg: &SeqSlamConfig) -> Result<(usize, f64)> {
    check_history(d, query, cfg)?;
    let velocities = cfg.velocities();
    let mut best = (0, f64::INFINITY);
    for j in 0..d.rows {
        let s = score_unchecked(d, query, j, cfg.sequence_length, &velocities);
        if s < best.1 {
            best = (j, s);
        }
    }
    Ok((best.0, -best.1))
}
