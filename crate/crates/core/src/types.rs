//! Domain types shared by every technique and by the metrics engine.

use image::imageops::{self, FilterType};
use image::{ImageBuffer, Luma};

use crate::error::{Error, Result};

/// Row-major grayscale raster with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGray {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageGray {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "degenerate size {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "{} intensities for a {width}x{height} image",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidImage(format!(
                "intensity {} at index {pos} outside [0, 1]",
                data[pos]
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn pixels(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Applies `f` to every intensity; the result must stay inside `[0, 1]`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.width,
            self.height,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Resamples to `width` x `height` with a triangle (bilinear) filter.
    /// Returns a clone when the size already matches.
    pub fn resized(&self, width: usize, height: usize) -> Result<Self> {
        if width == self.width && height == self.height {
            return Ok(self.clone());
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "cannot resize to {width}x{height}"
            )));
        }
        let raw: Vec<f32> = self.data.iter().map(|&v| v as f32).collect();
        let buf: ImageBuffer<Luma<f32>, Vec<f32>> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, raw)
                .expect("buffer length matches dimensions");
        let out = imageops::resize(&buf, width as u32, height as u32, FilterType::Triangle);
        let data = out
            .into_raw()
            .into_iter()
            .map(|v| f64::from(v).clamp(0.0, 1.0))
            .collect();
        Self::new(width, height, data)
    }
}

/// A flat, finite, non-empty descriptor tagged with the technique that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorVector {
    technique_id: String,
    values: Vec<f64>,
}

impl DescriptorVector {
    pub fn new(technique_id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidDescriptor(
                "descriptor has no elements".into(),
            ));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDescriptor(format!(
                "non-finite value {} at element {pos}",
                values[pos]
            )));
        }
        Ok(Self {
            technique_id: technique_id.into(),
            values,
        })
    }

    #[inline]
    pub fn technique_id(&self) -> &str {
        &self.technique_id
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// A bag of equal-dimension local descriptors, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDescriptorSet {
    dim: usize,
    data: Vec<f64>,
}

impl LocalDescriptorSet {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDescriptor(
                "local descriptors need at least one element".into(),
            ));
        }
        Ok(Self {
            dim,
            data: Vec::new(),
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut set = Self::new(dim)?;
        for row in rows {
            set.push(row.as_ref())?;
        }
        Ok(set)
    }

    pub fn push(&mut self, descriptor: &[f64]) -> Result<()> {
        if descriptor.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: descriptor.len(),
            });
        }
        if descriptor.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDescriptor(
                "non-finite local descriptor".into(),
            ));
        }
        self.data.extend_from_slice(descriptor);
        Ok(())
    }

    pub fn extend(&mut self, other: &LocalDescriptorSet) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: other.dim,
            });
        }
        self.data.extend_from_slice(&other.data);
        Ok(())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, index: usize) -> &[f64] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }
}
