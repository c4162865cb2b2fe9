//! Similarity and distance primitives.
//!
//! The slice-level functions are what the techniques call in their inner loops;
//! the `DescriptorVector` wrappers add the dimension check.

use crate::error::{Error, Result};
use crate::types::DescriptorVector;

/// Norm guard shared by every normalization in the crate.
pub const NORM_EPSILON: f64 = 1e-12;

#[inline]
fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(())
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine of the angle between `a` and `b`, clamped to `[-1, 1]`.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

pub fn l1(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
}

/// Scales `v` to unit length in place. Vectors with norm at or below
/// [`NORM_EPSILON`] are left untouched.
pub fn l2_normalize_in_place(v: &mut [f64]) {
    let norm = l2_norm(v);
    if norm > NORM_EPSILON {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

pub fn cosine_similarity(a: &DescriptorVector, b: &DescriptorVector) -> Result<f64> {
    cosine(a.values(), b.values())
}

pub fn l1_distance(a: &DescriptorVector, b: &DescriptorVector) -> Result<f64> {
    l1(a.values(), b.values())
}

pub fn l2_normalize(v: &DescriptorVector) -> DescriptorVector {
    let mut values = v.values().to_vec();
    l2_normalize_in_place(&mut values);
    DescriptorVector::new(v.technique_id(), values).expect("normalization preserves finiteness")
}
