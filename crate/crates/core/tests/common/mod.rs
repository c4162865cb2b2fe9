//! Independent oracles and fixtures shared by the integration tests and the
//! acceptance binary. Nothing here calls the code it checks.

#![allow(dead_code)]

use std::thread::sleep;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vprbench::metrics::{PrCurve, PrPoint};
use vprbench::seqslam::DifferenceMatrix;
use vprbench::{DescriptorVector, Frame, Result, Side, Technique};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random curve with non-decreasing recall and arbitrary precision.
pub fn random_curve(rng: &mut ChaCha8Rng) -> PrCurve {
    let n = rng.random_range(1..60);
    let mut recalls: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
    recalls.sort_by(f64::total_cmp);
    if rng.random_bool(0.3) {
        // repeated recall values, as produced by consecutive misses
        for i in 1..n {
            if rng.random_bool(0.4) {
                recalls[i] = recalls[i - 1];
            }
        }
    }
    PrCurve::from_points(
        recalls
            .into_iter()
            .map(|recall| PrPoint {
                recall,
                precision: rng.random_range(0.0..=1.0),
            })
            .collect(),
    )
}

/// Area as the mean of the left and right Riemann sums over the recall
/// partition. The two sums bracket the trapezoid area of each piece.
pub fn bracketing_area(curve: &PrCurve) -> f64 {
    let p = &curve.points;
    let mut left = 0.0;
    let mut right = 0.0;
    for i in 1..p.len() {
        let width = p[i].recall - p[i - 1].recall;
        let (lo, hi) = if p[i - 1].precision <= p[i].precision {
            (p[i - 1].precision, p[i].precision)
        } else {
            (p[i].precision, p[i - 1].precision)
        };
        left += lo * width;
        right += hi * width;
    }
    (left + right) / 2.0
}

/// Precision and recall after each rank, by recounting from scratch.
pub fn brute_pr(flags_by_rank: &[bool]) -> Vec<(f64, f64)> {
    let n = flags_by_rank.len();
    (1..=n)
        .map(|k| {
            let tp = flags_by_rank[..k].iter().filter(|&&c| c).count();
            (tp as f64 / n as f64, tp as f64 / k as f64)
        })
        .collect()
}

/// Correct references for a true match `n`, by scanning every index.
pub fn scan_correct_set(n: usize, w: usize, reference_count: usize) -> Vec<usize> {
    (0..reference_count)
        .filter(|&m| m.abs_diff(n) <= w)
        .collect()
}

pub fn random_difference_matrix(
    rows: usize,
    cols: usize,
    rng: &mut ChaCha8Rng,
) -> DifferenceMatrix {
    let values = (0..rows * cols)
        .map(|_| rng.random_range(0.0..2.0))
        .collect();
    DifferenceMatrix::new(rows, cols, values).unwrap()
}

/// Sequence cost by visiting every cell of every column in the query's
/// history and keeping those that lie on the velocity line.
pub fn enumerate_sequence_score(
    d: &DifferenceMatrix,
    query: usize,
    reference: usize,
    length: usize,
    v_min: f64,
    v_step: f64,
    velocity_count: usize,
) -> f64 {
    let mut best = f64::INFINITY;
    for m in 0..velocity_count {
        let v = v_min + m as f64 * v_step;
        let mut sum = 0.0;
        let mut hits = 0usize;
        for k in 0..length {
            let col = query - k;
            let target = (reference as f64 - v * k as f64).round();
            for row in 0..d.rows() {
                if row as f64 == target {
                    sum += d.get(row, col);
                    hits += 1;
                }
            }
        }
        let cost = sum * length as f64 / hits as f64;
        if cost < best {
            best = cost;
        }
    }
    best
}

/// Nearest centroid by exhaustive squared distance, first minimum wins.
pub fn brute_assign(centroids: &[Vec<f64>], x: &[f64]) -> usize {
    let dist = |c: &[f64]| -> f64 { c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum() };
    let mut best = 0;
    for i in 1..centroids.len() {
        if dist(&centroids[i]) < dist(&centroids[best]) {
            best = i;
        }
    }
    best
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1e-12 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

pub fn brute_bow(centroids: &[Vec<f64>], locals: &[Vec<f64>]) -> Vec<f64> {
    let mut h = vec![0.0; centroids.len()];
    for x in locals {
        h[brute_assign(centroids, x)] += 1.0;
    }
    normalized(h)
}

pub fn brute_vlad(centroids: &[Vec<f64>], locals: &[Vec<f64>], intra: bool) -> Vec<f64> {
    let d = centroids[0].len();
    let mut blocks = vec![vec![0.0; d]; centroids.len()];
    for x in locals {
        let w = brute_assign(centroids, x);
        for t in 0..d {
            blocks[w][t] += x[t] - centroids[w][t];
        }
    }
    let blocks: Vec<Vec<f64>> = if intra {
        blocks.into_iter().map(normalized).collect()
    } else {
        blocks
    };
    normalized(blocks.concat())
}

/// Sum of squared distances of each point to its nearest centroid.
pub fn brute_objective(centroids: &[Vec<f64>], points: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .map(|x| {
            let c = &centroids[brute_assign(centroids, x)];
            c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        })
        .sum()
}

/// Encoding sleeps for `encode_delay`, scoring for `score_delay`. Each
/// descriptor is the mean intensity of the frame.
pub struct SleepyTechnique {
    pub encode_delay: Duration,
    pub score_delay: Duration,
}

impl Technique for SleepyTechnique {
    fn id(&self) -> &str {
        "sleepy"
    }

    fn encode(&self, _side: Side, frame: &Frame) -> Result<DescriptorVector> {
        sleep(self.encode_delay);
        let px = frame.image.pixels();
        DescriptorVector::new(
            "sleepy",
            vec![px.iter().sum::<f64>() / px.len() as f64, 1.0],
        )
    }

    fn score(&self, query: &DescriptorVector, reference: &DescriptorVector) -> Result<f64> {
        sleep(self.score_delay);
        Ok(-(query.values()[0] - reference.values()[0]).abs())
    }
}
