//! Precision-recall construction, trapezoid AUC and the timing harness.
//!
//! Timing functions must run with nothing else competing for the CPU; they
//! are single-threaded and never overlap with each other.

use std::hint::black_box;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dataset::Frame;
use crate::error::{Error, Result};
use crate::technique::{Side, Technique};
use crate::types::DescriptorVector;

/// Minimum wall-clock span of one pair-matching measurement.
pub const MIN_PAIR_TIMING_SPAN: Duration = Duration::from_millis(10);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub query_index: usize,
    pub matched_reference: usize,
    /// Higher means more confident.
    pub confidence: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    /// Cumulative true positives per rank and the recall denominator, kept
    /// when the curve was built from outcomes.
    #[serde(skip)]
    counts: Option<(Vec<usize>, usize)>,
}

impl PrCurve {
    /// A curve given only by its points.
    pub fn from_points(points: Vec<PrPoint>) -> Self {
        Self {
            points,
            counts: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// All values in `[0, 1]` and recall non-decreasing.
    pub fn is_valid(&self) -> bool {
        let in_range = |v: f64| (0.0..=1.0).contains(&v);
        self.points
            .iter()
            .all(|p| in_range(p.recall) && in_range(p.precision))
            && self.points.windows(2).all(|w| w[0].recall <= w[1].recall)
    }
}

/// Outcomes ranked by descending confidence, ties by ascending query index.
pub fn rank_outcomes(outcomes: &[QueryOutcome]) -> Vec<QueryOutcome> {
    let mut ranked = outcomes.to_vec();
    ranked.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(a.query_index.cmp(&b.query_index))
    });
    ranked
}

/// One point per ranked prefix `k = 1..=N`: precision `TP(k) / k`, recall
/// `TP(k) / N`. Every query is assumed to have a true match, so `N` is the
/// recall denominator.
pub fn pr_curve(outcomes: &[QueryOutcome]) -> Result<PrCurve> {
    if outcomes.is_empty() {
        return Err(Error::EmptyOutcomes);
    }
    let n = outcomes.len();
    let mut tp = 0usize;
    let mut tps = Vec::with_capacity(n);
    let points = rank_outcomes(outcomes)
        .iter()
        .enumerate()
        .map(|(i, o)| {
            tp += usize::from(o.correct);
            tps.push(tp);
            PrPoint {
                recall: tp as f64 / n as f64,
                precision: tp as f64 / (i + 1) as f64,
            }
        })
        .collect();
    Ok(PrCurve {
        points,
        counts: Some((tps, n)),
    })
}

/// Neumaier-compensated sum.
fn compensated_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for t in terms {
        let s = sum + t;
        if sum.abs() >= t.abs() {
            carry += (sum - s) + t;
        } else {
            carry += (t - s) + sum;
        }
        sum = s;
    }
    sum + carry
}

/// `sum_{i=1}^{N-1} (p_i + p_{i+1}) / 2 * (r_{i+1} - r_i)` over the curve as
/// given; no anchor points are added, so a one-point curve scores 0.
///
/// For curves built by [`pr_curve`], recall steps are `(TP_{i+1} - TP_i) / N`
/// and the `1 / N` factor is applied once after summing, so that a perfect
/// ranking scores exactly `(N - 1) / N`.
pub fn auc_trapezoid(curve: &PrCurve) -> f64 {
    area(curve, false)
}

/// Trapezoid AUC after prepending `(0, p_1)`, closing the curve at recall 0.
pub fn auc_anchored(curve: &PrCurve) -> f64 {
    area(curve, true)
}

fn area(curve: &PrCurve, anchored: bool) -> f64 {
    let p = &curve.points;
    let Some(first) = p.first() else {
        return 0.0;
    };
    let trapezoid = |a: f64, b: f64, width: f64| (a + b) / 2.0 * width;
    match &curve.counts {
        Some((tps, n)) => {
            let anchor =
                anchored.then(|| trapezoid(first.precision, first.precision, tps[0] as f64));
            let steps = (1..p.len()).map(|i| {
                trapezoid(
                    p[i - 1].precision,
                    p[i].precision,
                    (tps[i] - tps[i - 1]) as f64,
                )
            });
            compensated_sum(anchor.into_iter().chain(steps)) / *n as f64
        }
        None => {
            let anchor =
                anchored.then(|| trapezoid(first.precision, first.precision, first.recall));
            let steps = p
                .windows(2)
                .map(|w| trapezoid(w[0].precision, w[1].precision, w[1].recall - w[0].recall));
            compensated_sum(anchor.into_iter().chain(steps))
        }
    }
}

pub fn auc(curve: &PrCurve, anchored: bool) -> f64 {
    if anchored {
        auc_anchored(curve)
    } else {
        auc_trapezoid(curve)
    }
}

/// Per-technique, per-dataset benchmark record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub technique_id: String,
    pub dataset_name: String,
    pub auc: f64,
    pub anchored_auc: bool,
    /// Seconds to encode one query image.
    pub encoding_time_s: f64,
    /// Seconds to compare one query descriptor with one reference descriptor.
    pub pair_match_time_s: f64,
    /// `encoding_time_s + pair_match_time_s * reference_count`.
    pub total_match_time_s: f64,
    pub descriptor_bytes: usize,
    pub reference_count: usize,
    pub evaluated_queries: usize,
    pub excluded_queries: usize,
}

#[derive(Debug, Clone)]
pub struct EvaluationParts {
    pub technique_id: String,
    pub dataset_name: String,
    pub auc: f64,
    pub anchored_auc: bool,
    pub encoding_time_s: f64,
    pub pair_match_time_s: f64,
    pub descriptor_bytes: usize,
    pub reference_count: usize,
    pub evaluated_queries: usize,
    pub excluded_queries: usize,
}

impl EvaluationResult {
    pub fn new(parts: EvaluationParts) -> Self {
        Self {
            total_match_time_s: total_match_time(
                parts.encoding_time_s,
                parts.pair_match_time_s,
                parts.reference_count,
            ),
            technique_id: parts.technique_id,
            dataset_name: parts.dataset_name,
            auc: parts.auc,
            anchored_auc: parts.anchored_auc,
            encoding_time_s: parts.encoding_time_s,
            pair_match_time_s: parts.pair_match_time_s,
            descriptor_bytes: parts.descriptor_bytes,
            reference_count: parts.reference_count,
            evaluated_queries: parts.evaluated_queries,
            excluded_queries: parts.excluded_queries,
        }
    }
}

pub fn total_match_time(encoding_s: f64, pair_s: f64, reference_count: usize) -> f64 {
    encoding_s + pair_s * reference_count as f64
}

/// Mean seconds per image to encode `frames`, after one untimed warm-up pass.
pub fn measure_encoding_time(
    technique: &dyn Technique,
    side: Side,
    frames: &[Frame],
    repetitions: usize,
) -> Result<f64> {
    if repetitions < 3 {
        return Err(Error::InvalidConfig(format!(
            "timing needs at least 3 repetitions, got {repetitions}"
        )));
    }
    if frames.is_empty() {
        return Err(Error::EmptySequence);
    }
    for frame in frames {
        black_box(technique.encode(side, frame)?);
    }
    let start = Instant::now();
    for _ in 0..repetitions {
        for frame in frames {
            black_box(technique.encode(side, black_box(frame))?);
        }
    }
    let elapsed = start.elapsed();
    Ok(elapsed.as_secs_f64() / (repetitions * frames.len()) as f64)
}

/// Mean seconds per query/reference comparison. Passes over `references`
/// are repeated, doubling the count, until one measurement spans at least
/// [`MIN_PAIR_TIMING_SPAN`].
pub fn measure_pair_match_time(
    technique: &dyn Technique,
    query: &DescriptorVector,
    references: &[DescriptorVector],
    repetitions: usize,
) -> Result<f64> {
    if references.is_empty() {
        return Err(Error::EmptySequence);
    }
    for r in references {
        black_box(technique.score(query, r)?);
    }
    let mut reps = repetitions.max(1);
    loop {
        let start = Instant::now();
        for _ in 0..reps {
            for r in references {
                black_box(technique.score(black_box(query), black_box(r))?);
            }
        }
        let elapsed = start.elapsed();
        if elapsed >= MIN_PAIR_TIMING_SPAN || reps >= usize::MAX / 2 {
            return Ok(elapsed.as_secs_f64() / (reps * references.len()) as f64);
        }
        reps *= 2;
    }
}
