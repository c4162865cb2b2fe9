mod common;

use proptest::prelude::*;
use rand::Rng;

use vprbench::seqslam::{
    best_match, enhance_contrast, sequence_score, DifferenceMatrix, SeqSlamConfig,
};

fn cfg(length: usize) -> SeqSlamConfig {
    SeqSlamConfig {
        sequence_length: length,
        ..SeqSlamConfig::default()
    }
}

#[test]
fn sequence_score_equals_cell_enumeration() {
    let mut rng = common::rng(3);
    let c = cfg(3);
    for _ in 0..50 {
        let d = common::random_difference_matrix(12, 12, &mut rng);
        for q in 2..12 {
            for j in 0..12 {
                let want = common::enumerate_sequence_score(&d, q, j, 3, 0.8, 0.1, 5);
                assert_eq!(sequence_score(&d, q, j, &c).unwrap(), want, "q={q} j={j}");
            }
        }
    }
}

#[test]
fn best_match_is_minimum_of_enumeration() {
    let mut rng = common::rng(4);
    let c = cfg(4);
    for _ in 0..20 {
        let d = common::random_difference_matrix(15, 10, &mut rng);
        for q in 3..10 {
            let scores: Vec<f64> = (0..15)
                .map(|j| common::enumerate_sequence_score(&d, q, j, 4, 0.8, 0.1, 5))
                .collect();
            let (j, conf) = best_match(&d, q, &c).unwrap();
            let min = scores.iter().cloned().fold(f64::INFINITY, f64::min);
            assert_eq!(conf, -min);
            assert_eq!(j, scores.iter().position(|&s| s == min).unwrap());
        }
    }
}

#[test]
fn enhancement_matches_windowed_standardization() {
    let mut rng = common::rng(5);
    let d = common::random_difference_matrix(20, 6, &mut rng);
    let window = 6;
    let e = enhance_contrast(&d, window);
    for i in 0..6 {
        for j in 0..20usize {
            let lo = j.saturating_sub(window / 2);
            let hi = (j + window / 2).min(19);
            let col: Vec<f64> = (lo..=hi).map(|r| d.get(r, i)).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            let sigma = var.sqrt();
            let want = if sigma < 1e-8 {
                0.0
            } else {
                (d.get(j, i) - mean) / sigma
            };
            assert!((e.get(j, i) - want).abs() < 1e-12);
        }
    }
}

proptest! {
    #[test]
    fn scores_are_non_negative_and_finite(seed in any::<u64>(), length in 2usize..6) {
        let mut rng = common::rng(seed);
        let d = common::random_difference_matrix(10, 10, &mut rng);
        let c = cfg(length);
        for q in length - 1..10 {
            let j = rng.random_range(0..10);
            let s = sequence_score(&d, q, j, &c).unwrap();
            prop_assert!(s.is_finite() && s >= 0.0);
        }
    }

    #[test]
    fn uniform_shift_shifts_scores(seed in any::<u64>(), offset in 0.0f64..3.0) {
        let mut rng = common::rng(seed);
        let d = common::random_difference_matrix(10, 10, &mut rng);
        let shifted = DifferenceMatrix::from_fn(10, 10, |j, i| d.get(j, i) + offset).unwrap();
        let c = cfg(3);
        let a = best_match(&d, 6, &c).unwrap();
        let b = best_match(&shifted, 6, &c).unwrap();
        prop_assert!((a.1 - offset * 3.0 - b.1).abs() < 1e-9);
    }
}
