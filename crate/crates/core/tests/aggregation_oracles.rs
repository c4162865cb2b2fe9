mod common;

use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use vprbench::aggregation::{
    bow_encode, bow_histogram, train_vocabulary, train_vocabulary_with_report, vlad_encode,
    Vocabulary,
};
use vprbench::LocalDescriptorSet;

fn random_rows(n: usize, d: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

fn centroid_rows(v: &Vocabulary) -> Vec<Vec<f64>> {
    (0..v.k()).map(|w| v.centroid(w).to_vec()).collect()
}

#[test]
fn encodings_match_brute_force_on_random_instances() {
    let mut rng = common::rng(7);
    for _ in 0..20 {
        let d = rng.random_range(2..6);
        let k = rng.random_range(2..6);
        let vocab = Vocabulary::new(k, d, random_rows(k, d, &mut rng).concat(), 0, "test").unwrap();
        let centroids = centroid_rows(&vocab);
        let rows = random_rows(rng.random_range(1..30), d, &mut rng);
        let locals = LocalDescriptorSet::from_rows(d, &rows).unwrap();

        let bow = bow_encode(&locals, &vocab).unwrap();
        for (a, b) in bow
            .values()
            .iter()
            .zip(common::brute_bow(&centroids, &rows))
        {
            assert!((a - b).abs() < 1e-12);
        }
        for intra in [false, true] {
            let vlad = vlad_encode(&locals, &vocab, intra).unwrap();
            assert_eq!(vlad.dim(), k * d);
            for (a, b) in vlad
                .values()
                .iter()
                .zip(common::brute_vlad(&centroids, &rows, intra))
            {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn well_separated_blobs_recover_their_means() {
    let mut rng = common::rng(8);
    let centres = [
        [4.0, 0.0, 1.0],
        [-3.0, 2.0, 0.5],
        [0.5, -4.0, -2.0],
        [1.0, 3.5, -3.0],
    ];
    let noise = Normal::new(0.0, 0.05).unwrap();
    let mut rows = Vec::new();
    for c in &centres {
        for _ in 0..50 {
            rows.push(
                c.iter()
                    .map(|&m| m + noise.sample(&mut rng))
                    .collect::<Vec<f64>>(),
            );
        }
    }
    let pool = LocalDescriptorSet::from_rows(3, &rows).unwrap();
    let vocab = train_vocabulary(&pool, 4, 1).unwrap();
    for blob in rows.chunks(50) {
        let mean: Vec<f64> = (0..3)
            .map(|t| blob.iter().map(|r| r[t]).sum::<f64>() / 50.0)
            .collect();
        let word = vocab.assign(&mean).0;
        for (a, b) in vocab.centroid(word).iter().zip(&mean) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }
}

#[test]
fn two_planar_blobs_with_two_words() {
    let mut rng = common::rng(12);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let mut rows = Vec::new();
    for c in [[-2.0, 1.0], [3.0, -1.5]] {
        for _ in 0..40 {
            rows.push(vec![
                c[0] + noise.sample(&mut rng),
                c[1] + noise.sample(&mut rng),
            ]);
        }
    }
    let vocab = train_vocabulary(&LocalDescriptorSet::from_rows(2, &rows).unwrap(), 2, 0).unwrap();
    for blob in rows.chunks(40) {
        let mean = [0, 1].map(|t| blob.iter().map(|r| r[t]).sum::<f64>() / 40.0);
        let c = vocab.centroid(vocab.assign(&mean).0);
        assert!((c[0] - mean[0]).abs() < 1e-6 && (c[1] - mean[1]).abs() < 1e-6);
    }
}

#[test]
fn objective_never_increases_and_matches_recount() {
    let mut rng = common::rng(9);
    for seed in 0..5 {
        let rows = random_rows(300, 4, &mut rng);
        let pool = LocalDescriptorSet::from_rows(4, &rows).unwrap();
        let (vocab, report) = train_vocabulary_with_report(&pool, 8, seed, "pool").unwrap();
        assert!(!report.objectives.is_empty());
        for w in report.objectives.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} then {}", w[0], w[1]);
        }
        let recount = common::brute_objective(&centroid_rows(&vocab), &rows);
        let last = *report.objectives.last().unwrap();
        assert!((recount - last).abs() <= 1e-4 * last.max(1.0));
    }
}

#[test]
fn fixed_seed_is_bit_deterministic() {
    let mut rng = common::rng(10);
    let rows = random_rows(400, 5, &mut rng);
    let pool = LocalDescriptorSet::from_rows(5, &rows).unwrap();
    let a = train_vocabulary(&pool, 16, 42).unwrap();
    let b = train_vocabulary(&pool, 16, 42).unwrap();
    assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
    let locals = LocalDescriptorSet::from_rows(5, &rows[..40]).unwrap();
    let va = vlad_encode(&locals, &a, true).unwrap();
    let vb = vlad_encode(&locals, &b, true).unwrap();
    assert!(va
        .values()
        .iter()
        .zip(vb.values())
        .all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn vocabulary_file_round_trip() {
    let mut rng = common::rng(11);
    let rows = random_rows(100, 3, &mut rng);
    let vocab = train_vocabulary(&LocalDescriptorSet::from_rows(3, &rows).unwrap(), 5, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.vprv");
    vocab.write(&path).unwrap();
    let back = Vocabulary::read(&path).unwrap();
    assert_eq!(back.centroids(), vocab.centroids());
    assert_eq!(back.seed(), 3);
    assert_eq!((back.k(), back.d()), (5, 3));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn vlad_and_bow_ignore_local_order(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let vocab = Vocabulary::new(4, 3, random_rows(4, 3, &mut rng).concat(), 0, "t").unwrap();
        let mut rows = random_rows(25, 3, &mut rng);
        let a = LocalDescriptorSet::from_rows(3, &rows).unwrap();
        rows.reverse();
        rows.swap(0, 7);
        let b = LocalDescriptorSet::from_rows(3, &rows).unwrap();
        prop_assert_eq!(vlad_encode(&a, &vocab, true).unwrap(), vlad_encode(&b, &vocab, true).unwrap());
        prop_assert_eq!(bow_histogram(&a, &vocab).unwrap(), bow_histogram(&b, &vocab).unwrap());
    }

    #[test]
    fn encodings_have_unit_norm(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let vocab = Vocabulary::new(5, 2, random_rows(5, 2, &mut rng).concat(), 0, "t").unwrap();
        let locals = LocalDescriptorSet::from_rows(2, &random_rows(12, 2, &mut rng)).unwrap();
        for v in [bow_encode(&locals, &vocab).unwrap(), vlad_encode(&locals, &vocab, false).unwrap()] {
            let n = v.values().iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((n - 1.0).abs() < 1e-12);
        }
    }
}
