mod common;

use std::fs;
use std::time::Duration;

use vprbench::dataset::make_synthetic_dataset;
use vprbench::descriptor_file::{read_descriptor_file, write_descriptor_file};
use vprbench::metrics::{measure_encoding_time, measure_pair_match_time, total_match_time};
use vprbench::runner::{
    compare, evaluate, run_evaluation, EvaluationOptions, ResultsFile, RunConfig, RunOverrides,
    TechniqueKind, MATCHES_FILE, PR_CURVE_FILE, RESULTS_FILE,
};
use vprbench::technique::{HogTechnique, SeqSlamTechnique};
use vprbench::{Error, ErrorKind, Perturbation, Side, SyntheticSpec, Technique};

fn options() -> EvaluationOptions {
    EvaluationOptions {
        timing_repetitions: 3,
        anchored_auc: false,
    }
}

#[test]
fn hog_on_identity_traverse_is_near_perfect() {
    let bundle =
        make_synthetic_dataset(&SyntheticSpec::new(200, Perturbation::identity(), 1)).unwrap();
    let mut hog = HogTechnique::new(Default::default()).unwrap();
    let e = evaluate(&mut hog, &bundle, &options()).unwrap();
    assert!((0.99..=1.0).contains(&e.result.auc), "auc {}", e.result.auc);
    assert_eq!(e.result.descriptor_bytes, 8100 * 4);
    assert_eq!(e.curve.len(), 200);
    assert_eq!(
        e.result.total_match_time_s,
        total_match_time(e.result.encoding_time_s, e.result.pair_match_time_s, 200)
    );
    assert!(e.result.encoding_time_s > 0.0 && e.result.pair_match_time_s > 0.0);
}

#[test]
fn seqslam_excludes_warm_up_queries() {
    let bundle =
        make_synthetic_dataset(&SyntheticSpec::new(40, Perturbation::identity(), 2)).unwrap();
    let mut s = SeqSlamTechnique::new(Default::default()).unwrap();
    let e = evaluate(&mut s, &bundle, &options()).unwrap();
    assert_eq!(e.result.excluded_queries, 9);
    assert_eq!(e.result.evaluated_queries, 31);
    assert!(e.outcomes.iter().all(|o| o.query_index >= 9));
    assert_eq!(e.result.auc, 30.0 / 31.0);
}

fn written_dataset(frames: usize, seed: u64) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let p = Perturbation {
        brightness_jitter: 0.1,
        ..Perturbation::identity()
    };
    vprbench::runner::synthesize(&SyntheticSpec::new(frames, p, seed), &dir.path().join("ds"))
        .unwrap();
    dir
}

fn config(dir: &tempfile::TempDir, technique: &str, out: &str, extra: &str) -> RunConfig {
    let text = format!(
        "dataset_root = {:?}\ntechnique = \"{technique}\"\noutput_dir = {:?}\ntiming_repetitions = 3\nseed = 4\n{extra}",
        dir.path().join("ds"),
        dir.path().join(out)
    );
    RunConfig::from_toml_str(&text, &RunOverrides::default()).unwrap()
}

#[test]
fn report_files_are_consistent_and_deterministic() {
    let dir = written_dataset(24, 3);
    let cfg = config(&dir, "hog", "a", "[hog]\nworking_resolution = [64, 64]\n");
    let first = run_evaluation(&cfg).unwrap();
    let out = dir.path().join("a");

    let results = ResultsFile::read(&out.join(RESULTS_FILE)).unwrap();
    assert_eq!(results.result, first.result);
    assert_eq!(results.config.seed, 4);
    assert!(results.platform.logical_cpus >= 1);

    let curve = fs::read_to_string(out.join(PR_CURVE_FILE)).unwrap();
    let mut lines = curve.lines();
    assert_eq!(lines.next(), Some("recall,precision"));
    assert_eq!(lines.count(), first.result.evaluated_queries);

    // re-derive correctness from the ground truth file
    let gt = fs::read_to_string(dir.path().join("ds/ground_truth.csv")).unwrap();
    let truth: Vec<usize> = gt
        .lines()
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    let matches = fs::read_to_string(out.join(MATCHES_FILE)).unwrap();
    let mut rows = matches.lines();
    assert_eq!(
        rows.next(),
        Some("query_index,matched_reference,confidence,correct")
    );
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        let (q, m): (usize, usize) = (f[0].parse().unwrap(), f[1].parse().unwrap());
        let correct: bool = f[3].parse().unwrap();
        assert_eq!(correct, truth[q].abs_diff(m) <= 2, "row {row}");
    }

    let second_cfg = RunConfig {
        output_dir: dir.path().join("b"),
        ..cfg
    };
    let second = run_evaluation(&second_cfg).unwrap();
    let strip = |mut r: vprbench::EvaluationResult| {
        r.encoding_time_s = 0.0;
        r.pair_match_time_s = 0.0;
        r.total_match_time_s = 0.0;
        r
    };
    assert_eq!(strip(first.result), strip(second.result));
    assert_eq!(
        fs::read(out.join(MATCHES_FILE)).unwrap(),
        fs::read(dir.path().join("b").join(MATCHES_FILE)).unwrap()
    );
    assert_eq!(first.curve, second.curve);

    let table = compare(&[
        out.join(RESULTS_FILE),
        dir.path().join("b").join(RESULTS_FILE),
    ])
    .unwrap();
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn aggregation_runs_save_and_reuse_the_vocabulary() {
    let dir = written_dataset(20, 5);
    let vocab = dir.path().join("v.vprv");
    let extra = format!(
        "[vlad]\nk = 8\nworking_resolution = [64, 64]\nsave_vocabulary = {:?}\n",
        vocab
    );
    let first = run_evaluation(&config(&dir, "vlad", "a", &extra)).unwrap();
    assert_eq!(first.result.descriptor_bytes, 8 * 9 * 4);
    assert!(vocab.exists());
    let extra = format!(
        "[vlad]\nk = 8\nworking_resolution = [64, 64]\nvocabulary_file = {:?}\n",
        vocab
    );
    let second = run_evaluation(&config(&dir, "vlad", "b", &extra)).unwrap();
    assert_eq!(first.result.auc, second.result.auc);
    let extra = format!("[bow]\nk = 4\nvocabulary_file = {:?}\n", vocab);
    let err = run_evaluation(&config(&dir, "bow", "c", &extra)).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Technique, "{err}");
}

#[test]
fn external_descriptors_are_evaluated_and_missing_files_named() {
    let dir = written_dataset(20, 6);
    let bundle = vprbench::dataset::load_dataset(&dir.path().join("ds")).unwrap();
    let hog = HogTechnique::new(Default::default()).unwrap();
    for (side, frames, file) in [
        (Side::Query, bundle.queries(), "q.vprd"),
        (Side::Reference, bundle.references(), "r.vprd"),
    ] {
        let rows: Vec<_> = frames
            .iter()
            .map(|f| hog.encode(side, f).unwrap())
            .collect();
        let names: Vec<String> = frames.iter().map(|f| f.name.clone()).collect();
        write_descriptor_file(&rows, &names, &dir.path().join(file)).unwrap();
        assert_eq!(
            read_descriptor_file(&dir.path().join(file))
                .unwrap()
                .rows
                .len(),
            20
        );
    }
    let extra = format!(
        "[external]\nquery_file = {:?}\nreference_file = {:?}\n",
        dir.path().join("q.vprd"),
        dir.path().join("r.vprd")
    );
    let e = run_evaluation(&config(&dir, "external", "a", &extra)).unwrap();
    assert_eq!(e.result.technique_id, "hog");

    let missing = dir.path().join("absent.vprd");
    let extra = format!(
        "[external]\nquery_file = {:?}\nreference_file = {:?}\n",
        missing,
        dir.path().join("r.vprd")
    );
    let err = run_evaluation(&config(&dir, "external", "b", &extra)).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Technique);
    assert!(err.to_string().contains("absent.vprd"), "{err}");
    assert!(!dir.path().join("b").exists());
}

#[test]
fn config_errors_stop_before_any_output() {
    let dir = written_dataset(20, 7);
    let cfg = config(&dir, "seqslam", "a", "[seqslam]\nv_min = 2.0\n");
    let err = run_evaluation(&cfg).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Config);
    assert!(!dir.path().join("a").exists());
    let cfg = RunConfig {
        dataset_root: dir.path().join("nowhere"),
        ..config(&dir, "hog", "a", "")
    };
    assert!(matches!(
        run_evaluation(&cfg),
        Err(Error::MissingDirectory(_))
    ));
    assert!(RunOverrides {
        technique: Some(TechniqueKind::Hog),
        ..Default::default()
    }
    .into_config()
    .is_err());
}

#[test]
fn timing_sections_measure_only_their_own_work() {
    let bundle =
        make_synthetic_dataset(&SyntheticSpec::new(20, Perturbation::identity(), 8)).unwrap();
    let slow_encode = common::SleepyTechnique {
        encode_delay: Duration::from_millis(2),
        score_delay: Duration::ZERO,
    };
    let enc = measure_encoding_time(&slow_encode, Side::Query, &bundle.queries()[..5], 3).unwrap();
    let q = slow_encode
        .encode(Side::Query, &bundle.queries()[0])
        .unwrap();
    let refs: Vec<_> = bundle
        .references()
        .iter()
        .map(|f| slow_encode.encode(Side::Reference, f).unwrap())
        .collect();
    let pair = measure_pair_match_time(&slow_encode, &q, &refs, 3).unwrap();
    assert!(enc >= 0.002, "encoding {enc}");
    assert!(pair < 0.0005, "pair {pair}");

    let slow_score = common::SleepyTechnique {
        encode_delay: Duration::ZERO,
        score_delay: Duration::from_millis(1),
    };
    let enc = measure_encoding_time(&slow_score, Side::Query, bundle.queries(), 3).unwrap();
    let pair = measure_pair_match_time(&slow_score, &q, &refs, 3).unwrap();
    assert!(enc < 0.0005, "encoding {enc}");
    assert!(pair >= 0.001, "pair {pair}");
    assert!(matches!(
        measure_encoding_time(&slow_score, Side::Query, bundle.queries(), 2),
        Err(Error::InvalidConfig(_))
    ));
}

#[test]
fn mock_technique_through_the_full_evaluation() {
    let bundle =
        make_synthetic_dataset(&SyntheticSpec::new(20, Perturbation::identity(), 9)).unwrap();
    let mut t = common::SleepyTechnique {
        encode_delay: Duration::from_millis(1),
        score_delay: Duration::ZERO,
    };
    let e = evaluate(&mut t, &bundle, &options()).unwrap();
    let r = &e.result;
    assert!(r.encoding_time_s >= 0.001 && r.encoding_time_s < 0.05);
    assert!(r.pair_match_time_s < 0.0005);
    assert_eq!(
        r.total_match_time_s,
        r.encoding_time_s + r.pair_match_time_s * 20.0
    );
    assert_eq!(r.descriptor_bytes, 8);
}
