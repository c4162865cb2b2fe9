//! Shared fixtures for the benchmarks.

use vprbench::dataset::make_synthetic_dataset;
use vprbench::{DatasetBundle, Perturbation, SyntheticSpec};

/// A deterministic traverse of `frames` query/reference pairs.
pub fn traverse(frames: usize) -> DatasetBundle {
    let perturbation = Perturbation {
        brightness_jitter: 0.1,
        noise_sigma: 0.01,
        ..Perturbation::identity()
    };
    make_synthetic_dataset(&SyntheticSpec::new(frames, perturbation, 11))
        .expect("valid synthetic spec")
}
