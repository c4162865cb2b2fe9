//! Benchmark harness for visual place recognition.
//!
//! Each technique turns images into descriptors, scores query/reference
//! pairs and picks one reference per query. The harness turns those picks
//! into a precision-recall curve and its trapezoid AUC, and times encoding
//! and pair matching separately.

pub mod aggregation;
mod binio;
pub mod dataset;
pub mod descriptor_file;
pub mod error;
pub mod hog;
pub mod metrics;
pub mod runner;
pub mod seqslam;
pub mod similarity;
pub mod technique;
pub mod types;

pub use dataset::{DatasetBundle, Frame, GroundTruth, Perturbation, SyntheticSpec};
pub use error::{Error, ErrorKind, Result};
pub use metrics::{EvaluationResult, PrCurve, PrPoint, QueryOutcome};
pub use technique::{Side, Technique};
pub use types::{DescriptorVector, ImageGray, LocalDescriptorSet};
