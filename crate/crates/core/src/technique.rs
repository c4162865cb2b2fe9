//! The technique abstraction the evaluation loop drives, and the built-in
//! techniques.
//!
//! Every technique reports scores as "higher is better"; distance-based
//! techniques negate their distances.

use std::path::{Path, PathBuf};

use crate::aggregation::{self, AggregationConfig, AggregationMode, LocalSource, Vocabulary};
use crate::dataset::{load_image, DatasetBundle, Frame};
use crate::descriptor_file::{read_descriptor_file, DescriptorFile};
use crate::error::{Error, Result};
use crate::hog::{self, HogConfig};
use crate::seqslam::{self, DifferenceMatrix, SeqSlamConfig};
use crate::similarity;
use crate::types::{DescriptorVector, LocalDescriptorSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Query,
    Reference,
}

/// `rows` = references, `cols` = queries; higher scores mean more similar.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: values.len(),
            });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, reference: usize, query: usize) -> f64 {
        self.values[reference * self.cols + query]
    }

    /// Highest-scoring reference for `query`; ties go to the smaller index.
    pub fn argmax(&self, query: usize) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.rows {
            let s = self.get(j, query);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((j, s));
            }
        }
        best
    }
}

pub trait Technique {
    fn id(&self) -> &str;

    /// One-off setup that is not part of per-query encoding, such as
    /// vocabulary training. Never timed.
    fn prepare(&mut self, _bundle: &DatasetBundle) -> Result<()> {
        Ok(())
    }

    fn encode(&self, side: Side, frame: &Frame) -> Result<DescriptorVector>;

    /// Similarity of a query/reference descriptor pair, higher is better.
    fn score(&self, query: &DescriptorVector, reference: &DescriptorVector) -> Result<f64>;

    /// Best reference and confidence per query, or `None` for queries the
    /// technique cannot rank.
    fn select_matches(&self, scores: &ScoreMatrix) -> Result<Vec<Option<(usize, f64)>>> {
        Ok((0..scores.cols()).map(|q| scores.argmax(q)).collect())
    }
}

/// Cosine similarity where a zero-norm side scores 0 instead of failing.
pub fn cosine_score(a: &DescriptorVector, b: &DescriptorVector) -> Result<f64> {
    match similarity::cosine_similarity(a, b) {
        Err(Error::ZeroVector) => Ok(0.0),
        other => other,
    }
}

pub struct HogTechnique {
    config: HogConfig,
}

impl HogTechnique {
    pub fn new(config: HogConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &HogConfig {
        &self.config
    }
}

impl Technique for HogTechnique {
    fn id(&self) -> &str {
        hog::TECHNIQUE_ID
    }

    fn encode(&self, _side: Side, frame: &Frame) -> Result<DescriptorVector> {
        hog::describe(&frame.image, &self.config)
    }

    fn score(&self, query: &DescriptorVector, reference: &DescriptorVector) -> Result<f64> {
        cosine_score(query, reference)
    }
}

pub struct SeqSlamTechnique {
    config: SeqSlamConfig,
}

impl SeqSlamTechnique {
    pub fn new(config: SeqSlamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }
}

impl Technique for SeqSlamTechnique {
    fn id(&self) -> &str {
        seqslam::TECHNIQUE_ID
    }

    fn encode(&self, _side: Side, frame: &Frame) -> Result<DescriptorVector> {
        let f = seqslam::preprocess(&frame.image, &self.config)?;
        DescriptorVector::new(seqslam::TECHNIQUE_ID, f.data)
    }

    fn score(&self, query: &DescriptorVector, reference: &DescriptorVector) -> Result<f64> {
        Ok(-seqslam::frame_difference(
            reference.values(),
            query.values(),
        )?)
    }

    /// Queries with fewer than `sequence_length - 1` predecessors are left unranked.
    fn select_matches(&self, scores: &ScoreMatrix) -> Result<Vec<Option<(usize, f64)>>> {
        let raw =
            DifferenceMatrix::from_fn(scores.rows(), scores.cols(), |j, i| -scores.get(j, i))?;
        let d = seqslam::enhance_contrast(&raw, self.config.enhancement_window);
        (0..scores.cols())
            .map(|q| {
                if q + 1 < self.config.sequence_length {
                    Ok(None)
                } else {
                    seqslam::best_match(&d, q, &self.config).map(Some)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregationSettings {
    pub aggregation: AggregationConfig,
    /// Images are resampled to `(width, height)` before local extraction.
    pub working_resolution: (usize, usize),
    pub seed: u64,
    /// Load the vocabulary instead of training one.
    pub vocabulary_file: Option<PathBuf>,
    /// Where to save a freshly trained vocabulary.
    pub save_vocabulary: Option<PathBuf>,
    /// Directory of training images; the reference traverse is used when unset.
    pub training_images: Option<PathBuf>,
    /// Upper bound on the training pool; larger pools are subsampled by stride.
    pub max_training_samples: usize,
    /// Root holding `query/<stem>.vprd` and `reference/<stem>.vprd` local
    /// descriptor files, for `LocalSource::ExternalFile`.
    pub local_descriptor_dir: Option<PathBuf>,
}

pub struct AggregationTechnique {
    settings: AggregationSettings,
    vocabulary: Option<Vocabulary>,
}

impl AggregationTechnique {
    pub fn new(settings: AggregationSettings) -> Result<Self> {
        settings.aggregation.validate()?;
        let (w, h) = settings.working_resolution;
        if w == 0 || h == 0 {
            return Err(Error::InvalidConfig(
                "aggregation: empty working resolution".into(),
            ));
        }
        if settings.aggregation.local_source == LocalSource::ExternalFile
            && settings.local_descriptor_dir.is_none()
        {
            return Err(Error::InvalidConfig(
                "aggregation: external local source needs local_descriptor_dir".into(),
            ));
        }
        if settings.max_training_samples < settings.aggregation.k {
            return Err(Error::InvalidConfig(
                "aggregation: max_training_samples below k".into(),
            ));
        }
        Ok(Self {
            settings,
            vocabulary: None,
        })
    }

    pub fn vocabulary(&self) -> Option<&Vocabulary> {
        self.vocabulary.as_ref()
    }

    fn locals(&self, side: Side, frame: &Frame) -> Result<LocalDescriptorSet> {
        match &self.settings.aggregation.local_source {
            LocalSource::ExternalFile => {
                let dir = self
                    .settings
                    .local_descriptor_dir
                    .as_ref()
                    .expect("validated at construction");
                let sub = match side {
                    Side::Query => "query",
                    Side::Reference => "reference",
                };
                let stem = Path::new(&frame.name)
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| frame.name.clone());
                let path = dir.join(sub).join(format!("{stem}.vprd"));
                let file = read_descriptor_file(&path).map_err(|e| {
                    Error::Technique(format!("local descriptors {}: {e}", path.display()))
                })?;
                let mut set = LocalDescriptorSet::new(file.dim().max(1))?;
                for row in &file.rows {
                    set.push(row.values())?;
                }
                Ok(set)
            }
            source => {
                let (w, h) = self.settings.working_resolution;
                aggregation::extract_local(&frame.image.resized(w, h)?, source)
            }
        }
    }

    fn training_pool(&self, bundle: &DatasetBundle) -> Result<LocalDescriptorSet> {
        let owned;
        let frames: &[Frame] = match &self.settings.training_images {
            Some(dir) => {
                owned = load_training_frames(dir)?;
                &owned
            }
            None => bundle.references(),
        };
        let mut pool: Option<LocalDescriptorSet> = None;
        for frame in frames {
            let set = self.locals(Side::Reference, frame)?;
            match pool.as_mut() {
                Some(p) => p.extend(&set)?,
                None => pool = Some(set),
            }
        }
        let pool = pool.ok_or(Error::EmptySequence)?;
        let cap = self.settings.max_training_samples;
        if pool.len() <= cap {
            return Ok(pool);
        }
        let mut sampled = LocalDescriptorSet::new(pool.dim())?;
        for i in 0..cap {
            sampled.push(pool.get(i * pool.len() / cap))?;
        }
        Ok(sampled)
    }
}

fn load_training_frames(dir: &Path) -> Result<Vec<Frame>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|_| Error::MissingDirectory(dir.to_path_buf()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        })
        .collect();
    if paths.is_empty() {
        return Err(Error::MissingDirectory(dir.to_path_buf()));
    }
    paths.sort();
    paths
        .iter()
        .map(|p| {
            Ok(Frame {
                name: p
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                image: load_image(p)?,
            })
        })
        .collect()
}

impl Technique for AggregationTechnique {
    fn id(&self) -> &str {
        self.settings.aggregation.mode.technique_id()
    }

    fn prepare(&mut self, bundle: &DatasetBundle) -> Result<()> {
        let vocabulary = match &self.settings.vocabulary_file {
            Some(path) => Vocabulary::read(path)
                .map_err(|e| Error::Technique(format!("vocabulary {}: {e}", path.display())))?,
            None => {
                let pool = self.training_pool(bundle)?;
                let tag = match &self.settings.training_images {
                    Some(dir) => format!("images:{}", dir.display()),
                    None => format!("reference:{}", bundle.name()),
                };
                aggregation::train_vocabulary_with_report(
                    &pool,
                    self.settings.aggregation.k,
                    self.settings.seed,
                    &tag,
                )?
                .0
            }
        };
        if vocabulary.k() != self.settings.aggregation.k {
            return Err(Error::Technique(format!(
                "vocabulary has {} words, configuration asks for {}",
                vocabulary.k(),
                self.settings.aggregation.k
            )));
        }
        if let Some(path) = &self.settings.save_vocabulary {
            vocabulary.write(path)?;
        }
        self.vocabulary = Some(vocabulary);
        Ok(())
    }

    fn encode(&self, side: Side, frame: &Frame) -> Result<DescriptorVector> {
        let vocab = self
            .vocabulary
            .as_ref()
            .ok_or_else(|| Error::Technique("vocabulary not prepared".into()))?;
        let locals = self.locals(side, frame)?;
        match self.settings.aggregation.mode {
            AggregationMode::Bow => aggregation::bow_encode(&locals, vocab),
            AggregationMode::Vlad => {
                aggregation::vlad_encode(&locals, vocab, self.settings.aggregation.intra_normalize)
            }
        }
    }

    fn score(&self, query: &DescriptorVector, reference: &DescriptorVector) -> Result<f64> {
        cosine_score(query, reference)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExternalSimilarity {
    Cosine,
    L1,
}

/// Serves descriptors computed elsewhere, looked up by image file name.
pub struct ExternalTechnique {
    technique_id: String,
    queries: DescriptorFile,
    references: DescriptorFile,
    similarity: ExternalSimilarity,
}

impl ExternalTechnique {
    pub fn open(
        query_file: &Path,
        reference_file: &Path,
        similarity: ExternalSimilarity,
    ) -> Result<Self> {
        let read = |path: &Path| {
            read_descriptor_file(path).map_err(|e| {
                Error::Technique(format!(
                    "cannot load descriptor file {}: {e}",
                    path.display()
                ))
            })
        };
        let queries = read(query_file)?;
        let references = read(reference_file)?;
        if queries.technique_id != references.technique_id {
            return Err(Error::Technique(format!(
                "query file is {:?} but reference file is {:?}",
                queries.technique_id, references.technique_id
            )));
        }
        if queries.dim() != references.dim() {
            return Err(Error::DimensionMismatch {
                expected: references.dim(),
                actual: queries.dim(),
            });
        }
        Ok(Self {
            technique_id: queries.technique_id.clone(),
            queries,
            references,
            similarity,
        })
    }

    fn file(&self, side: Side) -> &DescriptorFile {
        match side {
            Side::Query => &self.queries,
            Side::Reference => &self.references,
        }
    }
}

impl Technique for ExternalTechnique {
    fn id(&self) -> &str {
        &self.technique_id
    }

    fn prepare(&mut self, bundle: &DatasetBundle) -> Result<()> {
        for (side, frames) in [
            (Side::Query, bundle.queries()),
            (Side::Reference, bundle.references()),
        ] {
            for frame in frames {
                self.encode(side, frame)?;
            }
        }
        Ok(())
    }

    fn encode(&self, side: Side, frame: &Frame) -> Result<DescriptorVector> {
        let file = self.file(side);
        file.position(&frame.name)
            .map(|i| file.rows[i].clone())
            .ok_or_else(|| {
                Error::Technique(format!("no {side:?} descriptor for image {:?}", frame.name))
            })
    }

    fn score(&self, query: &DescriptorVector, reference: &DescriptorVector) -> Result<f64> {
        match self.similarity {
            ExternalSimilarity::Cosine => cosine_score(query, reference),
            ExternalSimilarity::L1 => Ok(-similarity::l1_distance(query, reference)?),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_smaller_index_on_ties() {
        let s = ScoreMatrix::new(3, 1, vec![0.5, 0.9, 0.9]).unwrap();
        assert_eq!(s.argmax(0), Some((1, 0.9)));
    }

    #[test]
    fn zero_vectors_score_zero() {
        let z = DescriptorVector::new("t", vec![0.0, 0.0]).unwrap();
        let a = DescriptorVector::new("t", vec![1.0, 0.0]).unwrap();
        assert_eq!(cosine_score(&z, &a).unwrap(), 0.0);
        let b = DescriptorVector::new("t", vec![1.0]).unwrap();
        assert!(cosine_score(&a, &b).is_err());
    }
}
