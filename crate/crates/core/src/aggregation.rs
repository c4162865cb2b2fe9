//! Bag-of-visual-words and VLAD encoders over handcrafted local descriptors,
//! plus deterministic k-means vocabulary learning and the `VPRV` vocabulary
//! file.
//!
//! Vocabulary file layout (little-endian, no padding):
//!
//! ```text
//! "VPRV" | version u16 = 1 | k u32 | d u32 | seed u64 | k*d f32, row-major by centroid
//! ```

use std::cmp::Ordering;
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binio::{push_f32_row, LeReader};
use crate::error::{Error, Result};
use crate::hog::{self, HogConfig};
use crate::similarity::l2_normalize_in_place;
use crate::types::{DescriptorVector, ImageGray, LocalDescriptorSet};

pub const VOCABULARY_MAGIC: [u8; 4] = *b"VPRV";
pub const VOCABULARY_VERSION: u16 = 1;
const VOCABULARY_HEADER_LEN: u64 = 4 + 2 + 4 + 4 + 8;

pub const MAX_ITERATIONS: usize = 100;
/// Patches whose intensity range is at most this are treated as flat.
pub const FLAT_PATCH_RANGE: f64 = 1e-9;
pub const CONVERGENCE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    Bow,
    Vlad,
}

impl AggregationMode {
    pub fn technique_id(self) -> &'static str {
        match self {
            AggregationMode::Bow => "bow",
            AggregationMode::Vlad => "vlad",
        }
    }
}

/// Where local descriptors come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LocalSource {
    /// One L2-normalized orientation histogram per HOG cell.
    HogCells { cell_size: usize, bin_count: usize },
    /// Mean-removed, L2-normalized intensity patches on a stride grid.
    DensePatches { patch_size: usize, stride: usize },
    /// Precomputed per-image local descriptor files.
    ExternalFile,
}

impl Default for LocalSource {
    fn default() -> Self {
        LocalSource::HogCells {
            cell_size: 8,
            bin_count: 9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationConfig {
    pub mode: AggregationMode,
    pub k: usize,
    pub local_source: LocalSource,
    /// Per-word normalization before the global one; VLAD only.
    pub intra_normalize: bool,
}

impl AggregationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidConfig(format!(
                "aggregation: k {} below 2",
                self.k
            )));
        }
        match self.local_source {
            LocalSource::HogCells {
                cell_size,
                bin_count,
            } if cell_size == 0 || bin_count < 2 => Err(Error::InvalidConfig(
                "aggregation: hog cells need cell_size > 0 and bin_count >= 2".into(),
            )),
            LocalSource::DensePatches { patch_size, stride } if patch_size == 0 || stride == 0 => {
                Err(Error::InvalidConfig(
                    "aggregation: dense patches need positive patch_size and stride".into(),
                ))
            }
            _ => Ok(()),
        }
    }
}

/// Computes local descriptors for `img`. `ExternalFile` sources are read by
/// the caller and rejected here.
pub fn extract_local(img: &ImageGray, source: &LocalSource) -> Result<LocalDescriptorSet> {
    match *source {
        LocalSource::HogCells {
            cell_size,
            bin_count,
        } => {
            let cfg = HogConfig {
                cell_size,
                bin_count,
                ..HogConfig::default()
            };
            let cells = hog::cell_histograms(&hog::gradients(img), &cfg)?;
            let mut set = LocalDescriptorSet::new(bin_count)?;
            let mut buf = Vec::with_capacity(bin_count);
            for cell in cells.iter() {
                buf.clear();
                buf.extend_from_slice(cell);
                l2_normalize_in_place(&mut buf);
                set.push(&buf)?;
            }
            Ok(set)
        }
        LocalSource::DensePatches { patch_size, stride } => {
            let (w, h) = (img.width(), img.height());
            if patch_size == 0 || stride == 0 || patch_size > w || patch_size > h {
                return Err(Error::ConfigImageMismatch {
                    width: w,
                    height: h,
                    reason: format!("cannot tile patches of {patch_size} px with stride {stride}"),
                });
            }
            let mut set = LocalDescriptorSet::new(patch_size * patch_size)?;
            let mut buf = Vec::with_capacity(patch_size * patch_size);
            for y0 in (0..=h - patch_size).step_by(stride) {
                for x0 in (0..=w - patch_size).step_by(stride) {
                    buf.clear();
                    for y in y0..y0 + patch_size {
                        buf.extend_from_slice(&img.pixels()[y * w + x0..y * w + x0 + patch_size]);
                    }
                    let (lo, hi) = buf
                        .iter()
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                            (lo.min(v), hi.max(v))
                        });
                    if hi - lo <= FLAT_PATCH_RANGE {
                        buf.fill(0.0);
                    } else {
                        let mean = buf.iter().sum::<f64>() / buf.len() as f64;
                        for v in &mut buf {
                            *v -= mean;
                        }
                        l2_normalize_in_place(&mut buf);
                    }
                    set.push(&buf)?;
                }
            }
            Ok(set)
        }
        LocalSource::ExternalFile => Err(Error::InvalidConfig(
            "external local descriptors are loaded from files, not extracted".into(),
        )),
    }
}

/// `k` centroids of dimension `d`. Centroids are held at f32 precision so
/// that the vocabulary file reproduces them exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    k: usize,
    d: usize,
    centroids: Vec<f64>,
    seed: u64,
    source_tag: String,
}

impl Vocabulary {
    pub fn new(
        k: usize,
        d: usize,
        centroids: Vec<f64>,
        seed: u64,
        source_tag: impl Into<String>,
    ) -> Result<Self> {
        if k == 0 || d == 0 || centroids.len() != k * d {
            return Err(Error::DimensionMismatch {
                expected: k * d,
                actual: centroids.len(),
            });
        }
        let centroids: Vec<f64> = centroids.into_iter().map(|v| f64::from(v as f32)).collect();
        if let Some(pos) = centroids.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { row: pos / d });
        }
        Ok(Self {
            k,
            d,
            centroids,
            seed,
            source_tag: source_tag.into(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Not persisted in the file; vocabularies read from disk carry `"file"`.
    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    #[inline]
    pub fn centroid(&self, word: usize) -> &[f64] {
        &self.centroids[word * self.d..(word + 1) * self.d]
    }

    pub fn centroids(&self) -> &[f64] {
        &self.centroids
    }

    /// Nearest centroid by squared L2 distance; ties go to the smaller index.
    pub fn assign(&self, x: &[f64]) -> (usize, f64) {
        nearest(&self.centroids, self.d, x)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(VOCABULARY_HEADER_LEN as usize + self.centroids.len() * 4);
        out.extend_from_slice(&VOCABULARY_MAGIC);
        out.extend_from_slice(&VOCABULARY_VERSION.to_le_bytes());
        out.extend_from_slice(&to_u32(self.k, "k")?.to_le_bytes());
        out.extend_from_slice(&to_u32(self.d, "d")?.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        for word in 0..self.k {
            push_f32_row(&mut out, word, self.centroid(word))?;
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f =
            File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        f.write_all(&bytes)
            .and_then(|_| f.sync_all())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let len = fs::metadata(path)
            .map_err(|e| Error::io(format!("opening {}", path.display()), e))?
            .len();
        let f =
            File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        let mut r = LeReader::new(BufReader::new(f));
        r.magic(VOCABULARY_MAGIC)?;
        let version = r.u16("version")?;
        if version != VOCABULARY_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let k = r.u32("k")? as usize;
        let d = r.u32("d")? as usize;
        let seed = r.u64("seed")?;
        if k == 0 || d == 0 {
            return Err(Error::MalformedFile(format!("vocabulary shape {k}x{d}")));
        }
        let expected = (k as u64) * (d as u64) * 4;
        let remaining = len.saturating_sub(r.consumed());
        if remaining < expected {
            return Err(Error::TruncatedPayload(format!(
                "{remaining} payload bytes, expected {expected}"
            )));
        }
        let rows = r.f32_rows(k, d)?;
        r.finish()?;
        Self::new(k, d, rows.concat(), seed, "file")
    }
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidDescriptor(format!("{what} {v} exceeds u32")))
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[f64], d: usize, x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (word, c) in centroids.chunks_exact(d).enumerate() {
        let dist = squared_distance(x, c);
        if dist < best.1 {
            best = (word, dist);
        }
    }
    best
}

/// Per-iteration k-means bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansReport {
    /// Sum of squared distances after each assignment step.
    pub objectives: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn train_vocabulary(pool: &LocalDescriptorSet, k: usize, seed: u64) -> Result<Vocabulary> {
    train_vocabulary_with_report(pool, k, seed, "pool").map(|(v, _)| v)
}

/// Lloyd's k-means. The first centroid is a seeded random sample; each
/// further one is the point farthest from those already chosen. Empty
/// clusters are re-seeded with the point farthest from its centroid.
pub fn train_vocabulary_with_report(
    pool: &LocalDescriptorSet,
    k: usize,
    seed: u64,
    source_tag: &str,
) -> Result<(Vocabulary, KMeansReport)> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("k {k} below 2")));
    }
    if pool.len() < k {
        return Err(Error::TooFewSamples {
            needed: k,
            available: pool.len(),
        });
    }
    let d = pool.dim();
    let n = pool.len();
    let mut centroids = farthest_point_init(pool, k, seed);

    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0f64; n];
    let mut report = KMeansReport {
        objectives: Vec::new(),
        iterations: 0,
        converged: false,
    };
    for _ in 0..MAX_ITERATIONS {
        let mut objective = 0.0;
        for (i, x) in pool.iter().enumerate() {
            let (word, dist) = nearest(&centroids, d, x);
            labels[i] = word;
            dists[i] = dist;
            objective += dist;
        }
        if let Some(&prev) = report.objectives.last() {
            assert!(
                objective <= prev + 1e-9 * prev.abs().max(1.0),
                "k-means objective increased from {prev} to {objective}"
            );
        }
        report.objectives.push(objective);
        report.iterations += 1;

        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (i, x) in pool.iter().enumerate() {
            let word = labels[i];
            counts[word] += 1;
            for (s, v) in sums[word * d..(word + 1) * d].iter_mut().zip(x) {
                *s += v;
            }
        }

        let mut next = centroids.clone();
        let mut reseeded = vec![false; n];
        for word in 0..k {
            let target = &mut next[word * d..(word + 1) * d];
            if counts[word] == 0 {
                let far = (0..n)
                    .filter(|&i| !reseeded[i])
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .unwrap_or(0);
                reseeded[far] = true;
                target.copy_from_slice(pool.get(far));
            } else {
                let c = counts[word] as f64;
                for (t, s) in target.iter_mut().zip(&sums[word * d..(word + 1) * d]) {
                    *t = s / c;
                }
            }
        }

        let movement = centroids
            .chunks_exact(d)
            .zip(next.chunks_exact(d))
            .map(|(a, b)| squared_distance(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if movement < CONVERGENCE_TOLERANCE {
            report.converged = true;
            break;
        }
    }
    Ok((Vocabulary::new(k, d, centroids, seed, source_tag)?, report))
}

fn farthest_point_init(pool: &LocalDescriptorSet, k: usize, seed: u64) -> Vec<f64> {
    let n = pool.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..n);
    let mut centroids = Vec::with_capacity(k * pool.dim());
    centroids.extend_from_slice(pool.get(first));
    let mut min_dist: Vec<f64> = pool
        .iter()
        .map(|x| squared_distance(x, pool.get(first)))
        .collect();
    for _ in 1..k {
        let far = (0..n)
            .max_by(|&a, &b| min_dist[a].total_cmp(&min_dist[b]).then(b.cmp(&a)))
            .expect("pool is non-empty");
        let chosen = pool.get(far).to_vec();
        for (i, x) in pool.iter().enumerate() {
            min_dist[i] = min_dist[i].min(squared_distance(x, &chosen));
        }
        centroids.extend_from_slice(&chosen);
    }
    centroids
}

fn check_dim(locals: &LocalDescriptorSet, vocab: &Vocabulary) -> Result<()> {
    if locals.dim() != vocab.d() {
        return Err(Error::DimensionMismatch {
            expected: vocab.d(),
            actual: locals.dim(),
        });
    }
    Ok(())
}

/// Word counts before normalization.
pub fn bow_histogram(locals: &LocalDescriptorSet, vocab: &Vocabulary) -> Result<Vec<usize>> {
    check_dim(locals, vocab)?;
    let mut counts = vec![0usize; vocab.k()];
    for x in locals.iter() {
        counts[vocab.assign(x).0] += 1;
    }
    Ok(counts)
}

/// L2-normalized hard-assignment word histogram, dimension `k`.
pub fn bow_encode(locals: &LocalDescriptorSet, vocab: &Vocabulary) -> Result<DescriptorVector> {
    let mut hist: Vec<f64> = bow_histogram(locals, vocab)?
        .into_iter()
        .map(|c| c as f64)
        .collect();
    l2_normalize_in_place(&mut hist);
    DescriptorVector::new(AggregationMode::Bow.technique_id(), hist)
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Concatenated per-word residual sums, dimension `k * d`, optionally
/// intra-normalized per word, then globally L2-normalized. Residuals are
/// accumulated in a canonical order so the result does not depend on the
/// order of `locals`.
pub fn vlad_encode(
    locals: &LocalDescriptorSet,
    vocab: &Vocabulary,
    intra_normalize: bool,
) -> Result<DescriptorVector> {
    check_dim(locals, vocab)?;
    let d = vocab.d();
    let mut members: Vec<Vec<&[f64]>> = vec![Vec::new(); vocab.k()];
    for x in locals.iter() {
        members[vocab.assign(x).0].push(x);
    }
    let mut out = vec![0.0; vocab.k() * d];
    for (word, group) in members.iter_mut().enumerate() {
        group.sort_by(|a, b| lexicographic(a, b));
        let centroid = vocab.centroid(word);
        let block = &mut out[word * d..(word + 1) * d];
        for x in group.iter() {
            for ((o, v), c) in block.iter_mut().zip(x.iter()).zip(centroid) {
                *o += v - c;
            }
        }
        if intra_normalize {
            l2_normalize_in_place(block);
        }
    }
    l2_normalize_in_place(&mut out);
    DescriptorVector::new(AggregationMode::Vlad.technique_id(), out)
}
