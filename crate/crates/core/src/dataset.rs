//! Query/reference traverses, ground truth with tolerance windows, on-disk
//! layout and a procedural generator for desk-scale datasets.
//!
//! On-disk layout:
//!
//! ```text
//! <root>/manifest            name = ..., window_radius = ..., ground_truth_file = ...
//! <root>/query/*.png|jpg
//! <root>/reference/*.png|jpg
//! <root>/<ground_truth_file> query_index,reference_index rows, zero-based
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::{GrayImage, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::types::ImageGray;

pub const MANIFEST_FILE: &str = "manifest";
pub const QUERY_DIR: &str = "query";
pub const REFERENCE_DIR: &str = "reference";
const GROUND_TRUTH_HEADER: &str = "query_index,reference_index";

/// Query to reference correspondence with a symmetric tolerance window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    pairs: Vec<(usize, usize)>,
    lookup: HashMap<usize, usize>,
    window_radius: usize,
    reference_count: usize,
}

impl GroundTruth {
    pub fn new(
        pairs: Vec<(usize, usize)>,
        window_radius: usize,
        reference_count: usize,
    ) -> Result<Self> {
        let mut lookup = HashMap::with_capacity(pairs.len());
        for &(q, n) in &pairs {
            if n >= reference_count {
                return Err(Error::MalformedGroundTruth(format!(
                    "reference index {n} for query {q} outside 0..{reference_count}"
                )));
            }
            if lookup.insert(q, n).is_some() {
                return Err(Error::MalformedGroundTruth(format!(
                    "query {q} listed more than once"
                )));
            }
        }
        Ok(Self {
            pairs,
            lookup,
            window_radius,
            reference_count,
        })
    }

    /// One-to-one pairing `q -> q` for `count` frames.
    pub fn identity(count: usize, window_radius: usize) -> Self {
        Self::new((0..count).map(|i| (i, i)).collect(), window_radius, count)
            .expect("identity pairing is valid")
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn window_radius(&self) -> usize {
        self.window_radius
    }

    pub fn reference_count(&self) -> usize {
        self.reference_count
    }

    pub fn true_match(&self, query: usize) -> Result<usize> {
        self.lookup
            .get(&query)
            .copied()
            .ok_or(Error::UnknownQuery(query))
    }

    /// Reference indices accepted as a correct match for `query`:
    /// `n - w ..= n + w`, clipped to the reference sequence.
    pub fn correct_set(&self, query: usize) -> Result<RangeInclusive<usize>> {
        let n = self.true_match(query)?;
        let lo = n.saturating_sub(self.window_radius);
        let hi = (n + self.window_radius).min(self.reference_count - 1);
        Ok(lo..=hi)
    }

    pub fn is_correct(&self, query: usize, reference: usize) -> Result<bool> {
        Ok(self.correct_set(query)?.contains(&reference))
    }
}

/// A named image, named after the file it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub name: String,
    pub image: ImageGray,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    name: String,
    queries: Vec<Frame>,
    references: Vec<Frame>,
    ground_truth: GroundTruth,
}

impl DatasetBundle {
    /// Every query must have exactly one ground-truth row and the ground
    /// truth must cover the whole reference sequence.
    pub fn new(
        name: impl Into<String>,
        queries: Vec<Frame>,
        references: Vec<Frame>,
        ground_truth: GroundTruth,
    ) -> Result<Self> {
        if queries.is_empty() || references.is_empty() {
            return Err(Error::EmptySequence);
        }
        if ground_truth.reference_count() != references.len() {
            return Err(Error::MalformedGroundTruth(format!(
                "ground truth expects {} references, dataset has {}",
                ground_truth.reference_count(),
                references.len()
            )));
        }
        if ground_truth.pairs().len() != queries.len() {
            return Err(Error::MalformedGroundTruth(format!(
                "{} ground-truth rows for {} queries",
                ground_truth.pairs().len(),
                queries.len()
            )));
        }
        if let Some(&(q, _)) = ground_truth
            .pairs()
            .iter()
            .find(|(q, _)| *q >= queries.len())
        {
            return Err(Error::MalformedGroundTruth(format!(
                "query index {q} outside 0..{}",
                queries.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            queries,
            references,
            ground_truth,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn queries(&self) -> &[Frame] {
        &self.queries
    }

    pub fn references(&self) -> &[Frame] {
        &self.references
    }

    pub fn ground_truth(&self) -> &GroundTruth {
        &self.ground_truth
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub name: String,
    pub window_radius: usize,
    pub ground_truth_file: String,
}

impl Manifest {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let malformed = |reason: String| Error::MalformedManifest {
            path: path.to_path_buf(),
            reason,
        };
        let mut name = None;
        let mut window_radius = None;
        let mut ground_truth_file = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .or_else(|| line.split_once(':'))
                .ok_or_else(|| malformed(format!("line {}: expected key = value", lineno + 1)))?;
            let value = value.trim().trim_matches('"').to_string();
            match key.trim() {
                "name" => name = Some(value),
                "window_radius" => {
                    window_radius = Some(value.parse::<usize>().map_err(|_| {
                        malformed(format!(
                            "window_radius {value:?} is not a non-negative integer"
                        ))
                    })?)
                }
                "ground_truth_file" => ground_truth_file = Some(value),
                other => return Err(malformed(format!("unknown key {other:?}"))),
            }
        }
        Ok(Self {
            name: name.ok_or_else(|| malformed("missing key name".into()))?,
            window_radius: window_radius
                .ok_or_else(|| malformed("missing key window_radius".into()))?,
            ground_truth_file: ground_truth_file
                .ok_or_else(|| malformed("missing key ground_truth_file".into()))?,
        })
    }

    pub fn render(&self) -> String {
        format!(
            "name = {}\nwindow_radius = {}\nground_truth_file = {}\n",
            self.name, self.window_radius, self.ground_truth_file
        )
    }
}

pub fn parse_ground_truth_rows(text: &str) -> Result<Vec<(usize, usize)>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line == GROUND_TRUTH_HEADER) {
            continue;
        }
        let bad = || Error::MalformedGroundTruth(format!("line {}: {line:?}", lineno + 1));
        let (q, n) = line.split_once(',').ok_or_else(bad)?;
        let q = q.trim().parse::<usize>().map_err(|_| bad())?;
        let n = n.trim().parse::<usize>().map_err(|_| bad())?;
        rows.push((q, n));
    }
    Ok(rows)
}

/// Loads `<root>/manifest` and the images it describes.
pub fn load_dataset(root: &Path) -> Result<DatasetBundle> {
    load_dataset_with_manifest(root, &root.join(MANIFEST_FILE))
}

pub fn load_dataset_with_manifest(root: &Path, manifest_path: &Path) -> Result<DatasetBundle> {
    if !root.is_dir() {
        return Err(Error::MissingDirectory(root.to_path_buf()));
    }
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::MalformedManifest {
        path: manifest_path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let manifest = Manifest::parse(&text, manifest_path)?;

    let query_paths = list_images(&root.join(QUERY_DIR))?;
    let reference_paths = list_images(&root.join(REFERENCE_DIR))?;

    let gt_path = root.join(&manifest.ground_truth_file);
    let gt_text = fs::read_to_string(&gt_path).map_err(|e| {
        Error::MalformedGroundTruth(format!("cannot read {}: {e}", gt_path.display()))
    })?;
    let rows = parse_ground_truth_rows(&gt_text)?;
    if rows.len() != query_paths.len() {
        return Err(Error::MalformedGroundTruth(format!(
            "{} rows for {} query images",
            rows.len(),
            query_paths.len()
        )));
    }
    let ground_truth = GroundTruth::new(rows, manifest.window_radius, reference_paths.len())?;

    let queries = query_paths
        .iter()
        .map(|p| load_frame(p))
        .collect::<Result<_>>()?;
    let references = reference_paths
        .iter()
        .map(|p| load_frame(p))
        .collect::<Result<_>>()?;
    DatasetBundle::new(manifest.name, queries, references, ground_truth)
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|_| Error::MissingDirectory(dir.to_path_buf()))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| Error::io(format!("listing {}", dir.display()), e))?
            .path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
            .unwrap_or(false);
        if is_image && path.is_file() {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(Error::MissingDirectory(dir.to_path_buf()));
    }
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(paths)
}

/// Reads an image file as luma `0.299 R + 0.587 G + 0.114 B`, scaled to `[0, 1]`.
pub fn load_image(path: &Path) -> Result<ImageGray> {
    let unreadable = |reason: String| Error::UnreadableImage {
        path: path.to_path_buf(),
        reason,
    };
    let rgb = image::open(path)
        .map_err(|e| unreadable(e.to_string()))?
        .to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb
        .pixels()
        .map(|p| {
            let [r, g, b] = p.0;
            ((0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b)) / 255.0)
                .clamp(0.0, 1.0)
        })
        .collect();
    ImageGray::new(w as usize, h as usize, data).map_err(|e| unreadable(e.to_string()))
}

fn load_frame(path: &Path) -> Result<Frame> {
    Ok(Frame {
        name: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        image: load_image(path)?,
    })
}

/// Writes an image as an 8-bit grayscale PNG.
pub fn save_image(img: &ImageGray, path: &Path) -> Result<()> {
    let mut out = GrayImage::new(img.width() as u32, img.height() as u32);
    for (i, px) in out.pixels_mut().enumerate() {
        *px = Luma([(img.pixels()[i] * 255.0).round() as u8]);
    }
    out.save(path).map_err(|e| Error::UnreadableImage {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Writes `bundle` in the directory layout [`load_dataset`] reads.
/// Frame images are stored as PNG under their frame names with a `.png` extension.
pub fn save_dataset(bundle: &DatasetBundle, root: &Path) -> Result<()> {
    let ground_truth_file = "ground_truth.csv";
    for (dir, frames) in [
        (QUERY_DIR, bundle.queries()),
        (REFERENCE_DIR, bundle.references()),
    ] {
        let dir = root.join(dir);
        fs::create_dir_all(&dir)
            .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        for frame in frames {
            let stem = Path::new(&frame.name)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| frame.name.clone());
            save_image(&frame.image, &dir.join(format!("{stem}.png")))?;
        }
    }
    let mut gt = String::new();
    for &(q, n) in bundle.ground_truth().pairs() {
        writeln!(gt, "{q},{n}").expect("writing to a String");
    }
    let gt_path = root.join(ground_truth_file);
    fs::write(&gt_path, gt).map_err(|e| Error::io(format!("writing {}", gt_path.display()), e))?;
    let manifest = Manifest {
        name: bundle.name().to_string(),
        window_radius: bundle.ground_truth().window_radius(),
        ground_truth_file: ground_truth_file.to_string(),
    };
    let manifest_path = root.join(MANIFEST_FILE);
    fs::write(&manifest_path, manifest.render())
        .map_err(|e| Error::io(format!("writing {}", manifest_path.display()), e))
}

/// Appearance change applied to synthetic query frames.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Perturbation {
    /// Global intensity offset added to every query frame.
    pub brightness: f64,
    /// Half-width of a uniform per-frame offset drawn on top of `brightness`.
    pub brightness_jitter: f64,
    /// Lateral viewpoint shift: query pixel `(x, y)` shows reference pixel `(x + shift, y)`.
    pub shift_px: usize,
    /// Standard deviation of additive Gaussian noise.
    pub noise_sigma: f64,
}

impl Perturbation {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn validate(&self, width: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidPerturbation(m));
        if !self.brightness.is_finite() || self.brightness.abs() > 1.0 {
            return bad(format!("brightness {} outside [-1, 1]", self.brightness));
        }
        if !self.brightness_jitter.is_finite() || !(0.0..=1.0).contains(&self.brightness_jitter) {
            return bad(format!("jitter {} outside [0, 1]", self.brightness_jitter));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return bad(format!(
                "noise sigma {} must be non-negative",
                self.noise_sigma
            ));
        }
        if self.shift_px >= width {
            return bad(format!(
                "shift {} px not below frame width {width}",
                self.shift_px
            ));
        }
        Ok(())
    }
}

impl FromStr for Perturbation {
    type Err = Error;

    /// `identity`, or comma-separated `brightness=F`, `jitter=F`, `shift=N`, `noise=F`.
    fn from_str(s: &str) -> Result<Self> {
        let mut p = Perturbation::identity();
        let s = s.trim();
        if s.is_empty() || s == "identity" || s == "none" {
            return Ok(p);
        }
        for part in s.split(',') {
            let (key, value) = part.split_once('=').ok_or_else(|| {
                Error::InvalidPerturbation(format!("expected key=value in {part:?}"))
            })?;
            let value = value.trim();
            let float = || {
                value
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidPerturbation(format!("{key}: bad number {value:?}")))
            };
            match key.trim() {
                "brightness" => p.brightness = float()?,
                "jitter" => p.brightness_jitter = float()?,
                "noise" => p.noise_sigma = float()?,
                "shift" => {
                    p.shift_px = value.parse().map_err(|_| {
                        Error::InvalidPerturbation(format!("shift: bad integer {value:?}"))
                    })?
                }
                other => return Err(Error::InvalidPerturbation(format!("unknown key {other:?}"))),
            }
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub frame_count: usize,
    pub width: usize,
    pub height: usize,
    /// Camera advance between consecutive frames, in world pixels.
    pub step_px: usize,
    pub window_radius: usize,
    pub perturbation: Perturbation,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(frame_count: usize, perturbation: Perturbation, seed: u64) -> Self {
        Self {
            frame_count,
            width: 64,
            height: 64,
            step_px: 16,
            window_radius: 2,
            perturbation,
            seed,
        }
    }
}

/// Scene intensities are kept inside this band so that brightness offsets up
/// to +-0.25 never clip.
const SCENE_LOW: f64 = 0.25;
const SCENE_HIGH: f64 = 0.75;

/// Builds a traverse over a procedurally textured strip. Reference frame `i`
/// views the strip at offset `i * step_px`; query frame `i` views the same
/// place through `spec.perturbation`. Ground truth is the identity pairing.
pub fn make_synthetic_dataset(spec: &SyntheticSpec) -> Result<DatasetBundle> {
    if spec.frame_count < 20 {
        return Err(Error::InvalidConfig(format!(
            "synthetic datasets need at least 20 frames, got {}",
            spec.frame_count
        )));
    }
    if spec.width == 0 || spec.height == 0 || spec.step_px == 0 {
        return Err(Error::InvalidConfig(
            "synthetic frame size and step must be positive".into(),
        ));
    }
    spec.perturbation.validate(spec.width)?;

    let world_width = (spec.frame_count - 1) * spec.step_px + 2 * spec.width;
    let world = textured_strip(world_width, spec.height, spec.seed);
    let view = |offset: usize| {
        ImageGray::from_fn(spec.width, spec.height, |x, y| {
            world[y * world_width + offset + x]
        })
    };

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x005E_ED0F_9E37_79B9);
    let noise = Normal::new(0.0, spec.perturbation.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidPerturbation(e.to_string()))?;
    let p = spec.perturbation;

    let mut references = Vec::with_capacity(spec.frame_count);
    let mut queries = Vec::with_capacity(spec.frame_count);
    for i in 0..spec.frame_count {
        let name = format!("{i:05}.png");
        let offset = i * spec.step_px;
        references.push(Frame {
            name: name.clone(),
            image: view(offset)?,
        });

        let jitter = if p.brightness_jitter > 0.0 {
            rng.random_range(-p.brightness_jitter..=p.brightness_jitter)
        } else {
            0.0
        };
        let delta = p.brightness + jitter;
        let base = view(offset + p.shift_px)?;
        let data = base
            .pixels()
            .iter()
            .map(|&v| {
                let mut v = v + delta;
                if p.noise_sigma > 0.0 {
                    v += noise.sample(&mut rng);
                }
                v.clamp(0.0, 1.0)
            })
            .collect();
        queries.push(Frame {
            name,
            image: ImageGray::new(spec.width, spec.height, data)?,
        });
    }

    DatasetBundle::new(
        format!("synthetic-{}-s{}", spec.frame_count, spec.seed),
        queries,
        references,
        GroundTruth::identity(spec.frame_count, spec.window_radius),
    )
}

/// Multi-octave value noise plus scattered rectangular structures, rescaled
/// into `[SCENE_LOW, SCENE_HIGH]`.
fn textured_strip(width: usize, height: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut world = vec![0.0; width * height];

    let mut amplitude = 1.0;
    for cell in [32usize, 16, 8, 4] {
        let gw = width / cell + 2;
        let gh = height / cell + 2;
        let grid: Vec<f64> = (0..gw * gh).map(|_| rng.random::<f64>()).collect();
        for y in 0..height {
            let fy = y as f64 / cell as f64;
            let (y0, ty) = (fy.floor() as usize, fy.fract());
            for x in 0..width {
                let fx = x as f64 / cell as f64;
                let (x0, tx) = (fx.floor() as usize, fx.fract());
                let g = |gx: usize, gy: usize| grid[gy * gw + gx];
                let top = g(x0, y0) * (1.0 - tx) + g(x0 + 1, y0) * tx;
                let bottom = g(x0, y0 + 1) * (1.0 - tx) + g(x0 + 1, y0 + 1) * tx;
                world[y * width + x] += amplitude * (top * (1.0 - ty) + bottom * ty);
            }
        }
        amplitude *= 0.5;
    }

    let structures = width / 10 + 1;
    for _ in 0..structures {
        let w = rng.random_range(3..=12usize).min(width);
        let h = rng
            .random_range(height / 4..=height.max(1))
            .clamp(1, height);
        let x0 = rng.random_range(0..=width - w);
        let y0 = rng.random_range(0..=height - h);
        let shade = rng.random_range(-0.8..0.8);
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                world[y * width + x] += shade;
            }
        }
    }

    let (lo, hi) = world
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    for v in &mut world {
        *v = SCENE_LOW + (*v - lo) / span * (SCENE_HIGH - SCENE_LOW);
    }
    world
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correct_set_examples() {
        let gt = GroundTruth::new(vec![(0, 10)], 2, 201).unwrap();
        assert_eq!(gt.correct_set(0).unwrap(), 8..=12);
        let gt = GroundTruth::new(vec![(0, 0)], 2, 200).unwrap();
        assert_eq!(gt.correct_set(0).unwrap(), 0..=2);
        let gt = GroundTruth::new(vec![(3, 171)], 1, 172).unwrap();
        assert_eq!(gt.correct_set(3).unwrap(), 170..=171);
        assert!(matches!(gt.correct_set(4), Err(Error::UnknownQuery(4))));
    }

    #[test]
    fn ground_truth_rejects_bad_rows() {
        assert!(GroundTruth::new(vec![(0, 5)], 1, 5).is_err());
        assert!(GroundTruth::new(vec![(0, 1), (0, 2)], 1, 5).is_err());
    }

    #[test]
    fn window_size_bounds_hold_everywhere() {
        for (r, w) in [(172, 1), (201, 2), (200, 2), (5, 3)] {
            let gt = GroundTruth::new((0..r).map(|i| (i, i)).collect(), w, r).unwrap();
            for n in 0..r {
                let set = gt.correct_set(n).unwrap();
                let size = set.end() - set.start() + 1;
                assert!(set.contains(&n));
                assert!(size <= 2 * w + 1);
                let interior = n >= w && n + w < r;
                assert_eq!(size == 2 * w + 1, interior, "n={n} r={r} w={w}");
            }
        }
    }

    #[test]
    fn manifest_parsing() {
        let m = Manifest::parse(
            "# comment\nname = berlin\nwindow_radius = 2\nground_truth_file = gt.csv\n",
            Path::new("m"),
        )
        .unwrap();
        assert_eq!(m.window_radius, 2);
        assert_eq!(Manifest::parse(&m.render(), Path::new("m")).unwrap(), m);
        assert!(Manifest::parse("name = x\n", Path::new("m")).is_err());
        assert!(Manifest::parse(
            "name = x\nwindow_radius = -1\nground_truth_file = g\n",
            Path::new("m")
        )
        .is_err());
        assert!(Manifest::parse("colour = red\n", Path::new("m")).is_err());
    }

    #[test]
    fn ground_truth_rows_accept_optional_header() {
        let rows = parse_ground_truth_rows("query_index,reference_index\n0,1\n1,2\n").unwrap();
        assert_eq!(rows, vec![(0, 1), (1, 2)]);
        assert!(parse_ground_truth_rows("0;1\n").is_err());
        assert!(parse_ground_truth_rows("0,-1\n").is_err());
    }

    #[test]
    fn perturbation_parsing() {
        let p: Perturbation = "brightness=0.2,jitter=0.1,shift=8,noise=0.01"
            .parse()
            .unwrap();
        assert_eq!(p.brightness, 0.2);
        assert_eq!(p.brightness_jitter, 0.1);
        assert_eq!(p.shift_px, 8);
        assert_eq!(p.noise_sigma, 0.01);
        assert_eq!(
            "identity".parse::<Perturbation>().unwrap(),
            Perturbation::identity()
        );
        assert!("blur=2".parse::<Perturbation>().is_err());
        assert!("shift=abc".parse::<Perturbation>().is_err());
    }

    #[test]
    fn synthetic_is_deterministic() {
        let p: Perturbation = "brightness=0.2".parse().unwrap();
        let spec = SyntheticSpec::new(200, p, 7);
        let a = make_synthetic_dataset(&spec).unwrap();
        let b = make_synthetic_dataset(&spec).unwrap();
        assert_eq!(a, b);
        let bits = |d: &DatasetBundle| -> Vec<u64> {
            d.queries()
                .iter()
                .chain(d.references())
                .flat_map(|f| f.image.pixels().iter().map(|v| v.to_bits()))
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn synthetic_identity_queries_equal_references() {
        let d =
            make_synthetic_dataset(&SyntheticSpec::new(20, Perturbation::identity(), 1)).unwrap();
        for (q, r) in d.queries().iter().zip(d.references()) {
            assert_eq!(q.image, r.image);
        }
    }

    #[test]
    fn synthetic_shift_overlap_matches_reference() {
        let p = Perturbation {
            shift_px: 8,
            ..Perturbation::identity()
        };
        let d = make_synthetic_dataset(&SyntheticSpec::new(30, p, 3)).unwrap();
        for (q, r) in d.queries().iter().zip(d.references()) {
            assert_eq!(q.image.width(), 64);
            for y in 0..64 {
                for x in 0..64 - 8 {
                    assert_eq!(q.image.get(x, y), r.image.get(x + 8, y));
                }
            }
        }
    }

    #[test]
    fn synthetic_rejects_bad_input() {
        let spec = SyntheticSpec::new(10, Perturbation::identity(), 0);
        assert!(make_synthetic_dataset(&spec).is_err());
        let p = Perturbation {
            shift_px: 64,
            ..Perturbation::identity()
        };
        assert!(matches!(
            make_synthetic_dataset(&SyntheticSpec::new(20, p, 0)),
            Err(Error::InvalidPerturbation(_))
        ));
        let p = Perturbation {
            noise_sigma: -1.0,
            ..Perturbation::identity()
        };
        assert!(matches!(
            make_synthetic_dataset(&SyntheticSpec::new(20, p, 0)),
            Err(Error::InvalidPerturbation(_))
        ));
    }
}
