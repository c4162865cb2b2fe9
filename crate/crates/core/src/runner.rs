//! Run configuration, the evaluation loop and report files.
//!
//! A run config is a TOML file with top-level run keys and at most one level
//! of sections, one per technique:
//!
//! ```toml
//! dataset_root = "data/berlin"
//! technique = "hog"
//! seed = 7
//! output_dir = "out/berlin-hog"
//! timing_repetitions = 5
//! anchored_auc = false
//!
//! [hog]
//! cell_size = 8
//! working_resolution = [128, 128]
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aggregation::{AggregationConfig, AggregationMode, LocalSource};
use crate::dataset::{
    load_dataset, make_synthetic_dataset, save_dataset, DatasetBundle, SyntheticSpec,
};
use crate::descriptor_file::footprint_bytes;
use crate::error::{Error, Result};
use crate::hog::HogConfig;
use crate::metrics::{
    self, measure_encoding_time, measure_pair_match_time, pr_curve, EvaluationParts,
    EvaluationResult, PrCurve, QueryOutcome,
};
use crate::seqslam::SeqSlamConfig;
use crate::technique::{
    AggregationSettings, AggregationTechnique, ExternalSimilarity, ExternalTechnique, HogTechnique,
    ScoreMatrix, SeqSlamTechnique, Side, Technique,
};

pub const HARNESS_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const RESULTS_FILE: &str = "results.json";
pub const PR_CURVE_FILE: &str = "pr_curve.csv";
pub const MATCHES_FILE: &str = "matches.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TechniqueKind {
    Hog,
    Seqslam,
    Bow,
    Vlad,
    External,
}

impl TechniqueKind {
    pub fn section(self) -> &'static str {
        match self {
            TechniqueKind::Hog => "hog",
            TechniqueKind::Seqslam => "seqslam",
            TechniqueKind::Bow => "bow",
            TechniqueKind::Vlad => "vlad",
            TechniqueKind::External => "external",
        }
    }

    const ALL: [TechniqueKind; 5] = [
        TechniqueKind::Hog,
        TechniqueKind::Seqslam,
        TechniqueKind::Bow,
        TechniqueKind::Vlad,
        TechniqueKind::External,
    ];
}

impl FromStr for TechniqueKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TechniqueKind::ALL
            .into_iter()
            .find(|k| k.section() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown technique {s:?}")))
    }
}

/// Flat configuration of the BoW and VLAD techniques.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregationParams {
    pub k: usize,
    /// `hog_cells`, `dense_patches` or `external_file`.
    pub local_source: String,
    pub cell_size: usize,
    pub bin_count: usize,
    pub patch_size: usize,
    pub patch_stride: usize,
    pub intra_normalize: bool,
    pub working_resolution: (usize, usize),
    pub vocabulary_file: Option<PathBuf>,
    pub save_vocabulary: Option<PathBuf>,
    pub training_images: Option<PathBuf>,
    pub max_training_samples: usize,
    pub local_descriptor_dir: Option<PathBuf>,
}

impl Default for AggregationParams {
    fn default() -> Self {
        Self {
            k: 256,
            local_source: "hog_cells".into(),
            cell_size: 8,
            bin_count: 9,
            patch_size: 8,
            patch_stride: 8,
            intra_normalize: true,
            working_resolution: (128, 128),
            vocabulary_file: None,
            save_vocabulary: None,
            training_images: None,
            max_training_samples: 20_000,
            local_descriptor_dir: None,
        }
    }
}

impl AggregationParams {
    pub fn settings(&self, mode: AggregationMode, seed: u64) -> Result<AggregationSettings> {
        let local_source = match self.local_source.as_str() {
            "hog_cells" => LocalSource::HogCells {
                cell_size: self.cell_size,
                bin_count: self.bin_count,
            },
            "dense_patches" => LocalSource::DensePatches {
                patch_size: self.patch_size,
                stride: self.patch_stride,
            },
            "external_file" => LocalSource::ExternalFile,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown local_source {other:?}"
                )))
            }
        };
        Ok(AggregationSettings {
            aggregation: AggregationConfig {
                mode,
                k: self.k,
                local_source,
                intra_normalize: self.intra_normalize,
            },
            working_resolution: self.working_resolution,
            seed,
            vocabulary_file: self.vocabulary_file.clone(),
            save_vocabulary: self.save_vocabulary.clone(),
            training_images: self.training_images.clone(),
            max_training_samples: self.max_training_samples,
            local_descriptor_dir: self.local_descriptor_dir.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalParams {
    pub query_file: PathBuf,
    pub reference_file: PathBuf,
    #[serde(default = "default_external_similarity")]
    pub similarity: ExternalSimilarity,
}

fn default_external_similarity() -> ExternalSimilarity {
    ExternalSimilarity::Cosine
}

/// A technique configuration, validated against its schema.
#[derive(Debug, Clone, PartialEq)]
pub enum TechniqueSpec {
    Hog(HogConfig),
    SeqSlam(SeqSlamConfig),
    Aggregation(AggregationMode, AggregationParams),
    External(ExternalParams),
}

impl TechniqueSpec {
    pub fn parse(kind: TechniqueKind, params: &toml::Table) -> Result<Self> {
        fn typed<T: serde::de::DeserializeOwned>(section: &str, params: &toml::Table) -> Result<T> {
            params
                .clone()
                .try_into()
                .map_err(|e| Error::InvalidConfig(format!("[{section}]: {e}")))
        }
        let spec = match kind {
            TechniqueKind::Hog => TechniqueSpec::Hog(typed("hog", params)?),
            TechniqueKind::Seqslam => TechniqueSpec::SeqSlam(typed("seqslam", params)?),
            TechniqueKind::Bow => {
                TechniqueSpec::Aggregation(AggregationMode::Bow, typed("bow", params)?)
            }
            TechniqueKind::Vlad => {
                TechniqueSpec::Aggregation(AggregationMode::Vlad, typed("vlad", params)?)
            }
            TechniqueKind::External => TechniqueSpec::External(typed("external", params)?),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TechniqueSpec::Hog(c) => c.validate(),
            TechniqueSpec::SeqSlam(c) => c.validate(),
            TechniqueSpec::Aggregation(mode, p) => {
                let s = p.settings(*mode, 0)?;
                s.aggregation.validate()?;
                if s.max_training_samples < s.aggregation.k {
                    return Err(Error::InvalidConfig("max_training_samples below k".into()));
                }
                if s.aggregation.local_source == LocalSource::ExternalFile
                    && s.local_descriptor_dir.is_none()
                {
                    return Err(Error::InvalidConfig(
                        "local_source = \"external_file\" needs local_descriptor_dir".into(),
                    ));
                }
                Ok(())
            }
            TechniqueSpec::External(_) => Ok(()),
        }
    }

    pub fn build(&self, seed: u64) -> Result<Box<dyn Technique>> {
        Ok(match self {
            TechniqueSpec::Hog(c) => Box::new(HogTechnique::new(*c)?),
            TechniqueSpec::SeqSlam(c) => Box::new(SeqSlamTechnique::new(*c)?),
            TechniqueSpec::Aggregation(mode, p) => {
                Box::new(AggregationTechnique::new(p.settings(*mode, seed)?)?)
            }
            TechniqueSpec::External(p) => Box::new(ExternalTechnique::open(
                &p.query_file,
                &p.reference_file,
                p.similarity,
            )?),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset_root: PathBuf,
    pub technique: TechniqueKind,
    /// Keys of the technique's own section.
    pub technique_params: toml::Table,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub timing_repetitions: usize,
    pub anchored_auc: bool,
}

impl RunConfig {
    pub fn new(
        dataset_root: impl Into<PathBuf>,
        technique: TechniqueKind,
        output_dir: impl Into<PathBuf>,
    ) -> Self {
        Self {
            dataset_root: dataset_root.into(),
            technique,
            technique_params: toml::Table::new(),
            seed: 0,
            output_dir: output_dir.into(),
            timing_repetitions: 5,
            anchored_auc: false,
        }
    }

    /// Parses a config file. Fields missing from the file may be supplied
    /// through `overrides`; overrides win over file values.
    pub fn from_toml_str(text: &str, overrides: &RunOverrides) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e| Error::InvalidConfig(format!("config: {e}")))?;
        let mut dataset_root = None;
        let mut technique = None;
        let mut output_dir = None;
        let mut seed = 0u64;
        let mut timing_repetitions = 5usize;
        let mut anchored_auc = false;
        let mut sections = toml::Table::new();

        let bad =
            |key: &str, want: &str| Error::InvalidConfig(format!("config: {key} must be {want}"));
        for (key, value) in table {
            match key.as_str() {
                "dataset_root" => {
                    dataset_root = Some(PathBuf::from(
                        value.as_str().ok_or_else(|| bad(&key, "a string"))?,
                    ))
                }
                "output_dir" => {
                    output_dir = Some(PathBuf::from(
                        value.as_str().ok_or_else(|| bad(&key, "a string"))?,
                    ))
                }
                "technique" => {
                    technique = Some(
                        value
                            .as_str()
                            .ok_or_else(|| bad(&key, "a string"))?
                            .parse::<TechniqueKind>()?,
                    )
                }
                "seed" => {
                    seed = value
                        .as_integer()
                        .and_then(|v| u64::try_from(v).ok())
                        .ok_or_else(|| bad(&key, "a non-negative integer"))?
                }
                "timing_repetitions" => {
                    timing_repetitions = value
                        .as_integer()
                        .and_then(|v| usize::try_from(v).ok())
                        .ok_or_else(|| bad(&key, "a non-negative integer"))?
                }
                "anchored_auc" => {
                    anchored_auc = value.as_bool().ok_or_else(|| bad(&key, "a boolean"))?
                }
                section if TechniqueKind::ALL.iter().any(|k| k.section() == section) => {
                    let inner = value.as_table().ok_or_else(|| bad(section, "a section"))?;
                    if inner.values().any(toml::Value::is_table) {
                        return Err(Error::InvalidConfig(format!(
                            "config: [{section}] may not contain nested sections"
                        )));
                    }
                    sections.insert(key.clone(), value.clone());
                }
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "config: unknown key {other:?}"
                    )))
                }
            }
        }

        let technique = overrides
            .technique
            .or(technique)
            .ok_or_else(|| Error::InvalidConfig("config: no technique given".into()))?;
        let technique_params = match sections.remove(technique.section()) {
            Some(toml::Value::Table(t)) => t,
            _ => toml::Table::new(),
        };
        let mut cfg = RunConfig {
            dataset_root: dataset_root.unwrap_or_default(),
            technique,
            technique_params,
            seed,
            output_dir: output_dir.unwrap_or_default(),
            timing_repetitions,
            anchored_auc,
        };
        overrides.apply(&mut cfg);
        cfg.check_required()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path, overrides: &RunOverrides) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::InvalidConfig(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text, overrides)
    }

    fn check_required(&self) -> Result<()> {
        if self.dataset_root.as_os_str().is_empty() {
            return Err(Error::InvalidConfig("no dataset_root given".into()));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::InvalidConfig("no output_dir given".into()));
        }
        if self.timing_repetitions < 3 {
            return Err(Error::InvalidConfig(format!(
                "timing_repetitions {} below 3",
                self.timing_repetitions
            )));
        }
        Ok(())
    }

    pub fn technique_spec(&self) -> Result<TechniqueSpec> {
        TechniqueSpec::parse(self.technique, &self.technique_params)
    }

    fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            dataset_root: self.dataset_root.display().to_string(),
            technique: self.technique,
            technique_params: serde_json::to_value(&self.technique_params)
                .unwrap_or(serde_json::Value::Null),
            seed: self.seed,
            timing_repetitions: self.timing_repetitions,
            anchored_auc: self.anchored_auc,
        }
    }
}

/// Command-line values that replace config file values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOverrides {
    pub dataset_root: Option<PathBuf>,
    pub technique: Option<TechniqueKind>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub anchored_auc: bool,
}

impl RunOverrides {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(d) = &self.dataset_root {
            cfg.dataset_root = d.clone();
        }
        if let Some(o) = &self.output_dir {
            cfg.output_dir = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.anchored_auc {
            cfg.anchored_auc = true;
        }
    }

    /// Builds a config from overrides alone, with every technique default.
    pub fn into_config(self) -> Result<RunConfig> {
        let technique = self
            .technique
            .ok_or_else(|| Error::InvalidConfig("no technique given".into()))?;
        let mut cfg = RunConfig::new(PathBuf::new(), technique, PathBuf::new());
        self.apply(&mut cfg);
        cfg.check_required()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvaluationOptions {
    pub timing_repetitions: usize,
    pub anchored_auc: bool,
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        Self {
            timing_repetitions: 5,
            anchored_auc: false,
        }
    }
}

/// Everything one evaluation produces.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub result: EvaluationResult,
    pub curve: PrCurve,
    /// Ranked queries in query-index order.
    pub outcomes: Vec<QueryOutcome>,
}

/// Runs one technique over one dataset. Reference descriptors are computed
/// once; timing happens after matching, in sections that only encode or
/// only score.
pub fn evaluate(
    technique: &mut dyn Technique,
    bundle: &DatasetBundle,
    options: &EvaluationOptions,
) -> Result<Evaluation> {
    technique.prepare(bundle)?;
    let references = bundle
        .references()
        .iter()
        .map(|f| technique.encode(Side::Reference, f))
        .collect::<Result<Vec<_>>>()?;
    let queries = bundle
        .queries()
        .iter()
        .map(|f| technique.encode(Side::Query, f))
        .collect::<Result<Vec<_>>>()?;

    let mut scores = Vec::with_capacity(references.len() * queries.len());
    for r in &references {
        for q in &queries {
            scores.push(technique.score(q, r)?);
        }
    }
    let scores = ScoreMatrix::new(references.len(), queries.len(), scores)?;
    let matches = technique.select_matches(&scores)?;

    let gt = bundle.ground_truth();
    let mut outcomes = Vec::with_capacity(matches.len());
    let mut excluded = 0usize;
    for (query_index, m) in matches.into_iter().enumerate() {
        match m {
            Some((matched_reference, confidence)) => outcomes.push(QueryOutcome {
                query_index,
                matched_reference,
                confidence,
                correct: gt.is_correct(query_index, matched_reference)?,
            }),
            None => excluded += 1,
        }
    }
    let curve = pr_curve(&outcomes)?;
    let auc = metrics::auc(&curve, options.anchored_auc);

    let encoding_time_s = measure_encoding_time(
        technique,
        Side::Query,
        bundle.queries(),
        options.timing_repetitions,
    )?;
    let pair_match_time_s = measure_pair_match_time(
        technique,
        &queries[0],
        &references,
        options.timing_repetitions,
    )?;

    let result = EvaluationResult::new(EvaluationParts {
        technique_id: technique.id().to_string(),
        dataset_name: bundle.name().to_string(),
        auc,
        anchored_auc: options.anchored_auc,
        encoding_time_s,
        pair_match_time_s,
        descriptor_bytes: footprint_bytes(&references[0]),
        reference_count: references.len(),
        evaluated_queries: outcomes.len(),
        excluded_queries: excluded,
    });
    Ok(Evaluation {
        result,
        curve,
        outcomes,
    })
}

/// Validates the technique configuration, loads the dataset, evaluates and
/// writes the report into `cfg.output_dir`.
pub fn run_evaluation(cfg: &RunConfig) -> Result<Evaluation> {
    let spec = cfg.technique_spec()?;
    let mut technique = spec.build(cfg.seed)?;
    let bundle = load_dataset(&cfg.dataset_root)?;
    let evaluation = evaluate(
        technique.as_mut(),
        &bundle,
        &EvaluationOptions {
            timing_repetitions: cfg.timing_repetitions,
            anchored_auc: cfg.anchored_auc,
        },
    )?;
    emit_report(&evaluation, cfg, &cfg.output_dir)?;
    Ok(evaluation)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub dataset_root: String,
    pub technique: TechniqueKind,
    pub technique_params: serde_json::Value,
    pub seed: u64,
    pub timing_repetitions: usize,
    pub anchored_auc: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Platform {
    pub os: String,
    pub arch: String,
    pub logical_cpus: usize,
}

impl Platform {
    pub fn current() -> Self {
        Self {
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

/// Contents of `results.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub harness_version: String,
    pub result: EvaluationResult,
    pub config: ConfigEcho,
    pub platform: Platform,
}

impl ResultsFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::MalformedFile(format!("{}: {e}", path.display())))
    }
}

/// Formats `x` with nine significant digits in positional notation.
pub fn nine_significant(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (8 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

pub fn render_pr_curve_csv(curve: &PrCurve) -> String {
    let mut out = String::from("recall,precision\n");
    for p in &curve.points {
        writeln!(
            out,
            "{},{}",
            nine_significant(p.recall),
            nine_significant(p.precision)
        )
        .expect("writing to a String");
    }
    out
}

pub fn render_matches_csv(outcomes: &[QueryOutcome]) -> String {
    let mut out = String::from("query_index,matched_reference,confidence,correct\n");
    for o in outcomes {
        writeln!(
            out,
            "{},{},{},{}",
            o.query_index, o.matched_reference, o.confidence, o.correct
        )
        .expect("writing to a String");
    }
    out
}

/// Writes `results.json`, `pr_curve.csv` and `matches.csv`. If any write
/// fails, files already written by this call are removed.
pub fn emit_report(evaluation: &Evaluation, cfg: &RunConfig, output_dir: &Path) -> Result<()> {
    let results = ResultsFile {
        harness_version: HARNESS_VERSION.to_string(),
        result: evaluation.result.clone(),
        config: cfg.echo(),
        platform: Platform::current(),
    };
    let json = serde_json::to_string_pretty(&results)
        .map_err(|e| Error::InvalidConfig(format!("serializing results: {e}")))?;
    let files = [
        (RESULTS_FILE, json + "\n"),
        (PR_CURVE_FILE, render_pr_curve_csv(&evaluation.curve)),
        (MATCHES_FILE, render_matches_csv(&evaluation.outcomes)),
    ];

    fs::create_dir_all(output_dir)
        .map_err(|e| Error::io(format!("creating {}", output_dir.display()), e))?;
    let mut written: Vec<PathBuf> = Vec::new();
    for (name, contents) in files {
        let path = output_dir.join(name);
        if let Err(e) = fs::write(&path, contents) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            let _ = fs::remove_file(&path);
            return Err(Error::io(format!("writing {}", path.display()), e));
        }
        written.push(path);
    }
    Ok(())
}

/// Summary table over several `results.json` files, as CSV.
pub fn compare(paths: &[PathBuf]) -> Result<String> {
    let mut out = String::from(
        "technique_id,dataset_name,auc,encoding_time_s,pair_match_time_s,total_match_time_s,descriptor_bytes,evaluated_queries,excluded_queries\n",
    );
    for path in paths {
        let r = ResultsFile::read(path)?.result;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.technique_id,
            r.dataset_name,
            nine_significant(r.auc),
            r.encoding_time_s,
            r.pair_match_time_s,
            r.total_match_time_s,
            r.descriptor_bytes,
            r.evaluated_queries,
            r.excluded_queries
        )
        .expect("writing to a String");
    }
    Ok(out)
}

/// Generates a synthetic traverse and writes it as a dataset directory.
pub fn synthesize(spec: &SyntheticSpec, root: &Path) -> Result<DatasetBundle> {
    let bundle = make_synthetic_dataset(spec)?;
    save_dataset(&bundle, root)?;
    Ok(bundle)
}
