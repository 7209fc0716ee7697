//! Repeated-sampling experiment: draw a labelled stimulus sample, build the
//! reference and both hypothesis geometries, score each hypothesis, then
//! test the paired scores across all samples.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{self, EmbeddingSource, Provenance};
use crate::error::{Error, Result};
use crate::glossary::{builtin_set, ItemSet};
use crate::rsa::{
    hypothesis_rdm, reference_rdm, rsa_similarity, Hypothesis, Rdm, Role, RoleLabeling,
};
use crate::stats::{summarize, Direction, SignTestResult};

pub const DEFAULT_SAMPLE_SIZE: usize = 10;
pub const DEFAULT_NUM_SAMPLES: usize = 100;

/// An item set named by built-in name or loaded from a glossary JSON file.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SetRef {
    Builtin(String),
    File { path: PathBuf },
}

impl SetRef {
    pub fn resolve(&self, base_dir: &Path) -> Result<ItemSet> {
        match self {
            SetRef::Builtin(name) => builtin_set(name),
            SetRef::File { path } => ItemSet::load(&base_dir.join(path)),
        }
    }
}

fn default_true() -> bool {
    true
}

/// Where item vectors come from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SourceSpec {
    Glove {
        path: PathBuf,
        #[serde(default = "default_true")]
        case_fold: bool,
    },
    Contextual {
        path: PathBuf,
    },
}

fn default_sample_size() -> usize {
    DEFAULT_SAMPLE_SIZE
}

fn default_num_samples() -> usize {
    DEFAULT_NUM_SAMPLES
}

/// Declarative experiment description, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub group1: SetRef,
    pub group2: SetRef,
    pub concept: SetRef,
    #[serde(default = "default_sample_size")]
    pub n1: usize,
    #[serde(default = "default_sample_size")]
    pub n2: usize,
    #[serde(default = "default_sample_size")]
    pub n3: usize,
    #[serde(default = "default_num_samples")]
    pub num_samples: usize,
    #[serde(default)]
    pub seed: u64,
    pub source: SourceSpec,
    /// Text for the "Embedding" column of rendered tables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|source| Error::Json {
            context: "experiment config".into(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            context: path.display().to_string(),
            source,
        })
    }

    /// Checks the size parameters that do not depend on the item pools.
    pub fn check(&self) -> Result<()> {
        if self.num_samples == 0 {
            return Err(Error::InvalidInput("num_samples must be at least 1".into()));
        }
        for (field, n) in [("n1", self.n1), ("n2", self.n2), ("n3", self.n3)] {
            if n == 0 {
                return Err(Error::InvalidInput(format!("{field} must be at least 1")));
            }
        }
        Ok(())
    }
}

/// Several experiments run and tabulated together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub experiments: Vec<ExperimentConfig>,
}

impl SuiteConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            context: path.display().to_string(),
            source,
        })
    }
}

/// A config with its three item pools resolved and size-checked.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub group1: ItemSet,
    pub group2: ItemSet,
    pub concept: ItemSet,
}

impl Experiment {
    pub fn new(
        config: ExperimentConfig,
        group1: ItemSet,
        group2: ItemSet,
        concept: ItemSet,
    ) -> Result<Self> {
        config.check()?;
        for (set, requested) in [
            (&group1, config.n1),
            (&group2, config.n2),
            (&concept, config.n3),
        ] {
            if requested > set.len() {
                return Err(Error::PoolTooSmall {
                    set: set.name().to_string(),
                    available: set.len(),
                    requested,
                });
            }
        }
        Ok(Experiment {
            config,
            group1,
            group2,
            concept,
        })
    }

    /// Resolves set references; relative paths are taken from `base_dir`.
    pub fn resolve(config: ExperimentConfig, base_dir: &Path) -> Result<Self> {
        let group1 = config.group1.resolve(base_dir)?;
        let group2 = config.group2.resolve(base_dir)?;
        let concept = config.concept.resolve(base_dir)?;
        Experiment::new(config, group1, group2, concept)
    }

    fn pools(&self) -> [(&ItemSet, usize); 3] {
        [
            (&self.group1, self.config.n1),
            (&self.group2, self.config.n2),
            (&self.concept, self.config.n3),
        ]
    }

    pub fn labeling(&self) -> RoleLabeling {
        RoleLabeling::blocks(self.config.n1, self.config.n2, self.config.n3)
            .expect("sizes checked to be positive")
    }
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a, used to give each item pool its own stream.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Generator seed for sample `index`: `mix64(master + (index + 1) * gamma)`.
pub fn sample_seed(master: u64, index: u64) -> u64 {
    mix64(master.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Generator seed for drawing from pool `set_name` within one sample.
///
/// Streams are keyed by pool name rather than by role, so exchanging the
/// two group pools exchanges their draws as well.
pub fn pool_seed(sample_seed: u64, set_name: &str) -> u64 {
    mix64(sample_seed ^ fnv1a(set_name.as_bytes()))
}

/// One drawn stimulus set: item ids per role, in canonical block order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub index: usize,
    pub group1: Vec<String>,
    pub group2: Vec<String>,
    pub concept: Vec<String>,
}

impl Sample {
    pub fn ids(&self) -> impl Iterator<Item = (Role, &str)> {
        self.group1
            .iter()
            .map(|id| (Role::Group1, id.as_str()))
            .chain(self.group2.iter().map(|id| (Role::Group2, id.as_str())))
            .chain(self.concept.iter().map(|id| (Role::Concept, id.as_str())))
    }
}

/// Pool positions drawn for sample `index`, one list per role.
fn draw_positions(experiment: &Experiment, index: usize) -> [Vec<usize>; 3] {
    let seed = sample_seed(experiment.config.seed, index as u64);
    experiment.pools().map(|(set, n)| {
        let mut rng = ChaCha8Rng::seed_from_u64(pool_seed(seed, set.name()));
        rand::seq::index::sample(&mut rng, set.len(), n).into_vec()
    })
}

/// Uniform draw without replacement within each pool, independent across
/// pools and across sample indices.
pub fn draw_sample(experiment: &Experiment, index: usize) -> Sample {
    sample_from_positions(experiment, index, draw_positions(experiment, index))
}

fn sample_from_positions(
    experiment: &Experiment,
    index: usize,
    positions: [Vec<usize>; 3],
) -> Sample {
    let [g1, g2, c] = positions;
    let ids = |set: &ItemSet, pos: Vec<usize>| -> Vec<String> {
        pos.into_iter().map(|p| set.items()[p].id.clone()).collect()
    };
    Sample {
        index,
        group1: ids(&experiment.group1, g1),
        group2: ids(&experiment.group2, g2),
        concept: ids(&experiment.concept, c),
    }
}

/// Description of a loaded source, echoed into results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceInfo {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
    pub dim: usize,
    pub case_fold: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// Embeddings ready for experiments, with lookup settings and provenance.
#[derive(Debug, Clone)]
pub struct LoadedSource {
    pub embeddings: EmbeddingSource,
    pub case_fold: bool,
    pub info: SourceInfo,
}

impl LoadedSource {
    pub fn load(spec: &SourceSpec, base_dir: &Path) -> Result<Self> {
        match spec {
            SourceSpec::Glove { path, case_fold } => {
                let full = base_dir.join(path);
                let (table, sha) = embedding::load_glove_with_checksum(&full)?;
                Ok(LoadedSource {
                    info: SourceInfo {
                        kind: "glove".into(),
                        path: Some(full),
                        sha256: Some(sha),
                        dim: table.dim(),
                        case_fold: *case_fold,
                        provenance: None,
                    },
                    embeddings: EmbeddingSource::Table(table),
                    case_fold: *case_fold,
                })
            }
            SourceSpec::Contextual { path } => {
                let full = base_dir.join(path);
                let sha = embedding::file_sha256(&full)?;
                let store = embedding::load_contextual(&full)?;
                Ok(LoadedSource {
                    info: SourceInfo {
                        kind: "contextual".into(),
                        path: Some(full),
                        sha256: Some(sha),
                        dim: store.dim(),
                        case_fold: false,
                        provenance: Some(store.provenance().clone()),
                    },
                    embeddings: EmbeddingSource::Contextual(store),
                    case_fold: false,
                })
            }
        }
    }

    /// Wraps embeddings that did not come from a file.
    pub fn in_memory(embeddings: EmbeddingSource, case_fold: bool) -> Self {
        let (kind, provenance) = match &embeddings {
            EmbeddingSource::Table(_) => ("glove", None),
            EmbeddingSource::Contextual(c) => ("contextual", Some(c.provenance().clone())),
        };
        LoadedSource {
            info: SourceInfo {
                kind: kind.into(),
                path: None,
                sha256: None,
                dim: embeddings.dim(),
                case_fold,
                provenance,
            },
            embeddings,
            case_fold,
        }
    }
}

/// Missing keys per pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub sets: Vec<SetValidation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetValidation {
    pub role: Role,
    pub set: String,
    pub items: usize,
    pub missing: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.sets.iter().all(|s| s.missing.is_empty())
    }

    /// `set: key` for every missing item.
    pub fn missing(&self) -> Vec<String> {
        self.sets
            .iter()
            .flat_map(|s| s.missing.iter().map(move |m| format!("{}: {m}", s.set)))
            .collect()
    }
}

pub fn validate_experiment(experiment: &Experiment, source: &LoadedSource) -> ValidationReport {
    let roles = [Role::Group1, Role::Group2, Role::Concept];
    ValidationReport {
        sets: experiment
            .pools()
            .iter()
            .zip(roles)
            .map(|((set, _), role)| SetValidation {
                role,
                set: set.name().to_string(),
                items: set.len(),
                missing: source.embeddings.missing(set.items(), source.case_fold),
            })
            .collect(),
    }
}

/// Per-sample audit record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    #[serde(flatten)]
    pub sample: Sample,
    pub s_hyp1: f64,
    pub s_hyp2: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetNames {
    pub group1: String,
    pub group2: String,
    pub concept: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub sets: SetNames,
    pub seed: u64,
    pub source: SourceInfo,
    pub s_hyp1: Vec<f64>,
    pub s_hyp2: Vec<f64>,
    pub mean_s1: f64,
    pub mean_s2: f64,
    pub sign_test: SignTestResult,
    pub samples: Vec<SampleRecord>,
}

impl ExperimentResult {
    /// `mean_s1 mean_s2 p direction`.
    pub fn summary_line(&self) -> String {
        format!(
            "{:.6} {:.6} {:.3e} {}",
            self.mean_s1, self.mean_s2, self.sign_test.p_value, self.sign_test.direction
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("results always serialize")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            context: path.display().to_string(),
            source,
        })
    }
}

/// Runs every sample on the current rayon pool. Results are assembled by
/// sample index, so they do not depend on the number of threads.
pub fn run_experiment(experiment: &Experiment, source: &LoadedSource) -> Result<ExperimentResult> {
    let report = validate_experiment(experiment, source);
    if !report.is_clean() {
        return Err(Error::Missing(report.missing()));
    }

    let pool_vectors: Vec<Vec<Vec<f64>>> = experiment
        .pools()
        .iter()
        .map(|(set, _)| embedding::embed_items(set.items(), &source.embeddings, source.case_fold))
        .collect::<Result<_>>()?;

    let labeling = experiment.labeling();
    let hyp1 = hypothesis_rdm(&labeling, Hypothesis::Hyp1.isolated());
    let hyp2 = hypothesis_rdm(&labeling, Hypothesis::Hyp2.isolated());

    let score = |index: usize| -> Result<SampleRecord> {
        let positions = draw_positions(experiment, index);
        let vectors: Vec<&[f64]> = positions
            .iter()
            .zip(&pool_vectors)
            .flat_map(|(pos, vecs)| pos.iter().map(move |&p| vecs[p].as_slice()))
            .collect();
        let reference = reference_rdm(&vectors)?;
        let s_hyp1 = rsa_similarity(&reference, &hyp1)?;
        let s_hyp2 = rsa_similarity(&reference, &hyp2)?;
        Ok(SampleRecord {
            sample: sample_from_positions(experiment, index, positions),
            s_hyp1,
            s_hyp2,
        })
    };

    let outcomes: Vec<Result<SampleRecord>> = (0..experiment.config.num_samples)
        .into_par_iter()
        .map(score)
        .collect();
    let mut samples = Vec::with_capacity(outcomes.len());
    for (index, outcome) in outcomes.into_iter().enumerate() {
        samples.push(outcome.map_err(|e| Error::Sample {
            index,
            source: Box::new(e),
        })?);
    }

    let s_hyp1: Vec<f64> = samples.iter().map(|r| r.s_hyp1).collect();
    let s_hyp2: Vec<f64> = samples.iter().map(|r| r.s_hyp2).collect();
    let summary = summarize(&s_hyp1, &s_hyp2)?;

    Ok(ExperimentResult {
        config: experiment.config.clone(),
        sets: SetNames {
            group1: experiment.group1.name().to_string(),
            group2: experiment.group2.name().to_string(),
            concept: experiment.concept.name().to_string(),
        },
        seed: experiment.config.seed,
        source: source.info.clone(),
        s_hyp1,
        s_hyp2,
        mean_s1: summary.mean_s1,
        mean_s2: summary.mean_s2,
        sign_test: summary.sign_test,
        samples,
    })
}

/// Reference geometry of one drawn sample, for inspection.
pub fn sample_reference_rdm(
    experiment: &Experiment,
    source: &LoadedSource,
    index: usize,
) -> Result<Rdm> {
    let sample = draw_sample(experiment, index);
    let sets = [&experiment.group1, &experiment.group2, &experiment.concept];
    let items: Vec<_> = sample
        .ids()
        .map(|(role, id)| {
            let set = sets[role as usize];
            set.get(id).expect("sampled ids come from the pool").clone()
        })
        .collect();
    reference_rdm(&embedding::embed_items(
        &items,
        &source.embeddings,
        source.case_fold,
    )?)
}

/// Loads each distinct source once across a suite.
#[derive(Default)]
pub struct SourceCache {
    loaded: HashMap<(SourceSpec, PathBuf), std::result::Result<Arc<LoadedSource>, String>>,
}

impl SourceCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(
        &mut self,
        spec: &SourceSpec,
        base_dir: &Path,
    ) -> std::result::Result<Arc<LoadedSource>, String> {
        self.loaded
            .entry((spec.clone(), base_dir.to_path_buf()))
            .or_insert_with(|| {
                LoadedSource::load(spec, base_dir)
                    .map(Arc::new)
                    .map_err(|e| e.to_string())
            })
            .clone()
    }
}

/// One suite row: the config and either its result or the error text.
#[derive(Debug)]
pub struct SuiteRow {
    pub config: ExperimentConfig,
    pub outcome: std::result::Result<ExperimentResult, String>,
}

/// Runs each config in order. A failing row does not stop the others.
pub fn run_suite(
    configs: &[ExperimentConfig],
    base_dir: &Path,
    cache: &mut SourceCache,
) -> Vec<SuiteRow> {
    configs
        .iter()
        .map(|config| {
            let outcome = Experiment::resolve(config.clone(), base_dir)
                .map_err(|e| e.to_string())
                .and_then(|experiment| {
                    let source = cache.get(&config.source, base_dir)?;
                    run_experiment(&experiment, &source).map_err(|e| e.to_string())
                });
            SuiteRow {
                config: config.clone(),
                outcome,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Markdown,
    Tsv,
}

/// One rendered table line.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub embedding: String,
    pub group1: String,
    pub group2: String,
    pub concept: String,
    pub outcome: std::result::Result<(f64, f64, f64, Direction), String>,
}

impl TableRow {
    pub fn from_result(result: &ExperimentResult) -> TableRow {
        TableRow {
            embedding: embedding_label(&result.config, &result.source),
            group1: result.sets.group1.clone(),
            group2: result.sets.group2.clone(),
            concept: result.sets.concept.clone(),
            outcome: Ok((
                result.mean_s1,
                result.mean_s2,
                result.sign_test.p_value,
                result.sign_test.direction,
            )),
        }
    }

    pub fn from_suite_row(row: &SuiteRow) -> TableRow {
        match &row.outcome {
            Ok(result) => TableRow::from_result(result),
            Err(message) => {
                let name = |r: &SetRef| match r {
                    SetRef::Builtin(n) => n.clone(),
                    SetRef::File { path } => path.display().to_string(),
                };
                TableRow {
                    embedding: row.config.label.clone().unwrap_or_else(|| {
                        match &row.config.source {
                            SourceSpec::Glove { .. } => "GloVe".into(),
                            SourceSpec::Contextual { .. } => "contextual".into(),
                        }
                    }),
                    group1: name(&row.config.group1),
                    group2: name(&row.config.group2),
                    concept: name(&row.config.concept),
                    outcome: Err(message.clone()),
                }
            }
        }
    }
}

fn embedding_label(config: &ExperimentConfig, info: &SourceInfo) -> String {
    if let Some(label) = &config.label {
        return label.clone();
    }
    match &info.provenance {
        Some(p) => p.model.clone(),
        None => "GloVe".into(),
    }
}

/// Three decimals without the leading zero: `0.375` -> `.375`.
pub fn format_similarity(value: f64) -> String {
    let s = format!("{value:.3}");
    if let Some(rest) = s.strip_prefix("0.") {
        format!(".{rest}")
    } else if let Some(rest) = s.strip_prefix("-0.") {
        format!("-.{rest}")
    } else {
        s
    }
}

/// Renders rows with the larger mean of each row emphasised in Markdown.
pub fn render_table(rows: &[TableRow], format: TableFormat) -> String {
    const HEADER: [&str; 8] = [
        "Embedding",
        "Group 1",
        "Group 2",
        "Concept",
        "Group 1 + Con",
        "Group 2 + Con",
        "p",
        "Direction",
    ];
    let mut out = String::new();
    let sep = match format {
        TableFormat::Markdown => " | ",
        TableFormat::Tsv => "\t",
    };
    let line = |cells: &[String]| -> String {
        match format {
            TableFormat::Markdown => format!("| {} |\n", cells.join(sep)),
            TableFormat::Tsv => format!("{}\n", cells.join(sep)),
        }
    };
    out.push_str(&line(&HEADER.map(String::from)));
    if format == TableFormat::Markdown {
        out.push_str(&line(&HEADER.map(|_| "---".to_string())));
    }
    for row in rows {
        let mut cells = vec![
            row.embedding.clone(),
            row.group1.clone(),
            row.group2.clone(),
            row.concept.clone(),
        ];
        match &row.outcome {
            Ok((m1, m2, p, direction)) => {
                let (mut a, mut b) = (format_similarity(*m1), format_similarity(*m2));
                if format == TableFormat::Markdown {
                    if m1 > m2 {
                        a = format!("**{a}**");
                    } else if m2 > m1 {
                        b = format!("**{b}**");
                    }
                }
                cells.extend([a, b, format!("{p:.3e}"), direction.to_string()]);
            }
            Err(message) => {
                let mut msg = String::new();
                let _ = write!(msg, "error: {}", message.replace(['\t', '\n', '|'], " "));
                cells.extend([msg, String::new(), String::new(), String::new()]);
            }
        }
        out.push_str(&line(&cells));
    }
    out
}
