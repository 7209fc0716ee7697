//! Probing embedding spaces for differential association biases with
//! representational similarity analysis.
//!
//! A sample of group-1, group-2 and concept items is embedded; its pairwise
//! rank-correlation distances form a reference geometry, which is compared
//! against two binary hypothesis geometries (group 1 with the concept, or
//! group 2 with the concept). Repeating this over many samples yields paired
//! similarity scores that are compared with an exact sign test.
//!
//! ```no_run
//! use intersect_rsa::{Experiment, ExperimentConfig, LoadedSource, run_experiment};
//! # fn main() -> intersect_rsa::Result<()> {
//! let config = ExperimentConfig::load("experiment.json".as_ref())?;
//! let source = LoadedSource::load(&config.source, ".".as_ref())?;
//! let experiment = Experiment::resolve(config, ".".as_ref())?;
//! let result = run_experiment(&experiment, &source)?;
//! println!("{}", result.summary_line());
//! # Ok(())
//! # }
//! ```

pub mod embedding;
pub mod error;
pub mod experiment;
pub mod glossary;
pub mod rsa;
pub mod stats;

pub use embedding::{
    embed_items, load_contextual, load_glove, ContextualRecord, ContextualStore, EmbeddingSource,
    EmbeddingTable, Pooling, Provenance,
};
pub use error::{CorrelationError, Error, Result};
pub use experiment::{
    draw_sample, render_table, run_experiment, run_suite, validate_experiment, Experiment,
    ExperimentConfig, ExperimentResult, LoadedSource, Sample, SampleRecord, SetRef, SourceCache,
    SourceSpec, SuiteConfig, SuiteRow, TableFormat, TableRow, ValidationReport,
};
pub use glossary::{
    builtin_glossaries, builtin_set, expand_templates, validate_set, Filler, GrammaticalNumber,
    Item, ItemSet, SetKind, TemplateSet, TemplateSpec,
};
pub use rsa::{
    hypothesis_rdm, reference_rdm, rsa_similarity, spearman, upper_triangle, GroupRole, Hypothesis,
    Rdm, Role, RoleLabeling,
};
pub use stats::{sign_test, summarize, Direction, SignTestResult, Summary};
