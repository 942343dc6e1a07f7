//! Converts table corpora into seq2seq pretraining records.
//!
//! The stages, in pipeline order:
//!
//! - [`ingest`]: manifests, canonical NDJSON corpora and the CSV adapter.
//! - [`sanitize`]: cleanup, context-aware row selection, truncation.
//! - [`serialize`] and [`tokenize`]: linearization and region-labeled tokens.
//! - [`objectives`]: denoising, generation, completion and the mixer.
//! - [`mixture`]: the supervised prefinetuning mixture builder.
//! - [`emit`]: sharded output, run manifests and statistics.
//! - [`pipeline`]: end-to-end orchestration over a worker pool.

pub mod emit;
pub mod ingest;
pub mod mixture;
pub mod objectives;
pub mod pipeline;
pub mod record;
pub mod rng;
pub mod sanitize;
pub mod serialize;
pub mod table;
pub mod tokenize;

pub use objectives::{ObjectiveEngine, ObjectiveError, SkipRecord};
pub use record::{Objective, Seq2SeqRecord};
pub use sanitize::SanitizeConfig;
pub use serialize::{linearize, LinearizeOptions, SerializeMode, SpecialTokenRegistry};
pub use table::{validate_table, Context, ContextKind, Example, ObjectiveConfig, Table};
pub use tokenize::{encode_regions, LabeledTokenSeq, Region, TokenizerPort, WhitespaceTokenizer};
