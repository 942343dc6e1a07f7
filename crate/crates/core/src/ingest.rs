//! Run manifests and corpus readers.
//!
//! Corpora come in one canonical shape: UTF-8 NDJSON, one table per line.
//!
//! ```json
//! {"headers": ["name", "age"], "rows": [["alice", "30"]],
//!  "context": {"kind": "nl", "text": "who is oldest", "turns": []},
//!  "meta": {"title": "people"}}
//! ```
//!
//! A `csv_dir` source is a directory of `.csv` files; each file becomes one
//! table-only example with its first line as the header row.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mixture::MixtureConfig;
use crate::sanitize::SanitizeConfig;
use crate::table::{Context, ContextKind, Example, ObjectiveConfig, Table};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot parse manifest {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid manifest: {field}: {message}")]
    Validation { field: String, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl IngestError {
    fn io(path: &Path, source: io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Validation { field: field.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFormat {
    Canonical,
    CsvDir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceCategory {
    TableOnly,
    TableText,
    TableSql,
}

fn default_proportion() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceEntry {
    pub name: String,
    pub path: PathBuf,
    pub format: SourceFormat,
    pub category: SourceCategory,
    /// Percent of the source to use; above 100 repeats part of it.
    #[serde(default = "default_proportion")]
    pub proportion: f64,
}

fn default_shard_size() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    #[serde(default)]
    pub sources: Vec<SourceEntry>,
    pub output_dir: PathBuf,
    #[serde(default = "default_shard_size")]
    pub shard_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub objective_config: ObjectiveConfig,
    #[serde(default)]
    pub sanitize: SanitizeConfig,
    /// Prefinetuning mixture, used by `build-pft`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixture: Option<MixtureConfig>,
}

impl CorpusManifest {
    /// Parse and validate a manifest from TOML text. Relative paths are
    /// resolved against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path, origin: &Path) -> Result<Self, IngestError> {
        let mut manifest: CorpusManifest = toml::from_str(text)
            .map_err(|e| IngestError::Parse { path: origin.to_path_buf(), message: e.to_string() })?;
        manifest.resolve_paths(base_dir);
        manifest.validate()?;
        Ok(manifest)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut self.output_dir);
        for source in &mut self.sources {
            resolve(&mut source.path);
        }
        if let Some(mixture) = &mut self.mixture {
            for entry in &mut mixture.entries {
                resolve(&mut entry.records);
                if let Some(p) = &mut entry.exclude_ids {
                    resolve(p);
                }
            }
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.sources.is_empty() && self.mixture.is_none() {
            return Err(IngestError::invalid("sources", "at least one source is required"));
        }
        if self.shard_size == 0 {
            return Err(IngestError::invalid("shard_size", "must be >= 1"));
        }
        let mut names = HashSet::new();
        for (i, source) in self.sources.iter().enumerate() {
            if source.name.is_empty() {
                return Err(IngestError::invalid(format!("sources[{i}].name"), "must be non-empty"));
            }
            if !names.insert(source.name.as_str()) {
                return Err(IngestError::invalid(
                    format!("sources[{i}].name"),
                    format!("duplicate source name {:?}", source.name),
                ));
            }
            if !(source.proportion >= 0.0 && source.proportion.is_finite()) {
                return Err(IngestError::invalid(format!("sources[{i}].proportion"), "must be >= 0"));
            }
        }
        self.objective_config
            .validate()
            .map_err(|e| IngestError::invalid(format!("objective_config.{}", e.field), e.reason))?;
        self.sanitize.validate().map_err(|m| IngestError::invalid("sanitize", m))?;
        if let Some(mixture) = &self.mixture {
            mixture.validate().map_err(|(field, m)| IngestError::invalid(field, m))?;
        }
        Ok(())
    }
}

pub fn load_manifest(path: &Path) -> Result<CorpusManifest, IngestError> {
    let text = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    CorpusManifest::from_toml_str(&text, base, path)
}

/// A record that could not be decoded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipEntry {
    pub source: String,
    pub record_index: usize,
    pub reason: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawContext {
    kind: Option<ContextKind>,
    #[serde(default)]
    text: String,
    #[serde(default)]
    turns: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    #[serde(default)]
    table_id: Option<String>,
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
    #[serde(default)]
    column_types: Option<Vec<String>>,
    #[serde(default)]
    context: Option<RawContext>,
    #[serde(default)]
    meta: BTreeMap<String, String>,
}

/// Raw canonical table record, also used by the mixture's `table` field.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTable {
    #[serde(default)]
    pub table_id: Option<String>,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
    #[serde(default)]
    pub column_types: Option<Vec<String>>,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl RawTable {
    pub fn into_table(self, default_id: &str) -> Result<Table, String> {
        Table::from_parts(
            self.table_id.unwrap_or_else(|| default_id.to_string()),
            self.headers,
            self.rows,
            self.column_types,
            self.meta,
        )
        .map_err(|e| e.to_string())
    }
}

fn default_kind(category: SourceCategory) -> ContextKind {
    match category {
        SourceCategory::TableOnly => ContextKind::Missing,
        SourceCategory::TableText => ContextKind::Nl,
        SourceCategory::TableSql => ContextKind::Sql,
    }
}

fn decode_canonical(line: &str, source: &SourceEntry, example_id: &str) -> Result<Example, String> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let table = RawTable {
        table_id: raw.table_id,
        headers: raw.headers,
        rows: raw.rows,
        column_types: raw.column_types,
        meta: raw.meta,
    }
    .into_table(example_id)?;
    let context = match (source.category, raw.context) {
        (SourceCategory::TableOnly, _) | (_, None) => Context::missing(),
        (category, Some(ctx)) => {
            let kind = ctx.kind.unwrap_or(default_kind(category));
            Context::new(kind, ctx.text, ctx.turns).map_err(|e| e.to_string())?
        }
    };
    Ok(Example::new(example_id, table, context, &source.name))
}

/// Examples read from one source, plus the records that failed to decode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SourceBatch {
    pub examples: Vec<Example>,
    pub skipped: Vec<SkipEntry>,
}

impl SourceBatch {
    pub fn raw_records(&self) -> usize {
        self.examples.len() + self.skipped.len()
    }
}

/// Read every record of a source, in on-disk order.
///
/// `limit` caps the number of raw records looked at. Blank lines in
/// canonical files are not records.
pub fn read_examples(source: &SourceEntry, limit: Option<usize>) -> Result<SourceBatch, IngestError> {
    match source.format {
        SourceFormat::Canonical => read_canonical(source, limit),
        SourceFormat::CsvDir => read_csv_dir(source, limit),
    }
}

fn read_canonical(source: &SourceEntry, limit: Option<usize>) -> Result<SourceBatch, IngestError> {
    let file = File::open(&source.path).map_err(|e| IngestError::io(&source.path, e))?;
    let mut batch = SourceBatch::default();
    let mut index = 0;
    for line in BufReader::new(file).lines() {
        if limit.is_some_and(|l| index >= l) {
            break;
        }
        let line = line.map_err(|e| IngestError::io(&source.path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let example_id = format!("{}:{index}", source.name);
        match decode_canonical(&line, source, &example_id) {
            Ok(ex) => batch.examples.push(ex),
            Err(reason) => batch.skipped.push(SkipEntry { source: source.name.clone(), record_index: index, reason }),
        }
        index += 1;
    }
    Ok(batch)
}

fn decode_csv(path: &Path, source: &SourceEntry, example_id: &str) -> Result<Example, String> {
    let mut reader =
        csv::ReaderBuilder::new().has_headers(true).flexible(true).from_path(path).map_err(|e| e.to_string())?;
    let headers: Vec<String> = reader.headers().map_err(|e| e.to_string())?.iter().map(str::to_string).collect();
    let rows = reader
        .records()
        .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let table_id = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    let mut meta = BTreeMap::new();
    if let Some(name) = path.file_name() {
        meta.insert("file".to_string(), name.to_string_lossy().into_owned());
    }
    let table = RawTable { table_id, headers, rows, column_types: None, meta }.into_table(example_id)?;
    Ok(Example::new(example_id, table, Context::missing(), &source.name))
}

fn read_csv_dir(source: &SourceEntry, limit: Option<usize>) -> Result<SourceBatch, IngestError> {
    let mut files: Vec<PathBuf> = fs::read_dir(&source.path)
        .map_err(|e| IngestError::io(&source.path, e))?
        .map(|entry| entry.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(|e| IngestError::io(&source.path, e))?;
    files.retain(|p| p.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("csv")));
    files.sort();
    if let Some(limit) = limit {
        files.truncate(limit);
    }
    let mut batch = SourceBatch::default();
    for (index, path) in files.iter().enumerate() {
        let example_id = format!("{}:{index}", source.name);
        match decode_csv(path, source, &example_id) {
            Ok(ex) => batch.examples.push(ex),
            Err(reason) => batch.skipped.push(SkipEntry {
                source: source.name.clone(),
                record_index: index,
                reason: format!("{}: {reason}", path.display()),
            }),
        }
    }
    Ok(batch)
}

/// Write skip entries as NDJSON.
pub fn write_skip_report(path: &Path, entries: &[SkipEntry]) -> io::Result<()> {
    let mut out = String::new();
    for entry in entries {
        out.push_str(&serde_json::to_string(entry).expect("skip entry serializes"));
        out.push('\n');
    }
    fs::write(path, out)
}
