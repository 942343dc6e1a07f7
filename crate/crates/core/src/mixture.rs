//! Supervised prefinetuning mixture.
//!
//! Each entry contributes `round(p / 100 * N)` records, where `N` is the
//! number of usable records it has. Below 100% a seeded sample without
//! replacement is taken; above 100% every record is kept and a seeded
//! sample of the remainder is repeated. The combined stream is shuffled
//! with the run seed.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use log::warn;
use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::ingest::{read_examples, RawTable, SkipEntry, SourceCategory, SourceEntry, SourceFormat};
use crate::objectives::{pad_truncate, ObjectiveEngine};
use crate::record::meta_keys;
use crate::record::{Objective, Seq2SeqRecord};
use crate::rng::{self, stage};
use crate::sanitize::{clean_text, sanitize_pipeline, sanitize_table, select_rows, truncate_cells, SanitizeConfig};
use crate::serialize::{annotate_column_types, LinearizeOptions, ReferenceTyper, SerializeMode};
use crate::table::{Context, ContextKind, Example, ObjectiveConfig};
use crate::tokenize::{encode_regions, TokenizerPort};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IoKind {
    TextTableToSql,
    TableToText,
    TextTableToAnswer,
    SqlTableToAnswer,
    TextToSql,
    PretrainReplay,
}

impl IoKind {
    fn as_str(self) -> &'static str {
        match self {
            IoKind::TextTableToSql => "text_table_to_sql",
            IoKind::TableToText => "table_to_text",
            IoKind::TextTableToAnswer => "text_table_to_answer",
            IoKind::SqlTableToAnswer => "sql_table_to_answer",
            IoKind::TextToSql => "text_to_sql",
            IoKind::PretrainReplay => "pretrain_replay",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureEntry {
    pub name: String,
    /// Supervised NDJSON records, or a canonical corpus for replay entries.
    pub records: PathBuf,
    pub proportion: f64,
    pub io_kind: IoKind,
    /// Optional file of record ids (one per line) that must not appear.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclude_ids: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MixtureConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_total: Option<usize>,
    pub entries: Vec<MixtureEntry>,
}

impl MixtureConfig {
    pub fn validate(&self) -> Result<(), (String, String)> {
        if self.entries.is_empty() {
            return Err(("mixture.entries".into(), "at least one entry is required".into()));
        }
        let mut names = HashSet::new();
        for (i, e) in self.entries.iter().enumerate() {
            if !names.insert(e.name.as_str()) {
                return Err((format!("mixture.entries[{i}].name"), format!("duplicate entry {:?}", e.name)));
            }
            if !(e.proportion >= 0.0 && e.proportion.is_finite()) {
                return Err((format!("mixture.entries[{i}].proportion"), "must be >= 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum MixtureError {
    #[error("cannot read entry {entry} ({path}): {source}")]
    EntryRead {
        entry: String,
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("entry {entry}: record id {id:?} is listed in its exclusion file")]
    Leakage { entry: String, id: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SupervisedRecord {
    #[serde(default)]
    id: Option<String>,
    input_text: String,
    output_text: String,
    #[serde(default)]
    table: Option<RawTable>,
}

/// Per-entry accounting for one build.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EntryCount {
    pub name: String,
    pub available: usize,
    pub emitted: usize,
}

#[derive(Debug, Clone, Default)]
pub struct MixtureBuild {
    pub records: Vec<Seq2SeqRecord>,
    pub entries: Vec<EntryCount>,
    pub skipped: Vec<SkipEntry>,
}

/// Number of records an entry contributes.
pub fn entry_quota(proportion: f64, available: usize) -> usize {
    (proportion / 100.0 * available as f64).round() as usize
}

/// Source indices to emit, in sampling order: whole copies first, then a
/// seeded sample without replacement for the remainder.
pub fn sample_indices<R: rand::Rng + ?Sized>(proportion: f64, available: usize, rng: &mut R) -> Vec<usize> {
    if available == 0 {
        return Vec::new();
    }
    let quota = entry_quota(proportion, available);
    let (copies, rest) = (quota / available, quota % available);
    let mut out = Vec::with_capacity(quota);
    for _ in 0..copies {
        out.extend(0..available);
    }
    let mut extra = index::sample(rng, available, rest).into_vec();
    extra.sort_unstable();
    out.extend(extra);
    out
}

struct Builder<'a> {
    obj_cfg: &'a ObjectiveConfig,
    sanitize: &'a SanitizeConfig,
    seed: u64,
    tokenizer: &'a dyn TokenizerPort,
}

/// A usable record together with the id checked against exclusion lists.
struct Prepared {
    id: String,
    record: Seq2SeqRecord,
}

impl Builder<'_> {
    fn prepare_table(&self, raw: RawTable, context: &Context, id: &str) -> Result<crate::table::Table, String> {
        let table = raw.into_table(id)?;
        let table = sanitize_table(&table).map_err(|e| e.to_string())?;
        let mut rng = rng::stream(self.seed, id, stage::SELECT_ROWS);
        let table = select_rows(&table, context, self.sanitize, &mut rng);
        let table = sanitize_table(&truncate_cells(&table, self.sanitize)).map_err(|e| e.to_string())?;
        Ok(annotate_column_types(&table, &ReferenceTyper::default()))
    }

    fn supervised(&self, entry: &MixtureEntry, rec: SupervisedRecord, index: usize) -> Result<Prepared, String> {
        let id = rec.id.unwrap_or_else(|| index.to_string());
        let example_id = format!("{}:{id}", entry.name);
        let input = clean_text(&rec.input_text);
        let context = match entry.io_kind {
            IoKind::TableToText => Context::missing(),
            IoKind::SqlTableToAnswer => Context::new_or_missing(ContextKind::Sql, input, Vec::new()),
            _ => Context::new_or_missing(ContextKind::Nl, input, Vec::new()),
        };
        let encoder_input = if entry.io_kind == IoKind::TextToSql {
            // Text-to-SQL slices carry no table tokens.
            let mut tokens = vec![crate::serialize::CONTEXT.to_string()];
            tokens.push(crate::serialize::context_kind_token(context.kind()).to_string());
            tokens.extend(self.tokenizer.tokenize(context.text()));
            tokens
        } else {
            let raw = rec.table.ok_or("record has no table")?;
            let table = self.prepare_table(raw, &context, &example_id)?;
            let example = Example::new(&example_id, table, context, &entry.name);
            let opts = LinearizeOptions { include_types: true, ..Default::default() };
            encode_regions(&example, opts, self.tokenizer).map_err(|e| e.to_string())?.tokens
        };
        let decoder_target = self.tokenizer.tokenize(&rec.output_text);
        Ok(Prepared {
            id,
            record: Seq2SeqRecord {
                example_id,
                objective: Objective::Supervised,
                encoder_input,
                decoder_input: decoder_target.clone(),
                decoder_target,
                meta: BTreeMap::new(),
                provenance: None,
            },
        })
    }

    fn replay(&self, entry: &MixtureEntry) -> Result<(Vec<Prepared>, Vec<SkipEntry>), MixtureError> {
        let source = SourceEntry {
            name: entry.name.clone(),
            path: entry.records.clone(),
            format: SourceFormat::Canonical,
            category: SourceCategory::TableText,
            proportion: 100.0,
        };
        let batch = read_examples(&source, None).map_err(|e| MixtureError::EntryRead {
            entry: entry.name.clone(),
            path: entry.records.clone(),
            source: io::Error::other(e.to_string()),
        })?;
        let engine =
            ObjectiveEngine::new(self.obj_cfg.clone(), SerializeMode::Unified, self.tokenizer).with_column_types(true);
        let mut skipped = batch.skipped;
        let mut prepared = Vec::new();
        for (i, example) in batch.examples.into_iter().enumerate() {
            let result =
                sanitize_pipeline(&example, self.sanitize, self.seed).map_err(|e| e.to_string()).and_then(|mut ex| {
                    ex.table = annotate_column_types(&ex.table, &ReferenceTyper::default());
                    engine.make_generation(&ex).map_err(|e| e.to_string())
                });
            match result {
                Ok(record) => prepared.push(Prepared { id: example.table.table_id().to_string(), record }),
                Err(reason) => skipped.push(SkipEntry { source: entry.name.clone(), record_index: i, reason }),
            }
        }
        Ok((prepared, skipped))
    }

    fn load_entry(&self, entry: &MixtureEntry) -> Result<(Vec<Prepared>, Vec<SkipEntry>), MixtureError> {
        if entry.io_kind == IoKind::PretrainReplay {
            return self.replay(entry);
        }
        let read_err =
            |source| MixtureError::EntryRead { entry: entry.name.clone(), path: entry.records.clone(), source };
        let file = File::open(&entry.records).map_err(read_err)?;
        let mut prepared = Vec::new();
        let mut skipped = Vec::new();
        let mut index = 0;
        for line in BufReader::new(file).lines() {
            let line = line.map_err(read_err)?;
            if line.trim().is_empty() {
                continue;
            }
            let result = serde_json::from_str::<SupervisedRecord>(&line)
                .map_err(|e| e.to_string())
                .and_then(|rec| self.supervised(entry, rec, index));
            match result {
                Ok(p) => prepared.push(p),
                Err(reason) => skipped.push(SkipEntry { source: entry.name.clone(), record_index: index, reason }),
            }
            index += 1;
        }
        Ok((prepared, skipped))
    }

    fn build_entry(
        &self,
        entry: &MixtureEntry,
    ) -> Result<(Vec<Seq2SeqRecord>, EntryCount, Vec<SkipEntry>), MixtureError> {
        let (prepared, skipped) = self.load_entry(entry)?;
        if let Some(path) = &entry.exclude_ids {
            let excluded = read_id_file(path).map_err(|source| MixtureError::EntryRead {
                entry: entry.name.clone(),
                path: path.clone(),
                source,
            })?;
            if let Some(p) = prepared.iter().find(|p| excluded.contains(&p.id)) {
                return Err(MixtureError::Leakage { entry: entry.name.clone(), id: p.id.clone() });
            }
        }
        if prepared.is_empty() {
            warn!("mixture entry {} has no usable records; skipping", entry.name);
        }
        let mut rng = rng::stream(self.seed, &entry.name, stage::MIXTURE_SAMPLE);
        let picks = sample_indices(entry.proportion, prepared.len(), &mut rng);
        let mut seen = vec![0usize; prepared.len()];
        let records = picks
            .into_iter()
            .map(|i| {
                let mut record = prepared[i].record.clone();
                if seen[i] > 0 {
                    record.example_id = format!("{}:r{}", record.example_id, seen[i]);
                }
                seen[i] += 1;
                record.meta.insert(meta_keys::ENTRY.into(), Value::from(entry.name.as_str()));
                record.meta.insert(meta_keys::SOURCE.into(), Value::from(entry.name.as_str()));
                record.meta.insert(meta_keys::IO_KIND.into(), Value::from(entry.io_kind.as_str()));
                pad_truncate(record, self.obj_cfg)
            })
            .collect::<Vec<_>>();
        let count = EntryCount { name: entry.name.clone(), available: prepared.len(), emitted: records.len() };
        Ok((records, count, skipped))
    }
}

fn read_id_file(path: &Path) -> io::Result<HashSet<String>> {
    Ok(fs::read_to_string(path)?.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect())
}

/// Build the full mixture. Entries are processed in parallel; the output
/// depends only on the entries and `seed`.
pub fn build_mixture(
    cfg: &MixtureConfig,
    obj_cfg: &ObjectiveConfig,
    sanitize: &SanitizeConfig,
    seed: u64,
    tokenizer: &dyn TokenizerPort,
) -> Result<MixtureBuild, MixtureError> {
    let builder = Builder { obj_cfg, sanitize, seed, tokenizer };
    let per_entry = cfg.entries.par_iter().map(|e| builder.build_entry(e)).collect::<Result<Vec<_>, _>>()?;
    let mut build = MixtureBuild::default();
    for (records, count, skipped) in per_entry {
        build.records.extend(records);
        build.entries.push(count);
        build.skipped.extend(skipped);
    }
    build.records.shuffle(&mut rng::stream(seed, "mixture", stage::MIXTURE_SHUFFLE));
    if let Some(total) = cfg.target_total {
        build.records.truncate(total);
    }
    Ok(build)
}
