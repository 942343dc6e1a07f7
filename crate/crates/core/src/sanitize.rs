//! Table and context cleanup, context-aware row selection, and truncation.

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, stage};
use crate::serialize::is_reserved_word;
use crate::table::{Context, Example, Table, TableError, MISSING_CELL, MISSING_COLUMN};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SanitizeConfig {
    pub max_rows: usize,
    pub max_cell_words: usize,
    pub max_context_words: usize,
}

impl Default for SanitizeConfig {
    fn default() -> Self {
        Self { max_rows: 40, max_cell_words: 10, max_context_words: 40 }
    }
}

impl SanitizeConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (field, v) in [
            ("max_rows", self.max_rows),
            ("max_cell_words", self.max_cell_words),
            ("max_context_words", self.max_context_words),
        ] {
            if v == 0 {
                return Err(format!("sanitize.{field} must be >= 1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SanitizeError {
    #[error("no column has a valid header")]
    AllColumnsInvalid,
    #[error("every row was removed")]
    NoRowsLeft,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("example {example_id}: {error}")]
pub struct ExampleSanitizeError {
    pub example_id: String,
    pub error: SanitizeError,
}

/// Strip control characters, collapse whitespace and drop reserved words.
pub fn clean_text(text: &str) -> String {
    let replaced: String = text.chars().map(|c| if c.is_control() { ' ' } else { c }).collect();
    let mut out = String::with_capacity(replaced.len());
    for word in replaced.split_whitespace().filter(|w| !is_reserved_word(w)) {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

fn is_invalid_header(header: &str) -> bool {
    header.is_empty() || header == MISSING_COLUMN || !header.chars().any(char::is_alphanumeric)
}

/// Clean cell text, drop duplicate and invalid columns, drop rows whose
/// cells are all identical.
pub fn sanitize_table(table: &Table) -> Result<Table, SanitizeError> {
    let cleaned = table.map_text(|s| {
        let c = clean_text(s);
        if c.is_empty() {
            MISSING_CELL.to_string()
        } else {
            c
        }
    });
    let mut seen = HashSet::new();
    let keep_cols: Vec<usize> = cleaned
        .headers()
        .iter()
        .enumerate()
        .filter(|(_, h)| {
            // Blank headers were turned into MISSING_CELL by the cleanup above.
            let h = h.as_str();
            !(h == MISSING_CELL || is_invalid_header(h))
        })
        .filter(|(_, h)| seen.insert(h.as_str()))
        .map(|(i, _)| i)
        .collect();
    if keep_cols.is_empty() {
        return Err(SanitizeError::AllColumnsInvalid);
    }
    let multi_column = keep_cols.len() > 1;
    cleaned.retain(&keep_cols, |_, row| !(multi_column && row.iter().all(|c| *c == row[0]))).map_err(|e| match e {
        TableError::EmptyHeaders => SanitizeError::AllColumnsInvalid,
        _ => SanitizeError::NoRowsLeft,
    })
}

/// Lowercased words with edge punctuation removed; placeholders are skipped.
pub fn ngram_words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter(|w| *w != MISSING_CELL && *w != MISSING_COLUMN)
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

fn trigrams(words: &[String]) -> impl Iterator<Item = [&str; 3]> {
    words.windows(3).map(|w| [w[0].as_str(), w[1].as_str(), w[2].as_str()])
}

/// Number of distinct word 3-grams a row shares with the context.
pub fn row_overlap_scores(table: &Table, context: &Context) -> Vec<usize> {
    let mut context_words = vec![ngram_words(context.text())];
    context_words.extend(context.turns().iter().map(|t| ngram_words(t)));
    let context_grams: HashSet<[&str; 3]> = context_words.iter().flat_map(|w| trigrams(w)).collect();
    table
        .rows()
        .iter()
        .map(|row| {
            let words = ngram_words(&row.join(" "));
            let row_grams: HashSet<[&str; 3]> = trigrams(&words).collect();
            row_grams.intersection(&context_grams).count()
        })
        .collect()
}

/// Keep at most `max_rows` rows, preferring rows that overlap the context.
pub fn select_rows<R: Rng + ?Sized>(table: &Table, context: &Context, cfg: &SanitizeConfig, rng: &mut R) -> Table {
    let n = table.num_rows();
    if n <= cfg.max_rows {
        return table.clone();
    }
    let mut keep: Vec<usize> = if context.is_missing() {
        index::sample(rng, n, cfg.max_rows).into_vec()
    } else {
        let scores = row_overlap_scores(table, context);
        let mut ranked: Vec<usize> = (0..n).filter(|&i| scores[i] > 0).collect();
        ranked.sort_by(|&a, &b| scores[b].cmp(&scores[a]).then(a.cmp(&b)));
        ranked.truncate(cfg.max_rows);
        let missing = cfg.max_rows - ranked.len();
        if missing > 0 {
            let zero: Vec<usize> = (0..n).filter(|&i| scores[i] == 0).collect();
            ranked.extend(index::sample(rng, zero.len(), missing).into_iter().map(|j| zero[j]));
        }
        ranked
    };
    keep.sort_unstable();
    table.select_row_indices(&keep)
}

pub fn truncate_words(text: &str, max_words: usize) -> String {
    let mut words = text.split_whitespace();
    let mut out = String::with_capacity(text.len());
    for word in words.by_ref().take(max_words) {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

pub fn truncate_cells(table: &Table, cfg: &SanitizeConfig) -> Table {
    table.map_text(|s| truncate_words(s, cfg.max_cell_words))
}

pub fn truncate_context(context: &Context, cfg: &SanitizeConfig) -> Context {
    if context.is_missing() {
        return context.clone();
    }
    Context::new_or_missing(
        context.kind(),
        truncate_words(context.text(), cfg.max_context_words),
        context.turns().iter().map(|t| truncate_words(t, cfg.max_context_words)).collect(),
    )
}

pub fn clean_context(context: &Context) -> Context {
    Context::new_or_missing(
        context.kind(),
        clean_text(context.text()),
        context.turns().iter().map(|t| clean_text(t)).collect(),
    )
}

/// Full cleanup for one example. Row selection draws from the example's
/// own stream, so the result depends only on `(seed, example_id)`.
///
/// The table is re-checked after truncation: cutting headers to
/// `max_cell_words` can create new duplicate names or uniform rows.
pub fn sanitize_pipeline(example: &Example, cfg: &SanitizeConfig, seed: u64) -> Result<Example, ExampleSanitizeError> {
    let attach = |error| ExampleSanitizeError { example_id: example.example_id.clone(), error };
    let context = clean_context(&example.context);
    let table = sanitize_table(&example.table).map_err(attach)?;
    let mut rng = rng::stream(seed, &example.example_id, stage::SELECT_ROWS);
    let table = select_rows(&table, &context, cfg, &mut rng);
    let table = truncate_cells(&table, cfg);
    let table = sanitize_table(&table).map_err(attach)?;
    let context = truncate_context(&context, cfg);
    Ok(Example { example_id: example.example_id.clone(), table, context, source: example.source.clone() })
}
