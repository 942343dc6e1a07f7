//! Core domain types: tables, their attached context, and the objective
//! configuration shared by every pipeline stage.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Placeholder stored in the grid for a cell that has no value.
pub const MISSING_CELL: &str = "<missing_cell>";
/// Placeholder stored in the header list for a column without a name.
pub const MISSING_COLUMN: &str = "<missing_column>";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error("table has no headers")]
    EmptyHeaders,
    #[error("table has no rows")]
    EmptyTable,
    #[error("column_types has {got} entries but the table has {expected} columns")]
    TypeArity { expected: usize, got: usize },
    #[error("invalid context: {0}")]
    InvalidContext(&'static str),
}

/// A validated, rectangular table.
///
/// Every row has exactly `headers.len()` cells. Fields are private so the
/// invariant cannot be broken after construction; use [`validate_table`] or
/// [`Table::from_parts`] to build one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Table {
    table_id: String,
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
    column_types: Option<Vec<String>>,
    meta: BTreeMap<String, String>,
}

impl Table {
    /// Build a table from parts, repairing ragged rows the same way as
    /// [`validate_table`].
    pub fn from_parts(
        table_id: impl Into<String>,
        raw_headers: Vec<String>,
        raw_rows: Vec<Vec<String>>,
        column_types: Option<Vec<String>>,
        meta: BTreeMap<String, String>,
    ) -> Result<Self, TableError> {
        let mut table = validate_table(raw_headers, raw_rows)?;
        table.table_id = table_id.into();
        table.meta = meta;
        table.set_column_types(column_types)?;
        Ok(table)
    }

    pub fn table_id(&self) -> &str {
        &self.table_id
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn column_types(&self) -> Option<&[String]> {
        self.column_types.as_deref()
    }

    pub fn meta(&self) -> &BTreeMap<String, String> {
        &self.meta
    }

    pub fn num_columns(&self) -> usize {
        self.headers.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Cells of column `col`, top to bottom.
    pub fn column(&self, col: usize) -> impl Iterator<Item = &str> + '_ {
        self.rows.iter().map(move |row| row[col].as_str())
    }

    pub fn with_table_id(mut self, table_id: impl Into<String>) -> Self {
        self.table_id = table_id.into();
        self
    }

    pub fn set_column_types(&mut self, column_types: Option<Vec<String>>) -> Result<(), TableError> {
        if let Some(types) = &column_types {
            if types.len() != self.headers.len() {
                return Err(TableError::TypeArity { expected: self.headers.len(), got: types.len() });
            }
        }
        self.column_types = column_types;
        Ok(())
    }

    /// Keep only the columns whose index is in `keep` (ascending), and only
    /// the rows for which `keep_row` is true. Used by the sanitizer.
    pub(crate) fn retain(
        &self,
        keep_cols: &[usize],
        mut keep_row: impl FnMut(usize, &[String]) -> bool,
    ) -> Result<Self, TableError> {
        if keep_cols.is_empty() {
            return Err(TableError::EmptyHeaders);
        }
        let headers = keep_cols.iter().map(|&c| self.headers[c].clone()).collect();
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| (i, keep_cols.iter().map(|&c| row[c].clone()).collect::<Vec<_>>()))
            .filter(|(i, row)| keep_row(*i, row))
            .map(|(_, row)| row)
            .collect();
        if rows.is_empty() {
            return Err(TableError::EmptyTable);
        }
        let column_types = self.column_types.as_ref().map(|t| keep_cols.iter().map(|&c| t[c].clone()).collect());
        Ok(Self { table_id: self.table_id.clone(), headers, rows, column_types, meta: self.meta.clone() })
    }

    /// Apply `f` to every header and cell. Placeholders are passed through as-is.
    pub(crate) fn map_text(&self, mut f: impl FnMut(&str) -> String) -> Self {
        let mut apply = |s: &String| {
            if s == MISSING_CELL || s == MISSING_COLUMN {
                s.clone()
            } else {
                f(s)
            }
        };
        Self {
            table_id: self.table_id.clone(),
            headers: self.headers.iter().map(&mut apply).collect(),
            rows: self.rows.iter().map(|r| r.iter().map(&mut apply).collect()).collect(),
            column_types: self.column_types.clone(),
            meta: self.meta.clone(),
        }
    }

    pub(crate) fn select_row_indices(&self, indices: &[usize]) -> Self {
        Self { rows: indices.iter().map(|&i| self.rows[i].clone()).collect(), ..self.clone() }
    }
}

/// Build a [`Table`] from raw, possibly ragged input.
///
/// Short rows are padded with [`MISSING_CELL`], long rows are cut on the
/// right. Blank cells become [`MISSING_CELL`] and blank headers become
/// [`MISSING_COLUMN`].
pub fn validate_table(raw_headers: Vec<String>, raw_rows: Vec<Vec<String>>) -> Result<Table, TableError> {
    if raw_headers.is_empty() {
        return Err(TableError::EmptyHeaders);
    }
    if raw_rows.is_empty() {
        return Err(TableError::EmptyTable);
    }
    let arity = raw_headers.len();
    let headers =
        raw_headers.into_iter().map(|h| if h.trim().is_empty() { MISSING_COLUMN.to_string() } else { h }).collect();
    let rows = raw_rows
        .into_iter()
        .map(|mut row| {
            row.truncate(arity);
            row.resize(arity, MISSING_CELL.to_string());
            for cell in &mut row {
                if cell.trim().is_empty() {
                    *cell = MISSING_CELL.to_string();
                }
            }
            row
        })
        .collect();
    Ok(Table { table_id: String::new(), headers, rows, column_types: None, meta: BTreeMap::new() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextKind {
    Nl,
    Sql,
    Missing,
}

/// Text attached to a table: a natural-language passage, a SQL query, or nothing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Context {
    kind: ContextKind,
    text: String,
    turns: Vec<String>,
}

impl Context {
    pub fn missing() -> Self {
        Self { kind: ContextKind::Missing, text: String::new(), turns: Vec::new() }
    }

    pub fn nl(text: impl Into<String>) -> Result<Self, TableError> {
        Self::new(ContextKind::Nl, text.into(), Vec::new())
    }

    pub fn sql(text: impl Into<String>) -> Result<Self, TableError> {
        Self::new(ContextKind::Sql, text.into(), Vec::new())
    }

    pub fn new(kind: ContextKind, text: String, turns: Vec<String>) -> Result<Self, TableError> {
        match kind {
            ContextKind::Missing if !text.is_empty() || !turns.is_empty() => {
                Err(TableError::InvalidContext("missing context must have no text"))
            }
            ContextKind::Nl | ContextKind::Sql if text.trim().is_empty() => {
                Err(TableError::InvalidContext("text context must be non-empty"))
            }
            ContextKind::Sql if !turns.is_empty() => Err(TableError::InvalidContext("sql context cannot carry turns")),
            _ => Ok(Self { kind, text, turns }),
        }
    }

    /// Like [`Context::new`], but an empty text collapses to a missing context.
    pub fn new_or_missing(kind: ContextKind, text: String, turns: Vec<String>) -> Self {
        let turns: Vec<String> = turns.into_iter().filter(|t| !t.trim().is_empty()).collect();
        if kind == ContextKind::Missing || text.trim().is_empty() {
            return Self::missing();
        }
        let turns = if kind == ContextKind::Sql { Vec::new() } else { turns };
        Self { kind, text, turns }
    }

    pub fn kind(&self) -> ContextKind {
        self.kind
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn turns(&self) -> &[String] {
        &self.turns
    }

    pub fn is_missing(&self) -> bool {
        self.kind == ContextKind::Missing
    }

    pub fn with_turns(mut self, turns: Vec<String>) -> Result<Self, TableError> {
        self.turns = turns;
        Self::new(self.kind, self.text, self.turns)
    }
}

/// One unit flowing through the pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Example {
    pub example_id: String,
    pub table: Table,
    pub context: Context,
    pub source: String,
}

impl Example {
    pub fn new(example_id: impl Into<String>, table: Table, context: Context, source: impl Into<String>) -> Self {
        Self { example_id: example_id.into(), table, context, source: source.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("objective config: {field} {reason}")]
pub struct ConfigError {
    pub field: &'static str,
    pub reason: String,
}

/// Masking rates, mixing probabilities and sequence limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub cell_mask_rate: f64,
    pub text_mask_rate: f64,
    pub header_mask_rate: f64,
    pub mean_span_len: usize,
    pub denoise_prob: f64,
    pub table_only_mcp_only_prob: f64,
    pub generation_prob: f64,
    pub max_len: usize,
    pub max_sentinels: usize,
    pub global_seed: u64,
    /// Emit `<SQL_generation>` for SQL generation records. When off, SQL
    /// generation reuses `<NL_generation>` and the token is left out of the
    /// vocabulary.
    pub sql_generation_token: bool,
    pub pad_token: String,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            cell_mask_rate: 0.15,
            text_mask_rate: 0.50,
            header_mask_rate: 0.40,
            mean_span_len: 3,
            denoise_prob: 0.60,
            table_only_mcp_only_prob: 0.50,
            generation_prob: 0.50,
            max_len: 1024,
            max_sentinels: 100,
            global_seed: 0,
            sql_generation_token: true,
            pad_token: "<pad>".to_string(),
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fractions = [
            ("cell_mask_rate", self.cell_mask_rate),
            ("text_mask_rate", self.text_mask_rate),
            ("header_mask_rate", self.header_mask_rate),
            ("denoise_prob", self.denoise_prob),
            ("table_only_mcp_only_prob", self.table_only_mcp_only_prob),
            ("generation_prob", self.generation_prob),
        ];
        for (field, value) in fractions {
            if !(0.0..=1.0).contains(&value) {
                return Err(ConfigError { field, reason: format!("must be in [0, 1], got {value}") });
            }
        }
        let minimums = [
            ("mean_span_len", self.mean_span_len, 1),
            ("max_len", self.max_len, 2),
            ("max_sentinels", self.max_sentinels, 1),
        ];
        for (field, value, min) in minimums {
            if value < min {
                return Err(ConfigError { field, reason: format!("must be >= {min}, got {value}") });
            }
        }
        if self.pad_token.is_empty() {
            return Err(ConfigError { field: "pad_token", reason: "must be non-empty".to_string() });
        }
        Ok(())
    }
}
