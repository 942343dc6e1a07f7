//! Linearization of examples into the unified encoder format, plus the
//! special-token registry and the comma-separated ablation format.

use std::borrow::Cow;
use std::io::{self, Write};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::Objective;
use crate::table::{Context, ContextKind, Example, Table, MISSING_CELL, MISSING_COLUMN};

pub const CONTEXT: &str = "<context>";
pub const HEADER: &str = "<header>";
pub const ROW: &str = "<row>";
/// Cell separator as listed in the vocabulary.
pub const CELL_SEP: &str = "_|";
/// Cell separator as it appears in linearized text.
pub const CELL_SEP_RENDERED: &str = "|";
/// Separator between the first query and later turns.
pub const TURN_SEP_FIRST: &str = "||";
pub const TEXT_NL: &str = "<text_NL>";
pub const TEXT_SQL: &str = "<text_SQL>";
pub const MISSING_CONTEXT: &str = "<missing_context>";
pub const NL_COMPLETION: &str = "<NL_completion>";
pub const SQL_COMPLETION: &str = "<SQL_completion>";
pub const NL_GENERATION: &str = "<NL_generation>";
pub const SQL_GENERATION: &str = "<SQL_generation>";
pub const DENOISING: &str = "<denoising>";
/// Separator used by the RF format.
pub const RF_SEP: &str = ",";
/// Missing-value literal used by the RF format.
pub const RF_MISSING: &str = "nan";

const FIXED_TOKENS: [&str; 14] = [
    CONTEXT,
    HEADER,
    ROW,
    CELL_SEP,
    TEXT_NL,
    TEXT_SQL,
    MISSING_CELL,
    MISSING_COLUMN,
    MISSING_CONTEXT,
    NL_COMPLETION,
    SQL_COMPLETION,
    NL_GENERATION,
    SQL_GENERATION,
    DENOISING,
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SerializeError {
    #[error("turn aggregation needs an NL context, got {0:?}")]
    NotApplicable(ContextKind),
    #[error("objective {0} has no decoder task token")]
    UnknownObjective(Objective),
    #[error("cannot parse linearized input: {0}")]
    Parse(String),
}

/// Ordered vocabulary of special tokens. Order is fixed so ids are stable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecialTokenRegistry {
    tokens: Vec<String>,
    max_sentinels: usize,
}

impl SpecialTokenRegistry {
    pub fn new(max_sentinels: usize, with_sql_generation: bool) -> Self {
        let mut tokens: Vec<String> = FIXED_TOKENS
            .iter()
            .filter(|t| with_sql_generation || **t != SQL_GENERATION)
            .map(|t| t.to_string())
            .collect();
        tokens.extend((1..=max_sentinels).map(sentinel));
        Self { tokens, max_sentinels }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn max_sentinels(&self) -> usize {
        self.max_sentinels
    }

    pub fn contains(&self, token: &str) -> bool {
        self.id(token).is_some()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.tokens.iter().position(|t| t == token)
    }

    /// One token per line, in registry order.
    pub fn write_vocab(&self, mut out: impl Write) -> io::Result<()> {
        for token in &self.tokens {
            writeln!(out, "{token}")?;
        }
        Ok(())
    }

    pub fn write_vocab_file(&self, path: &Path) -> io::Result<()> {
        let mut file = io::BufWriter::new(std::fs::File::create(path)?);
        self.write_vocab(&mut file)?;
        file.flush()
    }
}

impl Default for SpecialTokenRegistry {
    fn default() -> Self {
        Self::new(100, true)
    }
}

/// The `k`-th sentinel, 1-based.
pub fn sentinel(k: usize) -> String {
    format!("<sentinel_{k}>")
}

/// Sentinel used in RF mode, where the unified special tokens are not used.
/// Follows the native `<extra_id_N>` numbering (0-based).
pub fn rf_sentinel(k: usize) -> String {
    format!("<extra_id_{}>", k - 1)
}

pub fn sentinel_for(mode: SerializeMode, k: usize) -> String {
    match mode {
        SerializeMode::Unified => sentinel(k),
        SerializeMode::Rf => rf_sentinel(k),
    }
}

/// Parse `<sentinel_k>` or `<extra_id_N>` back to its 1-based index.
pub fn sentinel_index(token: &str) -> Option<usize> {
    if let Some(n) = token.strip_prefix("<sentinel_").and_then(|r| r.strip_suffix('>')) {
        return n.parse().ok().filter(|&k| k >= 1);
    }
    token
        .strip_prefix("<extra_id_")
        .and_then(|r| r.strip_suffix('>'))
        .and_then(|n| n.parse::<usize>().ok())
        .map(|k| k + 1)
}

/// True for any word that the linearized format reserves: registry tokens,
/// any sentinel, the rendered separators, and the pad token.
pub fn is_reserved_word(word: &str) -> bool {
    FIXED_TOKENS.contains(&word)
        || word == CELL_SEP_RENDERED
        || word == TURN_SEP_FIRST
        || word == "<pad>"
        || sentinel_index(word).is_some()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SerializeMode {
    #[default]
    Unified,
    Rf,
}

impl std::str::FromStr for SerializeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unified" => Ok(Self::Unified),
            "rf" => Ok(Self::Rf),
            other => Err(format!("unknown mode {other:?} (expected unified or rf)")),
        }
    }
}

/// `text || turn1 | turn2 | ...`, or just `text` without turns.
pub fn aggregate_turns(context: &Context) -> Result<String, SerializeError> {
    if context.kind() != ContextKind::Nl {
        return Err(SerializeError::NotApplicable(context.kind()));
    }
    let mut out = context.text().to_string();
    for (i, turn) in context.turns().iter().enumerate() {
        out.push(' ');
        out.push_str(if i == 0 { TURN_SEP_FIRST } else { CELL_SEP_RENDERED });
        out.push(' ');
        out.push_str(turn);
    }
    Ok(out)
}

/// The context text as it is rendered: aggregated for NL, verbatim for SQL,
/// empty when missing.
pub fn context_string(context: &Context) -> String {
    match context.kind() {
        ContextKind::Nl => aggregate_turns(context).unwrap_or_default(),
        ContextKind::Sql => context.text().to_string(),
        ContextKind::Missing => String::new(),
    }
}

pub fn context_kind_token(kind: ContextKind) -> &'static str {
    match kind {
        ContextKind::Nl => TEXT_NL,
        ContextKind::Sql => TEXT_SQL,
        ContextKind::Missing => MISSING_CONTEXT,
    }
}

/// Assigns a type tag to a column given its cells.
pub trait ColumnTyper {
    fn column_type(&self, cells: &[&str]) -> String;
}

/// Type tagger based on numeral parsing and a small set of date patterns.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceTyper {
    pub threshold: f64,
}

impl Default for ReferenceTyper {
    fn default() -> Self {
        Self { threshold: 0.8 }
    }
}

pub fn is_numeral(cell: &str) -> bool {
    let s = cell.trim();
    let s = s.strip_prefix(['$', '€', '£', '+', '-']).unwrap_or(s);
    let s = s.strip_suffix('%').unwrap_or(s);
    let cleaned: String = s.chars().filter(|c| *c != ',').collect();
    !cleaned.is_empty()
        && cleaned.chars().all(|c| c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || c == '-' || c == '+')
        && cleaned.chars().next().is_some_and(|c| c.is_ascii_digit() || c == '.')
        && cleaned.parse::<f64>().is_ok()
}

pub fn is_date(cell: &str) -> bool {
    static PATTERNS: OnceLock<Vec<Regex>> = OnceLock::new();
    let patterns = PATTERNS.get_or_init(|| {
        const MONTH: &str = "(jan|feb|mar|apr|may|jun|jul|aug|sep|sept|oct|nov|dec)[a-z]*\\.?";
        [
            r"^\d{4}-\d{1,2}-\d{1,2}$".to_string(),
            r"^\d{4}/\d{1,2}/\d{1,2}$".to_string(),
            r"^\d{1,2}/\d{1,2}/\d{2,4}$".to_string(),
            r"^\d{1,2}\.\d{1,2}\.\d{4}$".to_string(),
            r"^\d{4}-\d{1,2}$".to_string(),
            format!(r"^(?i){MONTH}\s+\d{{1,2}},?\s+\d{{4}}$"),
            format!(r"^(?i)\d{{1,2}}\s+{MONTH}\s+\d{{4}}$"),
            format!(r"^(?i){MONTH}\s+\d{{4}}$"),
        ]
        .iter()
        .map(|p| Regex::new(p).expect("date pattern"))
        .collect()
    });
    let s = cell.trim();
    patterns.iter().any(|re| re.is_match(s))
}

impl ColumnTyper for ReferenceTyper {
    fn column_type(&self, cells: &[&str]) -> String {
        let present: Vec<&str> = cells.iter().copied().filter(|c| *c != MISSING_CELL).collect();
        if present.is_empty() {
            return "text".to_string();
        }
        let share = |pred: fn(&str) -> bool| present.iter().filter(|c| pred(c)).count() as f64 / present.len() as f64;
        if share(is_numeral) >= self.threshold {
            "number".to_string()
        } else if share(is_date) >= self.threshold {
            "date".to_string()
        } else {
            "text".to_string()
        }
    }
}

pub fn annotate_column_types(table: &Table, typer: &dyn ColumnTyper) -> Table {
    let types = (0..table.num_columns()).map(|c| typer.column_type(&table.column(c).collect::<Vec<_>>())).collect();
    let mut out = table.clone();
    out.set_column_types(Some(types)).expect("one type per column");
    out
}

/// Which part of the input a rendered piece belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PieceKind {
    Structural,
    Context,
    /// Header text of the given column.
    Header(usize),
    Cell,
}

/// A contiguous piece of the linearized input. Linearized text is the
/// pieces joined with single spaces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Piece<'a> {
    pub text: Cow<'a, str>,
    pub kind: PieceKind,
}

impl<'a> Piece<'a> {
    fn structural(text: &'a str) -> Self {
        Self { text: Cow::Borrowed(text), kind: PieceKind::Structural }
    }
}

/// Options controlling how an example is rendered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LinearizeOptions<'t> {
    pub mode: SerializeMode,
    pub task_tag: Option<&'t str>,
    pub include_types: bool,
}

impl LinearizeOptions<'_> {
    pub fn mode(mode: SerializeMode) -> Self {
        Self { mode, ..Default::default() }
    }
}

fn header_piece<'a>(table: &'a Table, col: usize, include_types: bool, mode: SerializeMode) -> Piece<'a> {
    let header = table.headers()[col].as_str();
    if header == MISSING_COLUMN {
        return Piece::structural(match mode {
            SerializeMode::Unified => MISSING_COLUMN,
            SerializeMode::Rf => RF_MISSING,
        });
    }
    let text = match (include_types, table.column_types()) {
        (true, Some(types)) => Cow::Owned(format!("{header}:{}", types[col])),
        _ => Cow::Borrowed(header),
    };
    Piece { text, kind: PieceKind::Header(col) }
}

fn context_pieces<'a>(context: &'a Context, mode: SerializeMode, out: &mut Vec<Piece<'a>>) {
    let turn_sep = |i: usize| if i == 0 { TURN_SEP_FIRST } else { CELL_SEP_RENDERED };
    match mode {
        SerializeMode::Unified => {
            out.push(Piece::structural(CONTEXT));
            out.push(Piece::structural(context_kind_token(context.kind())));
            if context.is_missing() {
                return;
            }
            out.push(Piece { text: Cow::Borrowed(context.text()), kind: PieceKind::Context });
            for (i, turn) in context.turns().iter().enumerate() {
                out.push(Piece::structural(turn_sep(i)));
                out.push(Piece { text: Cow::Borrowed(turn), kind: PieceKind::Context });
            }
        }
        SerializeMode::Rf => {
            if context.is_missing() {
                out.push(Piece::structural(RF_MISSING));
                return;
            }
            out.push(Piece { text: Cow::Borrowed(context.text()), kind: PieceKind::Context });
            for turn in context.turns() {
                out.push(Piece::structural(RF_SEP));
                out.push(Piece { text: Cow::Borrowed(turn), kind: PieceKind::Context });
            }
        }
    }
}

/// Break an example into rendered pieces. [`linearize`] and the region
/// encoder both build on this, so the two can never drift apart.
pub fn pieces<'a>(example: &'a Example, opts: LinearizeOptions<'a>) -> Vec<Piece<'a>> {
    let table = &example.table;
    let mut out = Vec::with_capacity(4 + table.num_columns() * (table.num_rows() + 1) * 2);
    if let Some(tag) = opts.task_tag {
        out.push(Piece::structural(tag));
    }
    context_pieces(&example.context, opts.mode, &mut out);
    let cell_piece = |cell: &'a String| {
        if cell == MISSING_CELL {
            Piece::structural(match opts.mode {
                SerializeMode::Unified => MISSING_CELL,
                SerializeMode::Rf => RF_MISSING,
            })
        } else {
            Piece { text: Cow::Borrowed(cell.as_str()), kind: PieceKind::Cell }
        }
    };
    match opts.mode {
        SerializeMode::Unified => {
            out.push(Piece::structural(HEADER));
            for col in 0..table.num_columns() {
                if col > 0 {
                    out.push(Piece::structural(CELL_SEP_RENDERED));
                }
                out.push(header_piece(table, col, opts.include_types, opts.mode));
            }
            for (i, row) in table.rows().iter().enumerate() {
                out.push(Piece::structural(ROW));
                out.push(Piece { text: Cow::Owned(i.to_string()), kind: PieceKind::Structural });
                for (col, cell) in row.iter().enumerate() {
                    if col > 0 {
                        out.push(Piece::structural(CELL_SEP_RENDERED));
                    }
                    out.push(cell_piece(cell));
                }
            }
        }
        SerializeMode::Rf => {
            for col in 0..table.num_columns() {
                out.push(Piece::structural(RF_SEP));
                out.push(header_piece(table, col, opts.include_types, opts.mode));
            }
            for row in table.rows() {
                for cell in row {
                    out.push(Piece::structural(RF_SEP));
                    out.push(cell_piece(cell));
                }
            }
        }
    }
    out
}

/// Render an example as a single string.
pub fn linearize(example: &Example, opts: LinearizeOptions<'_>) -> String {
    let pieces = pieces(example, opts);
    let mut out = String::with_capacity(pieces.iter().map(|p| p.text.len() + 1).sum());
    for (i, piece) in pieces.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&piece.text);
    }
    out
}

/// Task-identifier token that opens the decoder input.
pub fn render_decoder_prefix(objective: Objective, sql_generation_token: bool) -> Result<&'static str, SerializeError> {
    match objective {
        Objective::Denoise => Ok(DENOISING),
        Objective::NlCompletion => Ok(NL_COMPLETION),
        Objective::SqlCompletion => Ok(SQL_COMPLETION),
        Objective::NlGeneration => Ok(NL_GENERATION),
        Objective::SqlGeneration if sql_generation_token => Ok(SQL_GENERATION),
        Objective::SqlGeneration => Ok(NL_GENERATION),
        Objective::Supervised => Err(SerializeError::UnknownObjective(objective)),
    }
}

/// Structure recovered from a unified-format string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedInput {
    pub context_kind: ContextKind,
    pub context_text: String,
    pub turns: Vec<String>,
    pub headers: Vec<String>,
    pub column_types: Option<Vec<String>>,
    pub rows: Vec<Vec<String>>,
}

/// Parse a unified-format string back into its parts.
///
/// Inverse of [`linearize`] for inputs whose text contains no reserved words.
pub fn parse_unified(input: &str, include_types: bool) -> Result<ParsedInput, SerializeError> {
    let err = |m: &str| SerializeError::Parse(m.to_string());
    let words: Vec<&str> = input.split(' ').collect();
    let mut pos = 0;
    if words.first() != Some(&CONTEXT) {
        return Err(err("expected <context>"));
    }
    pos += 1;
    let context_kind = match words.get(pos).copied() {
        Some(TEXT_NL) => ContextKind::Nl,
        Some(TEXT_SQL) => ContextKind::Sql,
        Some(MISSING_CONTEXT) => ContextKind::Missing,
        _ => return Err(err("expected context kind token")),
    };
    pos += 1;

    // Context segments up to <header>, split at turn separators.
    let mut segments: Vec<Vec<&str>> = vec![Vec::new()];
    while let Some(&w) = words.get(pos) {
        if w == HEADER {
            break;
        }
        if context_kind == ContextKind::Nl
            && ((w == TURN_SEP_FIRST && segments.len() == 1) || (w == CELL_SEP_RENDERED && segments.len() > 1))
        {
            segments.push(Vec::new());
        } else {
            segments.last_mut().expect("non-empty").push(w);
        }
        pos += 1;
    }
    if words.get(pos) != Some(&HEADER) {
        return Err(err("expected <header>"));
    }
    pos += 1;
    let mut segments = segments.into_iter().map(|s| s.join(" "));
    let context_text = segments.next().unwrap_or_default();
    let turns: Vec<String> = segments.collect();
    if (context_kind == ContextKind::Missing) != context_text.is_empty() {
        return Err(err("context text does not match its kind"));
    }

    let split_cells = |slice: &[&str]| -> Vec<String> {
        slice.split(|w| *w == CELL_SEP_RENDERED).map(|cell| cell.join(" ")).collect()
    };
    let header_end = words[pos..].iter().position(|w| *w == ROW).map_or(words.len(), |i| pos + i);
    let raw_headers = split_cells(&words[pos..header_end]);
    let (headers, column_types) = if include_types {
        let mut headers = Vec::new();
        let mut types = Vec::new();
        for h in raw_headers {
            if h == MISSING_COLUMN {
                headers.push(h);
                types.push(String::new());
                continue;
            }
            let (name, ty) = h.rsplit_once(':').ok_or_else(|| err("header without type"))?;
            headers.push(name.to_string());
            types.push(ty.to_string());
        }
        (headers, Some(types))
    } else {
        (raw_headers, None)
    };
    pos = header_end;

    let mut rows = Vec::new();
    while pos < words.len() {
        if words[pos] != ROW {
            return Err(err("expected <row>"));
        }
        let idx = words.get(pos + 1).ok_or_else(|| err("row without index"))?;
        if *idx != rows.len().to_string() {
            return Err(err("row index out of sequence"));
        }
        pos += 2;
        let end = words[pos..].iter().position(|w| *w == ROW).map_or(words.len(), |i| pos + i);
        let cells = split_cells(&words[pos..end]);
        if cells.len() != headers.len() {
            return Err(err("row arity differs from header arity"));
        }
        rows.push(cells);
        pos = end;
    }
    Ok(ParsedInput { context_kind, context_text, turns, headers, column_types, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::validate_table;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    fn people(context: Context) -> Example {
        let table = validate_table(s(&["name", "age"]), vec![s(&["alice", "30"])]).unwrap();
        Example::new("t:0", table, context, "test")
    }

    #[test]
    fn registry_order_and_size() {
        let reg = SpecialTokenRegistry::new(3, true);
        assert_eq!(reg.tokens().len(), 17);
        assert_eq!(reg.tokens()[0], "<context>");
        assert_eq!(reg.tokens()[3], "_|");
        assert_eq!(reg.tokens()[13], "<denoising>");
        assert_eq!(reg.tokens()[16], "<sentinel_3>");
        let mut uniq = reg.tokens().to_vec();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), reg.tokens().len());
        assert!(!SpecialTokenRegistry::new(3, false).contains(SQL_GENERATION));
    }

    #[test]
    fn vocab_dump_is_one_token_per_line() {
        let reg = SpecialTokenRegistry::new(2, true);
        let mut buf = Vec::new();
        reg.write_vocab(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().collect::<Vec<_>>(), reg.tokens());
    }

    #[test]
    fn turn_aggregation() {
        assert_eq!(aggregate_turns(&Context::nl("q").unwrap()).unwrap(), "q");
        let ctx = Context::nl("q1").unwrap().with_turns(s(&["q2", "m1"])).unwrap();
        assert_eq!(aggregate_turns(&ctx).unwrap(), "q1 || q2 | m1");
        assert_eq!(
            aggregate_turns(&Context::sql("select 1").unwrap()),
            Err(SerializeError::NotApplicable(ContextKind::Sql))
        );
    }

    #[test]
    fn reference_typer() {
        let typer = ReferenceTyper::default();
        assert_eq!(typer.column_type(&["1", "2", "3"]), "number");
        assert_eq!(typer.column_type(&["2020-01-01", "1999-12-31"]), "date");
        assert_eq!(typer.column_type(&["apple", "7"]), "text");
        assert_eq!(typer.column_type(&["1,200", "3.5%", "$4", MISSING_CELL]), "number");
        assert_eq!(typer.column_type(&["March 3, 2001", "12 Jan 1990", "2001/02/03", "x", "5/6/2020"]), "date");
        assert_eq!(typer.column_type(&[MISSING_CELL]), "text");
        assert!(!is_numeral("nan"));
        assert!(!is_numeral("inf"));
    }

    #[test]
    fn annotate_fills_types() {
        let table = validate_table(s(&["n", "d", "t"]), vec![s(&["1", "2020-01-01", "a"])]).unwrap();
        let typed = annotate_column_types(&table, &ReferenceTyper::default());
        assert_eq!(typed.column_types().unwrap(), &s(&["number", "date", "text"]));
    }

    #[test]
    fn unified_templates() {
        let nl = people(Context::nl("who is oldest").unwrap());
        assert_eq!(
            linearize(&nl, LinearizeOptions::default()),
            "<context> <text_NL> who is oldest <header> name | age <row> 0 alice | 30"
        );
        let missing = people(Context::missing());
        assert_eq!(
            linearize(&missing, LinearizeOptions::default()),
            "<context> <missing_context> <header> name | age <row> 0 alice | 30"
        );
        let sql = people(Context::sql("select name").unwrap());
        assert!(linearize(&sql, LinearizeOptions::default()).starts_with("<context> <text_SQL> select name <header>"));
    }

    #[test]
    fn rf_format_has_no_special_tokens() {
        let nl = people(Context::nl("who is oldest").unwrap());
        let rf = linearize(&nl, LinearizeOptions::mode(SerializeMode::Rf));
        assert_eq!(rf, "who is oldest , name , age , alice , 30");
        let reg = SpecialTokenRegistry::default();
        assert!(rf.split(' ').all(|w| !reg.contains(w)));
        let table = validate_table(s(&["a", ""]), vec![s(&["", "x"])]).unwrap();
        let ex = Example::new("t:1", table, Context::missing(), "test");
        assert_eq!(linearize(&ex, LinearizeOptions::mode(SerializeMode::Rf)), "nan , a , nan , nan , x");
    }

    #[test]
    fn placeholders_and_types() {
        let table = validate_table(s(&["a", ""]), vec![s(&["1"])]).unwrap();
        let typed = annotate_column_types(&table, &ReferenceTyper::default());
        let ex = Example::new("t:2", typed, Context::missing(), "test");
        let opts = LinearizeOptions { include_types: true, ..Default::default() };
        assert_eq!(
            linearize(&ex, opts),
            "<context> <missing_context> <header> a:number | <missing_column> <row> 0 1 | <missing_cell>"
        );
        let tagged = LinearizeOptions { task_tag: Some(NL_COMPLETION), ..Default::default() };
        assert!(linearize(&ex, tagged).starts_with("<NL_completion> <context>"));
    }

    #[test]
    fn decoder_prefixes() {
        assert_eq!(render_decoder_prefix(Objective::Denoise, true).unwrap(), "<denoising>");
        assert_eq!(render_decoder_prefix(Objective::NlCompletion, true).unwrap(), "<NL_completion>");
        assert_eq!(render_decoder_prefix(Objective::SqlGeneration, true).unwrap(), "<SQL_generation>");
        assert_eq!(render_decoder_prefix(Objective::SqlGeneration, false).unwrap(), "<NL_generation>");
        assert!(render_decoder_prefix(Objective::Supervised, true).is_err());
    }

    #[test]
    fn parse_back_recovers_structure() {
        let ctx = Context::nl("q1 here").unwrap().with_turns(s(&["q2", "m1 x"])).unwrap();
        let table = validate_table(s(&["a b", "c"]), vec![s(&["1", "2 3"]), s(&["", "4"])]).unwrap();
        let ex = Example::new("t:3", table.clone(), ctx, "test");
        let parsed = parse_unified(&linearize(&ex, LinearizeOptions::default()), false).unwrap();
        assert_eq!(parsed.context_kind, ContextKind::Nl);
        assert_eq!(parsed.context_text, "q1 here");
        assert_eq!(parsed.turns, s(&["q2", "m1 x"]));
        assert_eq!(parsed.headers, table.headers());
        assert_eq!(parsed.rows, table.rows());
        assert!(parse_unified("<header> a", false).is_err());
    }

    #[test]
    fn sentinel_numbering() {
        assert_eq!(sentinel_index("<sentinel_3>"), Some(3));
        assert_eq!(sentinel_index("<extra_id_0>"), Some(1));
        assert_eq!(sentinel_index("<sentinel_0>"), None);
        assert_eq!(sentinel_index("sentinel"), None);
        assert!(is_reserved_word("|"));
        assert!(is_reserved_word("<sentinel_77>"));
        assert!(!is_reserved_word("alice"));
    }
}
