#![allow(dead_code)]

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unitab_core::{validate_table, Context, ContextKind, Example};

pub const WORDS: &[&str] = &[
    "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "theta", "kappa", "lambda", "sigma", "omega", "river",
    "stone", "city", "north", "south", "red", "blue", "green", "year", "team", "score", "club", "player", "match",
    "season", "goal", "record", "title", "album", "song", "film", "road", "bridge", "tower", "lake",
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn phrase<R: Rng>(rng: &mut R, min: usize, max: usize) -> String {
    let n = rng.random_range(min..=max);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn cell<R: Rng>(rng: &mut R) -> String {
    match rng.random_range(0..10) {
        0..=2 => rng.random_range(0..5000).to_string(),
        3 => phrase(rng, 11, 14),
        _ => phrase(rng, 1, 3),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GenSpec {
    pub rows: (usize, usize),
    pub cols: (usize, usize),
    pub context_words: (usize, usize),
    /// Probability of a SQL context when the context is non-empty.
    pub sql_share: f64,
    pub turn_share: f64,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self { rows: (1, 60), cols: (1, 8), context_words: (0, 60), sql_share: 0.3, turn_share: 0.1 }
    }
}

impl GenSpec {
    pub fn table_only() -> Self {
        Self { context_words: (0, 0), ..Default::default() }
    }

    pub fn with_text() -> Self {
        Self { context_words: (1, 60), ..Default::default() }
    }
}

/// A random example with unique headers and no reserved words.
pub fn example<R: Rng>(rng: &mut R, id: &str, spec: GenSpec) -> Example {
    let cols = rng.random_range(spec.cols.0..=spec.cols.1);
    let rows = rng.random_range(spec.rows.0..=spec.rows.1);
    let headers: Vec<String> = (0..cols).map(|c| format!("{} c{c}", phrase(rng, 0, 2)).trim().to_string()).collect();
    let body: Vec<Vec<String>> = (0..rows).map(|_| (0..cols).map(|_| cell(rng)).collect()).collect();
    let table = validate_table(headers, body).unwrap();
    let words = rng.random_range(spec.context_words.0..=spec.context_words.1);
    let context = if words == 0 {
        Context::missing()
    } else if rng.random_bool(spec.sql_share) {
        let text = format!("select {}", phrase(rng, words.saturating_sub(1), words.saturating_sub(1)));
        Context::new(ContextKind::Sql, text.trim().to_string(), Vec::new()).unwrap()
    } else {
        let text = phrase(rng, words, words);
        let turns = if rng.random_bool(spec.turn_share) {
            (0..rng.random_range(1..=3)).map(|_| phrase(rng, 1, 8)).collect()
        } else {
            Vec::new()
        };
        Context::new(ContextKind::Nl, text, turns).unwrap()
    };
    Example::new(id, table, context, "synthetic")
}

pub fn examples(seed: u64, n: usize, spec: GenSpec) -> Vec<Example> {
    let mut rng = rng(seed);
    (0..n).map(|i| example(&mut rng, &format!("synthetic:{i}"), spec)).collect()
}

/// Write `examples` as a canonical NDJSON corpus.
pub fn write_corpus(path: &Path, examples: &[Example]) {
    let mut f = fs::File::create(path).unwrap();
    for ex in examples {
        let mut value = serde_json::json!({
            "headers": ex.table.headers(),
            "rows": ex.table.rows(),
        });
        if !ex.context.is_missing() {
            let kind = match ex.context.kind() {
                ContextKind::Sql => "sql",
                _ => "nl",
            };
            value["context"] =
                serde_json::json!({"kind": kind, "text": ex.context.text(), "turns": ex.context.turns()});
        }
        writeln!(f, "{value}").unwrap();
    }
}

/// A TOML manifest with one canonical source.
pub fn write_manifest(dir: &Path, corpus: &Path, shard_size: usize) -> std::path::PathBuf {
    let path = dir.join("manifest.toml");
    fs::write(
        &path,
        format!(
            "output_dir = \"out\"\nshard_size = {shard_size}\n\n[[sources]]\nname = \"synthetic\"\npath = {:?}\nformat = \"canonical\"\ncategory = \"table_text\"\n",
            corpus.display().to_string()
        ),
    )
    .unwrap();
    path
}
