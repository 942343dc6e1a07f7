//! Sharded NDJSON output, run manifests and statistics.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::SkipEntry;
use crate::record::{meta_keys, Objective, Seq2SeqRecord};

pub const SHARD_EXTENSION: &str = "ndrec";
pub const RUN_MANIFEST: &str = "run_manifest.json";
pub const STATS_FILE: &str = "stats.json";
pub const SKIP_REPORT: &str = "skipped.ndjson";

/// Bucket width of the length histograms, in tokens.
pub const HISTOGRAM_BUCKET: usize = 64;

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed record in {path} line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

impl EmitError {
    fn io(path: &Path, source: io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}

pub fn shard_name(index: usize) -> String {
    format!("shard-{index:05}.{SHARD_EXTENSION}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardInfo {
    pub name: String,
    pub count: usize,
    /// Hex SHA-256 of the shard file bytes.
    pub digest: String,
}

struct OpenShard {
    path: PathBuf,
    out: BufWriter<File>,
    hasher: Sha256,
    count: usize,
}

/// Writes records into consecutive shards of at most `shard_size` records.
pub struct ShardWriter {
    dir: PathBuf,
    shard_size: usize,
    current: Option<OpenShard>,
    shards: Vec<ShardInfo>,
    written: Vec<PathBuf>,
}

impl ShardWriter {
    pub fn new(dir: &Path, shard_size: usize) -> Result<Self, EmitError> {
        assert!(shard_size > 0, "shard_size must be positive");
        fs::create_dir_all(dir).map_err(|e| EmitError::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), shard_size, current: None, shards: Vec::new(), written: Vec::new() })
    }

    pub fn write(&mut self, record: &Seq2SeqRecord) -> Result<(), EmitError> {
        if self.current.is_none() {
            let path = self.dir.join(shard_name(self.shards.len()));
            let file = File::create(&path).map_err(|e| EmitError::io(&path, e))?;
            self.written.push(path.clone());
            self.current = Some(OpenShard { path, out: BufWriter::new(file), hasher: Sha256::new(), count: 0 });
        }
        let shard = self.current.as_mut().expect("shard is open");
        let mut line = serde_json::to_vec(record).expect("records serialize");
        line.push(b'\n');
        shard.out.write_all(&line).map_err(|e| EmitError::io(&shard.path, e))?;
        shard.hasher.update(&line);
        shard.count += 1;
        if shard.count == self.shard_size {
            self.close_current()?;
        }
        Ok(())
    }

    fn close_current(&mut self) -> Result<(), EmitError> {
        if let Some(mut shard) = self.current.take() {
            shard.out.flush().map_err(|e| EmitError::io(&shard.path, e))?;
            self.shards.push(ShardInfo {
                name: shard.path.file_name().expect("shard file name").to_string_lossy().into_owned(),
                count: shard.count,
                digest: hex::encode(shard.hasher.finalize()),
            });
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<Vec<ShardInfo>, EmitError> {
        self.close_current()?;
        Ok(std::mem::take(&mut self.shards))
    }

    /// Remove every shard this writer created.
    pub fn abort(mut self) {
        self.current = None;
        for path in &self.written {
            let _ = fs::remove_file(path);
        }
    }
}

/// Write a record stream into shards. On error, shards written so far are
/// removed before the error is returned.
pub fn write_shards<I, E>(records: I, dir: &Path, shard_size: usize) -> Result<Vec<ShardInfo>, E>
where
    I: IntoIterator<Item = Result<Seq2SeqRecord, E>>,
    E: From<EmitError>,
{
    let mut writer = ShardWriter::new(dir, shard_size)?;
    for record in records {
        let result = record.and_then(|r| writer.write(&r).map_err(E::from));
        if let Err(e) = result {
            writer.abort();
            return Err(e);
        }
    }
    match writer.close_current() {
        Ok(()) => Ok(std::mem::take(&mut writer.shards)),
        Err(e) => {
            writer.abort();
            Err(e.into())
        }
    }
}

/// Shard files in `dir`, in shard order.
pub fn list_shards(dir: &Path) -> Result<Vec<PathBuf>, EmitError> {
    let mut shards: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| EmitError::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == SHARD_EXTENSION)
                && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("shard-"))
        })
        .collect();
    shards.sort();
    Ok(shards)
}

pub fn read_shard(path: &Path) -> Result<Vec<Seq2SeqRecord>, EmitError> {
    let file = File::open(path).map_err(|e| EmitError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| EmitError::io(path, e))?;
        let record = serde_json::from_str(&line).map_err(|e| EmitError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Every record of every shard in `dir`, in stream order.
pub fn read_shards(dir: &Path) -> Result<Vec<Seq2SeqRecord>, EmitError> {
    let mut out = Vec::new();
    for path in list_shards(dir)? {
        out.extend(read_shard(&path)?);
    }
    Ok(out)
}

pub fn file_digest(path: &Path) -> Result<String, EmitError> {
    let bytes = fs::read(path).map_err(|e| EmitError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// The structured file written next to the shards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: serde_json::Value,
    pub seed: u64,
    pub mode: String,
    pub shards: Vec<ShardInfo>,
    pub total_records: usize,
    pub skipped: usize,
    pub stats_path: String,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<(), EmitError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(path, text).map_err(|e| EmitError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, EmitError> {
        let text = fs::read_to_string(path).map_err(|e| EmitError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| EmitError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })
    }

    /// Shards whose recomputed digest differs from the recorded one.
    pub fn verify(&self, dir: &Path) -> Result<Vec<String>, EmitError> {
        let mut bad = Vec::new();
        for shard in &self.shards {
            if file_digest(&dir.join(&shard.name))? != shard.digest {
                bad.push(shard.name.clone());
            }
        }
        Ok(bad)
    }
}

/// Masked and total counts for one region.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RateCounter {
    pub masked: u64,
    pub total: u64,
}

impl RateCounter {
    fn add(&mut self, masked: u64, total: u64) {
        self.masked += masked;
        self.total += total;
    }

    fn merge(&mut self, other: &Self) {
        self.add(other.masked, other.total);
    }

    pub fn rate(&self) -> Option<f64> {
        (self.total > 0).then(|| self.masked as f64 / self.total as f64)
    }
}

/// Mergeable accumulator over a record stream.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub total_examples: u64,
    pub emitted: u64,
    pub skipped: u64,
    pub per_objective: BTreeMap<String, u64>,
    pub per_source: BTreeMap<String, u64>,
    pub per_branch: BTreeMap<String, u64>,
    /// Cell tokens, over denoise records where cell masking ran.
    pub cell_mask: RateCounter,
    /// Context tokens, over denoise records with text.
    pub context_mask: RateCounter,
    /// Whole headers masked, over all denoise records.
    pub header_mask: RateCounter,
    pub table_only_denoise: u64,
    pub mcp_only: u64,
    pub truncated: u64,
    /// Bucket start (multiple of the bucket width) to record count.
    pub encoder_len_histogram: BTreeMap<usize, u64>,
    pub decoder_len_histogram: BTreeMap<usize, u64>,
}

impl StatsReport {
    pub fn observe(&mut self, record: &Seq2SeqRecord) {
        self.total_examples += 1;
        self.emitted += 1;
        *self.per_objective.entry(record.objective.as_str().to_string()).or_default() += 1;
        if let Some(source) = record.meta_str(meta_keys::SOURCE) {
            *self.per_source.entry(source.to_string()).or_default() += 1;
        }
        if let Some(branch) = record.meta_str(meta_keys::BRANCH) {
            *self.per_branch.entry(branch.to_string()).or_default() += 1;
        }
        if record.meta.get(meta_keys::TRUNCATED).and_then(|v| v.as_bool()) == Some(true) {
            self.truncated += 1;
        }
        let enc = record.meta_u64(meta_keys::ENCODER_LEN).map_or(record.encoder_input.len(), |n| n as usize);
        let dec = record.meta_u64(meta_keys::DECODER_LEN).map_or(record.decoder_input.len(), |n| n as usize);
        *self.encoder_len_histogram.entry(enc / HISTOGRAM_BUCKET * HISTOGRAM_BUCKET).or_default() += 1;
        *self.decoder_len_histogram.entry(dec / HISTOGRAM_BUCKET * HISTOGRAM_BUCKET).or_default() += 1;

        if record.objective != Objective::Denoise {
            return;
        }
        let get = |k| record.meta_u64(k).unwrap_or(0);
        let flag = |k| record.meta.get(k).and_then(|v| v.as_bool()).unwrap_or(false);
        let (table_only, mcp_only) = (flag(meta_keys::TABLE_ONLY), flag(meta_keys::MCP_ONLY));
        if table_only {
            self.table_only_denoise += 1;
        }
        if mcp_only {
            self.mcp_only += 1;
        } else {
            self.cell_mask.add(get(meta_keys::CELL_MASKED), get(meta_keys::CELL_TOKENS));
        }
        if !table_only {
            self.context_mask.add(get(meta_keys::CONTEXT_MASKED), get(meta_keys::CONTEXT_TOKENS));
        }
        self.header_mask.add(get(meta_keys::HEADERS_MASKED), get(meta_keys::HEADERS));
    }

    /// Count examples that produced no record.
    pub fn observe_skips(&mut self, skipped: &[SkipEntry]) {
        self.skipped += skipped.len() as u64;
        self.total_examples += skipped.len() as u64;
    }

    pub fn merge(&mut self, other: &StatsReport) {
        self.total_examples += other.total_examples;
        self.emitted += other.emitted;
        self.skipped += other.skipped;
        let add = |into: &mut BTreeMap<String, u64>, from: &BTreeMap<String, u64>| {
            for (k, v) in from {
                *into.entry(k.clone()).or_default() += v;
            }
        };
        add(&mut self.per_objective, &other.per_objective);
        add(&mut self.per_source, &other.per_source);
        add(&mut self.per_branch, &other.per_branch);
        self.cell_mask.merge(&other.cell_mask);
        self.context_mask.merge(&other.context_mask);
        self.header_mask.merge(&other.header_mask);
        self.table_only_denoise += other.table_only_denoise;
        self.mcp_only += other.mcp_only;
        self.truncated += other.truncated;
        for (into, from) in [
            (&mut self.encoder_len_histogram, &other.encoder_len_histogram),
            (&mut self.decoder_len_histogram, &other.decoder_len_histogram),
        ] {
            for (k, v) in from {
                *into.entry(*k).or_default() += v;
            }
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), EmitError> {
        let mut text = serde_json::to_string_pretty(&self.to_json()).expect("stats serialize");
        text.push('\n');
        fs::write(path, text).map_err(|e| EmitError::io(path, e))
    }

    /// The report plus derived rates.
    pub fn to_json(&self) -> serde_json::Value {
        let mut value = serde_json::to_value(self).expect("stats serialize");
        value["rates"] = serde_json::json!({
            "cell_mask": self.cell_mask.rate(),
            "context_mask": self.context_mask.rate(),
            "header_mask": self.header_mask.rate(),
        });
        value
    }
}

pub fn compute_stats<'a>(records: impl IntoIterator<Item = &'a Seq2SeqRecord>) -> StatsReport {
    let mut stats = StatsReport::default();
    for record in records {
        stats.observe(record);
    }
    stats
}
