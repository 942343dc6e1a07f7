//! End-to-end builds: ingest, sanitize, objectives, emit.
//!
//! Examples are processed in fixed-size chunks on a dedicated worker pool.
//! Each example's output depends only on `(seed, example_id)`, and chunk
//! results are collected in input order, so the record stream is the same
//! for any worker count.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::emit::{self, EmitError, RunManifest, ShardInfo, StatsReport};
use crate::ingest::{read_examples, write_skip_report, CorpusManifest, IngestError, SkipEntry};
use crate::mixture::{build_mixture, sample_indices, MixtureError};
use crate::objectives::{ObjectiveEngine, ObjectiveError};
use crate::record::Seq2SeqRecord;
use crate::rng::{self, stage, ExampleStreams};
use crate::sanitize::{sanitize_pipeline, SanitizeConfig};
use crate::serialize::{linearize, LinearizeOptions, SerializeMode};
use crate::table::{Example, ObjectiveConfig};
use crate::tokenize::TokenizerPort;

/// Examples handed to the pool at a time.
pub const CHUNK_SIZE: usize = 512;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Emit(#[from] EmitError),
    #[error(transparent)]
    Mixture(#[from] MixtureError),
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildOptions {
    pub seed: u64,
    pub mode: SerializeMode,
    pub workers: usize,
    /// Tag encoder tokens with their example's stream index.
    pub provenance: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { seed: 0, mode: SerializeMode::Unified, workers: 1, provenance: false }
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build().map_err(|e| PipelineError::Pool(e.to_string()))
}

/// Read all sources in manifest order and apply their proportions.
///
/// A proportion above 100 keeps every example and repeats a seeded sample
/// of the remainder; repeats get `:r1`, `:r2`, ... appended to their id so
/// every example keeps its own random streams.
pub fn load_examples(manifest: &CorpusManifest, seed: u64) -> Result<(Vec<Example>, Vec<SkipEntry>), IngestError> {
    let mut examples = Vec::new();
    let mut skipped = Vec::new();
    for source in &manifest.sources {
        let batch = read_examples(source, None)?;
        skipped.extend(batch.skipped);
        if source.proportion == 100.0 {
            examples.extend(batch.examples);
            continue;
        }
        let mut rng = rng::stream(seed, &source.name, stage::PROPORTION);
        let mut seen = vec![0usize; batch.examples.len()];
        for i in sample_indices(source.proportion, batch.examples.len(), &mut rng) {
            let mut ex = batch.examples[i].clone();
            if seen[i] > 0 {
                ex.example_id = format!("{}:r{}", ex.example_id, seen[i]);
            }
            seen[i] += 1;
            examples.push(ex);
        }
    }
    Ok((examples, skipped))
}

/// A pretraining run over one manifest.
pub struct PretrainPipeline<'t> {
    manifest: CorpusManifest,
    opts: BuildOptions,
    engine: ObjectiveEngine<'t>,
    pool: rayon::ThreadPool,
}

impl<'t> PretrainPipeline<'t> {
    pub fn new(
        manifest: CorpusManifest,
        opts: BuildOptions,
        tokenizer: &'t dyn TokenizerPort,
    ) -> Result<Self, PipelineError> {
        let cfg = ObjectiveConfig { global_seed: opts.seed, ..manifest.objective_config.clone() };
        Ok(Self { engine: ObjectiveEngine::new(cfg, opts.mode, tokenizer), pool: pool(opts.workers)?, manifest, opts })
    }

    pub fn manifest(&self) -> &CorpusManifest {
        &self.manifest
    }

    pub fn objective_config(&self) -> &ObjectiveConfig {
        &self.engine.cfg
    }

    fn process(&self, index: usize, example: &Example) -> Result<Seq2SeqRecord, SkipEntry> {
        let skip = |reason: String| SkipEntry {
            source: example.source.clone(),
            record_index: index,
            reason: format!("{}: {reason}", example.example_id),
        };
        let clean = sanitize_pipeline(example, &self.manifest.sanitize, self.opts.seed)
            .map_err(|e| skip(e.error.to_string()))?;
        let tag = self.opts.provenance.then_some(index as u32);
        self.engine.mix_tagged(&clean, tag).map_err(|e| skip(e.reason))
    }

    /// Stream records in example order. Skipped examples are collected on
    /// the returned iterator.
    pub fn records(&self) -> Result<RecordStream<'_, 't>, PipelineError> {
        let (examples, skipped) = load_examples(&self.manifest, self.opts.seed)?;
        Ok(RecordStream { pipeline: self, examples, next: 0, buffer: VecDeque::new(), skipped })
    }
}

/// Iterator over a pipeline's records. Work happens one chunk at a time.
pub struct RecordStream<'p, 't> {
    pipeline: &'p PretrainPipeline<'t>,
    examples: Vec<Example>,
    next: usize,
    buffer: VecDeque<Seq2SeqRecord>,
    skipped: Vec<SkipEntry>,
}

impl RecordStream<'_, '_> {
    /// Ingest failures plus examples that produced no record so far.
    pub fn skipped(&self) -> &[SkipEntry] {
        &self.skipped
    }

    /// Number of examples read, including ones that will be skipped.
    pub fn example_count(&self) -> usize {
        self.examples.len()
    }

    fn fill(&mut self) {
        let start = self.next;
        let end = (start + CHUNK_SIZE).min(self.examples.len());
        let pipeline = self.pipeline;
        let chunk = &self.examples[start..end];
        let results: Vec<_> = pipeline
            .pool
            .install(|| chunk.par_iter().enumerate().map(|(i, ex)| pipeline.process(start + i, ex)).collect());
        for result in results {
            match result {
                Ok(record) => self.buffer.push_back(record),
                Err(skip) => self.skipped.push(skip),
            }
        }
        self.next = end;
    }
}

impl Iterator for RecordStream<'_, '_> {
    type Item = Seq2SeqRecord;

    fn next(&mut self) -> Option<Seq2SeqRecord> {
        while self.buffer.is_empty() && self.next < self.examples.len() {
            self.fill();
        }
        self.buffer.pop_front()
    }
}

fn clear_shards(dir: &Path) -> Result<(), EmitError> {
    if dir.exists() {
        for path in emit::list_shards(dir)? {
            fs::remove_file(&path).map_err(|source| EmitError::Io { path, source })?;
        }
    }
    Ok(())
}

fn config_snapshot(manifest: &CorpusManifest, objective_config: &ObjectiveConfig) -> serde_json::Value {
    let mut value = serde_json::to_value(manifest).expect("manifest serializes");
    let obj = value.as_object_mut().expect("manifest is an object");
    obj.remove("output_dir");
    obj.insert("objective_config".into(), serde_json::to_value(objective_config).expect("config serializes"));
    value
}

fn finish_run(
    dir: &Path,
    shards: Vec<ShardInfo>,
    mut stats: StatsReport,
    skipped: &[SkipEntry],
    config: serde_json::Value,
    seed: u64,
    mode: &str,
) -> Result<RunManifest, PipelineError> {
    stats.observe_skips(skipped);
    stats.write(&dir.join(emit::STATS_FILE))?;
    let skip_path = dir.join(emit::SKIP_REPORT);
    write_skip_report(&skip_path, skipped).map_err(|source| EmitError::Io { path: skip_path, source })?;
    let manifest = RunManifest {
        config,
        seed,
        mode: mode.to_string(),
        total_records: shards.iter().map(|s| s.count).sum(),
        skipped: skipped.len(),
        shards,
        stats_path: emit::STATS_FILE.to_string(),
    };
    manifest.write(&dir.join(emit::RUN_MANIFEST))?;
    Ok(manifest)
}

fn mode_name(mode: SerializeMode) -> &'static str {
    match mode {
        SerializeMode::Unified => "unified",
        SerializeMode::Rf => "rf",
    }
}

/// Run the pretraining build and write shards, stats, skip report and run
/// manifest into `out_dir` (the manifest's `output_dir` when `None`).
pub fn build_pretrain(
    manifest: &CorpusManifest,
    opts: BuildOptions,
    tokenizer: &dyn TokenizerPort,
    out_dir: Option<&Path>,
) -> Result<RunManifest, PipelineError> {
    let dir = out_dir.unwrap_or(&manifest.output_dir).to_path_buf();
    let pipeline = PretrainPipeline::new(manifest.clone(), opts, tokenizer)?;
    clear_shards(&dir)?;
    let mut stream = pipeline.records()?;
    let mut stats = StatsReport::default();
    let shards = emit::write_shards(
        stream.by_ref().map(|r| {
            stats.observe(&r);
            Ok::<_, PipelineError>(r)
        }),
        &dir,
        manifest.shard_size,
    )?;
    let config = config_snapshot(manifest, pipeline.objective_config());
    finish_run(&dir, shards, stats, stream.skipped(), config, opts.seed, mode_name(opts.mode))
}

/// Build the prefinetuning mixture described by the manifest's `mixture`
/// section.
pub fn build_pft(
    manifest: &CorpusManifest,
    seed: u64,
    tokenizer: &dyn TokenizerPort,
    out_dir: Option<&Path>,
) -> Result<RunManifest, PipelineError> {
    let mixture = manifest.mixture.as_ref().ok_or_else(|| IngestError::Validation {
        field: "mixture".into(),
        message: "build-pft needs a [mixture] section".into(),
    })?;
    let dir = out_dir.unwrap_or(&manifest.output_dir).to_path_buf();
    let cfg = ObjectiveConfig { global_seed: seed, ..manifest.objective_config.clone() };
    let built = build_mixture(mixture, &cfg, &manifest.sanitize, seed, tokenizer)?;
    clear_shards(&dir)?;
    let stats = emit::compute_stats(&built.records);
    let shards = emit::write_shards(built.records.into_iter().map(Ok::<_, PipelineError>), &dir, manifest.shard_size)?;
    let config = config_snapshot(manifest, &cfg);
    finish_run(&dir, shards, stats, &built.skipped, config, seed, "unified")
}

/// Per-example operations exposed for interactive use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformOp {
    Sanitize,
    Linearize,
    Denoise,
    Generation,
    Completion,
}

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("unknown transform {0:?}")]
    UnknownOp(String),
    #[error("{0}")]
    Sanitize(String),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

impl FromStr for TransformOp {
    type Err = TransformError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sanitize" => Ok(Self::Sanitize),
            "linearize" => Ok(Self::Linearize),
            "denoise" => Ok(Self::Denoise),
            "generation" => Ok(Self::Generation),
            "completion" => Ok(Self::Completion),
            other => Err(TransformError::UnknownOp(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransformOutput {
    Example(Example),
    Text(String),
    Record(Seq2SeqRecord),
}

/// Apply one stage to one example, unpadded. `denoise` uses the example's
/// own streams under `cfg.global_seed`, as the mixer does.
pub fn transform(
    example: &Example,
    op: TransformOp,
    cfg: &ObjectiveConfig,
    sanitize: &SanitizeConfig,
    mode: SerializeMode,
    tokenizer: &dyn TokenizerPort,
) -> Result<TransformOutput, TransformError> {
    let engine = ObjectiveEngine::new(cfg.clone(), mode, tokenizer);
    Ok(match op {
        TransformOp::Sanitize => TransformOutput::Example(
            sanitize_pipeline(example, sanitize, cfg.global_seed)
                .map_err(|e| TransformError::Sanitize(e.to_string()))?,
        ),
        TransformOp::Linearize => TransformOutput::Text(linearize(example, LinearizeOptions::mode(mode))),
        TransformOp::Denoise => {
            let seq = engine.encode(example)?;
            let streams = ExampleStreams::new(cfg.global_seed, &example.example_id);
            TransformOutput::Record(engine.apply_denoise(example, &seq, example.context.is_missing(), streams)?)
        }
        TransformOp::Generation => TransformOutput::Record(engine.make_generation(example)?),
        TransformOp::Completion => TransformOutput::Record(engine.make_completion(example)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{SourceCategory, SourceEntry, SourceFormat};
    use crate::tokenize::WhitespaceTokenizer;
    use std::io::Write;

    fn corpus(dir: &Path, n: usize) -> CorpusManifest {
        let path = dir.join("c.ndjson");
        let mut f = fs::File::create(&path).unwrap();
        for i in 0..n {
            if i % 3 == 0 {
                writeln!(f, r#"{{"headers":["k","v"],"rows":[["a{i}","{i}"],["b","2"]]}}"#).unwrap();
            } else {
                writeln!(
                    f,
                    r#"{{"headers":["k","v"],"rows":[["a{i}","{i}"],["b","2"]],"context":{{"text":"row a{i} has value {i} in col v"}}}}"#
                )
                .unwrap();
            }
        }
        CorpusManifest {
            sources: vec![SourceEntry {
                name: "c".into(),
                path,
                format: SourceFormat::Canonical,
                category: SourceCategory::TableText,
                proportion: 100.0,
            }],
            output_dir: dir.join("out"),
            shard_size: 50,
            seed: 0,
            objective_config: ObjectiveConfig::default(),
            sanitize: SanitizeConfig::default(),
            mixture: None,
        }
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let dir = tempfile::tempdir().unwrap();
        let m = corpus(dir.path(), 1200);
        let run = |workers, seed, sub: &str| {
            let opts = BuildOptions { seed, workers, ..Default::default() };
            build_pretrain(&m, opts, &WhitespaceTokenizer, Some(&dir.path().join(sub))).unwrap()
        };
        let a = run(1, 7, "a");
        let b = run(4, 7, "b");
        let c = run(4, 8, "c");
        assert_eq!(a.shards, b.shards);
        assert_ne!(a.shards, c.shards);
        assert_eq!(a.total_records, 1200);
        assert!(a.verify(&dir.path().join("a")).unwrap().is_empty());
        let back = emit::read_shards(&dir.path().join("a")).unwrap();
        let pipeline =
            PretrainPipeline::new(m.clone(), BuildOptions { seed: 7, ..Default::default() }, &WhitespaceTokenizer)
                .unwrap();
        assert_eq!(back, pipeline.records().unwrap().collect::<Vec<_>>());
    }

    #[test]
    fn proportions_repeat_with_fresh_ids() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = corpus(dir.path(), 10);
        m.sources[0].proportion = 250.0;
        let (examples, _) = load_examples(&m, 3).unwrap();
        assert_eq!(examples.len(), 25);
        let mut ids: Vec<_> = examples.iter().map(|e| e.example_id.clone()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 25);
    }

    #[test]
    fn provenance_tags_each_record_with_one_example() {
        let dir = tempfile::tempdir().unwrap();
        let m = corpus(dir.path(), 30);
        let opts = BuildOptions { provenance: true, ..Default::default() };
        let pipeline = PretrainPipeline::new(m, opts, &WhitespaceTokenizer).unwrap();
        for (i, r) in pipeline.records().unwrap().enumerate() {
            let prov = r.provenance.as_ref().unwrap();
            assert_eq!(prov.len(), r.encoder_input.len());
            let real = r.meta_u64(crate::record::meta_keys::ENCODER_LEN).unwrap() as usize;
            assert!(prov[..real].iter().all(|t| *t == Some(i as u32)));
            assert!(prov[real..].iter().all(Option::is_none));
        }
    }

    #[test]
    fn rerun_replaces_old_shards() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = corpus(dir.path(), 120);
        let out = dir.path().join("o");
        build_pretrain(&m, BuildOptions::default(), &WhitespaceTokenizer, Some(&out)).unwrap();
        assert_eq!(emit::list_shards(&out).unwrap().len(), 3);
        m.shard_size = 200;
        build_pretrain(&m, BuildOptions::default(), &WhitespaceTokenizer, Some(&out)).unwrap();
        assert_eq!(emit::list_shards(&out).unwrap().len(), 1);
    }

    #[test]
    fn transform_ops() {
        let dir = tempfile::tempdir().unwrap();
        let m = corpus(dir.path(), 2);
        let (examples, _) = load_examples(&m, 0).unwrap();
        let run = |op: &str| {
            transform(
                &examples[1],
                op.parse().unwrap(),
                &ObjectiveConfig::default(),
                &SanitizeConfig::default(),
                SerializeMode::Unified,
                &WhitespaceTokenizer,
            )
            .unwrap()
        };
        match run("linearize") {
            TransformOutput::Text(t) => assert!(t.starts_with("<context> <text_NL> row a1")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(run("denoise"), TransformOutput::Record(_)));
        assert!(matches!(run("sanitize"), TransformOutput::Example(_)));
        assert!(matches!("bogus".parse::<TransformOp>(), Err(TransformError::UnknownOp(_))));
    }
}
