use std::fs;
use std::io::{self, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use unitab_core::emit::{self, RunManifest};
use unitab_core::ingest::{load_manifest, read_examples, CorpusManifest, IngestError};
use unitab_core::mixture::MixtureError;
use unitab_core::pipeline::{build_pft, build_pretrain, BuildOptions, PipelineError};
use unitab_core::sanitize::sanitize_pipeline;
use unitab_core::{ObjectiveEngine, SerializeMode, SpecialTokenRegistry, WhitespaceTokenizer};

mod inspect;

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_USAGE: u8 = 64;

/// Records sampled per source by `validate`.
const VALIDATE_SAMPLE: usize = 100;

#[derive(Parser)]
#[command(name = "unitab", version, about = "Build seq2seq pretraining records from table corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Unified,
    Rf,
}

impl From<Mode> for SerializeMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Unified => SerializeMode::Unified,
            Mode::Rf => SerializeMode::Rf,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Color {
    Auto,
    Always,
    Never,
}

#[derive(Subcommand)]
enum Command {
    /// Check a manifest and sample records from every source.
    Validate { manifest: PathBuf },
    /// Run ingest, sanitize, objectives and emit.
    BuildPretrain {
        manifest: PathBuf,
        /// Run seed; defaults to the manifest's `seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "unified")]
        mode: Mode,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Output directory; defaults to the manifest's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Tag encoder tokens with their example index.
        #[arg(long)]
        provenance: bool,
    },
    /// Build the prefinetuning mixture.
    BuildPft {
        manifest: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute statistics over a shard directory.
    Stats {
        shard_dir: PathBuf,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pretty-print records from a shard.
    Inspect {
        shard: PathBuf,
        #[arg(long, short, default_value_t = 5)]
        n: usize,
        #[arg(long, value_enum, default_value = "auto")]
        color: Color,
    },
    /// Write the special-token vocabulary file.
    Vocab {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        max_sentinels: usize,
        /// Leave out `<SQL_generation>`.
        #[arg(long)]
        no_sql_generation: bool,
    },
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => EXIT_VALIDATION,
            Failure::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io { .. } => Failure::Runtime(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Ingest(e) => e.into(),
            PipelineError::Mixture(e @ MixtureError::Leakage { .. }) => Failure::Validation(e.to_string()),
            e => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<emit::EmitError> for Failure {
    fn from(e: emit::EmitError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

fn validate(path: &Path) -> Result<(), Failure> {
    let manifest = load_manifest(path)?;
    let mut problems = Vec::new();
    let engine = ObjectiveEngine::new(manifest.objective_config.clone(), SerializeMode::Unified, &WhitespaceTokenizer);
    for source in &manifest.sources {
        let batch = match read_examples(source, Some(VALIDATE_SAMPLE)) {
            Ok(b) => b,
            Err(e) => {
                problems.push(format!("source {}: {e}", source.name));
                continue;
            }
        };
        let mut usable = 0;
        for ex in &batch.examples {
            match sanitize_pipeline(ex, &manifest.sanitize, manifest.seed) {
                Ok(clean) if engine.encode(&clean).is_ok() => usable += 1,
                Ok(_) => warn!("{}: cannot encode", ex.example_id),
                Err(e) => warn!("{e}"),
            }
        }
        for skip in &batch.skipped {
            warn!("{} record {}: {}", skip.source, skip.record_index, skip.reason);
        }
        println!("{}: {usable}/{} sampled records usable", source.name, batch.raw_records());
        if usable == 0 {
            problems.push(format!("source {}: no usable records in the first {VALIDATE_SAMPLE}", source.name));
        }
    }
    if let Some(mixture) = &manifest.mixture {
        for entry in &mixture.entries {
            let missing = !entry.records.exists() || entry.exclude_ids.as_ref().is_some_and(|p| !p.exists());
            if missing {
                problems.push(format!("mixture entry {}: input file not found", entry.name));
            } else {
                println!("{}: {} found", entry.name, entry.records.display());
            }
        }
    }
    if problems.is_empty() {
        println!("manifest ok");
        Ok(())
    } else {
        Err(Failure::Validation(problems.join("\n")))
    }
}

fn report(run: &RunManifest, dir: &Path) {
    println!(
        "wrote {} records in {} shards to {} ({} skipped)",
        run.total_records,
        run.shards.len(),
        dir.display(),
        run.skipped
    );
}

fn out_dir(manifest: &CorpusManifest, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| manifest.output_dir.clone())
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Validate { manifest } => validate(&manifest),
        Command::BuildPretrain { manifest, seed, mode, workers, out, provenance } => {
            if workers == 0 {
                return Err(Failure::Validation("--workers must be at least 1".into()));
            }
            let manifest = load_manifest(&manifest)?;
            let opts = BuildOptions { seed: seed.unwrap_or(manifest.seed), mode: mode.into(), workers, provenance };
            let dir = out_dir(&manifest, out);
            info!("building pretraining shards in {} with {workers} workers", dir.display());
            let run = build_pretrain(&manifest, opts, &WhitespaceTokenizer, Some(&dir))?;
            report(&run, &dir);
            Ok(())
        }
        Command::BuildPft { manifest, seed, out } => {
            let manifest = load_manifest(&manifest)?;
            let dir = out_dir(&manifest, out);
            let run = build_pft(&manifest, seed.unwrap_or(manifest.seed), &WhitespaceTokenizer, Some(&dir))?;
            report(&run, &dir);
            Ok(())
        }
        Command::Stats { shard_dir, out } => {
            let records = emit::read_shards(&shard_dir)?;
            let stats = emit::compute_stats(&records);
            let text = serde_json::to_string_pretty(&stats.to_json()).expect("stats serialize");
            println!("{text}");
            if let Some(path) = out {
                stats.write(&path)?;
            }
            Ok(())
        }
        Command::Inspect { shard, n, color } => {
            let records = emit::read_shard(&shard)?;
            let color = match color {
                Color::Always => true,
                Color::Never => false,
                Color::Auto => io::stdout().is_terminal(),
            };
            let mut stdout = io::stdout().lock();
            for record in records.iter().take(n) {
                inspect::render(&mut stdout, record, color).map_err(|e| io_failure(&shard, e))?;
            }
            stdout.flush().map_err(|e| io_failure(&shard, e))
        }
        Command::Vocab { out, max_sentinels, no_sql_generation } => {
            let registry = SpecialTokenRegistry::new(max_sentinels, !no_sql_generation);
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| io_failure(parent, e))?;
            }
            registry.write_vocab_file(&out).map_err(|e| io_failure(&out, e))?;
            println!("wrote {} tokens to {}", registry.tokens().len(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("UNITAB_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}
