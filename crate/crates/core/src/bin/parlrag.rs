use std::error::Error;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use parlrag::enrich::enrich_corpus;
use parlrag::feedback;
use parlrag::index::{embed_text, index_corpus, IndexOptions, SearchFilter, VectorIndex};
use parlrag::ingest::{chunk_turns, parse_corpus};
use parlrag::service::{self, AppState};
use parlrag::store::{integrity_check, DataDir};
use parlrag::Config;

type BoxError = Box<dyn Error + Send + Sync>;

#[derive(Parser)]
#[command(name = "parlrag", version, about = "Staged question answering over debate transcripts")]
struct Cli {
    /// TOML configuration; built-in offline defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataDirArg {
    #[arg(long)]
    data_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a JSONL transcript corpus and chunk it into a data directory.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        dir: DataDirArg,
        #[arg(long)]
        max_chunk_chars: Option<usize>,
        /// Replace an existing corpus, discarding its enrichments and index.
        #[arg(long)]
        force: bool,
    },
    /// Summarize and tag every chunk not yet enriched.
    Enrich {
        #[command(flatten)]
        dir: DataDirArg,
        /// Backend section of the config file.
        #[arg(long, default_value = "generation")]
        backend: String,
        #[arg(long)]
        concurrency: Option<usize>,
    },
    /// Embed enriched chunks into the vector index.
    Index {
        #[command(flatten)]
        dir: DataDirArg,
        #[arg(long, default_value = "embedding")]
        backend: String,
        /// Vector length; sets the hashing embedder's dimension and rejects
        /// remote models that disagree.
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Rank indexed chunks for a query.
    Search {
        #[command(flatten)]
        dir: DataDirArg,
        #[arg(long)]
        query: String,
        #[arg(short)]
        k: Option<usize>,
        #[arg(long)]
        politician: Option<String>,
        #[arg(long)]
        party: Option<String>,
        #[arg(long)]
        topic: Option<String>,
    },
    /// Feedback log operations.
    Feedback {
        #[command(subcommand)]
        command: FeedbackCommand,
    },
    /// Serve the HTTP API.
    Serve {
        #[command(flatten)]
        dir: DataDirArg,
    },
    /// Verify referential integrity of a data directory.
    Check {
        #[command(flatten)]
        dir: DataDirArg,
    },
}

#[derive(Subcommand)]
enum FeedbackCommand {
    /// Print events as JSONL.
    Export {
        #[command(flatten)]
        dir: DataDirArg,
        /// Only events at or after this RFC 3339 timestamp.
        #[arg(long)]
        since: Option<DateTime<Utc>>,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<Config, BoxError> {
    Ok(match path {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    })
}

fn runtime() -> Result<tokio::runtime::Runtime, BoxError> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn print_json(value: &impl serde::Serialize) -> Result<(), BoxError> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn open_or_create(path: &Path) -> Result<DataDir, BoxError> {
    Ok(if path.join(parlrag::store::MANIFEST_FILE).exists() {
        DataDir::open(path)?
    } else {
        DataDir::create(path)?
    })
}

fn run(cli: Cli) -> Result<ExitCode, BoxError> {
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest {
            corpus,
            dir,
            max_chunk_chars,
            force,
        } => {
            let max = max_chunk_chars.unwrap_or(config.chunking.max_chunk_chars);
            if max < parlrag::ingest::MIN_MAX_CHUNK_CHARS {
                return Err(format!(
                    "--max-chunk-chars must be at least {}",
                    parlrag::ingest::MIN_MAX_CHUNK_CHARS
                )
                .into());
            }
            let parsed = parse_corpus(&corpus)?;
            let chunks = chunk_turns(&parsed.turns, max);
            let data = open_or_create(&dir.data_dir)?;
            data.write_corpus(&parsed.documents, &parsed.turns, &chunks, force)?;
            print_json(&serde_json::json!({
                "documents": parsed.documents.len(),
                "turns": parsed.turns.len(),
                "chunks": chunks.len(),
            }))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Enrich {
            dir,
            backend,
            concurrency,
        } => {
            let data = DataDir::open(&dir.data_dir)?;
            let corpus = data.load_corpus()?;
            let mut store = data.enrichments()?;
            let generator = config.generation_backend(&backend)?;
            let options = config.enrich_options(&backend)?;
            let limit = concurrency.unwrap_or(config.enrichment.concurrency);
            if limit == 0 {
                return Err("--concurrency must be positive".into());
            }
            let report = runtime()?.block_on(enrich_corpus(
                &corpus,
                corpus.chunks(),
                &mut store,
                generator.as_ref(),
                limit,
                &options,
            ))?;
            print_json(&report)?;
            // Partial failure: successes are stored, a rerun retries the rest.
            Ok(if report.failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Index { dir, backend, dim } => {
            let data = DataDir::open(&dir.data_dir)?;
            let corpus = data.load_corpus()?;
            let store = data.enrichments()?;
            let embedder = config.embedding_backend(&backend, dim)?;
            let options = IndexOptions {
                retrieval_text: config.retrieval.retrieval_text,
                prompt_version: config.enrichment.prompt_version.clone(),
                expected_dim: dim,
                retry: config.backend(&backend)?.retry_policy(),
                ..IndexOptions::default()
            };
            let report = runtime()?.block_on(index_corpus(&data, &corpus, &store, embedder.as_ref(), &options))?;
            print_json(&report)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Search {
            dir,
            query,
            k,
            politician,
            party,
            topic,
        } => {
            let data = DataDir::open(&dir.data_dir)?;
            let manifest = data.manifest()?;
            let corpus = data.load_corpus()?;
            let enrichments = data.enrichments()?.for_version(&manifest.prompt_version);
            let index = VectorIndex::load(&data, &corpus, &enrichments)?;
            let embedder = config.embedding_backend(&config.retrieval.embedding_backend, Some(index.dim()).filter(|&d| d > 0))?;
            if !index.is_empty() && embedder.model() != index.model() {
                return Err(format!(
                    "index was built with {:?} but the configured embedding backend is {:?}",
                    index.model(),
                    embedder.model()
                )
                .into());
            }
            let filter = SearchFilter {
                politician,
                party,
                topic,
                ..SearchFilter::default()
            };
            let vector = runtime()?.block_on(embed_text(&query, embedder.as_ref(), Some(index.dim())))?;
            let hits = index.search(&vector, k.unwrap_or(config.retrieval.k), &filter)?;
            let mut out = std::io::stdout().lock();
            for hit in hits {
                let summary = enrichments.get(&hit.chunk_id).map(|e| e.short_summary.as_str()).unwrap_or("");
                writeln!(out, "{}\t{:.6}\t{}\t{}", hit.rank, hit.score, hit.chunk_id, summary)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Feedback {
            command: FeedbackCommand::Export { dir, since },
        } => {
            DataDir::open(&dir.data_dir)?;
            let mut out = std::io::stdout().lock();
            for event in feedback::export(&dir.data_dir, since)? {
                serde_json::to_writer(&mut out, &event)?;
                writeln!(out)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve { dir } => {
            let state = match AppState::open(&dir.data_dir, &config) {
                Ok(state) => state,
                Err(err) => {
                    tracing::error!(error = %err, "data directory not servable; every endpoint will answer 500");
                    AppState::unavailable(err.to_string())
                }
            };
            runtime()?.block_on(service::serve(state, &config.server, async {
                let _ = tokio::signal::ctrl_c().await;
            }))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { dir } => {
            let report = integrity_check(&dir.data_dir);
            print_json(&report)?;
            Ok(if report.ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}
