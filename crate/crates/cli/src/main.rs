use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use sloth_core::corpus::{self, CorpusConfig};
use sloth_core::engine::{ResultPayload, MAX_LIMIT};
use sloth_core::eval::{evaluate_recall, synthetic_index};
use sloth_core::{
    build_indexes, load_manifest, persist, ColorMaskSet, DisplayMode, FusionWeights, LshConfig,
    ObjectMaskSet, QueryRequest, SearchEngine,
};
use tracing_subscriber::EnvFilter;

/// Keyframe search over text annotations and color/object sketches.
#[derive(Parser)]
#[command(name = "sloth", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an index directory from a manifest and its images.
    Index {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Serve the HTTP API over an index directory.
    Serve {
        #[arg(long, env = "SLOTH_INDEX_DIR")]
        index: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
    /// Run one query and print results as JSON lines.
    Query(QueryArgs),
    /// Measure LSH recall against an exhaustive scan.
    Eval(EvalArgs),
    /// Write a synthetic corpus: images, manifest and ground truth.
    GenCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        videos: usize,
        #[arg(long)]
        frames_per_video: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Flat,
    Grouped,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    text: Option<String>,
    /// File holding the raw 256-byte color mask set.
    #[arg(long)]
    color_mask: Option<PathBuf>,
    /// File holding the raw 320-byte object mask set.
    #[arg(long)]
    object_mask: Option<PathBuf>,
    /// Text, color and object weights.
    #[arg(long, default_value = "1,1,1", value_parser = parse_weights)]
    weights: FusionWeights,
    #[arg(long, value_enum, default_value = "flat")]
    mode: Mode,
    #[arg(long, default_value_t = 100)]
    limit: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Modality {
    Color,
    Object,
}

#[derive(Args)]
struct EvalArgs {
    /// Index directory to sample queries from.
    #[arg(
        long,
        required_unless_present = "synthetic",
        conflicts_with = "synthetic"
    )]
    index: Option<PathBuf>,
    /// Evaluate on N random 2048-bit vectors at 5% density instead.
    #[arg(long)]
    synthetic: Option<usize>,
    #[arg(long, value_enum, default_value = "color")]
    modality: Modality,
    #[arg(long, default_value_t = 100)]
    queries: usize,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_weights(s: &str) -> Result<FusionWeights, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [t, c, o] => Ok(FusionWeights::new(t, c, o)),
        _ => Err(format!(
            "expected three comma-separated weights, got {}",
            parts.len()
        )),
    }
}

fn index(manifest: &Path, images: &Path, out: &Path, seed: u64) -> Result<()> {
    let started = Instant::now();
    let manifest = load_manifest(manifest)
        .with_context(|| format!("loading manifest {}", manifest.display()))?;
    let (set, report) = build_indexes(&manifest, images, seed)?;
    persist::persist(&set, out).with_context(|| format!("writing {}", out.display()))?;
    for (id, reason) in &report.skipped {
        eprintln!("skipped {id}: {reason}");
    }
    println!(
        "indexed={} skipped={}",
        report.indexed,
        report.skipped.len()
    );
    eprintln!("elapsed={:.3}s", started.elapsed().as_secs_f64());
    Ok(())
}

fn read_mask<T>(path: &Path, decode: impl Fn(&[u8]) -> sloth_core::Result<T>) -> Result<T, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    decode(&bytes).map_err(|e| format!("{}: {e}", path.display()))
}

fn query(args: QueryArgs) -> Result<ExitCode> {
    let engine = SearchEngine::open(&args.index)
        .with_context(|| format!("opening index {}", args.index.display()))?;

    let invalid = |msg: String| {
        eprintln!("invalid query: {msg}");
        Ok(ExitCode::from(2))
    };
    let mut req = QueryRequest {
        text: args.text,
        weights: args.weights,
        mode: match args.mode {
            Mode::Flat => DisplayMode::Flat,
            Mode::Grouped => DisplayMode::Grouped,
        },
        limit: args.limit,
        ..QueryRequest::default()
    };
    if let Some(p) = &args.color_mask {
        match read_mask(p, ColorMaskSet::from_bytes) {
            Ok(set) => req = req.with_color(&set),
            Err(e) => return invalid(e),
        }
    }
    if let Some(p) = &args.object_mask {
        match read_mask(p, ObjectMaskSet::from_bytes) {
            Ok(set) => req = req.with_object(&set),
            Err(e) => return invalid(e),
        }
    }

    let resp = match engine.search(&req) {
        Ok(r) => r,
        Err(e) => return invalid(e.to_string()),
    };
    match &resp.payload {
        ResultPayload::Flat { hits } => {
            for h in hits {
                println!("{}", serde_json::to_string(h)?);
            }
        }
        ResultPayload::Grouped { groups } => {
            for g in groups {
                let header = json!({
                    "video_id": g.video_id,
                    "group_score": g.group_score,
                    "hits": g.hits.len(),
                });
                println!("{header}");
                for h in &g.hits {
                    println!("{}", serde_json::to_string(h)?);
                }
            }
        }
    }
    eprintln!(
        "candidates={} timing_ms={:.3}",
        resp.candidate_count, resp.timing_ms
    );
    Ok(ExitCode::SUCCESS)
}

fn eval(args: EvalArgs) -> Result<()> {
    if args.k == 0 || args.k > MAX_LIMIT {
        bail!("--k must be in 1..={MAX_LIMIT}");
    }
    let started = Instant::now();
    let (report, latency) = match (&args.index, args.synthetic) {
        (_, Some(n)) => {
            let index = synthetic_index(n, 0.05, LshConfig::color(args.seed))?;
            eprintln!(
                "built synthetic index in {:.3}s",
                started.elapsed().as_secs_f64()
            );
            evaluate_recall(&index, args.queries, args.k, args.seed)?
        }
        (Some(dir), None) => {
            let set =
                persist::load(dir).with_context(|| format!("opening index {}", dir.display()))?;
            let index = match args.modality {
                Modality::Color => &set.color,
                Modality::Object => &set.object,
            };
            evaluate_recall(index, args.queries, args.k, args.seed)?
        }
        (None, None) => bail!("either --index or --synthetic is required"),
    };
    println!("{}", serde_json::to_string(&report)?);
    eprintln!("{}", serde_json::to_string(&latency)?);
    Ok(())
}

fn gen_corpus(out: &Path, videos: usize, frames: usize, seed: u64) -> Result<()> {
    let corpus = corpus::generate(CorpusConfig::new(videos, frames, seed))?;
    corpus
        .write(out)
        .with_context(|| format!("writing corpus to {}", out.display()))?;
    println!(
        "records={} videos={} manifest={}",
        corpus.frames.len(),
        videos,
        out.join(corpus::MANIFEST_FILE).display()
    );
    Ok(())
}

fn serve(index: &Path, host: IpAddr, port: u16) -> Result<()> {
    let engine =
        SearchEngine::open(index).with_context(|| format!("opening index {}", index.display()))?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(sloth_service::serve(
        Arc::new(engine),
        SocketAddr::new(host, port),
    ))?;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Index {
            manifest,
            images,
            out,
            seed,
        } => index(&manifest, &images, &out, seed)?,
        Command::Serve { index, port, host } => serve(&index, host, port)?,
        Command::Query(args) => return query(args),
        Command::Eval(args) => eval(args)?,
        Command::GenCorpus {
            out,
            videos,
            frames_per_video,
            seed,
        } => gen_corpus(&out, videos, frames_per_video, seed)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default = match cli.command {
        Command::Serve { .. } => "info",
        _ => "warn",
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default)),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
