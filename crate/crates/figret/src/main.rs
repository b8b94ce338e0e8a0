//! Command-line entry point wiring the full alignment loop.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use figret::corpus::{generate_synthetic, GenProfile};
use figret::error::Error;
use figret::evaluation;
use figret::pipeline::{Pipeline, PipelineConfig, Stage, TeacherKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TeacherArg {
    Mock,
    Http,
}

#[derive(Parser, Debug)]
#[command(
    name = "figret",
    version,
    about = "Teacher-guided alignment training for a small dense retriever",
    disable_help_subcommand = true
)]
struct Cli {
    /// JSON config file; command-line flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed for corpus generation, model init, and sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Run directory holding all pipeline artifacts.
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,

    /// Teacher backend.
    #[arg(long, global = true, value_enum)]
    teacher: Option<TeacherArg>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus with exact ground truth.
    GenCorpus {
        /// Output directory for units.jsonl, documents.jsonl, queries.jsonl.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        units: usize,
        #[arg(long, default_value_t = 2_000)]
        docs: usize,
        #[arg(long, default_value_t = 500)]
        queries: usize,
        /// JSON file overriding generation-profile fields.
        #[arg(long)]
        profile: Option<PathBuf>,
    },
    /// Initialize a run (if needed) and fill the sample pool.
    Collect {
        /// Corpus directory (required the first time).
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        pool_size: Option<usize>,
    },
    /// Score the pool with the teacher.
    Score,
    /// Select hard samples and construct guidance triplets.
    Construct,
    /// One curriculum-ordered training pass over the triplet store.
    Train,
    /// Re-evaluate selected samples; promote exemplars, flag regressions.
    Assess,
    /// Compare the trained encoder against the initial snapshot.
    Eval,
    /// Summarize a run directory as text plus report.json.
    Report,
    /// Run the full loop: all stages for every iteration, then eval.
    Run {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version exit 0; any usage problem exits 1
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn require_run_dir(cli: &Cli) -> Result<PathBuf, Error> {
    cli.run_dir
        .clone()
        .ok_or_else(|| Error::Config("--run-dir is required for this command".into()))
}

/// Resolve the pipeline config: file (if given), then flag overrides.
fn resolve_config(cli: &Cli, pool_size: Option<usize>, iterations: Option<usize>) -> Result<PipelineConfig, Error> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text)?
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(teacher) = cli.teacher {
        config.teacher = match teacher {
            TeacherArg::Mock => TeacherKind::Mock,
            TeacherArg::Http => TeacherKind::Http,
        };
    }
    if let Some(p) = pool_size {
        config.pool_size = p;
    }
    if let Some(i) = iterations {
        config.iterations = i;
    }
    Ok(config)
}

/// Open an initialized run, or initialize one when a corpus is provided.
fn open_or_init(
    cli: &Cli,
    corpus: Option<&PathBuf>,
    pool_size: Option<usize>,
    iterations: Option<usize>,
) -> Result<Pipeline, Error> {
    let run_dir = require_run_dir(cli)?;
    if run_dir.join("state.json").exists() {
        return Pipeline::open(&run_dir);
    }
    let corpus_dir = corpus.ok_or_else(|| {
        Error::Precondition(
            "run directory is not initialized; run `collect --corpus <dir>` first".into(),
        )
    })?;
    let config = resolve_config(cli, pool_size, iterations)?;
    Pipeline::init(&run_dir, corpus_dir, config)
}

fn stage_order(stage: Stage) -> u8 {
    match stage {
        Stage::Collect => 0,
        Stage::Score => 1,
        Stage::Construct => 2,
        Stage::Train => 3,
        Stage::Assess => 4,
        Stage::Done => 5,
    }
}

/// Run one named stage re-entrantly: execute it when due, no-op when already
/// done, and fail with a stage-order message when earlier stages are missing.
fn run_single_stage(pipeline: &mut Pipeline, requested: Stage) -> Result<(), Error> {
    let current = pipeline.state().stage;
    if current == Stage::Done {
        println!("run is complete; `{requested}` has nothing to do");
        return Ok(());
    }
    if stage_order(requested) < stage_order(current) {
        println!(
            "stage `{requested}` already completed for iteration {}; nothing to do",
            pipeline.state().iteration
        );
        return Ok(());
    }
    if stage_order(requested) > stage_order(current) {
        return Err(Error::Precondition(format!(
            "cannot run `{requested}` yet: stage `{current}` of iteration {} is pending",
            pipeline.state().iteration
        )));
    }
    let iteration = pipeline.state().iteration;
    pipeline.run_stage()?;
    println!("completed stage `{requested}` of iteration {iteration}");
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match &cli.command {
        Command::GenCorpus {
            out,
            units,
            docs,
            queries,
            profile,
        } => {
            let seed = cli.seed.unwrap_or(7);
            let profile: GenProfile = match profile {
                Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
                None => GenProfile::default(),
            };
            let corpus = generate_synthetic(seed, *units, *docs, *queries, &profile)?;
            corpus.write_jsonl(out)?;
            println!(
                "wrote corpus to {}: {} units, {} documents, {} queries (seed {seed})",
                out.display(),
                corpus.units.len(),
                corpus.documents.len(),
                corpus.queries.len()
            );
            Ok(())
        }
        Command::Collect { corpus, pool_size } => {
            let mut pipeline = open_or_init(&cli, corpus.as_ref(), *pool_size, None)?;
            run_single_stage(&mut pipeline, Stage::Collect)
        }
        Command::Score => {
            let mut pipeline = open_or_init(&cli, None, None, None)?;
            run_single_stage(&mut pipeline, Stage::Score)
        }
        Command::Construct => {
            let mut pipeline = open_or_init(&cli, None, None, None)?;
            run_single_stage(&mut pipeline, Stage::Construct)
        }
        Command::Train => {
            let mut pipeline = open_or_init(&cli, None, None, None)?;
            run_single_stage(&mut pipeline, Stage::Train)
        }
        Command::Assess => {
            let mut pipeline = open_or_init(&cli, None, None, None)?;
            run_single_stage(&mut pipeline, Stage::Assess)
        }
        Command::Eval => {
            let pipeline = open_or_init(&cli, None, None, None)?;
            let summary = pipeline.evaluate()?;
            println!(
                "alignment NDCG@{}: initial {:.4} -> current {:.4} ({:+.4})",
                pipeline.config().top_k,
                summary.alignment_initial,
                summary.alignment_final,
                summary.alignment_final - summary.alignment_initial
            );
            println!(
                "changed top-1 on {} of {} held-out queries",
                summary.winrates.changed,
                pipeline.config().holdout_queries
            );
            for (name, wtl) in [
                ("relevance", summary.winrates.relevance),
                ("comprehensiveness", summary.winrates.comprehensiveness),
                ("purity", summary.winrates.purity),
            ] {
                println!("  {name:<18} win {:>4}  tie {:>4}  loss {:>4}", wtl.win, wtl.tie, wtl.loss);
            }
            Ok(())
        }
        Command::Report => {
            let run_dir = require_run_dir(&cli)?;
            let report = evaluation::build_report(&run_dir)?;
            let json = serde_json::to_string_pretty(&report)?;
            std::fs::write(run_dir.join("report.json"), format!("{json}\n"))?;
            print!("{}", report.to_text());
            Ok(())
        }
        Command::Run { corpus, iterations } => {
            let mut pipeline = open_or_init(&cli, corpus.as_ref(), None, *iterations)?;
            while pipeline.state().stage != Stage::Done {
                let iteration = pipeline.state().iteration;
                let stage = pipeline.run_stage()?;
                println!("iteration {iteration}: finished `{stage}`");
            }
            let summary = pipeline.evaluate()?;
            println!(
                "alignment NDCG@{}: initial {:.4} -> final {:.4} ({:+.4})",
                pipeline.config().top_k,
                summary.alignment_initial,
                summary.alignment_final,
                summary.alignment_final - summary.alignment_initial
            );
            Ok(())
        }
    }
}
