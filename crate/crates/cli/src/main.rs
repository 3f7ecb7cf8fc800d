use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use qchaos_cli::pipeline::output_root;
use qchaos_cli::{Pipeline, PipelineError, RunConfig, Stage};

/// Quantum-action fit and classical versus quantum chaos statistics for coupled quartic oscillators.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Stage::All)]
    stage: Stage,

    /// Overrides `dynamics.seed`.
    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads [env: QCHAOS_THREADS; default: available cores].
    #[arg(long)]
    threads: Option<usize>,

    /// Recompute fresh units and accept stale dependencies.
    #[arg(long)]
    force: bool,

    /// Output directory [env: QCHAOS_OUT; default: `output.dir` of the configuration].
    #[arg(long)]
    out: Option<PathBuf>,
}

fn env_threads() -> anyhow::Result<Option<usize>> {
    match std::env::var("QCHAOS_THREADS") {
        Ok(v) => Ok(Some(
            v.parse()
                .map_err(|_| PipelineError::Config(format!("QCHAOS_THREADS must be a positive integer, got `{v}`")))?,
        )),
        Err(_) => Ok(None),
    }
}

fn run(args: Args) -> anyhow::Result<()> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.dynamics.seed = seed;
    }
    let out = args.out.or_else(|| std::env::var_os("QCHAOS_OUT").map(PathBuf::from));
    let root = output_root(&cfg, out.as_deref());

    let threads = match args.threads {
        Some(n) => Some(n),
        None => env_threads()?,
    };
    if threads == Some(0) {
        return Err(PipelineError::Config("thread count must be at least 1".into()).into());
    }
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }

    let pipeline = Pipeline::new(cfg, root, args.force)?;
    log::info!("stage {} into {}", args.stage, pipeline.root.display());
    pipeline.run(args.stage)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            log::error!("{err:#}");
            let code = err.downcast_ref::<PipelineError>().map_or(2, PipelineError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
