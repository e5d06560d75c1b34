//! `dgr` — train, analyze and evaluate desmoothed graph collaborative
//! filtering models from the command line.
//!
//! Exit codes: 0 success, 1 usage/config errors, 2 data errors (I/O,
//! parsing, malformed artifacts), 3 numeric errors (diverged training).

mod commands;
mod run_config;

use clap::{Args, Parser, Subcommand};
use dgr_core::DgrError;

use run_config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "dgr", version, about = "Desmoothed graph collaborative filtering pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CommonOpts {
    /// Run-config file with `key = value` lines.
    #[arg(long)]
    config: Option<std::path::PathBuf>,

    /// Per-key overrides applied after the config file, e.g. `--set lr=0.01`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,

    /// Output directory (overrides the config's `out_dir`).
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

impl CommonOpts {
    fn resolve(&self) -> Result<RunConfig, DgrError> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        config.apply_overrides(&self.sets)?;
        if let Some(out) = &self.out {
            config.out_dir = out.clone();
        }
        Ok(config)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load interactions, split train/test, build and persist the
    /// co-occurrence index, write the load report.
    Prepare {
        #[command(flatten)]
        common: CommonOpts,
        /// Overwrite existing outputs.
        #[arg(long)]
        force: bool,
    },
    /// Train a model and write the best checkpoint plus the history CSV.
    Train {
        #[command(flatten)]
        common: CommonOpts,
        /// Disable the per-layer desmoothing perturbation (ablation).
        #[arg(long)]
        no_gmp: bool,
        /// Disable the local correction loss (ablation).
        #[arg(long)]
        no_lec: bool,
        /// Continue training from a checkpoint's embeddings.
        #[arg(long, value_name = "CKPT")]
        resume: Option<std::path::PathBuf>,
    },
    /// Rank the full catalog and report Recall/NDCG.
    Evaluate {
        #[command(flatten)]
        common: CommonOpts,
        /// Checkpoint to evaluate (default: <out>/checkpoint.ckpt).
        #[arg(long)]
        checkpoint: Option<std::path::PathBuf>,
        /// Also write the top-K recommendations per user.
        #[arg(long)]
        dump_topk: bool,
    },
    /// Over-smoothing diagnostics: steady-state distance curve and mean
    /// pairwise row distance with and without the desmoothing forward.
    Analyze {
        #[command(flatten)]
        common: CommonOpts,
        /// Checkpoint to analyze (default: <out>/checkpoint.ckpt).
        #[arg(long)]
        checkpoint: Option<std::path::PathBuf>,
        /// Analyze seed-fresh random embeddings instead of a checkpoint.
        #[arg(long)]
        random_e0: bool,
        /// Write the per-layer embedding cache in checkpoint format.
        #[arg(long)]
        dump_layer_cache: bool,
        /// Also dump raw per-layer embeddings for these node indices.
        #[arg(long, value_name = "NODES", value_delimiter = ',')]
        nodes: Vec<usize>,
    },
    /// Grid search over a hyperparameter; one training run per point.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
        /// Grid spec: `alpha` (uniform across layers), `alpha@L` (layer L
        /// only), or `lambda=0.05,0.1` / `k1=...` / `k2=...` / `theta=...`.
        #[arg(long)]
        grid: String,
        /// Re-run grid points even when results exist.
        #[arg(long)]
        force: bool,
    },
    /// Generate a synthetic implicit-feedback dataset (pair-list format).
    Synth {
        /// Output file.
        #[arg(long)]
        out: std::path::PathBuf,
        #[arg(long, default_value_t = 900)]
        users: usize,
        #[arg(long, default_value_t = 1700)]
        items: usize,
        #[arg(long, default_value_t = 100_000)]
        interactions: usize,
        #[arg(long, default_value_t = 12)]
        clusters: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<DgrError>() {
        Some(DgrError::Config(_)) | Some(DgrError::InvalidArgument(_)) => 1,
        Some(DgrError::NonFinite(_)) => 3,
        Some(_) => 2,
        None => 1,
    }
}

fn configure_threads(deterministic: bool) {
    let mut threads = std::env::var("DGR_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    if deterministic {
        threads = Some(1);
    }
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Prepare { common, force } => {
            let config = common.resolve()?;
            configure_threads(config.train.deterministic);
            commands::prepare::run(&config, force)
        }
        Command::Train {
            common,
            no_gmp,
            no_lec,
            resume,
        } => {
            let mut config = common.resolve()?;
            if no_gmp {
                config.train.gmp_enabled = false;
            }
            if no_lec {
                config.train.lec_enabled = false;
            }
            configure_threads(config.train.deterministic);
            commands::train::run(&config, resume.as_deref())
        }
        Command::Evaluate {
            common,
            checkpoint,
            dump_topk,
        } => {
            let config = common.resolve()?;
            configure_threads(config.train.deterministic);
            commands::evaluate::run(&config, checkpoint.as_deref(), dump_topk)
        }
        Command::Analyze {
            common,
            checkpoint,
            random_e0,
            dump_layer_cache,
            nodes,
        } => {
            let config = common.resolve()?;
            configure_threads(config.train.deterministic);
            commands::analyze::run(
                &config,
                checkpoint.as_deref(),
                random_e0,
                dump_layer_cache,
                &nodes,
            )
        }
        Command::Sweep {
            common,
            grid,
            force,
        } => {
            let config = common.resolve()?;
            configure_threads(config.train.deterministic);
            commands::sweep::run(&config, &grid, force)
        }
        Command::Synth {
            out,
            users,
            items,
            interactions,
            clusters,
            seed,
        } => commands::synth::run(&out, users, items, interactions, clusters, seed),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            std::process::exit(if is_help { 0 } else { 1 });
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(exit_code(&err));
        }
    }
}
