//! `dgr train`: fit a model and write the best checkpoint plus history.

use std::path::Path;

use anyhow::Context;
use dgr_core::{
    checkpoint_load, checkpoint_save, fit, History, InteractionGraph, LecIndex, LecIndexBuilder,
    Mat, Precision, Scalar, TrainConfig,
};

use super::{ensure_out_dir, load_index_if_available, load_split};
use crate::run_config::RunConfig;

pub fn run(config: &RunConfig, resume: Option<&Path>) -> anyhow::Result<()> {
    ensure_out_dir(config)?;
    let (train, test) = load_split(config)?;

    let index = if config.train.lec_enabled {
        match load_index_if_available(config)? {
            Some(index) => Some(index),
            None => {
                log::info!("building co-occurrence index (no lec_index_file configured)");
                Some(
                    LecIndexBuilder::new(config.train.k1, config.train.k2, config.train.theta)
                        .build(&train),
                )
            }
        }
    } else {
        None
    };

    let initial = match resume {
        Some(path) => {
            let ckpt = checkpoint_load(path).with_context(|| format!("resuming {}", path.display()))?;
            ckpt.validate_shape(train.num_nodes(), config.train.embedding_dim)?;
            Some(ckpt.e0)
        }
        None => None,
    };

    let history = match config.train.precision {
        Precision::F32 => run_fit::<f32>(config, &train, &test, index.as_ref(), initial)?,
        Precision::F64 => {
            run_fit::<f64>(config, &train, &test, index.as_ref(), initial.map(|m| m.cast()))?
        }
    };
    let history_path = config.out_dir.join("history.csv");
    history.write_csv(&history_path)?;
    // Resolved config next to the run outputs, for reproducibility.
    std::fs::write(config.out_dir.join("run_config.txt"), config.to_config_string())?;
    log::info!("history written to {}", history_path.display());
    Ok(())
}

fn run_fit<R: Scalar>(
    config: &RunConfig,
    train: &InteractionGraph,
    test: &InteractionGraph,
    index: Option<&LecIndex>,
    initial: Option<Mat<R>>,
) -> anyhow::Result<History> {
    let result = fit::<R>(&config.train, train, test, index, initial)?;
    checkpoint_save(
        &result.best_e0,
        &config.train,
        config.out_dir.join("checkpoint.ckpt"),
    )?;
    checkpoint_save(
        &result.final_e0,
        &config.train,
        config.out_dir.join("final.ckpt"),
    )?;
    log::info!(
        "best Recall@20 {:.6} at epoch {} ({} epochs run)",
        result.best_recall,
        result.best_epoch,
        result.epochs_run
    );
    Ok(result.history)
}

/// Run one training configuration and return the summary line used by
/// `sweep`: (best recall@20, best ndcg@20, best epoch, history).
pub fn fit_for_sweep(
    train_config: &TrainConfig,
    train: &InteractionGraph,
    test: &InteractionGraph,
    index: Option<&LecIndex>,
) -> anyhow::Result<(f64, f64, usize, History)> {
    match train_config.precision {
        Precision::F32 => summarize(fit::<f32>(train_config, train, test, index, None)?),
        Precision::F64 => summarize(fit::<f64>(train_config, train, test, index, None)?),
    }
}

fn summarize<R: Scalar>(
    result: dgr_core::FitResult<R>,
) -> anyhow::Result<(f64, f64, usize, History)> {
    let ndcg = result
        .history
        .records()
        .iter()
        .find(|r| r.epoch == result.best_epoch)
        .map_or(f64::NAN, |r| r.ndcg_at_20);
    Ok((result.best_recall, ndcg, result.best_epoch, result.history))
}
