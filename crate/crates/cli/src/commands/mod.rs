pub mod analyze;
pub mod evaluate;
pub mod prepare;
pub mod sweep;
pub mod synth;
pub mod train;

use std::path::{Path, PathBuf};

use anyhow::Context;
use dgr_core::{load_split_pair, DgrError, InteractionGraph, LecIndex};

use crate::run_config::RunConfig;

/// Load the train/test pair referenced by the config into one shared node
/// space.
pub fn load_split(config: &RunConfig) -> anyhow::Result<(InteractionGraph, InteractionGraph)> {
    let train_path = config
        .train_file
        .as_ref()
        .ok_or_else(|| DgrError::Config("train_file is not set".into()))?;
    let test_path = config
        .test_file
        .as_ref()
        .ok_or_else(|| DgrError::Config("test_file is not set".into()))?;
    let pair = load_split_pair(train_path, test_path, config.format).with_context(|| {
        format!(
            "loading split {} / {}",
            train_path.display(),
            test_path.display()
        )
    })?;
    Ok(pair)
}

/// Load a persisted co-occurrence index if configured, preferring the
/// binary encoding.
pub fn load_index_if_available(config: &RunConfig) -> anyhow::Result<Option<LecIndex>> {
    let Some(path) = &config.lec_index_file else {
        return Ok(None);
    };
    let index = if path.extension().is_some_and(|e| e == "bin") {
        LecIndex::load_binary(path)
    } else {
        LecIndex::load_text(path)
    }
    .with_context(|| format!("loading index {}", path.display()))?;
    Ok(Some(index))
}

pub fn default_checkpoint_path(config: &RunConfig) -> PathBuf {
    config.out_dir.join("checkpoint.ckpt")
}

pub fn ensure_out_dir(config: &RunConfig) -> anyhow::Result<()> {
    std::fs::create_dir_all(&config.out_dir)
        .with_context(|| format!("creating {}", config.out_dir.display()))?;
    Ok(())
}

/// Error out when `path` exists and `force` is not set.
pub fn refuse_overwrite(path: &Path, force: bool) -> anyhow::Result<()> {
    if path.exists() && !force {
        return Err(DgrError::InvalidArgument(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        ))
        .into());
    }
    Ok(())
}
