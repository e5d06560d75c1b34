//! `dgr analyze`: steady-state convergence curve (`k,distance` CSV for
//! k in [1, 20]) and mean pairwise row distance of the model's readout
//! with and without the desmoothing forward.

use std::io::Write;
use std::path::Path;

use anyhow::Context;
use dgr_core::{
    build_normalized_adjacency, checkpoint_load, checkpoint_save, distance_curve, init_embeddings,
    row_diff, GcnEngine, GmpSchedule, InteractionGraph, Mat, OverSmoothingState,
};

use super::{default_checkpoint_path, ensure_out_dir, load_split};
use crate::run_config::RunConfig;

const CURVE_DEPTH: usize = 20;

pub fn run(
    config: &RunConfig,
    checkpoint: Option<&Path>,
    random_e0: bool,
    dump_layer_cache: bool,
    nodes: &[usize],
) -> anyhow::Result<()> {
    ensure_out_dir(config)?;
    let (train, _) = load_split(config)?;

    // Analysis always runs in double precision.
    let (e0, train_config): (Mat<f64>, dgr_core::TrainConfig) = if random_e0 {
        (
            init_embeddings(train.num_nodes(), config.train.embedding_dim, config.train.seed),
            config.train.clone(),
        )
    } else {
        let ckpt_path = checkpoint
            .map(Path::to_path_buf)
            .unwrap_or_else(|| default_checkpoint_path(config));
        let ckpt = checkpoint_load(&ckpt_path)
            .with_context(|| format!("loading {}", ckpt_path.display()))?;
        ckpt.validate_shape(train.num_nodes(), ckpt.config.embedding_dim)?;
        (ckpt.e0.cast(), ckpt.config)
    };

    let adj = build_normalized_adjacency(&train);
    let state = OverSmoothingState::compute(&train, &e0);
    if state.components() > 1 {
        log::warn!(
            "graph has {} components; the steady-state formula assumes one",
            state.components()
        );
    }

    // Plain-propagation convergence curve toward the steady state.
    let curve = distance_curve(&adj, &e0, &state, CURVE_DEPTH)?;
    let curve_path = config.out_dir.join("distance_curve.csv");
    let mut csv = String::from("k,distance\n");
    for (i, d) in curve.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", i + 1, d));
    }
    std::fs::write(&curve_path, &csv)?;

    // Readout row-diff with and without the desmoothing perturbation.
    let schedule = GmpSchedule::new(train_config.alpha.clone())?;
    let gmp_engine = GcnEngine::new(&train, &adj, train_config.layers, Some(schedule))?;
    let plain_engine = GcnEngine::new(&train, &adj, train_config.layers, None)?;
    let gmp_pass = gmp_engine.forward(&e0)?;
    let plain_pass = plain_engine.forward(&e0)?;
    let rd_gmp = row_diff(gmp_pass.readout());
    let rd_plain = row_diff(plain_pass.readout());

    let rowdiff_path = config.out_dir.join("row_diff.csv");
    let fmt = |rd: &dgr_core::RowDiff| match rd.std_error {
        Some(se) => format!("{},sampled,{se}", rd.value),
        None => format!("{},exact,", rd.value),
    };
    std::fs::write(
        &rowdiff_path,
        format!(
            "variant,row_diff,mode,std_error\ngmp,{}\nplain,{}\n",
            fmt(&rd_gmp),
            fmt(&rd_plain)
        ),
    )?;

    if dump_layer_cache {
        let dir = config.out_dir.join("layers");
        std::fs::create_dir_all(&dir)?;
        for (k, layer) in gmp_pass.layers().iter().enumerate() {
            checkpoint_save(layer, &train_config, dir.join(format!("layer_{k}.ckpt")))?;
        }
    }

    if !nodes.is_empty() {
        write_node_trajectories(config, &train, &gmp_pass, nodes)?;
    }

    println!("distance curve -> {}", curve_path.display());
    println!(
        "row_diff: gmp={} plain={}",
        rd_gmp.value, rd_plain.value
    );
    Ok(())
}

/// Raw per-layer embeddings for selected nodes (the trajectory data that
/// would otherwise feed a 2-D projection).
fn write_node_trajectories(
    config: &RunConfig,
    train: &InteractionGraph,
    pass: &dgr_core::EmbeddingState<f64>,
    nodes: &[usize],
) -> anyhow::Result<()> {
    let path = config.out_dir.join("node_layers.csv");
    let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(out, "node,layer,values")?;
    for &node in nodes {
        if node >= train.num_nodes() {
            return Err(dgr_core::DgrError::InvalidArgument(format!(
                "node {node} out of range ({} nodes)",
                train.num_nodes()
            ))
            .into());
        }
        for (k, layer) in pass.layers().iter().enumerate() {
            let values = layer
                .row(node)
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(" ");
            writeln!(out, "{node},{k},{values}")?;
        }
    }
    Ok(())
}
