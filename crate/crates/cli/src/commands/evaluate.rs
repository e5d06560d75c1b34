//! `dgr evaluate`: full-catalog ranking metrics for a checkpoint, emitted
//! as CSV and JSON, optionally with per-user top-K recommendation dumps.

use std::io::Write;
use std::path::Path;

use anyhow::Context;
use dgr_core::{
    build_normalized_adjacency, checkpoint_load, evaluate, rank_items, row_diff, GcnEngine,
    GmpSchedule, InteractionGraph, Mat, Precision, Scalar,
};

use super::{default_checkpoint_path, ensure_out_dir, load_split};
use crate::run_config::RunConfig;

pub fn run(config: &RunConfig, checkpoint: Option<&Path>, dump_topk: bool) -> anyhow::Result<()> {
    ensure_out_dir(config)?;
    let (train, test) = load_split(config)?;
    let ckpt_path = checkpoint
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_checkpoint_path(config));
    let ckpt =
        checkpoint_load(&ckpt_path).with_context(|| format!("loading {}", ckpt_path.display()))?;
    ckpt.validate_shape(train.num_nodes(), ckpt.config.embedding_dim)?;

    // The checkpoint's config defines the forward map; the run config picks
    // the Ks to report.
    let mut ks = config.train.eval_ks.clone();
    if !ks.contains(&20) {
        ks.push(20);
    }
    ks.sort_unstable();
    ks.dedup();

    let (report, rd, topk_rows) = match ckpt.config.precision {
        Precision::F32 => evaluate_readout::<f32>(&ckpt.e0.cast(), &ckpt.config, &train, &test, &ks, dump_topk)?,
        Precision::F64 => evaluate_readout::<f64>(&ckpt.e0.cast(), &ckpt.config, &train, &test, &ks, dump_topk)?,
    };

    let csv_path = config.out_dir.join("metrics.csv");
    let mut csv = String::from("k,recall,ndcg,n_users_evaluated,row_diff\n");
    for (pos, &k) in report.ks.iter().enumerate() {
        csv.push_str(&format!(
            "{k},{},{},{},{rd}\n",
            report.recall[pos], report.ndcg[pos], report.n_users_evaluated
        ));
    }
    std::fs::write(&csv_path, &csv)?;

    let json = serde_json::json!({
        "n_users_evaluated": report.n_users_evaluated,
        "row_diff": if rd.is_nan() { None } else { Some(rd) },
        "metrics": report.ks.iter().enumerate().map(|(pos, &k)| {
            serde_json::json!({
                "k": k,
                "recall": nan_to_null(report.recall[pos]),
                "ndcg": nan_to_null(report.ndcg[pos]),
            })
        }).collect::<Vec<_>>(),
    });
    std::fs::write(
        config.out_dir.join("metrics.json"),
        serde_json::to_string_pretty(&json)?,
    )?;

    if let Some(rows) = topk_rows {
        let mut out = std::io::BufWriter::new(std::fs::File::create(
            config.out_dir.join("topk.csv"),
        )?);
        writeln!(out, "user,rank,item,score")?;
        for (u, rank, item, score) in rows {
            writeln!(out, "{u},{rank},{item},{score}")?;
        }
    }

    println!("{csv}");
    Ok(())
}

fn nan_to_null(v: f64) -> Option<f64> {
    if v.is_nan() {
        None
    } else {
        Some(v)
    }
}

type TopkRows = Vec<(usize, usize, u32, f64)>;

fn evaluate_readout<R: Scalar>(
    e0: &Mat<R>,
    train_config: &dgr_core::TrainConfig,
    train: &InteractionGraph,
    test: &InteractionGraph,
    ks: &[usize],
    dump_topk: bool,
) -> anyhow::Result<(dgr_core::MetricsReport, f64, Option<TopkRows>)> {
    let adj = build_normalized_adjacency(train);
    let schedule = if train_config.gmp_enabled {
        Some(GmpSchedule::new(train_config.alpha.clone())?)
    } else {
        None
    };
    let engine = GcnEngine::new(train, &adj, train_config.layers, schedule)?;
    let pass = engine.forward(e0)?;
    let readout = pass.readout();
    let report = evaluate(readout, train, test, ks);
    let rd = row_diff(readout).value;

    let topk = if dump_topk {
        let k = ks.iter().copied().max().unwrap_or(20);
        let mut rows = Vec::new();
        for u in 0..train.num_users() {
            let items = rank_items(readout, train.num_users(), u, train.user_items(u), k);
            for (rank0, &i) in items.iter().enumerate() {
                let score =
                    dgr_core::predict(readout, train.num_users(), u, i as usize)?.to_f64();
                rows.push((u, rank0 + 1, i, score));
            }
        }
        Some(rows)
    } else {
        None
    };
    Ok((report, rd, topk))
}
