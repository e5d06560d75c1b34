//! `dgr sweep`: grid search over one hyperparameter, one training run per
//! point, resumable through per-point result files.

use dgr_core::{DgrError, LecIndexBuilder, TrainConfig};

use super::{ensure_out_dir, load_split};
use crate::commands::train::fit_for_sweep;
use crate::run_config::RunConfig;

/// One grid point: a tag for filenames and the config mutation.
struct GridPoint {
    tag: String,
    config: TrainConfig,
}

fn alpha_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

fn parse_grid(spec: &str, base: &TrainConfig) -> Result<Vec<GridPoint>, DgrError> {
    let mut points = Vec::new();
    if spec == "alpha" {
        for a in alpha_grid() {
            let mut config = base.clone();
            config.alpha = vec![a; config.layers];
            points.push(GridPoint {
                tag: format!("alpha_all_{a:.1}"),
                config,
            });
        }
    } else if let Some(layer) = spec.strip_prefix("alpha@") {
        let layer: usize = layer
            .parse()
            .map_err(|_| DgrError::Config(format!("bad layer in grid spec {spec:?}")))?;
        if layer == 0 || layer > base.layers {
            return Err(DgrError::Config(format!(
                "grid layer {layer} out of range 1..={}",
                base.layers
            )));
        }
        for a in alpha_grid() {
            let mut config = base.clone();
            config.alpha[layer - 1] = a;
            points.push(GridPoint {
                tag: format!("alpha_l{layer}_{a:.1}"),
                config,
            });
        }
    } else if let Some((key, values)) = spec.split_once('=') {
        for value in values.split(',').map(str::trim).filter(|v| !v.is_empty()) {
            let mut config = base.clone();
            match key {
                "lambda" => {
                    config.lambda = value
                        .parse()
                        .map_err(|_| DgrError::Config(format!("bad lambda {value:?}")))?
                }
                "k1" => {
                    config.k1 = value
                        .parse()
                        .map_err(|_| DgrError::Config(format!("bad k1 {value:?}")))?
                }
                "k2" => {
                    config.k2 = value
                        .parse()
                        .map_err(|_| DgrError::Config(format!("bad k2 {value:?}")))?
                }
                "theta" => {
                    config.theta = value
                        .parse()
                        .map_err(|_| DgrError::Config(format!("bad theta {value:?}")))?
                }
                other => {
                    return Err(DgrError::Config(format!(
                        "unsupported sweep key {other:?} (alpha, alpha@L, lambda, k1, k2, theta)"
                    )))
                }
            }
            points.push(GridPoint {
                tag: format!("{key}_{value}"),
                config,
            });
        }
    } else {
        return Err(DgrError::Config(format!("bad grid spec {spec:?}")));
    }
    if points.is_empty() {
        return Err(DgrError::Config("grid spec produced no points".into()));
    }
    Ok(points)
}

pub fn run(config: &RunConfig, grid: &str, force: bool) -> anyhow::Result<()> {
    ensure_out_dir(config)?;
    let sweep_dir = config.out_dir.join("sweep");
    std::fs::create_dir_all(&sweep_dir)?;
    let points = parse_grid(grid, &config.train)?;
    let (train, test) = load_split(config)?;

    // The index depends on (k1, k2, theta); reuse it across points that
    // share those parameters.
    let mut results: Vec<(String, f64, f64, usize)> = Vec::new();
    let mut cached_index: Option<((usize, usize, usize), dgr_core::LecIndex)> = None;
    for point in &points {
        let result_path = sweep_dir.join(format!("{}.csv", point.tag));
        if result_path.exists() && !force {
            if let Some(parsed) = read_point_result(&result_path) {
                log::info!("skipping completed point {}", point.tag);
                results.push(parsed);
                continue;
            }
        }
        let index = if point.config.lec_enabled {
            let key = (point.config.k1, point.config.k2, point.config.theta);
            if cached_index.as_ref().map(|(k, _)| *k) != Some(key) {
                cached_index = Some((
                    key,
                    LecIndexBuilder::new(key.0, key.1, key.2).build(&train),
                ));
            }
            cached_index.as_ref().map(|(_, i)| i)
        } else {
            None
        };
        let (recall, ndcg, best_epoch, history) =
            fit_for_sweep(&point.config, &train, &test, index)?;
        history.write_csv(sweep_dir.join(format!("{}_history.csv", point.tag)))?;
        std::fs::write(
            &result_path,
            format!("point,recall@20,ndcg@20,best_epoch\n{},{recall},{ndcg},{best_epoch}\n", point.tag),
        )?;
        log::info!("point {}: recall@20 {recall:.6}", point.tag);
        results.push((point.tag.clone(), recall, ndcg, best_epoch));
    }

    let mut table = String::from("point,recall@20,ndcg@20,best_epoch\n");
    for (tag, recall, ndcg, epoch) in &results {
        table.push_str(&format!("{tag},{recall},{ndcg},{epoch}\n"));
    }
    std::fs::write(config.out_dir.join("sweep_results.csv"), &table)?;

    let best = results
        .iter()
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .expect("at least one point");
    std::fs::write(
        config.out_dir.join("sweep_best.txt"),
        format!("best point: {} (recall@20 {})\n", best.0, best.1),
    )?;
    println!("{table}best: {} (recall@20 {})", best.0, best.1);
    Ok(())
}

fn read_point_result(path: &std::path::Path) -> Option<(String, f64, f64, usize)> {
    let content = std::fs::read_to_string(path).ok()?;
    let line = content.lines().nth(1)?;
    let mut parts = line.split(',');
    Some((
        parts.next()?.to_string(),
        parts.next()?.parse().ok()?,
        parts.next()?.parse().ok()?,
        parts.next()?.parse().ok()?,
    ))
}
