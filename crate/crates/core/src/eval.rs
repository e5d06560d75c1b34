//! Top-K ranking evaluation over the full item catalog with training
//! positives masked.

use rayon::prelude::*;

use crate::graph::InteractionGraph;
use crate::linalg::{dot, Mat, Scalar};

/// Per-K mean Recall and NDCG over all users with at least one test item.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub ks: Vec<usize>,
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub n_users_evaluated: usize,
}

impl MetricsReport {
    /// Metrics are undefined (NaN) when no user was evaluated.
    pub fn is_defined(&self) -> bool {
        self.n_users_evaluated > 0
    }

    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|p| self.recall[p])
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|p| self.ndcg[p])
    }
}

/// Top-K items for user `u` by readout score, excluding `masked` (sorted)
/// items; ties broken by ascending item index.
pub fn rank_items<R: Scalar>(
    readout: &Mat<R>,
    num_users: usize,
    u: usize,
    masked: &[u32],
    k: usize,
) -> Vec<u32> {
    let num_items = readout.rows() - num_users;
    let u_row = readout.row(u);
    let mut scored: Vec<(f64, u32)> = (0..num_items as u32)
        .filter(|i| masked.binary_search(i).is_err())
        .map(|i| {
            (
                dot(u_row, readout.row(num_users + i as usize)).to_f64(),
                i,
            )
        })
        .collect();
    let top = k.min(scored.len());
    if top == 0 {
        return Vec::new();
    }
    scored.select_nth_unstable_by(top - 1, |a, b| {
        b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1))
    });
    scored.truncate(top);
    scored.sort_unstable_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    scored.into_iter().map(|(_, i)| i).collect()
}

/// `|topk intersect test| / |test|`
pub fn recall_at_k(topk: &[u32], test_items: &[u32]) -> f64 {
    if test_items.is_empty() {
        return 0.0;
    }
    let hits = topk
        .iter()
        .filter(|i| test_items.binary_search(i).is_ok())
        .count();
    hits as f64 / test_items.len() as f64
}

/// Normalized discounted cumulative gain at `k` with the ideal DCG
/// truncated at `min(k, |test|)`.
pub fn ndcg_at_k(topk: &[u32], test_items: &[u32], k: usize) -> f64 {
    if test_items.is_empty() {
        return 0.0;
    }
    let dcg: f64 = topk
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| test_items.binary_search(i).is_ok())
        .map(|(rank0, _)| 1.0 / ((rank0 + 2) as f64).log2())
        .sum();
    let ideal: f64 = (0..k.min(test_items.len()))
        .map(|rank0| 1.0 / ((rank0 + 2) as f64).log2())
        .sum();
    dcg / ideal
}

/// Evaluate all users with at least one test interaction. Per-user results
/// are computed independently (in parallel) and reduced in user order, so
/// the report does not depend on scheduling.
pub fn evaluate<R: Scalar>(
    readout: &Mat<R>,
    train: &InteractionGraph,
    test: &InteractionGraph,
    ks: &[usize],
) -> MetricsReport {
    let k_max = ks.iter().copied().max().unwrap_or(0);
    let per_user: Vec<(Vec<f64>, Vec<f64>)> = (0..train.num_users())
        .into_par_iter()
        .filter(|&u| test.user_degree(u) > 0)
        .map(|u| {
            let topk = rank_items(readout, train.num_users(), u, train.user_items(u), k_max);
            let test_items = test.user_items(u);
            let recalls: Vec<f64> = ks
                .iter()
                .map(|&k| recall_at_k(&topk[..k.min(topk.len())], test_items))
                .collect();
            let ndcgs: Vec<f64> = ks.iter().map(|&k| ndcg_at_k(&topk, test_items, k)).collect();
            (recalls, ndcgs)
        })
        .collect();

    let n = per_user.len();
    let mut recall = vec![0.0; ks.len()];
    let mut ndcg = vec![0.0; ks.len()];
    for (r, d) in &per_user {
        for (acc, v) in recall.iter_mut().zip(r.iter()) {
            *acc += v;
        }
        for (acc, v) in ndcg.iter_mut().zip(d.iter()) {
            *acc += v;
        }
    }
    if n > 0 {
        for v in recall.iter_mut().chain(ndcg.iter_mut()) {
            *v /= n as f64;
        }
    } else {
        for v in recall.iter_mut().chain(ndcg.iter_mut()) {
            *v = f64::NAN;
        }
    }
    MetricsReport {
        ks: ks.to_vec(),
        recall,
        ndcg,
        n_users_evaluated: n,
    }
}
