//! Training objectives and their exact gradients with respect to the
//! readout (ranking losses) or the layer-0 embeddings (regularizer).
//!
//! All loss values are accumulated in double precision regardless of the
//! embedding element type; gradients are produced in the embedding type as
//! sparse per-row accumulations.

mod index;

pub use index::{LecIndex, LecIndexBuilder, DEFAULT_CANDIDATE_CAP};

use std::collections::BTreeMap;

use crate::error::{DgrError, Result};
use crate::graph::InteractionGraph;
use crate::linalg::{dot, Mat, Scalar};

/// Numerically stable `log(sigmoid(x)) = -log(1 + exp(-x))`.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Sparse row-gradient accumulator keyed by global node index.
///
/// Rows iterate in ascending index order, so single-threaded accumulation
/// is fully deterministic.
#[derive(Debug, Clone)]
pub struct RowGrads<R> {
    cols: usize,
    rows: BTreeMap<usize, Vec<R>>,
}

impl<R: Scalar> RowGrads<R> {
    pub fn new(cols: usize) -> Self {
        Self {
            cols,
            rows: BTreeMap::new(),
        }
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// `grad[row] += scale * values`
    pub fn add_scaled(&mut self, row: usize, values: &[R], scale: R) {
        debug_assert_eq!(values.len(), self.cols);
        let acc = self
            .rows
            .entry(row)
            .or_insert_with(|| vec![R::zero(); self.cols]);
        for (a, &v) in acc.iter_mut().zip(values.iter()) {
            *a += scale * v;
        }
    }

    pub fn row(&self, row: usize) -> Option<&[R]> {
        self.rows.get(&row).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[R])> {
        self.rows.iter().map(|(&r, v)| (r, v.as_slice()))
    }

    pub fn touched_rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.rows.keys().copied()
    }

    /// `self += scale * other`
    pub fn merge_scaled(&mut self, other: &RowGrads<R>, scale: R) {
        debug_assert_eq!(self.cols, other.cols);
        for (row, values) in other.iter() {
            self.add_scaled(row, values, scale);
        }
    }

    /// Scatter into a dense matrix of `n` rows.
    pub fn to_dense(&self, n: usize) -> Mat<R> {
        let mut out = Mat::zeros(n, self.cols);
        for (row, values) in self.iter() {
            out.row_mut(row).copy_from_slice(values);
        }
        out
    }
}

/// A batch of `(user, positive item, sampled negative item)` triples.
#[derive(Debug, Clone, Default)]
pub struct BatchTriples {
    triples: Vec<(u32, u32, u32)>,
    /// Positive draws abandoned because no negative could be found.
    skipped: usize,
}

impl BatchTriples {
    pub fn new(triples: Vec<(u32, u32, u32)>) -> Self {
        Self {
            triples,
            skipped: 0,
        }
    }

    pub(crate) fn with_skipped(triples: Vec<(u32, u32, u32)>, skipped: usize) -> Self {
        Self { triples, skipped }
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn triples(&self) -> &[(u32, u32, u32)] {
        &self.triples
    }

    /// Positive `(user, item)` pairs of the batch.
    pub fn positives(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.triples.iter().map(|&(u, i, _)| (u, i))
    }

    /// Check the defining invariant against a training graph:
    /// every `(u, i)` is an edge and every `(u, j)` is not.
    pub fn validate(&self, train: &InteractionGraph) -> Result<()> {
        for &(u, i, j) in &self.triples {
            if !train.has_edge(u as usize, i as usize) {
                return Err(DgrError::InvalidArgument(format!(
                    "triple ({u}, {i}, {j}): positive is not a training edge"
                )));
            }
            if train.has_edge(u as usize, j as usize) {
                return Err(DgrError::InvalidArgument(format!(
                    "triple ({u}, {i}, {j}): negative is a training edge"
                )));
            }
        }
        Ok(())
    }
}

/// Pairwise ranking loss `sum -log sigmoid(y_ui - y_uj)` over the batch
/// (a sum, not a mean), with gradients accumulated per readout row.
pub fn bpr_loss<R: Scalar>(
    triples: &BatchTriples,
    readout: &Mat<R>,
    num_users: usize,
) -> (f64, RowGrads<R>) {
    let mut grads = RowGrads::new(readout.cols());
    let mut loss = 0.0;
    for &(u, i, j) in triples.triples() {
        let u_row = u as usize;
        let i_row = num_users + i as usize;
        let j_row = num_users + j as usize;
        let x = dot(readout.row(u_row), readout.row(i_row)).to_f64()
            - dot(readout.row(u_row), readout.row(j_row)).to_f64();
        loss -= log_sigmoid(x);
        // d(-log sigmoid(x))/dx = -sigmoid(-x)
        let s = R::from_f64(sigmoid(-x));
        grads.add_scaled(u_row, readout.row(i_row), -s);
        grads.add_scaled(u_row, readout.row(j_row), s);
        grads.add_scaled(i_row, readout.row(u_row), -s);
        grads.add_scaled(j_row, readout.row(u_row), s);
    }
    (loss, grads)
}

/// Local embedding-correction loss over the positives of a batch.
///
/// For each positive `(u, i)` the loss sums over all pairs
/// `(s, m) in S(i) x M(i)`: the similar term pulls `e_u` toward `e_s`, the
/// marginal term pushes it away from `e_m`, each weighted by the inverse
/// square-root degree product of the training graph. The double sum is kept
/// literal, so each similar term carries multiplicity `|M(i)|` and each
/// marginal term `|S(i)|`; `normalize_pairs` divides it out for ablations.
pub fn lec_loss<R: Scalar>(
    positives: &[(u32, u32)],
    readout: &Mat<R>,
    index: &LecIndex,
    train: &InteractionGraph,
    normalize_pairs: bool,
) -> (f64, RowGrads<R>) {
    let num_users = train.num_users();
    let mut grads = RowGrads::new(readout.cols());
    let mut loss = 0.0;
    for &(u, i) in positives {
        let similar = index.similar(i as usize);
        let marginal = index.marginal(i as usize);
        if similar.is_empty() || marginal.is_empty() {
            continue;
        }
        let wu = 1.0 / ((train.user_degree(u as usize) as f64 + 1.0).sqrt());
        let u_row = u as usize;
        let pair_scale = if normalize_pairs {
            1.0 / (similar.len() as f64 * marginal.len() as f64)
        } else {
            1.0
        };

        // Per-endpoint terms; the (s, m) double sum below only pairs them.
        let sim_terms: Vec<f64> = similar
            .iter()
            .map(|&(s, _)| {
                let s_row = num_users + s as usize;
                let w = wu / (train.item_degree(s as usize) as f64 + 1.0).sqrt();
                let d = dot(readout.row(u_row), readout.row(s_row)).to_f64();
                -w * log_sigmoid(d)
            })
            .collect();
        let mar_terms: Vec<f64> = marginal
            .iter()
            .map(|&(m, _)| {
                let m_row = num_users + m as usize;
                let w = wu / (train.item_degree(m as usize) as f64 + 1.0).sqrt();
                let d = dot(readout.row(u_row), readout.row(m_row)).to_f64();
                w * log_sigmoid(d)
            })
            .collect();
        for &ts in &sim_terms {
            for &tm in &mar_terms {
                loss += pair_scale * (ts + tm);
            }
        }

        // Gradients: identical pairing, folded into multiplicity factors.
        let sim_mult = pair_scale * marginal.len() as f64;
        let mar_mult = pair_scale * similar.len() as f64;
        for &(s, _) in similar {
            let s_row = num_users + s as usize;
            let w = wu / (train.item_degree(s as usize) as f64 + 1.0).sqrt();
            let d = dot(readout.row(u_row), readout.row(s_row)).to_f64();
            let coeff = R::from_f64(-sim_mult * w * sigmoid(-d));
            grads.add_scaled(u_row, readout.row(s_row), coeff);
            grads.add_scaled(s_row, readout.row(u_row), coeff);
        }
        for &(m, _) in marginal {
            let m_row = num_users + m as usize;
            let w = wu / (train.item_degree(m as usize) as f64 + 1.0).sqrt();
            let d = dot(readout.row(u_row), readout.row(m_row)).to_f64();
            let coeff = R::from_f64(mar_mult * w * sigmoid(-d));
            grads.add_scaled(u_row, readout.row(m_row), coeff);
            grads.add_scaled(m_row, readout.row(u_row), coeff);
        }
    }
    (loss, grads)
}

/// Composite objective `cf + lambda * lec`. The caller combines gradients
/// with the same `lambda`.
pub fn total_loss(cf: f64, lec: f64, lambda: f64) -> f64 {
    cf + lambda * lec
}

/// L2 penalty `coeff * 0.5 * sum ||E0_row||^2` over the touched rows.
pub fn l2_regularizer<R: Scalar>(
    e0: &Mat<R>,
    rows_touched: impl IntoIterator<Item = usize>,
    coeff: f64,
) -> (f64, RowGrads<R>) {
    let mut grads = RowGrads::new(e0.cols());
    let mut loss = 0.0;
    if coeff == 0.0 {
        return (loss, grads);
    }
    let c = R::from_f64(coeff);
    for row in rows_touched {
        let r = e0.row(row);
        loss += coeff * 0.5 * r.iter().map(|&v| v.to_f64() * v.to_f64()).sum::<f64>();
        grads.add_scaled(row, r, c);
    }
    (loss, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LN2: f64 = std::f64::consts::LN_2;

    fn random_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat<f64> {
        Mat::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn stable_log_sigmoid() {
        assert!((log_sigmoid(0.0) + LN2).abs() < 1e-15);
        // Extreme arguments stay finite.
        assert!(log_sigmoid(-1000.0).is_finite());
        assert_eq!(log_sigmoid(1000.0), 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0);
    }

    #[test]
    fn bpr_equal_scores_cost_ln2() {
        // Orthogonal user/pos/neg rows: both scores are 0.
        let readout = Mat::<f64>::from_rows(&[
            &[1.0, 0.0, 0.0],
            &[0.0, 1.0, 0.0],
            &[0.0, 0.0, 1.0],
        ]);
        let batch = BatchTriples::new(vec![(0, 0, 1)]);
        let (loss, _) = bpr_loss(&batch, &readout, 1);
        assert!((loss - LN2).abs() < 1e-12);
    }

    #[test]
    fn bpr_vanishes_for_well_separated_scores() {
        let readout = Mat::<f64>::from_rows(&[&[10.0], &[10.0], &[-10.0]]);
        let batch = BatchTriples::new(vec![(0, 0, 1)]);
        let (loss, _) = bpr_loss(&batch, &readout, 1);
        assert!(loss < 1e-6);
    }

    fn fd_check_readout_grads(
        readout: &Mat<f64>,
        grads: &RowGrads<f64>,
        loss_fn: impl Fn(&Mat<f64>) -> f64,
    ) {
        let h = 1e-5;
        for r in 0..readout.rows() {
            for c in 0..readout.cols() {
                let mut plus = readout.clone();
                plus.set(r, c, plus.get(r, c) + h);
                let mut minus = readout.clone();
                minus.set(r, c, minus.get(r, c) - h);
                let fd = (loss_fn(&plus) - loss_fn(&minus)) / (2.0 * h);
                let analytic = grads.row(r).map_or(0.0, |row| row[c]);
                let denom = fd.abs().max(analytic.abs()).max(1e-6);
                assert!(
                    (fd - analytic).abs() / denom < 1e-4,
                    "row {r} col {c}: fd {fd} vs analytic {analytic}"
                );
            }
        }
    }

    #[test]
    fn bpr_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let num_users = 4;
        let readout = random_mat(&mut rng, 9, 4); // 4 users + 5 items
        let mut triples = Vec::new();
        for _ in 0..10 {
            let u = rng.gen_range(0..4u32);
            let i = rng.gen_range(0..5u32);
            let mut j = rng.gen_range(0..5u32);
            while j == i {
                j = rng.gen_range(0..5u32);
            }
            triples.push((u, i, j));
        }
        let batch = BatchTriples::new(triples);
        let (_, grads) = bpr_loss(&batch, &readout, num_users);
        fd_check_readout_grads(&readout, &grads, |m| bpr_loss(&batch, m, num_users).0);
    }

    fn single_pair_fixture() -> (InteractionGraph, LecIndex) {
        // Three items sharing users so the index has one similar and one
        // marginal entry for item 0.
        let edges = [
            (0, 0),
            (1, 0),
            (2, 0),
            (0, 1),
            (1, 1),
            (2, 1),
            (0, 2),
        ];
        let g = InteractionGraph::from_edges(3, 3, &edges).unwrap();
        // count(0,1) = 3, count(0,2) = 1; theta = 0 keeps both.
        let index = LecIndexBuilder::new(1, 1, 0).exact().build(&g);
        assert_eq!(index.similar(0), &[(1, 3)]);
        assert_eq!(index.marginal(0), &[(2, 1)]);
        (g, index)
    }

    #[test]
    fn lec_empty_sets_contribute_nothing() {
        let g = InteractionGraph::from_edges(2, 2, &[(0, 0), (1, 1)]).unwrap();
        let index = LecIndexBuilder::new(2, 2, 0).exact().build(&g);
        let readout = Mat::<f64>::zeros(4, 3);
        let (loss, grads) = lec_loss(&[(0, 0)], &readout, &index, &g, false);
        assert_eq!(loss, 0.0);
        assert!(grads.is_empty());
    }

    #[test]
    fn lec_zero_embeddings_arithmetic() {
        let (g, index) = single_pair_fixture();
        let readout = Mat::<f64>::zeros(6, 2);
        // log sigmoid(0) = ln(1/2) = -ln 2, so the single (s, m) pair costs
        // -(w_us * ln(1/2) - w_um * ln(1/2)) = (w_us - w_um) * ln 2.
        let wu = 1.0 / (g.user_degree(0) as f64 + 1.0).sqrt();
        let ws = wu / (g.item_degree(1) as f64 + 1.0).sqrt();
        let wm = wu / (g.item_degree(2) as f64 + 1.0).sqrt();
        let (loss, _) = lec_loss(&[(0, 0)], &readout, &index, &g, false);
        assert!((loss - (ws - wm) * LN2).abs() < 1e-12, "loss {loss}");
    }

    #[test]
    fn lec_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut edges = Vec::new();
        for u in 0..5u32 {
            for i in 0..8u32 {
                if rng.gen_bool(0.5) {
                    edges.push((u, i));
                }
            }
        }
        let g = InteractionGraph::from_edges(5, 8, &edges).unwrap();
        let index = LecIndexBuilder::new(2, 2, 0).exact().build(&g);
        assert!((0..8).any(|i| !index.similar(i).is_empty() && !index.marginal(i).is_empty()));
        let readout = random_mat(&mut rng, 13, 4);
        let positives: Vec<(u32, u32)> = g.edges().take(6).collect();
        for normalize in [false, true] {
            let (_, grads) = lec_loss(&positives, &readout, &index, &g, normalize);
            fd_check_readout_grads(&readout, &grads, |m| {
                lec_loss(&positives, m, &index, &g, normalize).0
            });
        }
    }

    #[test]
    fn lec_monotonicity_in_similar_and_marginal_scores() {
        let (g, index) = single_pair_fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let readout = random_mat(&mut rng, 6, 3);
            let (base, _) = lec_loss(&[(0, 0)], &readout, &index, &g, false);

            // Increase e_u . e_s by moving e_s along e_u: loss must drop.
            let mut closer = readout.clone();
            let u = readout.row(0).to_vec();
            for (c, &uv) in closer.row_mut(3 + 1).iter_mut().zip(u.iter()) {
                *c += 0.1 * uv;
            }
            let (pulled, _) = lec_loss(&[(0, 0)], &closer, &index, &g, false);
            assert!(pulled < base);

            // Increase e_u . e_m: loss must rise.
            let mut infringing = readout.clone();
            for (c, &uv) in infringing.row_mut(3 + 2).iter_mut().zip(u.iter()) {
                *c += 0.1 * uv;
            }
            let (pushed, _) = lec_loss(&[(0, 0)], &infringing, &index, &g, false);
            assert!(pushed > base);
        }
    }

    #[test]
    fn total_loss_combination() {
        assert_eq!(total_loss(1.0, 2.0, 0.0), 1.0);
        assert_eq!(total_loss(1.0, 2.0, 0.5), 2.0);
    }

    #[test]
    fn composite_gradient_matches_finite_differences() {
        let (g, index) = single_pair_fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let readout = random_mat(&mut rng, 6, 3);
        // Users 1 and 2 interact with items {0, 1} only, so item 2 is a
        // legal negative for both.
        let batch = BatchTriples::new(vec![(1, 0, 2), (2, 1, 2)]);
        batch.validate(&g).unwrap();
        let positives: Vec<(u32, u32)> = batch.positives().collect();
        let lambda = 0.7;

        let composite = |m: &Mat<f64>| -> f64 {
            let (cf, _) = bpr_loss(&batch, m, g.num_users());
            let (lec, _) = lec_loss(&positives, m, &index, &g, false);
            total_loss(cf, lec, lambda)
        };
        let (cf, mut grads) = bpr_loss(&batch, &readout, g.num_users());
        let (lec, lec_grads) = lec_loss(&positives, &readout, &index, &g, false);
        grads.merge_scaled(&lec_grads, lambda);
        let _ = total_loss(cf, lec, lambda);
        fd_check_readout_grads(&readout, &grads, composite);
    }

    #[test]
    fn l2_examples_and_finite_differences() {
        let e0 = Mat::<f64>::from_rows(&[&[3.0, 4.0], &[1.0, -2.0]]);
        let (zero_loss, zero_grads) = l2_regularizer(&e0, [0, 1], 0.0);
        assert_eq!(zero_loss, 0.0);
        assert!(zero_grads.is_empty());

        let (loss, grads) = l2_regularizer(&e0, [0], 1.0);
        assert!((loss - 12.5).abs() < 1e-12);
        assert_eq!(grads.row(0).unwrap(), &[3.0, 4.0]);
        assert!(grads.row(1).is_none());

        let coeff = 0.37;
        let (_, g) = l2_regularizer(&e0, [0, 1], coeff);
        fd_check_readout_grads(&e0, &g, |m| l2_regularizer(m, [0, 1], coeff).0);
    }

    #[test]
    fn losses_stay_finite_for_large_embeddings() {
        let (g, index) = single_pair_fixture();
        let big = Mat::<f64>::from_fn(6, 3, |r, c| if (r + c) % 2 == 0 { 500.0 } else { -500.0 });
        let batch = BatchTriples::new(vec![(0, 0, 2)]);
        let (cf, cf_grads) = bpr_loss(&batch, &big, g.num_users());
        let (lec, lec_grads) = lec_loss(&[(0, 0)], &big, &index, &g, false);
        assert!(cf.is_finite() && lec.is_finite());
        assert!(cf_grads.iter().all(|(_, row)| row.iter().all(|v| v.is_finite())));
        assert!(lec_grads.iter().all(|(_, row)| row.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn batch_validation_detects_bad_triples() {
        let g = InteractionGraph::from_edges(2, 3, &[(0, 0), (1, 2)]).unwrap();
        assert!(BatchTriples::new(vec![(0, 0, 1)]).validate(&g).is_ok());
        // Positive not an edge.
        assert!(BatchTriples::new(vec![(0, 1, 2)]).validate(&g).is_err());
        // Negative is an edge.
        assert!(BatchTriples::new(vec![(0, 0, 0)]).validate(&g).is_err());
    }
}
