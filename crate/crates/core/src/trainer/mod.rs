//! Mini-batch training loop: pairwise ranking plus local correction on the
//! readout, exact backward to the layer-0 embeddings, sparse Adam updates,
//! periodic evaluation and best-checkpoint tracking.

mod adam;
mod checkpoint;
mod sampler;

pub use adam::{AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use checkpoint::{checkpoint_load, checkpoint_save, Checkpoint, CHECKPOINT_MAGIC};
pub use sampler::{sample_batch, TripleSampler};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::adjacency::{build_normalized_adjacency, NormalizedAdjacency};
use crate::config::{SteadyRefresh, TrainConfig};
use crate::error::{DgrError, Result};
use crate::eval::evaluate;
use crate::gcn::{EmbeddingState, GcnEngine, GmpSchedule};
use crate::graph::InteractionGraph;
use crate::linalg::{Mat, Scalar};
use crate::losses::{bpr_loss, l2_regularizer, lec_loss, BatchTriples, LecIndex, LecIndexBuilder};
use crate::oversmooth::{row_diff, OverSmoothingState};

/// Offset applied to the config seed for the batch-sampling stream so it
/// never collides with the initialization stream.
const SAMPLER_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// Per-step diagnostics. Loss values are batch sums; the history records
/// per-triple means.
#[derive(Debug, Clone, Copy)]
pub struct StepReport {
    pub loss_cf: f64,
    pub loss_lec: f64,
    pub loss_l2: f64,
    pub grad_norm: f64,
    pub triples: usize,
    pub skipped: usize,
}

/// One history row per evaluation epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_cf: f64,
    pub loss_lec: f64,
    pub recall_at_20: f64,
    pub ndcg_at_20: f64,
    pub row_diff: f64,
}

/// Training history with the fixed CSV schema
/// `epoch,loss_cf,loss_lec,recall@20,ndcg@20,row_diff`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    records: Vec<EpochRecord>,
}

impl History {
    pub fn push(&mut self, record: EpochRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[EpochRecord] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("epoch,loss_cf,loss_lec,recall@20,ndcg@20,row_diff\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.epoch, r.loss_cf, r.loss_lec, r.recall_at_20, r.ndcg_at_20, r.row_diff
            ));
        }
        out
    }

    pub fn write_csv<P: AsRef<std::path::Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// Outcome of [`fit`]: the best checkpoint by Recall@20 (falling back to
/// the final embeddings when no evaluation ever ran) plus the full history.
#[derive(Debug, Clone)]
pub struct FitResult<R> {
    pub best_e0: Mat<R>,
    pub final_e0: Mat<R>,
    pub history: History,
    pub best_recall: f64,
    /// Epoch of the best checkpoint; 0 when no evaluation ran.
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// Seed-controlled normal(0, 0.1) embedding initialization. Values are
/// drawn in f64 so both precision modes see the same stream.
pub fn init_embeddings<R: Scalar>(nodes: usize, dim: usize, seed: u64) -> Mat<R> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f64, 0.1).expect("valid stddev");
    let data: Vec<R> = (0..nodes * dim)
        .map(|_| R::from_f64(normal.sample(&mut rng)))
        .collect();
    Mat::from_vec(nodes, dim, data)
}

/// Owns the mutable training state for one run.
pub struct Trainer<'a, R: Scalar> {
    graph: &'a InteractionGraph,
    engine: GcnEngine<'a>,
    config: &'a TrainConfig,
    index: Option<&'a LecIndex>,
    e0: Mat<R>,
    adam: AdamState<R>,
    steady_cache: Option<OverSmoothingState>,
}

impl<'a, R: Scalar> Trainer<'a, R> {
    pub fn new(
        graph: &'a InteractionGraph,
        adj: &'a NormalizedAdjacency,
        config: &'a TrainConfig,
        index: Option<&'a LecIndex>,
        initial_e0: Option<Mat<R>>,
    ) -> Result<Self> {
        config.validate()?;
        if config.lec_enabled && index.is_none() {
            return Err(DgrError::InvalidArgument(
                "lec_enabled requires a prebuilt co-occurrence index".into(),
            ));
        }
        let schedule = if config.gmp_enabled {
            Some(GmpSchedule::new(config.alpha.clone())?)
        } else {
            None
        };
        let engine = GcnEngine::new(graph, adj, config.layers, schedule)?
            .with_differentiated_steady_state(config.differentiate_steady_state);
        let n = graph.num_nodes();
        let e0 = match initial_e0 {
            Some(e0) => {
                if e0.rows() != n || e0.cols() != config.embedding_dim {
                    return Err(DgrError::DimensionMismatch(format!(
                        "initial embeddings are {}x{}, expected {n}x{}",
                        e0.rows(),
                        e0.cols(),
                        config.embedding_dim
                    )));
                }
                e0
            }
            None => init_embeddings(n, config.embedding_dim, config.seed),
        };
        let adam = AdamState::new(n, config.embedding_dim);
        Ok(Self {
            graph,
            engine,
            config,
            index,
            e0,
            adam,
            steady_cache: None,
        })
    }

    pub fn e0(&self) -> &Mat<R> {
        &self.e0
    }

    pub fn engine(&self) -> &GcnEngine<'a> {
        &self.engine
    }

    /// Refresh the cached steady state (per-epoch refresh mode).
    pub fn refresh_steady(&mut self) {
        self.steady_cache = Some(OverSmoothingState::compute(self.graph, &self.e0));
    }

    /// Forward pass with the configured steady-state refresh policy.
    pub fn forward(&self) -> Result<EmbeddingState<R>> {
        match self.config.steady_refresh {
            SteadyRefresh::PerStep => self.engine.forward(&self.e0),
            SteadyRefresh::PerEpoch => match &self.steady_cache {
                Some(state) => self.engine.forward_with_state(&self.e0, state.clone()),
                None => self.engine.forward(&self.e0),
            },
        }
    }

    /// One full training cycle on `batch`: forward, ranking loss, local
    /// correction on the batch positives, backward, L2 on touched rows,
    /// sparse Adam update.
    pub fn step(&mut self, batch: &BatchTriples) -> Result<StepReport> {
        #[cfg(debug_assertions)]
        batch.validate(self.graph)?;

        let pass = self.forward()?;
        let readout = pass.readout();
        let num_users = self.graph.num_users();

        let (loss_cf, mut grads) = bpr_loss(batch, readout, num_users);
        let loss_lec = if self.config.lec_enabled {
            let index = self.index.expect("checked in new");
            let positives: Vec<(u32, u32)> = batch.positives().collect();
            let (loss, lec_grads) = lec_loss(
                &positives,
                readout,
                index,
                self.graph,
                self.config.lec_normalize_pairs,
            );
            grads.merge_scaled(&lec_grads, R::from_f64(self.config.lambda));
            loss
        } else {
            0.0
        };
        if !loss_cf.is_finite() || !loss_lec.is_finite() {
            return Err(DgrError::NonFinite(format!(
                "loss diverged: loss_cf={loss_cf}, loss_lec={loss_lec}, \
                 |E0|_F={:.6e}",
                self.e0.frobenius_norm()
            )));
        }

        let grad_readout = grads.to_dense(self.graph.num_nodes());
        let mut grad_e0 = self.engine.backward(&pass, &grad_readout)?;

        let (loss_l2, l2_grads) =
            l2_regularizer(&self.e0, grads.touched_rows().collect::<Vec<_>>(), self.config.l2);
        for (row, values) in l2_grads.iter() {
            for (g, &v) in grad_e0.row_mut(row).iter_mut().zip(values.iter()) {
                *g += v;
            }
        }

        let grad_norm = grad_e0.frobenius_norm();
        if !grad_norm.is_finite() {
            return Err(DgrError::NonFinite(format!(
                "gradient diverged: |grad|_F={grad_norm}, loss_cf={loss_cf}, loss_lec={loss_lec}"
            )));
        }

        // Sparse update: only rows with a nonzero gradient advance.
        for row in 0..grad_e0.rows() {
            let g = grad_e0.row(row);
            if g.iter().any(|&v| v != R::zero()) {
                self.adam
                    .update_row(row, g, self.e0.row_mut(row), self.config.lr);
            }
        }

        Ok(StepReport {
            loss_cf,
            loss_lec,
            loss_l2,
            grad_norm,
            triples: batch.len(),
            skipped: batch.skipped(),
        })
    }
}

/// Full training run. The test graph is consumed by evaluation only.
pub fn fit<R: Scalar>(
    config: &TrainConfig,
    train: &InteractionGraph,
    test: &InteractionGraph,
    index: Option<&LecIndex>,
    initial_e0: Option<Mat<R>>,
) -> Result<FitResult<R>> {
    config.validate()?;
    let adj = build_normalized_adjacency(train);

    // Build the co-occurrence index here when the caller did not.
    let built_index: Option<LecIndex> = if config.lec_enabled && index.is_none() {
        Some(LecIndexBuilder::new(config.k1, config.k2, config.theta).build(train))
    } else {
        None
    };
    let index = index.or(built_index.as_ref());

    let mut trainer = Trainer::<R>::new(train, &adj, config, index, initial_e0)?;
    let mut history = History::default();
    let mut best_recall = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut best_e0 = trainer.e0().clone();
    let mut evals_since_best = 0usize;
    let mut epochs_run = 0usize;

    // Recall@20 drives checkpointing, so 20 is always evaluated.
    let mut eval_ks = config.eval_ks.clone();
    if !eval_ks.contains(&20) {
        eval_ks.push(20);
    }

    if config.epochs > 0 {
        let sampler = TripleSampler::new(train)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SAMPLER_SEED_SALT);
        let steps_per_epoch = train.num_edges().div_ceil(config.batch_size);

        'training: for epoch in 1..=config.epochs {
            if config.steady_refresh == SteadyRefresh::PerEpoch {
                trainer.refresh_steady();
            }
            let mut cf_sum = 0.0;
            let mut lec_sum = 0.0;
            let mut triple_count = 0usize;
            for _ in 0..steps_per_epoch {
                let batch = sampler.sample_batch(train, config.batch_size, &mut rng);
                if batch.is_empty() {
                    continue;
                }
                let report = trainer.step(&batch)?;
                cf_sum += report.loss_cf;
                lec_sum += report.loss_lec;
                triple_count += report.triples;
            }
            epochs_run = epoch;

            if epoch % config.eval_every == 0 {
                let pass = trainer.forward()?;
                let readout = pass.readout();
                let metrics = evaluate(readout, train, test, &eval_ks);
                let recall20 = metrics.recall_at(20).unwrap_or(f64::NAN);
                let ndcg20 = metrics.ndcg_at(20).unwrap_or(f64::NAN);
                let rd = row_diff(readout).value;
                let denom = triple_count.max(1) as f64;
                history.push(EpochRecord {
                    epoch,
                    loss_cf: cf_sum / denom,
                    loss_lec: lec_sum / denom,
                    recall_at_20: recall20,
                    ndcg_at_20: ndcg20,
                    row_diff: rd,
                });
                if recall20 > best_recall {
                    best_recall = recall20;
                    best_epoch = epoch;
                    best_e0 = trainer.e0().clone();
                    evals_since_best = 0;
                } else {
                    evals_since_best += 1;
                    if config.patience > 0 && evals_since_best >= config.patience {
                        log::info!(
                            "early stop at epoch {epoch}: no Recall@20 improvement in \
                             {evals_since_best} evaluations"
                        );
                        break 'training;
                    }
                }
            }
        }
    }

    if !best_recall.is_finite() {
        // No evaluation ever ran; the final embeddings are the checkpoint.
        best_e0 = trainer.e0().clone();
        best_recall = f64::NAN;
    }
    Ok(FitResult {
        best_e0,
        final_e0: trainer.e0().clone(),
        history,
        best_recall,
        best_epoch,
        epochs_run,
    })
}
