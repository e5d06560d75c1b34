//! Desmoothed graph collaborative filtering at desk scale.
//!
//! A linear message-passing recommender (normalized-adjacency propagation
//! with mean layer combination, BPR training) plus two desmoothing
//! plug-ins: a per-layer perturbation that pushes embeddings away from the
//! propagation steady state, and an auxiliary loss that pulls users toward
//! items strongly co-occurring with their clicked items while pushing away
//! weak co-occurrences. Includes the over-smoothing diagnostics
//! (steady-state distance curve, mean pairwise row distance) used to
//! verify the desmoothing effect.

pub mod adjacency;
pub mod config;
pub mod error;
pub mod eval;
pub mod gcn;
pub mod graph;
pub mod linalg;
pub mod losses;
pub mod oversmooth;
pub mod synth;
pub mod trainer;

pub use adjacency::{build_normalized_adjacency, NormalizedAdjacency};
pub use config::{Precision, SteadyRefresh, TrainConfig};
pub use error::{DgrError, Result};
pub use eval::{evaluate, ndcg_at_k, rank_items, recall_at_k, MetricsReport};
pub use gcn::{gmp_step, predict, residual_step, EmbeddingState, GcnEngine, GmpSchedule};
pub use graph::{
    load_interactions, load_split_pair, split_train_test, write_pair_list, DatasetFormat,
    InteractionGraph, LoadReport,
};
pub use linalg::{Mat, Scalar};
pub use losses::{
    bpr_loss, l2_regularizer, lec_loss, total_loss, BatchTriples, LecIndex, LecIndexBuilder,
    RowGrads,
};
pub use oversmooth::{
    compute_oversmoothing_state, distance_curve, mean_distance_to_m, power_iterate_reference,
    row_diff, row_diff_exact, row_diff_sampled, OverSmoothingState, RowDiff,
};
pub use trainer::{
    checkpoint_load, checkpoint_save, fit, init_embeddings, sample_batch, AdamState, Checkpoint,
    EpochRecord, FitResult, History, StepReport, Trainer, TripleSampler,
};
