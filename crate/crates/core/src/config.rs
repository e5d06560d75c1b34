//! Training hyperparameters and their plain-text `key = value` encoding,
//! shared by the run-config file, the checkpoint header and the CLI
//! overrides.

use crate::error::{DgrError, Result};

/// Element type used by the forward/backward pass and the optimizer.
/// Adjacency construction is always double precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Self::F32),
            "f64" => Ok(Self::F64),
            other => Err(DgrError::Config(format!(
                "unknown precision {other:?} (expected f32 or f64)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::F32 => "f32",
            Self::F64 => "f64",
        }
    }
}

/// How often the steady state is recomputed from the current embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SteadyRefresh {
    /// Recompute on every forward pass (the reference behavior).
    #[default]
    PerStep,
    /// Recompute once per epoch (speed studies).
    PerEpoch,
}

impl SteadyRefresh {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "per-step" => Ok(Self::PerStep),
            "per-epoch" => Ok(Self::PerEpoch),
            other => Err(DgrError::Config(format!(
                "unknown steady_refresh {other:?} (expected per-step or per-epoch)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::PerStep => "per-step",
            Self::PerEpoch => "per-epoch",
        }
    }
}

/// Full training configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Propagation layer count K.
    pub layers: usize,
    /// Embedding dimension T.
    pub embedding_dim: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Weight of the local-correction loss in the composite objective.
    pub lambda: f64,
    /// Per-layer perturbation strengths; must have `layers` entries.
    pub alpha: Vec<f64>,
    pub k1: usize,
    pub k2: usize,
    pub theta: usize,
    pub l2: f64,
    pub seed: u64,
    /// Evaluate (and write a history row) every this many epochs.
    pub eval_every: usize,
    pub eval_ks: Vec<usize>,
    pub gmp_enabled: bool,
    pub lec_enabled: bool,
    pub precision: Precision,
    /// Early stopping: evaluations without a Recall@20 improvement before
    /// training halts. 0 disables early stopping.
    pub patience: usize,
    /// Forces single-threaded execution. All built-in paths are already
    /// partition-independent, so this only pins the thread pool size.
    pub deterministic: bool,
    pub differentiate_steady_state: bool,
    pub lec_normalize_pairs: bool,
    pub steady_refresh: SteadyRefresh,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            embedding_dim: 64,
            lr: 1e-3,
            batch_size: 2048,
            epochs: 100,
            lambda: 0.1,
            alpha: vec![0.1, 0.8, 0.1],
            k1: 30,
            k2: 50,
            theta: 50,
            l2: 1e-4,
            seed: 42,
            eval_every: 5,
            eval_ks: vec![20],
            gmp_enabled: true,
            lec_enabled: true,
            precision: Precision::F32,
            patience: 20,
            deterministic: false,
            differentiate_steady_state: false,
            lec_normalize_pairs: false,
            steady_refresh: SteadyRefresh::PerStep,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| DgrError::Config(format!("bad value {value:?} for key {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(DgrError::Config(format!(
            "bad value {value:?} for key {key} (expected true or false)"
        ))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn fmt_list<T: std::fmt::Display>(values: &[T]) -> String {
    values
        .iter()
        .map(T::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl TrainConfig {
    /// Apply one `key = value` setting. Returns `Ok(false)` when the key is
    /// not a training key (callers may own additional keys).
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "layers" => self.layers = parse_num(key, value)?,
            "embedding_dim" => self.embedding_dim = parse_num(key, value)?,
            "lr" => self.lr = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "lambda" => self.lambda = parse_num(key, value)?,
            "alpha" => self.alpha = parse_list(key, value)?,
            "k1" => self.k1 = parse_num(key, value)?,
            "k2" => self.k2 = parse_num(key, value)?,
            "theta" => self.theta = parse_num(key, value)?,
            "l2" => self.l2 = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "eval_every" => self.eval_every = parse_num(key, value)?,
            "eval_ks" => self.eval_ks = parse_list(key, value)?,
            "gmp_enabled" => self.gmp_enabled = parse_bool(key, value)?,
            "lec_enabled" => self.lec_enabled = parse_bool(key, value)?,
            "precision" => self.precision = Precision::parse(value.trim())?,
            "patience" => self.patience = parse_num(key, value)?,
            "deterministic" => self.deterministic = parse_bool(key, value)?,
            "differentiate_steady_state" => {
                self.differentiate_steady_state = parse_bool(key, value)?
            }
            "lec_normalize_pairs" => self.lec_normalize_pairs = parse_bool(key, value)?,
            "steady_refresh" => self.steady_refresh = SteadyRefresh::parse(value.trim())?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// All settings as `(key, value)` pairs, in a fixed order.
    pub fn to_kv(&self) -> Vec<(&'static str, String)> {
        vec![
            ("layers", self.layers.to_string()),
            ("embedding_dim", self.embedding_dim.to_string()),
            ("lr", self.lr.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("lambda", self.lambda.to_string()),
            ("alpha", fmt_list(&self.alpha)),
            ("k1", self.k1.to_string()),
            ("k2", self.k2.to_string()),
            ("theta", self.theta.to_string()),
            ("l2", self.l2.to_string()),
            ("seed", self.seed.to_string()),
            ("eval_every", self.eval_every.to_string()),
            ("eval_ks", fmt_list(&self.eval_ks)),
            ("gmp_enabled", self.gmp_enabled.to_string()),
            ("lec_enabled", self.lec_enabled.to_string()),
            ("precision", self.precision.name().to_string()),
            ("patience", self.patience.to_string()),
            ("deterministic", self.deterministic.to_string()),
            (
                "differentiate_steady_state",
                self.differentiate_steady_state.to_string(),
            ),
            ("lec_normalize_pairs", self.lec_normalize_pairs.to_string()),
            ("steady_refresh", self.steady_refresh.name().to_string()),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(DgrError::Config("layers must be >= 1".into()));
        }
        if self.embedding_dim == 0 {
            return Err(DgrError::Config("embedding_dim must be >= 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(DgrError::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(DgrError::Config("batch_size must be >= 1".into()));
        }
        if self.eval_every == 0 {
            return Err(DgrError::Config("eval_every must be >= 1".into()));
        }
        if self.lambda < 0.0 || self.l2 < 0.0 {
            return Err(DgrError::Config("lambda and l2 must be >= 0".into()));
        }
        if self.alpha.len() != self.layers {
            return Err(DgrError::Config(format!(
                "alpha has {} entries for {} layers",
                self.alpha.len(),
                self.layers
            )));
        }
        if self.alpha.iter().any(|&a| !a.is_finite() || a < 0.0) {
            return Err(DgrError::Config("alpha entries must be finite and >= 0".into()));
        }
        if self.eval_ks.is_empty() || self.eval_ks.iter().any(|&k| k == 0) {
            return Err(DgrError::Config("eval_ks must be nonempty positive".into()));
        }
        Ok(())
    }
}
