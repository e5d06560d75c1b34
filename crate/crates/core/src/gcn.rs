//! Linear message-passing engine: plain propagation or the desmoothing
//! variant that perturbs each layer away from the steady state, plus the
//! exact hand-written backward pass to the trainable layer-0 embeddings.
//!
//! One propagation layer computes `e = (1+alpha) * A*e_prev - alpha * m`
//! where `m` is the node's over-smoothing point. With `alpha = 0` this is
//! exactly the plain backbone. The readout is the uniform mean of all
//! layer outputs including layer 0.

use crate::adjacency::NormalizedAdjacency;
use crate::error::{DgrError, Result};
use crate::graph::InteractionGraph;
use crate::linalg::{dot, Mat, Scalar};
use crate::oversmooth::OverSmoothingState;

/// Per-layer perturbation strengths `alpha_1..alpha_K`, all nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct GmpSchedule {
    alpha: Vec<f64>,
}

impl GmpSchedule {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        for (k, &a) in alpha.iter().enumerate() {
            if !a.is_finite() || a < 0.0 {
                return Err(DgrError::InvalidArgument(format!(
                    "alpha[{k}] = {a} must be finite and >= 0"
                )));
            }
        }
        Ok(Self { alpha })
    }

    pub fn zeros(layers: usize) -> Self {
        Self {
            alpha: vec![0.0; layers],
        }
    }

    pub fn uniform(layers: usize, alpha: f64) -> Result<Self> {
        Self::new(vec![alpha; layers])
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }
}

/// One desmoothing propagation step: `(1+alpha) * A*e_prev - alpha * M`,
/// with `M` materialized row-wise from the rank-1 state.
pub fn gmp_step<R: Scalar>(
    adj: &NormalizedAdjacency,
    e_prev: &Mat<R>,
    state: &OverSmoothingState,
    alpha: f64,
) -> Result<Mat<R>> {
    if !(alpha >= 0.0) {
        return Err(DgrError::InvalidArgument(format!(
            "gmp_step: alpha = {alpha} must be >= 0"
        )));
    }
    let mut out = adj.spmm(e_prev)?;
    apply_gmp_in_place(&mut out, state, alpha);
    Ok(out)
}

fn apply_gmp_in_place<R: Scalar>(propagated: &mut Mat<R>, state: &OverSmoothingState, alpha: f64) {
    let one_plus = R::from_f64(1.0 + alpha);
    for a in 0..propagated.rows() {
        let f = alpha * state.weight(a) / state.normalizer();
        let row = propagated.row_mut(a);
        for (j, v) in row.iter_mut().enumerate() {
            let m = R::from_f64(f * state.s_component(j));
            *v = one_plus * *v - m;
        }
    }
}

/// Initial-residual comparison step: `A*e_prev + alpha * (e0 - A*e_prev)`.
pub fn residual_step<R: Scalar>(
    adj: &NormalizedAdjacency,
    e_prev: &Mat<R>,
    e0: &Mat<R>,
    alpha: f64,
) -> Result<Mat<R>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(DgrError::InvalidArgument(format!(
            "residual_step: alpha = {alpha} must lie in [0, 1]"
        )));
    }
    if e0.rows() != e_prev.rows() || e0.cols() != e_prev.cols() {
        return Err(DgrError::DimensionMismatch(
            "residual_step: e0 and e_prev shapes differ".into(),
        ));
    }
    let mut out = adj.spmm(e_prev)?;
    let a = R::from_f64(alpha);
    let keep = R::from_f64(1.0 - alpha);
    for (o, &init) in out.data_mut().iter_mut().zip(e0.data().iter()) {
        *o = keep * *o + a * init;
    }
    Ok(out)
}

/// Forward-pass cache: all layer outputs, the readout, and the steady
/// state the pass was computed against.
#[derive(Debug, Clone)]
pub struct EmbeddingState<R> {
    layers: Vec<Mat<R>>,
    readout: Mat<R>,
    state: OverSmoothingState,
}

impl<R: Scalar> EmbeddingState<R> {
    /// Number of propagation layers (excludes layer 0).
    pub fn num_layers(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn layer(&self, k: usize) -> &Mat<R> {
        &self.layers[k]
    }

    pub fn layers(&self) -> &[Mat<R>] {
        &self.layers
    }

    pub fn readout(&self) -> &Mat<R> {
        &self.readout
    }

    pub fn steady_state(&self) -> &OverSmoothingState {
        &self.state
    }
}

/// Propagation engine bound to one graph and one operator.
pub struct GcnEngine<'g> {
    graph: &'g InteractionGraph,
    adj: &'g NormalizedAdjacency,
    layers: usize,
    schedule: Option<GmpSchedule>,
    differentiate_steady_state: bool,
}

impl<'g> GcnEngine<'g> {
    pub fn new(
        graph: &'g InteractionGraph,
        adj: &'g NormalizedAdjacency,
        layers: usize,
        schedule: Option<GmpSchedule>,
    ) -> Result<Self> {
        if layers == 0 {
            return Err(DgrError::InvalidArgument("layer count must be >= 1".into()));
        }
        if let Some(s) = &schedule {
            if s.len() != layers {
                return Err(DgrError::InvalidArgument(format!(
                    "schedule has {} entries for {layers} layers",
                    s.len()
                )));
            }
        }
        Ok(Self {
            graph,
            adj,
            layers,
            schedule,
            differentiate_steady_state: false,
        })
    }

    /// Propagate gradients through the steady state's dependence on the
    /// layer-0 embeddings instead of treating it as a constant target.
    pub fn with_differentiated_steady_state(mut self, on: bool) -> Self {
        self.differentiate_steady_state = on;
        self
    }

    pub fn num_layers(&self) -> usize {
        self.layers
    }

    pub fn schedule(&self) -> Option<&GmpSchedule> {
        self.schedule.as_ref()
    }

    fn alpha_at(&self, layer: usize) -> f64 {
        self.schedule.as_ref().map_or(0.0, |s| s.alpha()[layer - 1])
    }

    /// Full forward pass; the steady state is recomputed from the current
    /// `e0` on every call.
    pub fn forward<R: Scalar>(&self, e0: &Mat<R>) -> Result<EmbeddingState<R>> {
        let state = OverSmoothingState::compute(self.graph, e0);
        self.forward_with_state(e0, state)
    }

    /// Forward pass against an explicitly supplied steady state. Training
    /// always recomputes the state; this entry point exists for diagnostics
    /// and for oracles that need the state frozen at a base point.
    pub fn forward_with_state<R: Scalar>(
        &self,
        e0: &Mat<R>,
        state: OverSmoothingState,
    ) -> Result<EmbeddingState<R>> {
        if e0.rows() != self.adj.n() {
            return Err(DgrError::DimensionMismatch(format!(
                "forward: e0 has {} rows, graph has {} nodes",
                e0.rows(),
                self.adj.n()
            )));
        }
        let mut layers = Vec::with_capacity(self.layers + 1);
        layers.push(e0.clone());
        for k in 1..=self.layers {
            let prev = layers.last().unwrap();
            let next = match &self.schedule {
                Some(_) => {
                    let mut out = self.adj.spmm(prev)?;
                    apply_gmp_in_place(&mut out, &state, self.alpha_at(k));
                    out
                }
                None => self.adj.spmm(prev)?,
            };
            layers.push(next);
        }
        let mut readout = Mat::<R>::zeros(e0.rows(), e0.cols());
        for layer in &layers {
            readout.add_scaled(layer, R::one());
        }
        readout.scale(R::from_f64(1.0 / (self.layers as f64 + 1.0)));
        Ok(EmbeddingState {
            layers,
            readout,
            state,
        })
    }

    /// Gradient of a scalar loss with respect to `e0`, given the loss
    /// gradient with respect to the readout.
    ///
    /// The steady state is treated as a constant of the step unless
    /// `differentiate_steady_state` is set, in which case the rank-1
    /// coupling term is added.
    pub fn backward<R: Scalar>(
        &self,
        cache: &EmbeddingState<R>,
        grad_readout: &Mat<R>,
    ) -> Result<Mat<R>> {
        if cache.num_layers() != self.layers {
            return Err(DgrError::InvalidArgument(format!(
                "backward: cache has {} layers, engine has {}",
                cache.num_layers(),
                self.layers
            )));
        }
        if grad_readout.rows() != self.adj.n() || grad_readout.cols() != cache.readout.cols() {
            return Err(DgrError::DimensionMismatch(
                "backward: grad_readout shape does not match the cache".into(),
            ));
        }
        let state = &cache.state;
        let inv = R::from_f64(1.0 / (self.layers as f64 + 1.0));
        // g holds dL/dE^(k), starting at the top layer.
        let mut g = grad_readout.clone();
        g.scale(inv);
        // Accumulated rank-1 coupling (only with differentiate_steady_state).
        let mut steady_acc = vec![0.0f64; grad_readout.cols()];
        for k in (1..=self.layers).rev() {
            let alpha = self.alpha_at(k);
            if self.differentiate_steady_state && alpha != 0.0 {
                // dE^(k)/dE0 carries -alpha/c * w w^T; fold w^T g into the
                // accumulator and expand once at the end.
                let f = -alpha / state.normalizer();
                for a in 0..g.rows() {
                    let wa = state.weight(a);
                    for (acc, &v) in steady_acc.iter_mut().zip(g.row(a).iter()) {
                        *acc += f * wa * v.to_f64();
                    }
                }
            }
            g = self.adj.spmm(&g)?;
            let scale = R::from_f64(1.0 + alpha);
            g.scale(scale);
            g.add_scaled(grad_readout, inv);
        }
        if self.differentiate_steady_state {
            for a in 0..g.rows() {
                let wa = state.weight(a);
                for (v, &acc) in g.row_mut(a).iter_mut().zip(steady_acc.iter()) {
                    *v += R::from_f64(wa * acc);
                }
            }
        }
        Ok(g)
    }
}

/// Ranking score: inner product of a user row and an item row of the
/// readout (items live at global index `num_users + i`).
pub fn predict<R: Scalar>(readout: &Mat<R>, num_users: usize, u: usize, i: usize) -> Result<R> {
    let item_row = num_users + i;
    if u >= num_users || item_row >= readout.rows() {
        return Err(DgrError::InvalidArgument(format!(
            "predict: (u={u}, i={i}) out of range"
        )));
    }
    Ok(dot(readout.row(u), readout.row(item_row)))
}
