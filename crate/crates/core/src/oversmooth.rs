//! Closed-form propagation steady state and the diagnostics built on it.
//!
//! Repeated application of the normalized adjacency drives every embedding
//! row toward a common rank-1 limit: node `a` converges to
//! `m(a) = (w_a / c) * s` with `w_a = sqrt(d_a + 1)`,
//! `c = 2*num_edges + num_nodes` and `s = sum_a w_a * E0_a`. The limit
//! matrix `M` is never materialized densely; the rank-1 factors make every
//! diagnostic O(n*T).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::adjacency::NormalizedAdjacency;
use crate::error::{DgrError, Result};
use crate::graph::InteractionGraph;
use crate::linalg::{row_distance, Mat, Scalar};

/// Above this row count `row_diff` switches to the sampled estimator.
pub const ROW_DIFF_EXACT_LIMIT: usize = 20_000;

/// Default number of Monte-Carlo pairs for the sampled `row_diff`.
pub const ROW_DIFF_DEFAULT_SAMPLES: usize = 1_000_000;

/// Rank-1 representation of the propagation limit.
///
/// Internals are kept in double precision regardless of the embedding
/// element type so the fixed-point identities stay tight.
#[derive(Debug, Clone)]
pub struct OverSmoothingState {
    /// Normalizer `2*num_edges + num_nodes` (squared norm of `w`).
    c: f64,
    /// Per-node weight `sqrt(degree + 1)`.
    w: Vec<f64>,
    /// Weighted column sum of the initial embeddings, `sum_a w_a * E0_a`.
    s: Vec<f64>,
    /// Connected components of the graph the state was computed from. The
    /// closed form assumes a single component; callers are warned otherwise.
    components: usize,
}

/// Compute the steady state for initial embeddings `e0` on `graph`.
pub fn compute_oversmoothing_state<R: Scalar>(
    graph: &InteractionGraph,
    e0: &Mat<R>,
) -> OverSmoothingState {
    OverSmoothingState::compute(graph, e0)
}

impl OverSmoothingState {
    pub fn compute<R: Scalar>(graph: &InteractionGraph, e0: &Mat<R>) -> Self {
        let n = graph.num_nodes();
        assert_eq!(e0.rows(), n, "embedding rows must match node count");
        let w: Vec<f64> = (0..n)
            .map(|a| (graph.node_degree(a) as f64 + 1.0).sqrt())
            .collect();
        let c = (2 * graph.num_edges() + n) as f64;
        let mut s = vec![0.0; e0.cols()];
        for a in 0..n {
            let row = e0.row(a);
            let wa = w[a];
            for (acc, &v) in s.iter_mut().zip(row.iter()) {
                *acc += wa * v.to_f64();
            }
        }
        let components = graph.component_count();
        if components > 1 {
            log::warn!(
                "steady state computed on a disconnected graph ({components} components); \
                 the closed form assumes a single component"
            );
        }
        OverSmoothingState {
            c,
            w,
            s,
            components,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.w.len()
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }

    pub fn normalizer(&self) -> f64 {
        self.c
    }

    pub fn weight(&self, a: usize) -> f64 {
        self.w[a]
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    /// Component `j` of the weighted column sum `s`.
    pub fn s_component(&self, j: usize) -> f64 {
        self.s[j]
    }

    pub fn components(&self) -> usize {
        self.components
    }

    /// The over-smoothing point of node `a` in double precision.
    pub fn point(&self, a: usize) -> Vec<f64> {
        let f = self.w[a] / self.c;
        self.s.iter().map(|&v| f * v).collect()
    }

    /// Write the over-smoothing point of node `a` into `buf`.
    pub fn point_into<R: Scalar>(&self, a: usize, buf: &mut [R]) {
        debug_assert_eq!(buf.len(), self.s.len());
        let f = self.w[a] / self.c;
        for (o, &v) in buf.iter_mut().zip(self.s.iter()) {
            *o = R::from_f64(f * v);
        }
    }

    /// Materialize the full steady-state matrix (diagnostics only).
    pub fn steady_matrix<R: Scalar>(&self) -> Mat<R> {
        Mat::from_fn(self.w.len(), self.s.len(), |a, j| {
            R::from_f64(self.w[a] / self.c * self.s[j])
        })
    }
}

/// Brute-force oracle: `A^k * e0` by repeated propagation.
pub fn power_iterate_reference<R: Scalar>(
    adj: &NormalizedAdjacency,
    e0: &Mat<R>,
    k: usize,
) -> Result<Mat<R>> {
    let mut cur = e0.clone();
    for _ in 0..k {
        cur = adj.spmm(&cur)?;
    }
    Ok(cur)
}

/// Mean Euclidean distance between the rows of `ek` and the steady state.
pub fn mean_distance_to_m<R: Scalar>(ek: &Mat<R>, state: &OverSmoothingState) -> Result<f64> {
    if ek.rows() != state.num_nodes() || ek.cols() != state.dim() {
        return Err(DgrError::DimensionMismatch(format!(
            "mean_distance_to_m: embeddings are {}x{}, state is {}x{}",
            ek.rows(),
            ek.cols(),
            state.num_nodes(),
            state.dim()
        )));
    }
    let n = ek.rows();
    let mut point = vec![0.0f64; ek.cols()];
    let mut total = 0.0;
    for a in 0..n {
        let f = state.w[a] / state.c;
        for (p, &v) in point.iter_mut().zip(state.s.iter()) {
            *p = f * v;
        }
        let row = ek.row(a);
        let d2: f64 = row
            .iter()
            .zip(point.iter())
            .map(|(&x, &m)| {
                let d = x.to_f64() - m;
                d * d
            })
            .sum();
        total += d2.sqrt();
    }
    Ok(total / n as f64)
}

/// Distances `D(A^k * e0, M)` for `k = 1..=k_max`.
pub fn distance_curve<R: Scalar>(
    adj: &NormalizedAdjacency,
    e0: &Mat<R>,
    state: &OverSmoothingState,
    k_max: usize,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(k_max);
    let mut cur = e0.clone();
    for _ in 1..=k_max {
        cur = adj.spmm(&cur)?;
        out.push(mean_distance_to_m(&cur, state)?);
    }
    Ok(out)
}

/// Mean pairwise row distance; lower values mean stronger over-smoothing.
#[derive(Debug, Clone, Copy)]
pub struct RowDiff {
    pub value: f64,
    /// Standard error of the Monte-Carlo estimate; `None` for the exact mode.
    pub std_error: Option<f64>,
}

impl RowDiff {
    pub fn is_sampled(&self) -> bool {
        self.std_error.is_some()
    }
}

/// `(1/n^2) * sum_{a,b} ||E_a - E_b||_2`, switching to the sampled
/// estimator above [`ROW_DIFF_EXACT_LIMIT`] rows.
pub fn row_diff<R: Scalar>(e: &Mat<R>) -> RowDiff {
    if e.rows() <= ROW_DIFF_EXACT_LIMIT {
        RowDiff {
            value: row_diff_exact(e),
            std_error: None,
        }
    } else {
        row_diff_sampled(e, ROW_DIFF_DEFAULT_SAMPLES, 0)
    }
}

/// Exact O(n^2 * T) mean pairwise distance, including the zero a==b pairs.
pub fn row_diff_exact<R: Scalar>(e: &Mat<R>) -> f64 {
    let n = e.rows();
    if n == 0 {
        return 0.0;
    }
    // Per-row partials collected in row order, then summed sequentially so
    // the result does not depend on the parallel split.
    let partials: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|a| {
            let ra = e.row(a);
            let mut acc = 0.0;
            for b in (a + 1)..n {
                acc += row_distance(ra, e.row(b));
            }
            acc
        })
        .collect();
    let upper: f64 = partials.iter().sum();
    2.0 * upper / (n as f64 * n as f64)
}

/// Monte-Carlo estimate of the mean pairwise distance over `samples`
/// uniformly drawn ordered pairs (including a == b, as in the exact sum).
pub fn row_diff_sampled<R: Scalar>(e: &Mat<R>, samples: usize, seed: u64) -> RowDiff {
    let n = e.rows();
    assert!(n > 0 && samples > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        let d = row_distance(e.row(a), e.row(b));
        sum += d;
        sum_sq += d * d;
    }
    let mean = sum / samples as f64;
    let var = (sum_sq / samples as f64 - mean * mean).max(0.0);
    RowDiff {
        value: mean,
        std_error: Some((var / samples as f64).sqrt()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjacency::build_normalized_adjacency;
    use crate::graph::InteractionGraph;

    fn two_node() -> InteractionGraph {
        InteractionGraph::from_edges(1, 1, &[(0, 0)]).unwrap()
    }

    /// Random connected bipartite graph: every item is wired to some user
    /// and every user to item 0, plus random extras.
    pub(crate) fn random_connected(num_users: usize, num_items: usize, seed: u64) -> InteractionGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for i in 0..num_items as u32 {
            edges.push((i % num_users as u32, i));
        }
        for u in 0..num_users as u32 {
            edges.push((u, 0));
            for i in 0..num_items as u32 {
                if rng.gen_bool(0.3) {
                    edges.push((u, i));
                }
            }
        }
        let g = InteractionGraph::from_edges(num_users, num_items, &edges).unwrap();
        assert_eq!(g.component_count(), 1);
        g
    }

    #[test]
    fn two_node_state_matches_hand_computation() {
        let g = two_node();
        let e0 = Mat::<f64>::from_rows(&[&[1.0, 3.0], &[5.0, -1.0]]);
        let st = OverSmoothingState::compute(&g, &e0);
        assert_eq!(st.normalizer(), 4.0);
        assert!((st.weight(0) - 2.0_f64.sqrt()).abs() < 1e-15);
        // m(u) = m(i) = (e_u + e_i) / 2
        let m = st.point(0);
        assert!((m[0] - 3.0).abs() < 1e-12);
        assert!((m[1] - 1.0).abs() < 1e-12);
        let mi = st.point(1);
        assert_eq!(m, mi);
    }

    #[test]
    fn zero_embeddings_give_zero_state() {
        let g = random_connected(4, 5, 1);
        let e0 = Mat::<f64>::zeros(g.num_nodes(), 3);
        let st = OverSmoothingState::compute(&g, &e0);
        let m = st.steady_matrix::<f64>();
        assert_eq!(m.frobenius_norm(), 0.0);
    }

    #[test]
    fn state_matches_long_power_iteration() {
        let g = random_connected(3, 5, 7);
        assert_eq!(g.component_count(), 1);
        let adj = build_normalized_adjacency(&g);
        let e0 = Mat::<f64>::from_fn(g.num_nodes(), 4, |r, c| {
            ((r * 17 + c * 5) % 13) as f64 / 6.0 - 1.0
        });
        let st = OverSmoothingState::compute(&g, &e0);
        let limit = power_iterate_reference(&adj, &e0, 500).unwrap();
        assert!(limit.max_abs_diff(&st.steady_matrix()) < 1e-6);
    }

    #[test]
    fn power_iterate_k0_is_identity() {
        let g = two_node();
        let adj = build_normalized_adjacency(&g);
        let e0 = Mat::<f64>::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(power_iterate_reference(&adj, &e0, 0).unwrap(), e0);
    }

    #[test]
    fn power_iterate_two_node_k1_averages() {
        let g = two_node();
        let adj = build_normalized_adjacency(&g);
        let e0 = Mat::<f64>::from_rows(&[&[2.0, 0.0], &[0.0, 4.0]]);
        let e1 = power_iterate_reference(&adj, &e0, 1).unwrap();
        assert_eq!(e1.row(0), &[1.0, 2.0]);
        assert_eq!(e1.row(1), &[1.0, 2.0]);
    }

    #[test]
    fn power_iterate_converges_to_state() {
        let g = random_connected(4, 6, 11);
        let adj = build_normalized_adjacency(&g);
        let e0 = Mat::<f64>::from_fn(g.num_nodes(), 3, |r, c| ((r + 2 * c) % 7) as f64 - 3.0);
        let st = OverSmoothingState::compute(&g, &e0);
        let e200 = power_iterate_reference(&adj, &e0, 200).unwrap();
        assert!(e200.max_abs_diff(&st.steady_matrix()) < 1e-8);
    }

    #[test]
    fn steady_matrix_is_propagation_fixed_point() {
        let g = random_connected(5, 4, 3);
        let adj = build_normalized_adjacency(&g);
        let e0 = Mat::<f64>::from_fn(g.num_nodes(), 3, |r, c| (r as f64 - c as f64) / 3.0);
        let st = OverSmoothingState::compute(&g, &e0);
        let m: Mat<f64> = st.steady_matrix();
        let am = adj.spmm(&m).unwrap();
        assert!(am.max_abs_diff(&m) < 1e-10);
    }

    #[test]
    fn mean_distance_examples() {
        let g = two_node();
        let e0 = Mat::<f64>::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let st = OverSmoothingState::compute(&g, &e0);
        // E == M exactly (constant embedding is its own steady state here).
        let m: Mat<f64> = st.steady_matrix();
        assert_eq!(mean_distance_to_m(&m, &st).unwrap(), 0.0);

        // Rows offset from m by (3,4) and (0,0): mean distance (5+0)/2.
        let mut shifted = m.clone();
        shifted.row_mut(0)[0] += 3.0;
        shifted.row_mut(0)[1] += 4.0;
        assert!((mean_distance_to_m(&shifted, &st).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn mean_distance_dimension_mismatch() {
        let g = two_node();
        let e0 = Mat::<f64>::zeros(2, 2);
        let st = OverSmoothingState::compute(&g, &e0);
        let bad = Mat::<f64>::zeros(3, 2);
        assert!(mean_distance_to_m(&bad, &st).is_err());
    }

    #[test]
    fn distance_curve_is_non_increasing() {
        let g = random_connected(5, 6, 21);
        let adj = build_normalized_adjacency(&g);
        let e0 = Mat::<f64>::from_fn(g.num_nodes(), 4, |r, c| {
            ((r * 31 + c * 17) % 23) as f64 / 11.0 - 1.0
        });
        let st = OverSmoothingState::compute(&g, &e0);
        let curve = distance_curve(&adj, &e0, &st, 20).unwrap();
        assert_eq!(curve.len(), 20);
        for w in curve.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "distance increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn row_diff_examples() {
        let constant = Mat::<f64>::from_fn(4, 3, |_, _| 2.5);
        assert_eq!(row_diff_exact(&constant), 0.0);

        let two = Mat::<f64>::from_rows(&[&[0.0, 0.0], &[3.0, 4.0]]);
        assert!((row_diff_exact(&two) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn row_diff_translation_invariant() {
        let e = Mat::<f64>::from_fn(6, 3, |r, c| ((r * 7 + c * 3) % 5) as f64);
        let t = [10.0, -4.0, 0.25];
        let shifted = Mat::<f64>::from_fn(6, 3, |r, c| e.get(r, c) + t[c]);
        assert!((row_diff_exact(&e) - row_diff_exact(&shifted)).abs() < 1e-10);
    }

    #[test]
    fn row_diff_sampled_tracks_exact() {
        let e = Mat::<f64>::from_fn(30, 4, |r, c| ((r * 13 + c * 7) % 19) as f64 / 5.0);
        let exact = row_diff_exact(&e);
        let est = row_diff_sampled(&e, 200_000, 9);
        let se = est.std_error.unwrap();
        assert!(
            (est.value - exact).abs() < 5.0 * se,
            "estimate {} vs exact {exact} (se {se})",
            est.value
        );
    }

    #[test]
    fn state_scale_equivariance() {
        let g = random_connected(4, 4, 5);
        let e0 = Mat::<f64>::from_fn(g.num_nodes(), 3, |r, c| (r + c) as f64 / 4.0 - 0.5);
        let mut scaled = e0.clone();
        scaled.scale(3.25);
        let m1: Mat<f64> = OverSmoothingState::compute(&g, &e0).steady_matrix();
        let mut m1s = m1;
        m1s.scale(3.25);
        let m2: Mat<f64> = OverSmoothingState::compute(&g, &scaled).steady_matrix();
        assert!(m1s.max_abs_diff(&m2) < 1e-12);
    }

    #[test]
    fn disconnected_graph_is_flagged() {
        let g = InteractionGraph::from_edges(2, 2, &[(0, 0), (1, 1)]).unwrap();
        let e0 = Mat::<f64>::zeros(4, 2);
        let st = OverSmoothingState::compute(&g, &e0);
        assert_eq!(st.components(), 2);
    }

    #[test]
    fn densified_limit_is_rank_one() {
        // Entry formula sqrt((d_a+1)(d_b+1)) / c against the w w^T / c product.
        let g = random_connected(6, 9, 13);
        let n = g.num_nodes();
        let c = (2 * g.num_edges() + n) as f64;
        let w: Vec<f64> = (0..n).map(|a| (g.node_degree(a) as f64 + 1.0).sqrt()).collect();
        for a in 0..n {
            for b in 0..n {
                let eq = ((g.node_degree(a) as f64 + 1.0) * (g.node_degree(b) as f64 + 1.0)).sqrt() / c;
                let rank1 = w[a] * w[b] / c;
                assert!((eq - rank1).abs() < 1e-14);
            }
        }
    }
}
