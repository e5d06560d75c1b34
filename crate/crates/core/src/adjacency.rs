//! Symmetrically normalized adjacency operator with self-loops, stored as
//! CSR over the `num_users + num_items` node space.
//!
//! For node `a` with degree `d_a` the diagonal entry is `1/(d_a+1)` and the
//! entry for an interaction edge `(a, b)` is `1/sqrt((d_a+1)(d_b+1))`. The
//! vector `v_a = sqrt(d_a+1)` is an exact eigenvector with eigenvalue 1,
//! which pins the propagation steady state analyzed in [`crate::oversmooth`].

use rayon::prelude::*;

use crate::error::{DgrError, Result};
use crate::graph::InteractionGraph;
use crate::linalg::{Mat, Scalar};

/// Sparse symmetric propagation operator. Values are always stored in double
/// precision; `spmm` casts per entry into the embedding element type.
#[derive(Debug, Clone)]
pub struct NormalizedAdjacency {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

/// Build the normalized adjacency of an interaction graph.
pub fn build_normalized_adjacency(graph: &InteractionGraph) -> NormalizedAdjacency {
    let nu = graph.num_users();
    let n = graph.num_nodes();
    let nnz = 2 * graph.num_edges() + n;

    let inv_dp1: Vec<f64> = (0..n)
        .map(|a| 1.0 / (graph.node_degree(a) as f64 + 1.0))
        .collect();

    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(nnz);
    let mut values = Vec::with_capacity(nnz);
    row_ptr.push(0);

    // User rows: diagonal comes first because u < nu <= item columns.
    for u in 0..nu {
        col_idx.push(u as u32);
        values.push(inv_dp1[u]);
        for &i in graph.user_items(u) {
            let col = nu + i as usize;
            col_idx.push(col as u32);
            values.push((inv_dp1[u] * inv_dp1[col]).sqrt());
        }
        row_ptr.push(col_idx.len());
    }
    // Item rows: user columns first, diagonal last.
    for i in 0..graph.num_items() {
        let row = nu + i;
        for &u in graph.item_users(i) {
            col_idx.push(u);
            values.push((inv_dp1[row] * inv_dp1[u as usize]).sqrt());
        }
        col_idx.push(row as u32);
        values.push(inv_dp1[row]);
        row_ptr.push(col_idx.len());
    }
    debug_assert_eq!(col_idx.len(), nnz);

    NormalizedAdjacency {
        n,
        row_ptr,
        col_idx,
        values,
    }
}

impl NormalizedAdjacency {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn entry(&self, a: usize, b: usize) -> f64 {
        let lo = self.row_ptr[a];
        let hi = self.row_ptr[a + 1];
        match self.col_idx[lo..hi].binary_search(&(b as u32)) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    /// Sparse-dense product `A * dense`, one output row per node.
    ///
    /// Parallelizes over output rows; every row only reads the input, so the
    /// result is independent of thread count and block partitioning.
    pub fn spmm<R: Scalar>(&self, dense: &Mat<R>) -> Result<Mat<R>> {
        if dense.rows() != self.n {
            return Err(DgrError::DimensionMismatch(format!(
                "spmm: operator is {0}x{0} but input has {1} rows",
                self.n,
                dense.rows()
            )));
        }
        let cols = dense.cols();
        let mut out = Mat::<R>::zeros(self.n, cols);
        out.par_rows_mut().enumerate().for_each(|(a, out_row)| {
            let lo = self.row_ptr[a];
            let hi = self.row_ptr[a + 1];
            for k in lo..hi {
                let w = R::from_f64(self.values[k]);
                let src = dense.row(self.col_idx[k] as usize);
                for (o, &s) in out_row.iter_mut().zip(src.iter()) {
                    *o += w * s;
                }
            }
        });
        Ok(out)
    }

    /// Dense copy for small-graph diagnostics and brute-force tests.
    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.n, self.n);
        for a in 0..self.n {
            for k in self.row_ptr[a]..self.row_ptr[a + 1] {
                m.set(a, self.col_idx[k] as usize, self.values[k]);
            }
        }
        m
    }
}
