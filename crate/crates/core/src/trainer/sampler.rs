//! Uniform positive sampling over training edges with rejection-sampled
//! negatives.

use rand::Rng;

use crate::error::{DgrError, Result};
use crate::graph::InteractionGraph;
use crate::losses::BatchTriples;

/// Negative draws per positive before the triple is abandoned.
const MAX_REJECTIONS: usize = 100;

/// Batch sampler bound to one training graph's edge list.
#[derive(Debug, Clone)]
pub struct TripleSampler {
    edges: Vec<(u32, u32)>,
    num_items: usize,
}

impl TripleSampler {
    pub fn new(train: &InteractionGraph) -> Result<Self> {
        if train.num_edges() == 0 {
            return Err(DgrError::EmptyDataset(
                "cannot sample batches from a graph with no edges".into(),
            ));
        }
        Ok(Self {
            edges: train.edges().collect(),
            num_items: train.num_items(),
        })
    }

    /// Draw `batch_size` triples: positives uniform over training edges,
    /// negatives uniform over the user's non-interacted items. Positives
    /// whose user interacts with every item are dropped after
    /// `MAX_REJECTIONS` failed draws and counted in the batch report.
    pub fn sample_batch<G: Rng>(
        &self,
        train: &InteractionGraph,
        batch_size: usize,
        rng: &mut G,
    ) -> BatchTriples {
        let mut triples = Vec::with_capacity(batch_size);
        let mut skipped = 0usize;
        for _ in 0..batch_size {
            let (u, i) = self.edges[rng.gen_range(0..self.edges.len())];
            let mut accepted = None;
            for _ in 0..MAX_REJECTIONS {
                let j = rng.gen_range(0..self.num_items) as u32;
                if !train.has_edge(u as usize, j as usize) {
                    accepted = Some(j);
                    break;
                }
            }
            match accepted {
                Some(j) => triples.push((u, i, j)),
                None => skipped += 1,
            }
        }
        if skipped > 0 {
            log::warn!("negative sampling gave up on {skipped} positive draw(s) in this batch");
        }
        BatchTriples::with_skipped(triples, skipped)
    }
}

/// Convenience wrapper matching the one-shot operation shape; builds the
/// edge list on every call, so training loops should hold a
/// [`TripleSampler`] instead.
pub fn sample_batch<G: Rng>(
    train: &InteractionGraph,
    batch_size: usize,
    rng: &mut G,
) -> Result<BatchTriples> {
    Ok(TripleSampler::new(train)?.sample_batch(train, batch_size, rng))
}
