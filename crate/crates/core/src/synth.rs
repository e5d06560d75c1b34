//! Seeded synthetic implicit-feedback generator for desk-scale
//! experiments: cluster-structured user-item affinity with a power-law
//! popularity skew, loosely shaped like the public movie-rating corpora.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::InteractionGraph;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub num_users: usize,
    pub num_items: usize,
    /// Approximate interaction count before deduplication.
    pub target_interactions: usize,
    pub clusters: usize,
    /// Popularity follows `rank^-exponent`.
    pub popularity_exponent: f64,
    /// Multiplier on an item's draw weight inside the user's cluster.
    pub affinity: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_users: 900,
            num_items: 1700,
            target_interactions: 100_000,
            clusters: 12,
            popularity_exponent: 0.8,
            affinity: 8.0,
            seed: 1,
        }
    }
}

/// Generate a bipartite interaction graph. Deterministic per config.
pub fn generate(config: &SynthConfig) -> Result<InteractionGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let items = config.num_items;
    let users = config.num_users;
    let clusters = config.clusters.max(1);

    // Popularity by a random rank permutation.
    let mut ranks: Vec<usize> = (1..=items).collect();
    for i in (1..ranks.len()).rev() {
        let j = rng.gen_range(0..=i);
        ranks.swap(i, j);
    }
    let popularity: Vec<f64> = ranks
        .iter()
        .map(|&r| (r as f64).powf(-config.popularity_exponent))
        .collect();
    let item_cluster: Vec<usize> = (0..items).map(|_| rng.gen_range(0..clusters)).collect();
    let user_cluster: Vec<usize> = (0..users).map(|_| rng.gen_range(0..clusters)).collect();

    // Per-cluster cumulative draw weights.
    let cumulative: Vec<Vec<f64>> = (0..clusters)
        .map(|c| {
            let mut acc = 0.0;
            popularity
                .iter()
                .enumerate()
                .map(|(i, &p)| {
                    let boost = if item_cluster[i] == c { config.affinity } else { 1.0 };
                    acc += p * boost;
                    acc
                })
                .collect()
        })
        .collect();

    // Lognormal degree profile with unit mean.
    let mean_degree = config.target_interactions as f64 / users as f64;
    let sigma = 0.6f64;
    let mu = -sigma * sigma / 2.0;
    let degrees: Vec<usize> = (0..users)
        .map(|_| {
            let z: f64 = sample_standard_normal(&mut rng);
            let factor = (mu + sigma * z).exp();
            ((mean_degree * factor).round() as usize).clamp(5, items / 2)
        })
        .collect();

    let mut edges = Vec::with_capacity(config.target_interactions + users);
    let mut picked = vec![false; items];
    for u in 0..users {
        let weights = &cumulative[user_cluster[u]];
        let total = *weights.last().unwrap();
        let mut chosen = Vec::with_capacity(degrees[u]);
        let mut guard = 0usize;
        while chosen.len() < degrees[u] && guard < degrees[u] * 50 {
            guard += 1;
            let x = rng.gen_range(0.0..total);
            let i = weights.partition_point(|&w| w <= x).min(items - 1);
            if !picked[i] {
                picked[i] = true;
                chosen.push(i);
            }
        }
        for &i in &chosen {
            picked[i] = false;
            edges.push((u as u32, i as u32));
        }
    }
    InteractionGraph::from_edges(users, items, &edges)
}

fn sample_standard_normal<G: Rng>(rng: &mut G) -> f64 {
    // Box-Muller; one value per call keeps the stream simple.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
