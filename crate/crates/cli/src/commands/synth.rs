//! `dgr synth`: write a seeded synthetic implicit-feedback dataset in
//! pair-list format, for self-contained experiments.

use std::path::Path;

use dgr_core::synth::{generate, SynthConfig};
use dgr_core::write_pair_list;

pub fn run(
    out: &Path,
    users: usize,
    items: usize,
    interactions: usize,
    clusters: usize,
    seed: u64,
) -> anyhow::Result<()> {
    let config = SynthConfig {
        num_users: users,
        num_items: items,
        target_interactions: interactions,
        clusters,
        seed,
        ..SynthConfig::default()
    };
    let graph = generate(&config)?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    write_pair_list(&graph, out)?;
    println!(
        "wrote {} interactions ({} users x {} items) to {}",
        graph.num_edges(),
        graph.num_users(),
        graph.num_items(),
        out.display()
    );
    Ok(())
}
