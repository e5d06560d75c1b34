//! `dgr prepare`: load (and optionally split) the dataset, persist the
//! co-occurrence index and the load report.

use anyhow::Context;
use dgr_core::{
    load_interactions, split_train_test, write_pair_list, DgrError, LecIndexBuilder,
};

use super::{ensure_out_dir, load_split, refuse_overwrite};
use crate::run_config::RunConfig;

pub fn run(config: &RunConfig, force: bool) -> anyhow::Result<()> {
    ensure_out_dir(config)?;
    let report_path = config.out_dir.join("load_report.txt");
    let index_txt = config.out_dir.join("lec_index.txt");
    let index_bin = config.out_dir.join("lec_index.bin");
    for p in [&report_path, &index_txt, &index_bin] {
        refuse_overwrite(p, force)?;
    }

    let (train, report_text) = if let Some(data_file) = &config.data_file {
        // Unsplit input: split here and persist both halves.
        let train_out = config.out_dir.join("train.txt");
        let test_out = config.out_dir.join("test.txt");
        refuse_overwrite(&train_out, force)?;
        refuse_overwrite(&test_out, force)?;
        let (graph, report) = load_interactions(data_file, config.format)
            .with_context(|| format!("loading {}", data_file.display()))?;
        let (train, test) = split_train_test(&graph, config.split_ratio, config.train.seed)?;
        write_pair_list(&train, &train_out)?;
        write_pair_list(&test, &test_out)?;
        let text = format!(
            "{report}split_ratio: {}\nsplit_seed: {}\ntrain_edges: {}\ntest_edges: {}\n",
            config.split_ratio,
            config.train.seed,
            train.num_edges(),
            test.num_edges()
        );
        (train, text)
    } else if config.train_file.is_some() {
        let (train, _) = load_split(config)?;
        let (_, report) = load_interactions(config.train_file.as_ref().unwrap(), config.format)?;
        (train, report.to_string())
    } else {
        return Err(DgrError::Config(
            "prepare needs either data_file (to split) or train_file/test_file".into(),
        )
        .into());
    };

    let index = LecIndexBuilder::new(config.train.k1, config.train.k2, config.train.theta)
        .build(&train);
    index.save_text(&index_txt)?;
    index.save_binary(&index_bin)?;
    std::fs::write(&report_path, &report_text)?;
    log::info!(
        "prepared: {} items with active neighbor sets, outputs in {}",
        index.active_items(),
        config.out_dir.display()
    );
    println!("{report_text}");
    Ok(())
}
