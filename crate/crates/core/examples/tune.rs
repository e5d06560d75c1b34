// scratch harness for sizing the desk-scale experiment (not committed)
use dgr_core::synth::{generate, SynthConfig};
use dgr_core::*;
use std::time::Instant;

fn run(tag: &str, train: &InteractionGraph, test: &InteractionGraph, alpha: f64, lambda: f64, lec: bool, index: Option<&LecIndex>) {
    let config = TrainConfig {
        layers: 3, embedding_dim: 16, lr: 5e-3, batch_size: 2048, epochs: 120,
        eval_every: 10, alpha: vec![alpha; 3], gmp_enabled: alpha > 0.0, lec_enabled: lec,
        lambda, k1: 10, k2: 10, theta: 10,
        patience: 0, seed: 1, l2: 1e-4, ..TrainConfig::default()
    };
    let t = Instant::now();
    let result = fit::<f32>(&config, train, test, index, None).unwrap();
    print!("{tag:24} ({:5.1?}):", t.elapsed());
    for r in result.history.records() {
        print!(" {:.4}", r.recall_at_20);
    }
    println!("  | best {:.4} @ {}  rd {:.3}", result.best_recall, result.best_epoch,
        result.history.records().iter().find(|r| r.epoch == result.best_epoch).map(|r| r.row_diff).unwrap_or(0.0));
}

fn main() {
    let data = generate(&SynthConfig { seed: 2024, ..SynthConfig::default() }).unwrap();
    let (train, test) = split_train_test(&data, 0.8, 1).unwrap();
    let index = LecIndexBuilder::new(10, 10, 10).build(&train);
    run("baseline", &train, &test, 0.0, 0.0, false, None);
    run("gmp a=0.1", &train, &test, 0.1, 0.0, false, None);
    run("gmp a=0.5", &train, &test, 0.5, 0.0, false, None);
    run("gmp a=0.8", &train, &test, 0.8, 0.0, false, None);
    run("dgr a=0.5 l=0.1", &train, &test, 0.5, 0.1, true, Some(&index));
    run("dgr a=0.5 l=0.5", &train, &test, 0.5, 0.5, true, Some(&index));
}
