//! Generate the surface-reaction dataset, train the GM-VAE, and report
//! test-split clustering accuracy.
//!
//!     cargo run --release --example train_bifurcation -- [epochs] [seed]

use std::time::Instant;

use gmvae_lab::datagen::{generate, DatasetConfig, SplitKind};
use gmvae_lab::gmvae::{cluster_assign, init_model, train_with, ModelConfig, TrainConfig};

fn main() -> gmvae_lab::Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(2000, |s| s.parse().expect("epochs"));
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));

    let data = generate(&DatasetConfig { seed, ..DatasetConfig::default() })?;
    let train_idx = data.split.indices(SplitKind::Train).to_vec();
    let test_idx = data.split.indices(SplitKind::Test).to_vec();
    let x = data.matrix(&train_idx);
    println!(
        "{} trajectories, {:.1}% reactive in training split",
        data.len(),
        100.0 * data.reactive_fraction(&train_idx)
    );

    let model_cfg = ModelConfig::default();
    let train_cfg = TrainConfig { epochs, seed, ..TrainConfig::default() };
    let mut model = init_model(&model_cfg, data.steps(), seed)?;
    let start = Instant::now();
    let history = train_with(&mut model, &x, &train_cfg, |rec| {
        if rec.epoch % 200 == 0 {
            println!("epoch {:>6}  loss {:>14.6e}  pi {:.3?}", rec.epoch, rec.loss, rec.pi);
        }
    })?;
    let secs = start.elapsed().as_secs_f64();
    println!("{} epochs in {secs:.1}s ({:.2} ms/epoch)", history.len(), 1e3 * secs / history.len().max(1) as f64);

    let truth: Vec<usize> = data.labels(&test_idx).iter().map(|l| l.index()).collect();
    let report = cluster_assign(&model, &data.matrix(&test_idx), &truth, 2)?;
    println!("test clustering accuracy {:.4} (cluster→label {:?})", report.accuracy, report.mapping);
    Ok(())
}
