//! Train briefly, then decode latent draws from each mixture component and
//! report how far each family ends from the reactive threshold.
//!
//!     cargo run --release --example conditional_sampling -- [epochs]

use gmvae_lab::datagen::{generate, DatasetConfig, SplitKind};
use gmvae_lab::gmvae::{init_model, train, ModelConfig, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() -> gmvae_lab::Result<()> {
    let epochs: usize = std::env::args().nth(1).map_or(300, |s| s.parse().expect("epochs"));
    let data_cfg = DatasetConfig::default();
    let data = generate(&data_cfg)?;
    let x = data.matrix(data.split.indices(SplitKind::Train));
    let mut model = init_model(&ModelConfig::default(), data.steps(), 0)?;
    train(&mut model, &x, &TrainConfig { epochs, ..TrainConfig::default() })?;
    println!("pi {:.3?}", model.gmm.pi);

    let mut rng = ChaCha20Rng::seed_from_u64(0);
    for c in 0..model.n_clusters() {
        let (traj, _) = model.sample(200, Some(c), &mut rng)?;
        let last = traj.column(data.steps() - 1);
        let above = last.iter().filter(|&&r| r > data_cfg.label_threshold).count();
        let mean = last.iter().sum::<f64>() / last.len() as f64;
        println!("cluster {c}: mean final rho {mean:.3}, {above}/200 above threshold");
    }
    Ok(())
}
