//! Simulate the surface-reaction trajectories and write them as CSV.
//!
//!     cargo run --release --example generate_dataset -- [n_samples] [out.csv]

use std::path::PathBuf;

use gmvae_lab::datagen::{generate, DatasetConfig, Label, SplitKind};

fn main() -> gmvae_lab::Result<()> {
    let mut args = std::env::args().skip(1);
    let n_samples: usize = args.next().map_or(400, |s| s.parse().expect("n_samples"));
    let out = args.next().map(PathBuf::from);

    let data = generate(&DatasetConfig { n_samples, ..DatasetConfig::default() })?;
    for kind in [SplitKind::Train, SplitKind::Val, SplitKind::Test] {
        let idx = data.split.indices(kind);
        println!("{:<5} {:>5} samples, {:.1}% reactive", kind.as_str(), idx.len(), 100.0 * data.reactive_fraction(idx));
    }
    let first_stable = data.trajectories.iter().find(|t| t.label == Label::Stable);
    if let Some(t) = first_stable {
        println!(
            "first stable trajectory: alpha {:.3} gamma {:.3}, final rho {:.4}",
            t.params.alpha,
            t.params.gamma,
            t.rho.last().unwrap()
        );
    }
    if let Some(path) = out {
        data.write_csv(&path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
