//! EM on a fixed point cloud drawn from two Gaussians: the log-likelihood
//! never decreases and the weights approach the true 70/30 split.

use gmvae_lab::gmvae::{EmInputs, GmmParams};
use gmvae_lab::ndmath::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

fn main() -> gmvae_lab::Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let n = 600;
    let mut z = Tensor::zeros(&[n, 2]);
    for i in 0..n {
        let centre = if rng.random::<f64>() < 0.7 { [-2.0, 0.0] } else { [2.0, 1.0] };
        for (j, c) in centre.iter().enumerate() {
            let e: f64 = rng.sample(StandardNormal);
            z.set(i, j, c + 0.5 * e);
        }
    }
    let zero = Tensor::zeros(&[n, 2]);
    let mut gmm = GmmParams::random(2, 2, &mut rng);
    for it in 0..30 {
        if it % 5 == 0 {
            println!("iter {it:>2}  loglik {:>12.4}  pi {:.3?}", gmm.log_likelihood(&z), gmm.pi);
        }
        gmm = gmm.em_step(EmInputs { z: &z, mu: &z, var: &zero }, 1e-6)?;
    }
    println!("means {:?}", gmm.means.data());
    Ok(())
}
