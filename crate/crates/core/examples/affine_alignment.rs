//! Recover a known affine map from noisy samples and locate the latent point
//! that maps to the physical origin.

use gmvae_lab::align::{fit_affine, normal_equation_residual};
use gmvae_lab::ndmath::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

fn main() -> gmvae_lab::Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let n = 300;
    let z = Tensor::matrix(n, 2, (0..2 * n).map(|_| rng.random_range(-2.0..2.0)).collect())?;
    let (a, c) = ([[0.8, -0.3], [0.2, 1.1]], [0.5, -1.0]);
    let mut b = Tensor::zeros(&[n, 2]);
    for i in 0..n {
        for r in 0..2 {
            let e: f64 = rng.sample(StandardNormal);
            b.set(i, r, a[r][0] * z.get(i, 0) + a[r][1] * z.get(i, 1) + c[r] + 0.01 * e);
        }
    }
    let fit = fit_affine(&z, &b)?;
    println!("A = {:.4?}", fit.map.a.data());
    println!("c = {:.4?}", fit.map.c);
    println!("z0 = {:.4?}", fit.map.z0);
    println!("rms {:.2e}  r² {:.6?}  singular values {:.3?}", fit.residual_rms, fit.r_squared, fit.singular_values);
    println!("normal-equation residual {:.2e}", normal_equation_residual(&fit.map, &z, &b)?);
    Ok(())
}
