//! Graph-Laplacian smoothness of scalar signals over a 2-D point cloud: a
//! coordinate-aligned signal scores near 1, white noise near r/100.

use gmvae_lab::ndmath::Tensor;
use gmvae_lab::spectral::interpretability_report;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn main() -> gmvae_lab::Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let n = 400;
    let pts = Tensor::matrix(n, 2, (0..2 * n).map(|_| rng.random::<f64>()).collect())?;
    let smooth: Vec<f64> = (0..n).map(|i| (3.0 * pts.get(i, 0)).sin() - 0.3).collect();
    let noise: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let quantities = [("smooth".to_string(), smooth), ("noise".to_string(), noise)];
    for r in [5.0, 20.0, 50.0] {
        let rep = interpretability_report(&pts, &quantities, 10, r)?;
        for q in &rep.reports {
            println!("r = {r:>4}%  {:<6}  eta {:.4}", q.quantity, q.eta);
        }
    }
    Ok(())
}
