//! Classical MDS against Isomap on a noisy spiral: MDS keeps straight-line
//! distances, Isomap unrolls the curve along its geodesics.

use gmvae_lab::baselines::{classical_mds, isomap, DistanceMatrix};
use gmvae_lab::ndmath::Tensor;

fn main() -> gmvae_lab::Result<()> {
    let n = 200;
    let mut data = Vec::with_capacity(3 * n);
    let mut arc = Vec::with_capacity(n);
    for i in 0..n {
        let t = 1.5 * std::f64::consts::PI * (1.0 + 2.0 * i as f64 / n as f64);
        data.extend([t * t.cos(), 0.1 * (i % 7) as f64, t * t.sin()]);
        arc.push(t);
    }
    let pts = Tensor::matrix(n, 3, data)?;
    let dist = DistanceMatrix::euclidean(&pts)?;

    let mds = classical_mds(&dist, 2)?;
    let iso = isomap(&pts, 8, 2)?;
    for emb in [&mds, &iso] {
        let first = emb.points.column(0);
        println!(
            "{:<6} eigenvalues {:>10.2?}  stress {:.4}  |corr(first coordinate, arc)| {:.3}",
            emb.method.as_str(),
            emb.eigenvalues,
            emb.stress,
            pearson(&first, &arc).abs()
        );
    }
    Ok(())
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
