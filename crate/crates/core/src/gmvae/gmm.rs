use std::f64::consts::PI;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndmath::Tensor;

/// Below this total responsibility a cluster is treated as empty.
pub const EMPTY_CLUSTER_MASS: f64 = 1e-12;

/// Diagonal Gaussian mixture over the latent space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub pi: Vec<f64>,
    /// `K × d`.
    pub means: Tensor,
    /// `K × d`, per-dimension variances.
    pub variances: Tensor,
}

/// Soft assignments, `N × K`.
#[derive(Clone, Debug, PartialEq)]
pub struct Responsibilities {
    pub gamma: Tensor,
}

impl Responsibilities {
    pub fn n(&self) -> usize {
        self.gamma.rows()
    }

    pub fn k(&self) -> usize {
        self.gamma.cols()
    }

    /// Arg-max cluster per row, lowest index on ties.
    pub fn hard_labels(&self) -> Vec<usize> {
        (0..self.n())
            .map(|i| {
                let row = self.gamma.row(i);
                let mut best = 0;
                for (c, &g) in row.iter().enumerate() {
                    if g > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }

    pub fn check_rows(&self, tol: f64) -> Result<()> {
        for i in 0..self.n() {
            let s: f64 = self.gamma.row(i).iter().sum();
            if (s - 1.0).abs() > tol || self.gamma.row(i).iter().any(|g| !(0.0..=1.0).contains(g)) {
                return Err(Error::Contract(format!(
                    "responsibility row {i} is not a distribution (sum {s})"
                )));
            }
        }
        Ok(())
    }
}

/// Per-sample posterior statistics fed to an EM update.
#[derive(Clone, Copy, Debug)]
pub struct EmInputs<'a> {
    /// Points at which responsibilities are evaluated (sampled `z`).
    pub z: &'a Tensor,
    /// Posterior means averaged by the M-step.
    pub mu: &'a Tensor,
    /// Posterior variances added to the cluster spread.
    pub var: &'a Tensor,
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl GmmParams {
    pub fn new(pi: Vec<f64>, means: Tensor, variances: Tensor) -> Result<Self> {
        let g = Self {
            pi,
            means,
            variances,
        };
        g.validate(0.0)?;
        Ok(g)
    }

    /// Means uniform in `[-1, 1]`, unit variances, uniform weights.
    pub fn random<R: Rng + ?Sized>(k: usize, d: usize, rng: &mut R) -> Self {
        let means = (0..k * d).map(|_| rng.random_range(-1.0..=1.0)).collect();
        Self {
            pi: vec![1.0 / k as f64; k],
            means: Tensor::matrix(k, d, means).expect("k×d"),
            variances: Tensor::filled(&[k, d], 1.0),
        }
    }

    /// Single standard-normal component.
    pub fn standard(d: usize) -> Self {
        Self {
            pi: vec![1.0],
            means: Tensor::zeros(&[1, d]),
            variances: Tensor::filled(&[1, d], 1.0),
        }
    }

    pub fn k(&self) -> usize {
        self.pi.len()
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    pub fn validate(&self, floor: f64) -> Result<()> {
        let k = self.k();
        if k == 0 || self.means.rows() != k || self.variances.shape() != self.means.shape() {
            return Err(Error::Input(format!(
                "mixture shapes disagree: {} weights, means {:?}, variances {:?}",
                k,
                self.means.shape(),
                self.variances.shape()
            )));
        }
        let s: f64 = self.pi.iter().sum();
        if (s - 1.0).abs() > 1e-9 || self.pi.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::Input(format!("mixture weights {:?} are not a distribution", self.pi)));
        }
        if self.variances.data().iter().any(|&v| !(v > 0.0 && v >= floor)) {
            return Err(Error::Input("mixture variances must be positive and above the floor".into()));
        }
        if !self.means.all_finite() {
            return Err(Error::Input("mixture means must be finite".into()));
        }
        Ok(())
    }

    /// `log π_c + log N(z | μ_c, diag σ_c²)` for each cluster.
    pub fn log_joint_row(&self, z: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let mean = self.means.row(c);
            let var = self.variances.row(c);
            let mut lp = 0.0;
            for j in 0..z.len() {
                let d = z[j] - mean[j];
                lp += (2.0 * PI * var[j]).ln() + d * d / var[j];
            }
            *o = self.pi[c].ln() - 0.5 * lp;
        }
    }

    /// Normalized `π_c N(z | μ_c, σ_c²)` per row, in log space.
    pub fn responsibilities(&self, z: &Tensor) -> Result<Responsibilities> {
        if z.cols() != self.dim() {
            return Err(Error::shape(
                "responsibilities",
                format!("points have {} dims, mixture {}", z.cols(), self.dim()),
            ));
        }
        let (n, k) = (z.rows(), self.k());
        let mut gamma = Tensor::zeros(&[n, k]);
        let mut buf = vec![0.0; k];
        for i in 0..n {
            self.log_joint_row(z.row(i), &mut buf);
            let lse = log_sum_exp(&buf);
            let row = gamma.row_mut(i);
            if lse.is_finite() {
                for (g, l) in row.iter_mut().zip(&buf) {
                    *g = (l - lse).exp();
                }
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|g| *g /= s);
            } else {
                // every component has zero weight or the point is non-finite
                return Err(Error::Divergence(format!(
                    "responsibilities undefined for sample {i}"
                )));
            }
        }
        Ok(Responsibilities { gamma })
    }

    /// `Σ_n log Σ_c π_c N(z_n | μ_c, σ_c²)`.
    pub fn log_likelihood(&self, z: &Tensor) -> f64 {
        let mut buf = vec![0.0; self.k()];
        (0..z.rows())
            .map(|i| {
                self.log_joint_row(z.row(i), &mut buf);
                log_sum_exp(&buf)
            })
            .sum()
    }

    /// One EM update.
    ///
    /// Responsibilities are evaluated at `inputs.z`; the M-step then sets
    /// `μ_c = Σγμ/Σγ`, `σ_c² = Σγ((μ − μ_c)² + σ²)/Σγ` (with the new `μ_c`)
    /// and `π_c = Σγ/N`, flooring variances at `floor`. A cluster with
    /// negligible mass keeps its previous mean and variance.
    pub fn em_step(&self, inputs: EmInputs<'_>, floor: f64) -> Result<GmmParams> {
        let EmInputs { z, mu, var } = inputs;
        let (n, d, k) = (mu.rows(), self.dim(), self.k());
        if n == 0 {
            return Err(Error::Input("EM step needs at least one sample".into()));
        }
        if z.shape() != mu.shape() || var.shape() != mu.shape() || mu.cols() != d {
            return Err(Error::shape(
                "em_step",
                format!(
                    "z {:?}, mu {:?}, var {:?}, mixture dim {d}",
                    z.shape(),
                    mu.shape(),
                    var.shape()
                ),
            ));
        }
        let gamma = self.responsibilities(z)?.gamma;

        let mut mass = vec![0.0; k];
        let mut means = Tensor::zeros(&[k, d]);
        for i in 0..n {
            let g = gamma.row(i);
            let m = mu.row(i);
            for c in 0..k {
                mass[c] += g[c];
                for j in 0..d {
                    means.data_mut()[c * d + j] += g[c] * m[j];
                }
            }
        }
        let mut empty = vec![false; k];
        for c in 0..k {
            if mass[c] < EMPTY_CLUSTER_MASS {
                empty[c] = true;
                warn!("cluster {c} has negligible responsibility mass ({:e}); keeping its previous parameters", mass[c]);
                means.row_mut(c).copy_from_slice(self.means.row(c));
            } else {
                means.row_mut(c).iter_mut().for_each(|x| *x /= mass[c]);
            }
        }

        let mut variances = Tensor::zeros(&[k, d]);
        for i in 0..n {
            let g = gamma.row(i);
            let (m, v) = (mu.row(i), var.row(i));
            for c in 0..k {
                if empty[c] {
                    continue;
                }
                for j in 0..d {
                    let diff = m[j] - means.get(c, j);
                    variances.data_mut()[c * d + j] += g[c] * (diff * diff + v[j].max(0.0));
                }
            }
        }
        for c in 0..k {
            for j in 0..d {
                let v = if empty[c] {
                    self.variances.get(c, j)
                } else {
                    variances.get(c, j) / mass[c]
                };
                variances.set(c, j, v.max(floor));
            }
        }

        let total: f64 = mass.iter().sum();
        let pi: Vec<f64> = mass.iter().map(|m| m / total).collect();
        let out = GmmParams {
            pi,
            means,
            variances,
        };
        if !out.means.all_finite() || !out.variances.all_finite() || out.pi.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence("EM step produced non-finite mixture parameters".into()));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, data: &[f64]) -> Tensor {
        Tensor::matrix(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn symmetric_clusters_split_evenly() {
        let g = GmmParams::new(vec![0.5, 0.5], m(2, 2, &[1.5, -2.0, -1.5, 2.0]), Tensor::filled(&[2, 2], 0.7)).unwrap();
        let r = g.responsibilities(&Tensor::zeros(&[1, 2])).unwrap();
        assert!((r.gamma.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((r.gamma.get(0, 1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn far_cluster_ratio() {
        let g = GmmParams::new(vec![0.5, 0.5], m(2, 1, &[0.0, 10.0]), Tensor::filled(&[2, 1], 1.0)).unwrap();
        let r = g.responsibilities(&Tensor::zeros(&[1, 1])).unwrap();
        let expected = 1.0 / (1.0 + (-50.0f64).exp());
        assert!((r.gamma.get(0, 0) - expected).abs() < 1e-15);
        assert!((r.gamma.get(0, 1) - (-50.0f64).exp()).abs() < 1e-30);
    }

    #[test]
    fn single_cluster_takes_everything() {
        let g = GmmParams::standard(3);
        let z = m(2, 3, &[100.0, -4.0, 2.0, 0.0, 0.0, 0.0]);
        let r = g.responsibilities(&z).unwrap();
        assert_eq!(r.gamma.data(), &[1.0, 1.0]);
    }

    #[test]
    fn tiny_densities_stay_normalized() {
        let g = GmmParams::new(vec![0.3, 0.7], m(2, 1, &[0.0, 1.0]), Tensor::filled(&[2, 1], 1e-4)).unwrap();
        let z = m(3, 1, &[0.5, 0.48, 0.52]);
        let r = g.responsibilities(&z).unwrap();
        r.check_rows(1e-12).unwrap();
    }

    #[test]
    fn hard_assignments_give_cluster_means() {
        let g = GmmParams::new(vec![0.5, 0.5], m(2, 1, &[-10.0, 10.0]), Tensor::filled(&[2, 1], 1.0)).unwrap();
        let mu = m(4, 1, &[-9.0, -11.0, 9.0, 12.0]);
        let var = Tensor::zeros(&[4, 1]);
        let next = g.em_step(EmInputs { z: &mu, mu: &mu, var: &var }, 1e-6).unwrap();
        assert!((next.means.get(0, 0) + 10.0).abs() < 1e-12);
        assert!((next.means.get(1, 0) - 10.5).abs() < 1e-12);
        assert!((next.variances.get(1, 0) - 2.25).abs() < 1e-12);
        assert_eq!(next.pi, vec![0.5, 0.5]);
    }

    #[test]
    fn collapsed_points_hit_the_floor() {
        let g = GmmParams::standard(2);
        let mu = Tensor::filled(&[5, 2], 0.3);
        let var = Tensor::zeros(&[5, 2]);
        let next = g.em_step(EmInputs { z: &mu, mu: &mu, var: &var }, 1e-6).unwrap();
        assert!(next.variances.data().iter().all(|&v| v == 1e-6));
    }

    #[test]
    fn empty_cluster_is_retained() {
        let g = GmmParams::new(vec![0.5, 0.5], m(2, 1, &[0.0, 1000.0]), Tensor::filled(&[2, 1], 1.0)).unwrap();
        let mu = m(3, 1, &[0.1, -0.2, 0.0]);
        let var = Tensor::filled(&[3, 1], 0.01);
        let next = g.em_step(EmInputs { z: &mu, mu: &mu, var: &var }, 1e-6).unwrap();
        assert_eq!(next.means.get(1, 0), 1000.0);
        assert_eq!(next.variances.get(1, 0), 1.0);
        assert!(next.pi[1] < 1e-12);
        assert!((next.pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn em_rejects_empty_batch() {
        let g = GmmParams::standard(1);
        let e = Tensor::zeros(&[0, 1]);
        assert!(g.em_step(EmInputs { z: &e, mu: &e, var: &e }, 1e-6).is_err());
    }
}
