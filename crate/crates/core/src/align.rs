//! Least-squares affine maps from embeddings to physical parameters.

use log::warn;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ndmath::Tensor;

/// Relative singular-value threshold for numerical rank.
pub const RANK_TOL: f64 = 1e-10;

/// `b = a·z + c`, with reference point `z0` (`a·z0 + c = 0`) when `a` is
/// square and invertible.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AffineMap {
    /// p×d.
    pub a: Tensor,
    pub c: Vec<f64>,
    pub z0: Option<Vec<f64>>,
}

impl AffineMap {
    pub fn in_dim(&self) -> usize {
        self.a.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.a.rows()
    }

    /// Homogeneous form `M = [A | c]`, p×(d+1).
    pub fn homogeneous(&self) -> Tensor {
        let (p, d) = (self.out_dim(), self.in_dim());
        let mut m = Tensor::zeros(&[p, d + 1]);
        for i in 0..p {
            for j in 0..d {
                m.set(i, j, self.a.get(i, j));
            }
            m.set(i, d, self.c[i]);
        }
        m
    }

    /// Maps each row of `z`.
    pub fn apply(&self, z: &Tensor) -> Result<Tensor> {
        if z.shape().len() != 2 || z.cols() != self.in_dim() {
            return Err(Error::Input(format!(
                "map takes {} coordinates, got {:?}",
                self.in_dim(),
                z.shape()
            )));
        }
        let mut out = z.matmul_nt(&self.a)?;
        for i in 0..out.rows() {
            for (o, &c) in out.row_mut(i).iter_mut().zip(&self.c) {
                *o += c;
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitReport {
    pub map: AffineMap,
    /// `sqrt(‖B − Ẑ‖²_F / (N·p))`.
    pub residual_rms: f64,
    pub r_squared: Vec<f64>,
    /// Singular values of `[Z, 1]`, descending.
    pub singular_values: Vec<f64>,
}

/// Least-squares fit of `b ≈ a·z + c` through Householder QR of `[Z, 1]`.
pub fn fit_affine(z: &Tensor, b: &Tensor) -> Result<FitReport> {
    if z.shape().len() != 2 || b.shape().len() != 2 || z.rows() != b.rows() {
        return Err(Error::Input(format!(
            "embedding {:?} and targets {:?} must be row-aligned matrices",
            z.shape(),
            b.shape()
        )));
    }
    if !z.all_finite() || !b.all_finite() {
        return Err(Error::Input("affine fit inputs must be finite".into()));
    }
    let (n, d, p) = (z.rows(), z.cols(), b.cols());
    if n < d + 2 {
        return Err(Error::Input(format!("affine fit in {d} dimensions needs at least {} samples, got {n}", d + 2)));
    }
    if n < 3 * (d + 1) {
        warn!("only {n} samples for {} affine unknowns per parameter; the fit may overfit", d + 1);
    }
    let m = d + 1;
    let mut q = Tensor::zeros(&[n, m]);
    for i in 0..n {
        q.row_mut(i)[..d].copy_from_slice(z.row(i));
        q.set(i, d, 1.0);
    }
    let mut rhs = b.clone();
    householder_qr(&mut q, &mut rhs);
    let mut r = Tensor::zeros(&[m, m]);
    for i in 0..m {
        for j in i..m {
            r.set(i, j, q.get(i, j));
        }
    }
    let singular_values = singular_values(&r);
    let smax = singular_values.first().copied().unwrap_or(0.0);
    let rank = singular_values.iter().filter(|&&s| s > RANK_TOL * smax).count();
    if rank < m {
        return Err(Error::RankDeficient { rank, cols: m });
    }
    // back substitution R X = (QᵀB)[..m], X is m×p
    let mut x = Tensor::zeros(&[m, p]);
    for col in 0..p {
        for i in (0..m).rev() {
            let mut s = rhs.get(i, col);
            for j in i + 1..m {
                s -= r.get(i, j) * x.get(j, col);
            }
            x.set(i, col, s / r.get(i, i));
        }
    }
    let mut a = Tensor::zeros(&[p, d]);
    for i in 0..p {
        for j in 0..d {
            a.set(i, j, x.get(j, i));
        }
    }
    let c = x.row(d).to_vec();
    let z0 = if p == d { reference_point(&a, &c) } else { None };
    let map = AffineMap { a, c, z0 };

    let pred = map.apply(z)?;
    let resid = b.sub(&pred)?;
    let residual_rms = if n * p == 0 { 0.0 } else { (resid.norm_sq() / (n * p) as f64).sqrt() };
    let r_squared = (0..p)
        .map(|j| {
            let col = b.column(j);
            let mean = col.iter().sum::<f64>() / n as f64;
            let ss_tot: f64 = col.iter().map(|y| (y - mean) * (y - mean)).sum();
            let ss_res: f64 = (0..n).map(|i| resid.get(i, j).powi(2)).sum();
            if ss_tot == 0.0 {
                1.0
            } else {
                1.0 - ss_res / ss_tot
            }
        })
        .collect();
    Ok(FitReport {
        map,
        residual_rms,
        r_squared,
        singular_values,
    })
}

/// Largest entry of `|[Z, 1]ᵀ (B − Ẑ)|`; zero at the exact least-squares optimum.
pub fn normal_equation_residual(map: &AffineMap, z: &Tensor, b: &Tensor) -> Result<f64> {
    let resid = b.sub(&map.apply(z)?)?;
    let mut worst = 0.0_f64;
    for j in 0..resid.cols() {
        for k in 0..=z.cols() {
            let s: f64 = (0..z.rows())
                .map(|i| resid.get(i, j) * if k < z.cols() { z.get(i, k) } else { 1.0 })
                .sum();
            worst = worst.max(s.abs());
        }
    }
    Ok(worst)
}

/// In-place Householder QR: `q` (N×m) becomes R in its upper triangle and
/// `rhs` becomes `Qᵀ·rhs`.
fn householder_qr(q: &mut Tensor, rhs: &mut Tensor) {
    let (n, m) = (q.rows(), q.cols());
    let p = rhs.cols();
    for k in 0..m.min(n) {
        let norm: f64 = (k..n).map(|i| q.get(i, k).powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if q.get(k, k) > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..n).map(|i| q.get(i, k)).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        let reflect = |t: &mut Tensor, col: usize| {
            let dot: f64 = v.iter().enumerate().map(|(o, vi)| vi * t.get(k + o, col)).sum();
            let f = 2.0 * dot / vnorm2;
            for (o, vi) in v.iter().enumerate() {
                let val = t.get(k + o, col) - f * vi;
                t.set(k + o, col, val);
            }
        };
        for col in k..m {
            reflect(q, col);
        }
        for col in 0..p {
            reflect(rhs, col);
        }
    }
}

/// Singular values (descending) by one-sided Jacobi on a small matrix.
fn singular_values(a: &Tensor) -> Vec<f64> {
    let mut u = a.clone();
    let (rows, cols) = (u.rows(), u.cols());
    for _ in 0..60 {
        let mut rotated = false;
        for i in 0..cols {
            for j in i + 1..cols {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for r in 0..rows {
                    let (x, y) = (u.get(r, i), u.get(r, j));
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for r in 0..rows {
                    let (x, y) = (u.get(r, i), u.get(r, j));
                    u.set(r, i, cs * x - sn * y);
                    u.set(r, j, sn * x + cs * y);
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut s: Vec<f64> = (0..cols)
        .map(|c| (0..rows).map(|r| u.get(r, c).powi(2)).sum::<f64>().sqrt())
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// `z0 = −A⁻¹c` by partial-pivot elimination, when `A` is numerically invertible.
fn reference_point(a: &Tensor, c: &[f64]) -> Option<Vec<f64>> {
    let d = a.rows();
    let s = singular_values(a);
    if d == 0 || s[d - 1] <= RANK_TOL * s[0] {
        return None;
    }
    let mut m = a.clone();
    let mut rhs: Vec<f64> = c.iter().map(|v| -v).collect();
    for k in 0..d {
        let piv = (k..d).max_by(|&i, &j| m.get(i, k).abs().total_cmp(&m.get(j, k).abs()))?;
        if piv != k {
            for j in 0..d {
                let (x, y) = (m.get(k, j), m.get(piv, j));
                m.set(k, j, y);
                m.set(piv, j, x);
            }
            rhs.swap(k, piv);
        }
        for i in k + 1..d {
            let f = m.get(i, k) / m.get(k, k);
            for j in k..d {
                let v = m.get(i, j) - f * m.get(k, j);
                m.set(i, j, v);
            }
            rhs[i] -= f * rhs[k];
        }
    }
    let mut z0 = vec![0.0; d];
    for i in (0..d).rev() {
        let s: f64 = (i + 1..d).map(|j| m.get(i, j) * z0[j]).sum();
        z0[i] = (rhs[i] - s) / m.get(i, i);
    }
    Some(z0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn identity_fit() {
        let z = random(12, 2, &mut ChaCha8Rng::seed_from_u64(1));
        let f = fit_affine(&z, &z).unwrap();
        assert!(f.map.a.max_abs_diff(&Tensor::identity(2)) < 1e-10);
        assert!(f.map.c.iter().all(|c| c.abs() < 1e-10));
        assert!(f.map.z0.as_ref().unwrap().iter().all(|v| v.abs() < 1e-10));
        assert!(f.residual_rms < 1e-12);
        assert!(f.r_squared.iter().all(|&r| (r - 1.0).abs() < 1e-12));
    }

    #[test]
    fn halving_scale() {
        let b = random(10, 2, &mut ChaCha8Rng::seed_from_u64(2));
        let z = b.scale(2.0);
        let f = fit_affine(&z, &b).unwrap();
        assert!(f.map.a.max_abs_diff(&Tensor::identity(2).scale(0.5)) < 1e-12);
    }

    #[test]
    fn z0_is_mapped_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = random(30, 2, &mut rng);
        let b = random(30, 2, &mut rng);
        let f = fit_affine(&z, &b).unwrap();
        let z0 = Tensor::matrix(1, 2, f.map.z0.clone().unwrap()).unwrap();
        let out = f.map.apply(&z0).unwrap();
        assert!(out.data().iter().all(|v| v.abs() < 1e-8));
        assert!(normal_equation_residual(&f.map, &z, &b).unwrap() < 1e-10);
    }

    #[test]
    fn constant_column_is_rank_deficient() {
        let mut z = random(10, 2, &mut ChaCha8Rng::seed_from_u64(4));
        for i in 0..10 {
            z.set(i, 1, 3.0);
        }
        let b = random(10, 1, &mut ChaCha8Rng::seed_from_u64(5));
        assert!(matches!(
            fit_affine(&z, &b),
            Err(Error::RankDeficient { rank: 2, cols: 3 })
        ));
    }

    #[test]
    fn too_few_samples() {
        let z = random(3, 2, &mut ChaCha8Rng::seed_from_u64(6));
        assert!(matches!(fit_affine(&z, &z), Err(Error::Input(_))));
    }

    #[test]
    fn c_only_map() {
        let map = AffineMap {
            a: Tensor::zeros(&[2, 3]),
            c: vec![1.5, -2.0],
            z0: None,
        };
        let out = map.apply(&Tensor::filled(&[4, 3], 7.0)).unwrap();
        for i in 0..4 {
            assert_eq!(out.row(i), &[1.5, -2.0]);
        }
        assert!(map.apply(&Tensor::zeros(&[1, 2])).is_err());
    }

    #[test]
    fn jacobi_singular_values() {
        let a = Tensor::matrix(2, 2, vec![3.0, 0.0, 4.0, 5.0]).unwrap();
        let s = singular_values(&a);
        // AᵀA = [[25, 20], [20, 25]] → 45, 5
        assert_abs_diff_eq!(s[0], 45f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(s[1], 5f64.sqrt(), epsilon = 1e-12);
    }
}
