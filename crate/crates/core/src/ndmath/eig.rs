use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Eigendecomposition of a real symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `i` is the unit eigenvector of `eigenvalues[i]`.
    pub eigenvectors: Tensor,
}

impl SymmetricEigen {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.eigenvectors.column(i)
    }

    /// `V Λ Vᵀ`.
    pub fn reconstruct(&self) -> Tensor {
        let n = self.n();
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for r in 0..n {
            for (c, x) in scaled.row_mut(r).iter_mut().enumerate() {
                *x *= self.eigenvalues[c];
            }
        }
        scaled.matmul_nt(v).expect("square factors")
    }
}

/// Cyclic Jacobi eigensolver.
///
/// Rotations are applied in row-by-row order over the strict upper
/// triangle until the off-diagonal mass is negligible relative to the
/// Frobenius norm. Eigenvectors come out orthonormal to rounding because
/// they are a product of plane rotations. Each column is sign-normalized so
/// that its largest-magnitude entry is positive.
pub fn symmetric_eig(m: &Tensor) -> Result<SymmetricEigen> {
    let n = m.rows();
    if m.shape().len() != 2 || m.cols() != n {
        return Err(Error::Input(format!(
            "eigendecomposition needs a square matrix, got {:?}",
            m.shape()
        )));
    }
    let scale = m.data().iter().fold(1.0_f64, |acc, x| acc.max(x.abs()));
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (m.get(i, j) - m.get(j, i)).abs();
            if d > 1e-10 * scale {
                return Err(Error::Input(format!(
                    "matrix is not symmetric: |m[{i},{j}] - m[{j},{i}]| = {d:e}"
                )));
            }
        }
    }

    let mut a = m.data().to_vec();
    // symmetrize exactly so rotations see a consistent matrix
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = s;
            a[j * n + i] = s;
        }
    }
    let mut v = Tensor::identity(n).into_data();
    let frob_sq: f64 = a.iter().map(|x| x * x).sum();

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off == 0.0 || off <= (f64::EPSILON * f64::EPSILON) * frob_sq {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                if apq.abs() < 1e-300 {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.is_infinite() {
                    0.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                if t == 0.0 {
                    continue;
                }
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    let nkp = c * akp - s * akq;
                    let nkq = s * akp + c * akq;
                    a[k * n + p] = nkp;
                    a[p * n + k] = nkp;
                    a[k * n + q] = nkq;
                    a[q * n + k] = nkq;
                }
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]).then(i.cmp(&j)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vecs = vec![0.0; n * n];
    for (new_c, &old_c) in order.iter().enumerate() {
        let mut best = 0.0_f64;
        for r in 0..n {
            let x = v[r * n + old_c];
            if x.abs() > best.abs() + 1e-12 {
                best = x;
            }
        }
        let sign = if best < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            vecs[r * n + new_c] = sign * v[r * n + old_c];
        }
    }
    if eigenvalues.iter().any(|x| !x.is_finite()) {
        return Err(Error::Divergence("non-finite eigenvalue".into()));
    }
    Ok(SymmetricEigen {
        eigenvalues,
        eigenvectors: Tensor::matrix(n, n, vecs)?,
    })
}
