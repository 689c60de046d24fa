use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major array of `f64`.
///
/// Most of the crate works with rank-2 tensors (matrices); a rank-1 tensor
/// of length `n` behaves as a `1 × n` row where a matrix view is needed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(
                "Tensor::new",
                format!("shape {shape:?} needs {expected} entries, got {}", data.len()),
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("Tensor::from_rows", "ragged rows"));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::matrix(rows.len(), cols, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Leading dimension; 1 for rank-1 tensors.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => 1,
            _ => self.shape[0],
        }
    }

    /// Product of trailing dimensions; the full length for rank-1 tensors.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1..].iter().product(),
        }
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let c = self.cols();
        self.data[i * c + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows()).map(|i| self.get(i, j)).collect()
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::shape(
                "Tensor::reshape",
                format!("cannot view {:?} as {shape:?}", self.shape),
            ));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Selects rows by index into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let c = self.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            shape: vec![idx.len(), c],
            data,
        }
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&self, start: usize, end: usize) -> Self {
        let r = self.rows();
        let mut data = Vec::with_capacity(r * (end - start));
        for i in 0..r {
            data.extend_from_slice(&self.row(i)[start..end]);
        }
        Self {
            shape: vec![r, end - start],
            data,
        }
    }

    pub fn transpose(&self) -> Self {
        let (r, c) = (self.rows(), self.cols());
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Self {
            shape: vec![c, r],
            data: out,
        }
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        if k != k2 {
            return Err(Error::shape(
                "matmul",
                format!("{m}x{k} times {k2}x{n}"),
            ));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out[i * n..(i + 1) * n];
            for (p, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn matmul_tn(&self, other: &Tensor) -> Result<Tensor> {
        let (k, m) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        if k != k2 {
            return Err(Error::shape(
                "matmul_tn",
                format!("({k}x{m})ᵀ times {k2}x{n}"),
            ));
        }
        let mut out = vec![0.0; m * n];
        for p in 0..k {
            let a_row = &self.data[p * m..(p + 1) * m];
            let b_row = &other.data[p * n..(p + 1) * n];
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let o_row = &mut out[i * n..(i + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_nt(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = (self.rows(), self.cols());
        let (n, k2) = (other.rows(), other.cols());
        if k != k2 {
            return Err(Error::shape(
                "matmul_nt",
                format!("{m}x{k} times ({n}x{k2})ᵀ"),
            ));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let b_row = &other.data[j * k..(j + 1) * k];
                out[i * n + j] = a_row.iter().zip(b_row).map(|(a, b)| a * b).sum();
            }
        }
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape(
                "zip_map",
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|x| x * s)
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Adds a length-`cols` bias to every row.
    pub fn add_row(&self, bias: &Tensor) -> Result<Tensor> {
        let c = self.cols();
        if bias.len() != c {
            return Err(Error::shape(
                "add_row",
                format!("bias of length {} for {} columns", bias.len(), c),
            ));
        }
        let mut out = self.clone();
        for row in out.data.chunks_mut(c.max(1)) {
            for (o, b) in row.iter_mut().zip(&bias.data) {
                *o += b;
            }
        }
        Ok(out)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Column sums as a rank-1 tensor.
    pub fn sum_rows(&self) -> Tensor {
        let c = self.cols();
        let mut out = vec![0.0; c];
        for row in self.data.chunks(c.max(1)) {
            for (o, x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        Tensor {
            shape: vec![c],
            data: out,
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_shape() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn matmul_variants_agree() {
        let a = Tensor::matrix(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Tensor::matrix(3, 2, vec![7., 8., 9., 10., 11., 12.]).unwrap();
        let ab = a.matmul(&b).unwrap();
        assert_eq!(ab.data(), &[58., 64., 139., 154.]);
        let at = a.transpose();
        assert_eq!(at.matmul_tn(&b).unwrap(), ab);
        let bt = b.transpose();
        assert_eq!(a.matmul_nt(&bt).unwrap(), ab);
        assert!(a.matmul(&a).is_err());
    }

    #[test]
    fn add_row_broadcasts() {
        let a = Tensor::zeros(&[2, 2]);
        let b = Tensor::new(vec![2], vec![1.0, -1.0]).unwrap();
        assert_eq!(a.add_row(&b).unwrap().data(), &[1., -1., 1., -1.]);
    }
}
