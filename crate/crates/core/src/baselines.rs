//! Classical MDS and Isomap embeddings.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ndmath::{symmetric_eig, Tensor};
use crate::spectral::{check_points, directed_knn};

/// Symmetric non-negative matrix with zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    d: Tensor,
}

impl DistanceMatrix {
    pub fn new(d: Tensor) -> Result<Self> {
        if d.shape().len() != 2 || d.rows() != d.cols() {
            return Err(Error::Input(format!("distance matrix must be square, got {:?}", d.shape())));
        }
        let n = d.rows();
        for i in 0..n {
            if d.get(i, i) != 0.0 {
                return Err(Error::Input(format!("distance matrix diagonal {i} is nonzero")));
            }
            for j in 0..i {
                let (a, b) = (d.get(i, j), d.get(j, i));
                if !(a >= 0.0 && a.is_finite()) || (a - b).abs() > 1e-10 * a.abs().max(1.0) {
                    return Err(Error::Input(format!(
                        "distance matrix entry ({i}, {j}) is not a symmetric non-negative value"
                    )));
                }
            }
        }
        Ok(Self { d })
    }

    /// Pairwise Euclidean distances between rows.
    pub fn euclidean(points: &Tensor) -> Result<Self> {
        check_points(points)?;
        let n = points.rows();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let pi = points.row(i);
                (0..n)
                    .map(|j| {
                        pi.iter()
                            .zip(points.row(j))
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            d: Tensor::from_rows(&rows).unwrap_or_else(|_| Tensor::zeros(&[0, 0])),
        })
    }

    pub fn n(&self) -> usize {
        self.d.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d.get(i, j)
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.d
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Mds,
    Isomap,
    Gmvae,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mds => "mds",
            Method::Isomap => "isomap",
            Method::Gmvae => "gmvae",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    pub points: Tensor,
    pub method: Method,
    /// Eigenvalues of the double-centered Gram matrix behind each coordinate.
    pub eigenvalues: Vec<f64>,
    /// Kruskal stress-1 of the embedding against the input distances.
    pub stress: f64,
}

/// Classical (Torgerson) MDS: coordinates `V√Λ` from the top eigenpairs of
/// `B = −½ J D² J`, ordered by descending eigenvalue.
pub fn classical_mds(d: &DistanceMatrix, dim: usize) -> Result<Embedding> {
    embed(d, dim, Method::Mds)
}

fn embed(d: &DistanceMatrix, dim: usize, method: Method) -> Result<Embedding> {
    if dim == 0 {
        return Err(Error::Input("embedding dimension must be at least 1".into()));
    }
    let n = d.n();
    let mut b = d.as_tensor().map(|x| x * x);
    let row_means: Vec<f64> = (0..n).map(|i| b.row(i).iter().sum::<f64>() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n.max(1) as f64;
    for i in 0..n {
        for j in 0..n {
            let v = -0.5 * (b.get(i, j) - row_means[i] - row_means[j] + grand);
            b.set(i, j, v);
        }
    }
    // exact symmetry for the eigensolver
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (b.get(i, j) + b.get(j, i));
            b.set(i, j, v);
            b.set(j, i, v);
        }
    }
    let eig = symmetric_eig(&b)?;
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |m, &l| m.max(l.abs())).max(f64::MIN_POSITIVE);
    let mut points = Tensor::zeros(&[n, dim]);
    let mut eigenvalues = Vec::with_capacity(dim);
    let mut positive = 0;
    for c in 0..dim.min(n) {
        let idx = n - 1 - c;
        let lam = eig.eigenvalues[idx];
        eigenvalues.push(lam);
        if lam <= 1e-12 * scale {
            continue;
        }
        positive += 1;
        let s = lam.sqrt();
        for i in 0..n {
            points.set(i, c, eig.eigenvectors.get(i, idx) * s);
        }
    }
    eigenvalues.resize(dim, 0.0);
    if positive < dim {
        warn!("only {positive} positive eigenvalues for a {dim}-d embedding; padding with zeros");
    }
    let stress = kruskal_stress(d, &points);
    Ok(Embedding {
        points,
        method,
        eigenvalues,
        stress,
    })
}

/// `sqrt(Σ(d_ij − ‖y_i − y_j‖)² / Σ d_ij²)` over `i < j`; 0 when every distance is 0.
pub fn kruskal_stress(d: &DistanceMatrix, y: &Tensor) -> f64 {
    let n = d.n();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..i {
            let e: f64 = y
                .row(i)
                .iter()
                .zip(y.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let dij = d.get(i, j);
            num += (dij - e) * (dij - e);
            den += dij * dij;
        }
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Visit(f64, usize);

impl Eq for Visit {}

impl Ord for Visit {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Visit {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra(adj: &[Vec<(usize, f64)>], source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adj.len()];
    dist[source] = 0.0;
    let mut heap = BinaryHeap::from([Visit(0.0, source)]);
    while let Some(Visit(du, u)) = heap.pop() {
        if du > dist[u] {
            continue;
        }
        for &(v, w) in &adj[u] {
            let nd = du + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Visit(nd, v));
            }
        }
    }
    dist
}

/// Shortest-path distances over the union-symmetrized kNN graph with
/// Euclidean edge lengths.
pub fn geodesic_distances(points: &Tensor, k: usize) -> Result<DistanceMatrix> {
    let directed = directed_knn(points, k)?;
    let n = points.rows();
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, nb) in directed.iter().enumerate() {
        for &(j, w) in nb {
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
    }
    for a in &mut adj {
        a.sort_by_key(|x| x.0);
        a.dedup_by_key(|e| e.0);
    }
    let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|s| dijkstra(&adj, s)).collect();
    if rows[0].iter().any(|d| d.is_infinite()) {
        let graph = crate::spectral::KnnGraph {
            k,
            neighbors: adj.iter().map(|a| a.iter().map(|e| e.0).collect()).collect(),
        };
        let sizes = graph.components().iter().map(Vec::len).collect();
        return Err(Error::Disconnected { sizes });
    }
    let mut g = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in i + 1..n {
            // each pair from the lower source index, so G is exactly symmetric
            g.set(i, j, rows[i][j]);
            g.set(j, i, rows[i][j]);
        }
    }
    DistanceMatrix::new(g)
}

/// Isomap: classical MDS on kNN-graph geodesic distances.
pub fn isomap(points: &Tensor, k: usize, dim: usize) -> Result<Embedding> {
    let g = geodesic_distances(points, k)?;
    embed(&g, dim, Method::Isomap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identical_points_embed_at_origin() {
        let e = classical_mds(&DistanceMatrix::euclidean(&Tensor::filled(&[4, 3], 2.0)).unwrap(), 2).unwrap();
        assert!(e.points.data().iter().all(|&x| x == 0.0));
        assert_eq!(e.stress, 0.0);
    }

    #[test]
    fn line_0_1_3_recovers_distances() {
        let pts = Tensor::matrix(3, 1, vec![0.0, 1.0, 3.0]).unwrap();
        let e = classical_mds(&DistanceMatrix::euclidean(&pts).unwrap(), 1).unwrap();
        let y = e.points.data();
        assert_abs_diff_eq!((y[0] - y[1]).abs(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!((y[1] - y[2]).abs(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!((y[0] - y[2]).abs(), 3.0, epsilon = 1e-12);
        assert!(e.stress < 1e-12);
    }

    #[test]
    fn two_hop_geodesic() {
        let pts = Tensor::matrix(3, 1, vec![0.0, 1.0, 2.0]).unwrap();
        let g = geodesic_distances(&pts, 1).unwrap();
        assert_abs_diff_eq!(g.get(0, 2), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn disconnected_isomap_names_components() {
        let pts = Tensor::matrix(5, 1, vec![0.0, 1.0, 2.0, 50.0, 51.0]).unwrap();
        match isomap(&pts, 1, 1) {
            Err(Error::Disconnected { mut sizes }) => {
                sizes.sort();
                assert_eq!(sizes, vec![2, 3]);
            }
            other => panic!("expected disconnected error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_asymmetric_distances() {
        let d = Tensor::matrix(2, 2, vec![0.0, 1.0, 2.0, 0.0]).unwrap();
        assert!(DistanceMatrix::new(d).is_err());
    }

    #[test]
    fn rank_one_configuration_pads_second_axis() {
        let pts = Tensor::matrix(3, 2, vec![0.0, 0.0, 1.0, 2.0, 3.0, 6.0]).unwrap();
        let e = classical_mds(&DistanceMatrix::euclidean(&pts).unwrap(), 2).unwrap();
        for i in 0..3 {
            assert!(e.points.get(i, 1).abs() < 1e-6);
        }
    }
}
