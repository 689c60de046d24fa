//! Graph-Laplacian energy concentration of physical quantities over an
//! embedding.

use std::collections::VecDeque;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csvio::{fmt_f64, write_table};
use crate::error::{Error, Result};
use crate::ndmath::{symmetric_eig, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub k: usize,
    pub r_percent: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self { k: 10, r_percent: 20.0 }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Input("metric k must be at least 1".into()));
        }
        check_r(self.r_percent)
    }
}

fn check_r(r: f64) -> Result<()> {
    if !(r > 0.0 && r <= 100.0) {
        return Err(Error::Input(format!("r_percent must lie in (0, 100], got {r}")));
    }
    Ok(())
}

/// Unweighted kNN graph, symmetrized by union.
#[derive(Clone, Debug, PartialEq)]
pub struct KnnGraph {
    pub k: usize,
    /// Sorted neighbor lists.
    pub neighbors: Vec<Vec<usize>>,
}

impl KnnGraph {
    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    pub fn adjacency(&self) -> Tensor {
        let n = self.n();
        let mut a = Tensor::zeros(&[n, n]);
        for (i, nb) in self.neighbors.iter().enumerate() {
            for &j in nb {
                a.set(i, j, 1.0);
            }
        }
        a
    }

    /// Connected components, each as a sorted node list, ordered by smallest node.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &v in &self.neighbors[u] {
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                        queue.push_back(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}

pub(crate) fn check_points(points: &Tensor) -> Result<()> {
    if points.shape().len() != 2 {
        return Err(Error::Input("points must be an N×d matrix".into()));
    }
    if !points.all_finite() {
        return Err(Error::Input("points contain non-finite values".into()));
    }
    Ok(())
}

/// Indices of the `k` nearest rows to each row (self excluded), ordered by
/// distance with ties broken by ascending index.
pub(crate) fn directed_knn(points: &Tensor, k: usize) -> Result<Vec<Vec<(usize, f64)>>> {
    check_points(points)?;
    let n = points.rows();
    if k == 0 || k >= n {
        return Err(Error::Input(format!("kNN needs 1 ≤ k < N, got k = {k} for N = {n}")));
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let pi = points.row(i);
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d2: f64 = pi.iter().zip(points.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                    (d2, j)
                })
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.truncate(k);
            cand.into_iter().map(|(d2, j)| (j, d2.sqrt())).collect()
        })
        .collect())
}

pub fn build_knn(points: &Tensor, k: usize) -> Result<KnnGraph> {
    let directed = directed_knn(points, k)?;
    let mut neighbors = vec![Vec::new(); points.rows()];
    for (i, nb) in directed.iter().enumerate() {
        for &(j, _) in nb {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
    }
    for nb in &mut neighbors {
        nb.sort_unstable();
        nb.dedup();
    }
    Ok(KnnGraph { k, neighbors })
}

/// `L = D − A`.
pub fn laplacian(g: &KnnGraph) -> Tensor {
    let mut l = g.adjacency().scale(-1.0);
    for (i, nb) in g.neighbors.iter().enumerate() {
        l.set(i, i, nb.len() as f64);
    }
    l
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianSpectrum {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns.
    pub eigenvectors: Tensor,
}

impl LaplacianSpectrum {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }
}

pub fn spectrum(l: &Tensor) -> Result<LaplacianSpectrum> {
    let n = l.rows();
    for i in 0..n {
        let s: f64 = l.row(i).iter().sum();
        let scale = l.get(i, i).abs().max(1.0);
        if s.abs() > 1e-10 * scale {
            return Err(Error::Input(format!("Laplacian row {i} sums to {s:e}")));
        }
    }
    let eig = symmetric_eig(l)?;
    Ok(LaplacianSpectrum {
        eigenvalues: eig.eigenvalues,
        eigenvectors: eig.eigenvectors,
    })
}

/// Spectral coefficients `α = Vᵀp`.
pub fn project(spec: &LaplacianSpectrum, p: &[f64]) -> Result<Vec<f64>> {
    if p.len() != spec.n() {
        return Err(Error::Input(format!(
            "signal has {} entries, graph has {} nodes",
            p.len(),
            spec.n()
        )));
    }
    let v = &spec.eigenvectors;
    let n = spec.n();
    let mut alpha = vec![0.0; n];
    for (r, &pr) in p.iter().enumerate() {
        let row = v.row(r);
        for (a, &vr) in alpha.iter_mut().zip(row) {
            *a += vr * pr;
        }
    }
    Ok(alpha)
}

/// Number of low modes counted by `r_percent` of `n`: `⌈r·n/100⌉`.
pub fn low_mode_count(n: usize, r_percent: f64) -> usize {
    ((r_percent * n as f64 / 100.0).ceil() as usize).clamp(1, n.max(1))
}

/// Fraction of the signal energy in the lowest `⌈r·N/100⌉` modes;
/// `coefficients` must be in ascending-eigenvalue order.
pub fn eta(coefficients: &[f64], r_percent: f64) -> Result<f64> {
    check_r(r_percent)?;
    let total: f64 = coefficients.iter().map(|a| a * a).sum();
    if !(total > 0.0) {
        return Err(Error::UndefinedMetric("signal has zero spectral energy".into()));
    }
    let m = low_mode_count(coefficients.len(), r_percent);
    let low: f64 = coefficients[..m].iter().map(|a| a * a).sum();
    Ok((low / total).clamp(0.0, 1.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralReport {
    pub quantity: String,
    pub coefficients: Vec<f64>,
    pub eta: f64,
    pub k: usize,
    pub r_percent: f64,
    pub n_components: usize,
}

/// Shared graph, its spectrum, and one report per quantity.
#[derive(Clone, Debug)]
pub struct Interpretability {
    pub graph: KnnGraph,
    pub spectrum: LaplacianSpectrum,
    pub component_sizes: Vec<usize>,
    pub reports: Vec<SpectralReport>,
}

pub fn interpretability_report(
    embeddings: &Tensor,
    quantities: &[(String, Vec<f64>)],
    k: usize,
    r_percent: f64,
) -> Result<Interpretability> {
    check_r(r_percent)?;
    let n = embeddings.rows();
    if let Some((name, q)) = quantities.iter().find(|(_, q)| q.len() != n) {
        return Err(Error::Input(format!(
            "quantity `{name}` has {} values for {n} embeddings",
            q.len()
        )));
    }
    let graph = build_knn(embeddings, k)?;
    let component_sizes: Vec<usize> = graph.components().iter().map(Vec::len).collect();
    if component_sizes.len() > 1 {
        warn!(
            "kNN graph (k = {k}) has {} connected components; extra zero modes inflate η",
            component_sizes.len()
        );
    }
    let spectrum = spectrum(&laplacian(&graph))?;
    let reports = quantities
        .iter()
        .map(|(name, q)| {
            let coefficients = project(&spectrum, q)?;
            let eta = eta(&coefficients, r_percent).map_err(|e| match e {
                Error::UndefinedMetric(m) => Error::UndefinedMetric(format!("quantity `{name}`: {m}")),
                other => other,
            })?;
            Ok(SpectralReport {
                quantity: name.clone(),
                coefficients,
                eta,
                k,
                r_percent,
                n_components: component_sizes.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Interpretability {
        graph,
        spectrum,
        component_sizes,
        reports,
    })
}

/// `quantity, k, r, eta, n_components`.
pub fn write_report(path: &Path, reports: &[SpectralReport]) -> Result<()> {
    let header: Vec<String> = ["quantity", "k", "r", "eta", "n_components"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.quantity.clone(),
                r.k.to_string(),
                fmt_f64(r.r_percent),
                fmt_f64(r.eta),
                r.n_components.to_string(),
            ]
        })
        .collect();
    write_table(path, &header, &rows)
}

/// `quantity, mode, eigenvalue, alpha` for every quantity and mode.
pub fn write_spectrum(path: &Path, spec: &LaplacianSpectrum, reports: &[SpectralReport]) -> Result<()> {
    let header: Vec<String> = ["quantity", "mode", "eigenvalue", "alpha"].map(String::from).to_vec();
    let mut rows = Vec::new();
    for r in reports {
        for (i, (&lam, &a)) in spec.eigenvalues.iter().zip(&r.coefficients).enumerate() {
            rows.push(vec![r.quantity.clone(), i.to_string(), fmt_f64(lam), fmt_f64(a)]);
        }
    }
    write_table(path, &header, &rows)
}
