use super::gmm::Responsibilities;
use super::model::GmVae;
use crate::error::{Error, Result};
use crate::ndmath::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterReport {
    pub hard_labels: Vec<usize>,
    pub responsibilities: Responsibilities,
    /// `mapping[c]` is the ground-truth label assigned to cluster `c`.
    pub mapping: Vec<usize>,
    pub accuracy: f64,
}

/// Best agreement between `clusters` and `truth` over cluster→label maps.
///
/// With `k ≤ n_labels` only injective maps (permutations of a label subset)
/// are considered; otherwise every map is allowed. Ties keep the
/// lexicographically first map.
pub fn best_mapping(clusters: &[usize], truth: &[usize], k: usize, n_labels: usize) -> (Vec<usize>, f64) {
    assert_eq!(clusters.len(), truth.len());
    let n_labels = n_labels.max(1);
    let mut counts = vec![vec![0usize; n_labels]; k];
    for (&c, &t) in clusters.iter().zip(truth) {
        counts[c][t] += 1;
    }
    let injective = k <= n_labels;
    let mut best = (vec![0; k], 0usize);
    let mut current = vec![0usize; k];
    fn search(
        c: usize,
        current: &mut Vec<usize>,
        counts: &[Vec<usize>],
        n_labels: usize,
        injective: bool,
        best: &mut (Vec<usize>, usize),
        found: &mut bool,
    ) {
        if c == current.len() {
            let score = current.iter().enumerate().map(|(c, &l)| counts[c][l]).sum();
            if !*found || score > best.1 {
                *best = (current.clone(), score);
                *found = true;
            }
            return;
        }
        for l in 0..n_labels {
            if injective && current[..c].contains(&l) {
                continue;
            }
            current[c] = l;
            search(c + 1, current, counts, n_labels, injective, best, found);
        }
    }
    let mut found = false;
    search(0, &mut current, &counts, n_labels, injective, &mut best, &mut found);
    let acc = if clusters.is_empty() {
        1.0
    } else {
        best.1 as f64 / clusters.len() as f64
    };
    (best.0, acc)
}

/// Hard cluster of each row (arg-max responsibility at the posterior mean)
/// and accuracy against `truth` under the best cluster→label map.
pub fn cluster_assign(model: &GmVae, x: &Tensor, truth: &[usize], n_labels: usize) -> Result<ClusterReport> {
    if truth.len() != x.rows() {
        return Err(Error::Input(format!(
            "{} labels for {} samples",
            truth.len(),
            x.rows()
        )));
    }
    if let Some(&bad) = truth.iter().find(|&&t| t >= n_labels) {
        return Err(Error::Input(format!("label {bad} out of range for {n_labels} classes")));
    }
    let (mu, _) = model.posterior(x)?;
    let responsibilities = model.gmm.responsibilities(&mu)?;
    let hard_labels = responsibilities.hard_labels();
    let (mapping, accuracy) = best_mapping(&hard_labels, truth, model.n_clusters(), n_labels);
    Ok(ClusterReport {
        hard_labels,
        responsibilities,
        mapping,
        accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cluster_scores_majority_fraction() {
        let truth = [0, 1, 1, 1, 0];
        let (map, acc) = best_mapping(&[0; 5], &truth, 1, 2);
        assert_eq!(map, vec![1]);
        assert!((acc - 0.6).abs() < 1e-15);
    }

    #[test]
    fn swapped_clusters_are_perfect() {
        let truth = [0, 1, 1, 0];
        let clusters = [1, 0, 0, 1];
        let (map, acc) = best_mapping(&clusters, &truth, 2, 2);
        assert_eq!(map, vec![1, 0]);
        assert_eq!(acc, 1.0);
        let (map, acc) = best_mapping(&truth, &truth, 2, 2);
        assert_eq!(map, vec![0, 1]);
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn three_clusters_two_labels_allows_merging() {
        let (map, acc) = best_mapping(&[0, 1, 2, 2], &[0, 0, 1, 1], 3, 2);
        assert_eq!(acc, 1.0);
        assert_eq!(map, vec![0, 0, 1]);
    }
}
