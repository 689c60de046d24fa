//! Surface-reaction bifurcation dataset.
//!
//! Each sample draws `ξ1, ξ2 ~ N(0, 1)`, sets
//! `α = 0.1 + exp(0.05 ξ1)` and `γ = 0.001 + 0.01 exp(0.05 ξ2)`, and
//! integrates `dρ/dt = α(1 − ρ) − γρ − κρ(1 − ρ)²` from `ρ(0) = 0.89` with
//! classic RK4. Trajectories that end above the label threshold are
//! *reactive*, the rest *stable*.
//!
//! Sample `i` draws from ChaCha20 stream `i` of the master seed (normals via
//! the ziggurat sampler of `rand_distr::StandardNormal`), so parallel and
//! serial generation give identical data. The split permutation uses a
//! separate stream.

use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csvio::{fmt_f64, write_table, Table};
use crate::error::{Error, Result};
use crate::ndmath::Tensor;

pub const RHO_INITIAL: f64 = 0.89;
const SPLIT_STREAM: u64 = u64::MAX;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_samples: usize,
    pub steps: usize,
    pub horizon: f64,
    pub label_threshold: f64,
    pub seed: u64,
    pub kappa: f64,
    /// RK4 substeps per stored interval.
    pub substeps: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_samples: 1280,
            steps: 50,
            horizon: 500.0,
            label_threshold: 0.5,
            seed: 0,
            kappa: 10.0,
            substeps: 50,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 10 {
            return Err(Error::Input(format!(
                "n_samples must be at least 10, got {}",
                self.n_samples
            )));
        }
        if self.steps < 2 {
            return Err(Error::Input("steps must be at least 2".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Input("horizon must be positive".into()));
        }
        if self.substeps == 0 {
            return Err(Error::Input("substeps must be positive".into()));
        }
        if !self.label_threshold.is_finite() || !self.kappa.is_finite() || self.kappa < 0.0 {
            return Err(Error::Input("label_threshold and kappa must be finite, kappa ≥ 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReactionParams {
    pub xi1: f64,
    pub xi2: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub kappa: f64,
}

impl ReactionParams {
    pub fn from_xi(xi1: f64, xi2: f64, kappa: f64) -> Self {
        Self {
            xi1,
            xi2,
            alpha: 0.1 + (0.05 * xi1).exp(),
            gamma: 0.001 + 0.01 * (0.05 * xi2).exp(),
            kappa,
        }
    }

    /// Explicit rates, for tests and degenerate cases.
    pub fn with_rates(alpha: f64, gamma: f64, kappa: f64) -> Self {
        Self {
            xi1: f64::NAN,
            xi2: f64::NAN,
            alpha,
            gamma,
            kappa,
        }
    }
}

pub fn reaction_rhs(rho: f64, p: &ReactionParams) -> f64 {
    let u = 1.0 - rho;
    p.alpha * u - p.gamma * rho - p.kappa * rho * u * u
}

/// RK4 on a uniform grid of `steps` points over `[0, horizon]`, taking
/// `substeps` RK4 steps between stored points.
pub fn integrate(p: &ReactionParams, steps: usize, horizon: f64, substeps: usize) -> Result<Vec<f64>> {
    if steps < 2 || !(horizon > 0.0) || substeps == 0 {
        return Err(Error::Input(format!(
            "integrate needs steps ≥ 2, horizon > 0, substeps ≥ 1 (got {steps}, {horizon}, {substeps})"
        )));
    }
    let h = horizon / (steps - 1) as f64 / substeps as f64;
    let mut rho = RHO_INITIAL;
    let mut out = Vec::with_capacity(steps);
    out.push(rho);
    for step in 1..steps {
        for _ in 0..substeps {
            let k1 = reaction_rhs(rho, p);
            let k2 = reaction_rhs(rho + 0.5 * h * k1, p);
            let k3 = reaction_rhs(rho + 0.5 * h * k2, p);
            let k4 = reaction_rhs(rho + h * k3, p);
            rho += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        if !rho.is_finite() {
            return Err(Error::Integration { step });
        }
        out.push(rho);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Stable,
    Reactive,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Stable => "stable",
            Label::Reactive => "reactive",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Label::Stable => 0,
            Label::Reactive => 1,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "stable" => Some(Label::Stable),
            "reactive" => Some(Label::Reactive),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Reactive iff the terminal coverage exceeds `threshold`.
pub fn label(rho: &[f64], threshold: f64) -> Label {
    match rho.last() {
        Some(&r) if r > threshold => Label::Reactive,
        _ => Label::Stable,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub rho: Vec<f64>,
    pub params: ReactionParams,
    pub label: Label,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Train,
    Val,
    Test,
}

impl SplitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::Val => "val",
            SplitKind::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(SplitKind::Train),
            "val" => Some(SplitKind::Val),
            "test" => Some(SplitKind::Test),
            _ => None,
        }
    }
}

impl fmt::Display for SplitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Index sets of a train/validation/test partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// 80/10/10: validation and test get `⌊n/10⌋` each, training the rest
    /// (1280 → 1024/128/128, 10 → 8/1/1).
    pub fn random(n: usize, rng: &mut impl Rng) -> Self {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        let tenth = n / 10;
        let n_train = n - 2 * tenth;
        let mut train = perm[..n_train].to_vec();
        let mut val = perm[n_train..n_train + tenth].to_vec();
        let mut test = perm[n_train + tenth..].to_vec();
        train.sort_unstable();
        val.sort_unstable();
        test.sort_unstable();
        Self { train, val, test }
    }

    pub fn indices(&self, kind: SplitKind) -> &[usize] {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Val => &self.val,
            SplitKind::Test => &self.test,
        }
    }

    /// Split membership of each of `n` samples (None if unassigned).
    pub fn kinds(&self, n: usize) -> Vec<Option<SplitKind>> {
        let mut out = vec![None; n];
        for kind in [SplitKind::Train, SplitKind::Val, SplitKind::Test] {
            for &i in self.indices(kind) {
                if i < n {
                    out[i] = Some(kind);
                }
            }
        }
        out
    }

    /// True when the three sets are disjoint and cover `0..n`.
    pub fn is_partition(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= n || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        seen.into_iter().all(|s| s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    pub split: Split,
}

fn sample_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Parameters of sample `index` under `seed`.
pub fn sample_params(seed: u64, index: usize, kappa: f64) -> ReactionParams {
    let mut rng = sample_rng(seed, index as u64);
    let xi1: f64 = rng.sample(StandardNormal);
    let xi2: f64 = rng.sample(StandardNormal);
    ReactionParams::from_xi(xi1, xi2, kappa)
}

pub fn simulate(p: ReactionParams, cfg: &DatasetConfig) -> Result<Trajectory> {
    let rho = integrate(&p, cfg.steps, cfg.horizon, cfg.substeps)?;
    if let Some((step, r)) = rho
        .iter()
        .enumerate()
        .find(|(_, r)| !(0.0..=1.0 + 1e-9).contains(*r))
    {
        return Err(Error::Contract(format!(
            "coverage left [0, 1] at step {step}: {r}"
        )));
    }
    let label = label(&rho, cfg.label_threshold);
    Ok(Trajectory { rho, params: p, label })
}

pub fn generate(cfg: &DatasetConfig) -> Result<Dataset> {
    cfg.validate()?;
    let trajectories = (0..cfg.n_samples)
        .into_par_iter()
        .map(|i| simulate(sample_params(cfg.seed, i, cfg.kappa), cfg))
        .collect::<Result<Vec<_>>>()?;
    let split = Split::random(cfg.n_samples, &mut sample_rng(cfg.seed, SPLIT_STREAM));
    Ok(Dataset {
        trajectories,
        split,
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.trajectories.first().map_or(0, |t| t.rho.len())
    }

    /// `ρ` curves of the selected samples as a row matrix.
    pub fn matrix(&self, idx: &[usize]) -> Tensor {
        let steps = self.steps();
        let mut data = Vec::with_capacity(idx.len() * steps);
        for &i in idx {
            data.extend_from_slice(&self.trajectories[i].rho);
        }
        Tensor::matrix(idx.len(), steps, data).expect("uniform trajectory length")
    }

    pub fn labels(&self, idx: &[usize]) -> Vec<Label> {
        idx.iter().map(|&i| self.trajectories[i].label).collect()
    }

    pub fn reactive_fraction(&self, idx: &[usize]) -> f64 {
        let n = idx.len().max(1) as f64;
        idx.iter()
            .filter(|&&i| self.trajectories[i].label == Label::Reactive)
            .count() as f64
            / n
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }

    pub fn csv_header(steps: usize) -> Vec<String> {
        let mut h = vec!["sample_id".to_string()];
        h.extend((0..steps).map(|t| format!("rho_{t}")));
        h.extend(["xi1", "xi2", "alpha", "gamma", "label", "split"].map(String::from));
        h
    }

    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        let kinds = self.split.kinds(self.len());
        self.trajectories
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut row = vec![i.to_string()];
                row.extend(t.rho.iter().map(|&r| fmt_f64(r)));
                row.push(fmt_f64(t.params.xi1));
                row.push(fmt_f64(t.params.xi2));
                row.push(fmt_f64(t.params.alpha));
                row.push(fmt_f64(t.params.gamma));
                row.push(t.label.to_string());
                row.push(kinds[i].map_or("", SplitKind::as_str).to_string());
                row
            })
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_table(path, &Self::csv_header(self.steps()), &self.csv_rows())
    }

    /// Reads a CSV written by [`Dataset::write_csv`]. Rows must be ordered by
    /// `sample_id = 0..n`. `kappa` is not stored in the file and is supplied by
    /// the caller.
    pub fn read_csv(path: &Path, kappa: f64) -> Result<Self> {
        let t = Table::read(path)?;
        let rho_cols = t.numbered_columns("rho_");
        if rho_cols.len() < 2 {
            return Err(Error::parse(path, "expected at least two rho_* columns"));
        }
        let (c_id, c_x1, c_x2, c_a, c_g, c_l, c_s) = (
            t.col("sample_id")?,
            t.col("xi1")?,
            t.col("xi2")?,
            t.col("alpha")?,
            t.col("gamma")?,
            t.col("label")?,
            t.col("split")?,
        );
        let mut trajectories = Vec::with_capacity(t.len());
        let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
        for r in 0..t.len() {
            let id = t.usize_at(r, c_id)?;
            if id != r {
                return Err(Error::parse(
                    path,
                    format!("row {}: sample_id {id} out of order (expected {r})", r + 1),
                ));
            }
            let rho = rho_cols
                .iter()
                .map(|&c| t.f64_at(r, c))
                .collect::<Result<Vec<_>>>()?;
            let params = ReactionParams {
                xi1: t.f64_at(r, c_x1)?,
                xi2: t.f64_at(r, c_x2)?,
                alpha: t.f64_at(r, c_a)?,
                gamma: t.f64_at(r, c_g)?,
                kappa,
            };
            let label = Label::parse(t.str_at(r, c_l)).ok_or_else(|| {
                Error::parse(path, format!("row {}: unknown label {:?}", r + 1, t.str_at(r, c_l)))
            })?;
            match SplitKind::parse(t.str_at(r, c_s)) {
                Some(SplitKind::Train) => train.push(r),
                Some(SplitKind::Val) => val.push(r),
                Some(SplitKind::Test) => test.push(r),
                None => {
                    return Err(Error::parse(
                        path,
                        format!("row {}: unknown split {:?}", r + 1, t.str_at(r, c_s)),
                    ))
                }
            }
            trajectories.push(Trajectory { rho, params, label });
        }
        Ok(Self {
            trajectories,
            split: Split { train, val, test },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rhs_at_boundaries() {
        let p = ReactionParams::with_rates(1.3, 0.02, 1.0);
        assert_eq!(reaction_rhs(0.0, &p), 1.3);
        assert_eq!(reaction_rhs(1.0, &p), -0.02);
    }

    #[test]
    fn rhs_hand_value() {
        let p = ReactionParams::with_rates(1.1, 0.011, 1.0);
        assert!((reaction_rhs(0.5, &p) - 0.4195).abs() < 1e-15);
    }

    #[test]
    fn rates_at_zero_draws() {
        let p = ReactionParams::from_xi(0.0, 0.0, 1.0);
        assert_eq!(p.alpha, 1.1);
        assert_eq!(p.gamma, 0.011);
        assert_eq!(p.kappa, 1.0);
    }

    #[test]
    fn zero_rhs_gives_constant_trajectory() {
        let p = ReactionParams::with_rates(0.0, 0.0, 0.0);
        let rho = integrate(&p, 50, 500.0, 10).unwrap();
        assert!(rho.iter().all(|&r| r == RHO_INITIAL));
        assert_eq!(label(&rho, 0.5), Label::Reactive);
    }

    #[test]
    fn decaying_trajectory_is_stable() {
        let rho: Vec<f64> = (0..50).map(|t| 0.05 + 0.84 * (-(t as f64) / 5.0).exp()).collect();
        assert_eq!(label(&rho, 0.5), Label::Stable);
    }

    #[test]
    fn first_sample_is_initial_coverage() {
        for i in 0..20 {
            let p = sample_params(3, i, 10.0);
            let rho = integrate(&p, 50, 500.0, 50).unwrap();
            assert_eq!(rho[0], 0.89);
        }
    }

    #[test]
    fn reference_draw_matches_fine_integration() {
        let cfg = DatasetConfig::default();
        for kappa in [1.0, cfg.kappa] {
            let p = ReactionParams::from_xi(0.0, 0.0, kappa);
            let coarse = integrate(&p, cfg.steps, cfg.horizon, cfg.substeps).unwrap();
            let fine = integrate(&p, cfg.steps, cfg.horizon, cfg.substeps * 100).unwrap();
            assert!((coarse[49] - fine[49]).abs() < 1e-6);
        }
    }

    #[test]
    fn integrate_rejects_bad_grid() {
        let p = ReactionParams::from_xi(0.0, 0.0, 1.0);
        assert!(integrate(&p, 1, 1.0, 1).is_err());
        assert!(integrate(&p, 5, 0.0, 1).is_err());
    }

    #[test]
    fn blow_up_reports_step() {
        let p = ReactionParams::with_rates(0.0, 0.0, -1e6);
        assert!(matches!(
            integrate(&p, 50, 500.0, 1),
            Err(Error::Integration { .. })
        ));
    }

    #[test]
    fn split_sizes() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let s = Split::random(1280, &mut rng);
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (1024, 128, 128));
        assert!(s.is_partition(1280));
        let s = Split::random(10, &mut rng);
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (8, 1, 1));
        assert!(s.is_partition(10));
    }

    #[test]
    fn generation_is_deterministic_and_bounded() {
        let cfg = DatasetConfig {
            n_samples: 64,
            seed: 9,
            ..DatasetConfig::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.split.is_partition(64));
        for t in &a.trajectories {
            assert!(t.rho.iter().all(|&r| (0.0..=1.0 + 1e-9).contains(&r)));
        }
        assert!(generate(&DatasetConfig { n_samples: 9, ..cfg }).is_err());
    }
}
