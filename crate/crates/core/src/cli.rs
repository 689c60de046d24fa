//! The `gmvae-lab` command line.
//!
//! Every subcommand takes `--config` (TOML run configuration), `--seed`
//! and `--out`. Inputs are fully read and validated before anything is
//! written. Exit status: 0 success, 1 invalid input, 2 numerical failure.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::align::{fit_affine, normal_equation_residual, FitReport};
use crate::baselines::{classical_mds, isomap, DistanceMatrix, Embedding};
use crate::config::RunConfig;
use crate::csvio::{fmt_f64, write_table, Table};
use crate::datagen::{generate, Dataset, Label, SplitKind};
use crate::gmvae::{
    cluster_assign, init_model, train_with, write_embeddings, write_history, Checkpoint, EmbeddingRow,
    EmbeddingTable, GmVae,
};
use crate::error::{Error, Result};
use crate::ndmath::Tensor;
use crate::spectral::{interpretability_report, write_report, write_spectrum, SpectralReport};

#[derive(Debug, Parser)]
#[command(name = "gmvae-lab", version, about = "Gaussian-mixture VAE laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed override (dataset seed for `generate`, training seed for `train`,
    /// sampling / control seed for `sample` / `metric`; recorded but unused by
    /// the deterministic subcommands).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file (or directory for `train` and `align`).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the surface-reaction dataset.
    Generate(GenerateArgs),
    /// Train a GM-VAE; writes checkpoint, history and embeddings.
    Train(TrainArgs),
    /// Export embeddings of a dataset under a checkpoint.
    Embed(EmbedArgs),
    /// Decode samples from the learned mixture.
    Sample(SampleArgs),
    /// Spectral energy concentration of quantities over an embedding.
    Metric(MetricArgs),
    /// Classical MDS or Isomap embedding.
    Baseline(BaselineArgs),
    /// Least-squares affine map from an embedding to physical parameters.
    Align(AlignArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Common,
    /// dataset.n_samples
    #[arg(long)]
    pub n_samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dataset CSV from `generate`.
    #[arg(long)]
    pub data: PathBuf,
    /// training.epochs
    #[arg(long)]
    pub epochs: Option<usize>,
    /// training.batch_size
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// training.lr
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// Draw every sample from this cluster instead of from the mixture.
    #[arg(long)]
    pub cluster: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

impl SplitArg {
    fn kind(self) -> Option<SplitKind> {
        match self {
            SplitArg::Train => Some(SplitKind::Train),
            SplitArg::Val => Some(SplitKind::Val),
            SplitArg::Test => Some(SplitKind::Test),
            SplitArg::All => None,
        }
    }
}

#[derive(Debug, Args)]
pub struct MetricArgs {
    #[command(flatten)]
    pub common: Common,
    /// Embeddings CSV (`sample_id`, `mu_1..`).
    #[arg(long)]
    pub embeddings: PathBuf,
    /// CSV of quantities keyed by `sample_id` (e.g. the dataset CSV).
    #[arg(long)]
    pub quantities: PathBuf,
    /// Quantity columns to score.
    #[arg(long, value_delimiter = ',', default_value = "alpha,gamma,xi1,xi2")]
    pub columns: Vec<String>,
    /// metric.k
    #[arg(long)]
    pub k: Option<usize>,
    /// metric.r_percent
    #[arg(long)]
    pub r: Option<f64>,
    /// Restrict to one split of the embeddings file.
    #[arg(long, value_enum, default_value = "all")]
    pub split: SplitArg,
    /// Also score a seeded uniform-random embedding of the same samples.
    #[arg(long)]
    pub random_control: bool,
    /// Optional per-mode dump: quantity, mode, eigenvalue, alpha.
    #[arg(long)]
    pub spectrum: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Mds,
    Isomap,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// Dataset CSV (`rho_*` columns) or embeddings CSV (`mu_*` columns).
    #[arg(long)]
    pub data: PathBuf,
    /// Isomap neighbors (default metric.k).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, value_enum, default_value = "all")]
    pub split: SplitArg,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub embeddings: PathBuf,
    /// CSV of physical parameters keyed by `sample_id`.
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "xi1,xi2")]
    pub columns: Vec<String>,
    #[arg(long, value_enum, default_value = "all")]
    pub split: SplitArg,
}

/// Parses `std::env::args`, runs, and maps errors onto exit codes.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::TrainingDiverged { last_good_epoch, .. } = &e {
                match last_good_epoch {
                    Some(ep) => eprintln!("last good epoch: {ep}"),
                    None => eprintln!("no epoch completed"),
                }
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        2
    } else {
        1
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Embed(a) => cmd_embed(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Metric(a) => cmd_metric(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Align(a) => cmd_align(a),
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    match &common.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}


fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let mut cfg = load_config(&a.common)?;
    if let Some(s) = a.common.seed {
        cfg.dataset.seed = s;
    }
    if let Some(n) = a.n_samples {
        cfg.dataset.n_samples = n;
    }
    cfg.validate()?;
    let data = generate(&cfg.dataset)?;
    data.write_csv(&a.common.out)?;
    let all = data.all_indices();
    let reactive = data.reactive_fraction(&all);
    println!(
        "wrote {} trajectories to {} (train/val/test {}/{}/{})",
        data.len(),
        a.common.out.display(),
        data.split.train.len(),
        data.split.val.len(),
        data.split.test.len()
    );
    println!(
        "class balance: reactive {:.4}, stable {:.4}",
        reactive,
        1.0 - reactive
    );
    Ok(())
}

fn embedding_rows(model: &GmVae, data: &Dataset) -> Result<Vec<EmbeddingRow>> {
    let x = data.matrix(&data.all_indices());
    let (mu, var) = model.posterior(&x)?;
    let resp = model.gmm.responsibilities(&mu)?;
    let hard = resp.hard_labels();
    let kinds = data.split.kinds(data.len());
    Ok((0..data.len())
        .map(|i| EmbeddingRow {
            sample_id: i,
            split: kinds[i],
            mu: mu.row(i).to_vec(),
            var: var.row(i).to_vec(),
            gamma: resp.gamma.row(i).to_vec(),
            hard_label: Some(hard[i]),
            true_label: Some(data.trajectories[i].label),
        })
        .collect())
}

fn report_accuracy(model: &GmVae, data: &Dataset, kind: SplitKind) -> Result<Option<f64>> {
    let idx = data.split.indices(kind);
    if idx.is_empty() {
        return Ok(None);
    }
    let truth: Vec<usize> = data.labels(idx).iter().map(|l| l.index()).collect();
    let rep = cluster_assign(model, &data.matrix(idx), &truth, 2)?;
    Ok(Some(rep.accuracy))
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg = load_config(&a.common)?;
    if let Some(s) = a.common.seed {
        cfg.training.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.training.epochs = e;
    }
    if let Some(b) = a.batch_size {
        cfg.training.batch_size = b;
    }
    if let Some(lr) = a.lr {
        cfg.training.lr = lr;
    }
    cfg.validate()?;
    let data = Dataset::read_csv(&a.data, cfg.dataset.kappa)?;
    let train_idx = data.split.indices(SplitKind::Train).to_vec();
    if train_idx.is_empty() {
        return Err(Error::Input(format!("{}: training split is empty", a.data.display())));
    }
    let x = data.matrix(&train_idx);
    let mut model = init_model(&cfg.model, data.steps(), cfg.training.seed)?;
    let log_every = cfg.training.log_every;
    let history = train_with(&mut model, &x, &cfg.training, |rec| {
        if log_every > 0 && rec.epoch % log_every == 0 {
            info!("epoch {} loss {:.6e}", rec.epoch, rec.loss);
        }
    })?;
    let rows = embedding_rows(&model, &data)?;
    let test_acc = report_accuracy(&model, &data, SplitKind::Test)?;

    let out = &a.common.out;
    let ck = Checkpoint::new(cfg.clone(), model.clone());
    let digest = ck.save(&out.join("checkpoint.json"))?;
    write_history(&out.join("history.csv"), &history, model.n_clusters())?;
    write_embeddings(&out.join("embeddings.csv"), &rows)?;

    println!("trained {} epochs on {} samples", history.len(), x.rows());
    println!("checkpoint sha256 {digest}");
    println!(
        "learned pi {:?}; training-split reactive fraction {:.4}",
        model.gmm.pi.iter().map(|p| (p * 1e4).round() / 1e4).collect::<Vec<_>>(),
        data.reactive_fraction(&train_idx)
    );
    if let Some(acc) = test_acc {
        println!("test clustering accuracy {acc:.4}");
    }
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<GmVae> {
    let (ck, digest) = Checkpoint::load(path)?;
    println!("loaded checkpoint sha256 {digest}");
    Ok(ck.model)
}

fn cmd_embed(a: EmbedArgs) -> Result<()> {
    let cfg = load_config(&a.common)?;
    let model = load_checkpoint(&a.checkpoint)?;
    let data = Dataset::read_csv(&a.data, cfg.dataset.kappa)?;
    if data.steps() != model.data_dim() {
        return Err(Error::Input(format!(
            "dataset has {} time steps, model expects {}",
            data.steps(),
            model.data_dim()
        )));
    }
    let rows = embedding_rows(&model, &data)?;
    let test_acc = report_accuracy(&model, &data, SplitKind::Test)?;
    write_embeddings(&a.common.out, &rows)?;
    println!("wrote {} embeddings to {}", rows.len(), a.common.out.display());
    if let Some(acc) = test_acc {
        println!("test clustering accuracy {acc:.4}");
    }
    Ok(())
}

fn cmd_sample(a: SampleArgs) -> Result<()> {
    let cfg = load_config(&a.common)?;
    let model = load_checkpoint(&a.checkpoint)?;
    let seed = a.common.seed.unwrap_or(cfg.training.seed);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (x, clusters) = model.sample(a.count, a.cluster, &mut rng)?;
    let steps = model.data_dim();
    let mut header = vec!["sample_id".to_string()];
    header.extend((0..steps).map(|t| format!("rho_{t}")));
    header.push("cluster".into());
    let rows: Vec<Vec<String>> = (0..a.count)
        .map(|i| {
            let mut row = vec![i.to_string()];
            row.extend(x.row(i).iter().map(|&v| fmt_f64(v)));
            row.push(clusters[i].to_string());
            row
        })
        .collect();
    write_table(&a.common.out, &header, &rows)?;
    let mut usage = vec![0usize; model.n_clusters()];
    for &c in &clusters {
        usage[c] += 1;
    }
    println!("wrote {} samples to {}; cluster usage {usage:?}", a.count, a.common.out.display());
    Ok(())
}

/// Row of `table` for each id, by its `sample_id` column.
fn join_rows(table: &Table, ids: &[usize], what: &str) -> Result<Vec<usize>> {
    let c = table.col("sample_id")?;
    let mut by_id = HashMap::with_capacity(table.len());
    for r in 0..table.len() {
        if by_id.insert(table.usize_at(r, c)?, r).is_some() {
            return Err(Error::Input(format!(
                "{}: duplicate sample_id {}",
                table.path.display(),
                table.str_at(r, c)
            )));
        }
    }
    ids.iter()
        .enumerate()
        .map(|(i, id)| {
            by_id.get(id).copied().ok_or_else(|| {
                Error::Input(format!(
                    "sample_id {id} ({what} row {}) has no match in {}",
                    i + 1,
                    table.path.display()
                ))
            })
        })
        .collect()
}

fn columns(table: &Table, rows: &[usize], names: &[String]) -> Result<Vec<(String, Vec<f64>)>> {
    names
        .iter()
        .map(|name| {
            let c = table.col(name)?;
            let vals = rows.iter().map(|&r| table.f64_at(r, c)).collect::<Result<Vec<_>>>()?;
            Ok((name.clone(), vals))
        })
        .collect()
}

fn select(emb: EmbeddingTable, split: SplitArg) -> Result<EmbeddingTable> {
    let emb = match split.kind() {
        Some(k) => emb.filter_split(k),
        None => emb,
    };
    if emb.sample_ids.is_empty() {
        return Err(Error::Input("no embeddings left after the split filter".into()));
    }
    Ok(emb)
}

fn cmd_metric(a: MetricArgs) -> Result<()> {
    let mut cfg = load_config(&a.common)?;
    if let Some(k) = a.k {
        cfg.metric.k = k;
    }
    if let Some(r) = a.r {
        cfg.metric.r_percent = r;
    }
    cfg.validate()?;
    let emb = select(EmbeddingTable::read(&a.embeddings)?, a.split)?;
    let table = Table::read(&a.quantities)?;
    let rows = join_rows(&table, &emb.sample_ids, "embedding")?;
    let quantities = columns(&table, &rows, &a.columns)?;
    let (k, r) = (cfg.metric.k, cfg.metric.r_percent);
    let main = interpretability_report(&emb.points, &quantities, k, r)?;
    let mut reports = main.reports.clone();
    let mut control: Option<Vec<SpectralReport>> = None;
    if a.random_control {
        let seed = a.common.seed.unwrap_or(0);
        let random = random_embedding(emb.points.rows(), emb.points.cols(), seed);
        let renamed: Vec<(String, Vec<f64>)> =
            quantities.iter().map(|(n, q)| (format!("random:{n}"), q.clone())).collect();
        let ctl = interpretability_report(&random, &renamed, k, r)?;
        control = Some(ctl.reports.clone());
        reports.extend(ctl.reports);
    }
    write_report(&a.common.out, &reports)?;
    if let Some(path) = &a.spectrum {
        write_spectrum(path, &main.spectrum, &main.reports)?;
    }
    println!(
        "{} samples, k = {k}, r = {r}%, {} graph component(s)",
        emb.sample_ids.len(),
        main.component_sizes.len()
    );
    for rep in &main.reports {
        let ctl = control
            .as_ref()
            .and_then(|c| c.iter().find(|c| c.quantity == format!("random:{}", rep.quantity)));
        match ctl {
            Some(c) => println!("eta[{}] = {:.6} (random control {:.6})", rep.quantity, rep.eta, c.eta),
            None => println!("eta[{}] = {:.6}", rep.quantity, rep.eta),
        }
    }
    Ok(())
}

/// `n × d` points uniform in `[0, 1)` from `seed`.
pub fn random_embedding(n: usize, d: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let data = (0..n * d).map(|_| rng.random::<f64>()).collect();
    Tensor::matrix(n, d, data).expect("n·d values")
}

struct PointTable {
    ids: Vec<usize>,
    splits: Vec<Option<SplitKind>>,
    labels: Vec<Option<Label>>,
    points: Tensor,
}

fn read_points(path: &Path, split: SplitArg) -> Result<PointTable> {
    let t = Table::read(path)?;
    let mut cols = t.numbered_columns("rho_");
    if cols.is_empty() {
        cols = t.numbered_columns("mu_");
    }
    if cols.is_empty() {
        return Err(Error::parse(path, "no rho_* or mu_* columns"));
    }
    let c_id = t.col("sample_id")?;
    let c_split = t.has("split").then(|| t.col("split")).transpose()?;
    let c_label = ["label", "true_label"].iter().find(|n| t.has(n)).map(|n| t.col(n)).transpose()?;
    let want = split.kind();
    let mut out = PointTable {
        ids: Vec::new(),
        splits: Vec::new(),
        labels: Vec::new(),
        points: Tensor::zeros(&[0, cols.len()]),
    };
    let mut data = Vec::new();
    for r in 0..t.len() {
        let s = c_split.and_then(|c| SplitKind::parse(t.str_at(r, c)));
        if want.is_some() && s != want {
            continue;
        }
        out.ids.push(t.usize_at(r, c_id)?);
        out.splits.push(s);
        out.labels.push(c_label.and_then(|c| Label::parse(t.str_at(r, c))));
        for &c in &cols {
            data.push(t.f64_at(r, c)?);
        }
    }
    if out.ids.is_empty() {
        return Err(Error::Input(format!("{}: no rows selected", path.display())));
    }
    out.points = Tensor::matrix(out.ids.len(), cols.len(), data)?;
    Ok(out)
}

fn cmd_baseline(a: BaselineArgs) -> Result<()> {
    let cfg = load_config(&a.common)?;
    let k = a.k.unwrap_or(cfg.metric.k);
    let pts = read_points(&a.data, a.split)?;
    let emb: Embedding = match a.method {
        MethodArg::Mds => classical_mds(&DistanceMatrix::euclidean(&pts.points)?, a.dim)?,
        MethodArg::Isomap => isomap(&pts.points, k, a.dim)?,
    };
    let rows: Vec<EmbeddingRow> = (0..pts.ids.len())
        .map(|i| EmbeddingRow {
            sample_id: pts.ids[i],
            split: pts.splits[i],
            mu: emb.points.row(i).to_vec(),
            var: vec![0.0; a.dim],
            gamma: Vec::new(),
            hard_label: None,
            true_label: pts.labels[i],
        })
        .collect();
    write_embeddings(&a.common.out, &rows)?;
    println!(
        "{} embedding of {} samples written to {}; stress {:.6e}",
        emb.method.as_str(),
        rows.len(),
        a.common.out.display(),
        emb.stress
    );
    Ok(())
}

#[derive(Serialize)]
struct AlignOutput<'a> {
    columns: &'a [String],
    n_samples: usize,
    /// `[A | c]`, one row per parameter.
    m: Vec<Vec<f64>>,
    normal_equation_residual: f64,
    fit: &'a FitReport,
}

fn cmd_align(a: AlignArgs) -> Result<()> {
    let _cfg = load_config(&a.common)?;
    let emb = select(EmbeddingTable::read(&a.embeddings)?, a.split)?;
    let table = Table::read(&a.params)?;
    let rows = join_rows(&table, &emb.sample_ids, "embedding")?;
    let targets = columns(&table, &rows, &a.columns)?;
    let n = emb.sample_ids.len();
    let p = targets.len();
    let mut b = Tensor::zeros(&[n, p]);
    for (j, (_, vals)) in targets.iter().enumerate() {
        for (i, &v) in vals.iter().enumerate() {
            b.set(i, j, v);
        }
    }
    let fit = fit_affine(&emb.points, &b)?;
    let pred = fit.map.apply(&emb.points)?;
    let ortho = normal_equation_residual(&fit.map, &emb.points, &b)?;
    let m = fit.map.homogeneous();
    let output = AlignOutput {
        columns: &a.columns,
        n_samples: n,
        m: (0..m.rows()).map(|i| m.row(i).to_vec()).collect(),
        normal_equation_residual: ortho,
        fit: &fit,
    };
    let json = serde_json::to_string_pretty(&output).expect("fit serializes");

    let mut header = vec!["sample_id".to_string(), "split".to_string()];
    for c in &a.columns {
        header.push(c.clone());
        header.push(format!("pred_{c}"));
    }
    let body: Vec<Vec<String>> = (0..n)
        .map(|i| {
            let mut row = vec![
                emb.sample_ids[i].to_string(),
                emb.splits[i].map_or("", SplitKind::as_str).to_string(),
            ];
            for j in 0..p {
                row.push(fmt_f64(b.get(i, j)));
                row.push(fmt_f64(pred.get(i, j)));
            }
            row
        })
        .collect();

    let out = &a.common.out;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let fit_path = out.join("fit.json");
    std::fs::write(&fit_path, json).map_err(|e| Error::io(&fit_path, e))?;
    write_table(&out.join("transformed.csv"), &header, &body)?;
    println!("affine fit on {n} samples: residual_rms {:.6e}", fit.residual_rms);
    for (c, r2) in a.columns.iter().zip(&fit.r_squared) {
        println!("r2[{c}] = {r2:.6}");
    }
    Ok(())
}
