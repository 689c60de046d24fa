use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::model::GmVae;
use super::train::History;
use crate::config::RunConfig;
use crate::csvio::{fmt_f64, write_table, Table};
use crate::datagen::{Label, SplitKind};
use crate::error::{Error, Result};
use crate::ndmath::Tensor;

pub const CHECKPOINT_FORMAT: &str = "gmvae-lab/checkpoint/v1";

/// Self-describing model snapshot: format tag, run configuration, and every
/// parameter (layer widths are implied by the stored tensor shapes).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: RunConfig,
    pub model: GmVae,
}

impl Checkpoint {
    pub fn new(config: RunConfig, model: GmVae) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            config,
            model,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(self).expect("checkpoint serializes")
    }

    /// Writes the checkpoint and returns its SHA-256 digest (hex).
    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
        Ok(digest(&bytes))
    }

    /// Loads and validates a checkpoint; returns it with its digest.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint =
            serde_json::from_slice(&bytes).map_err(|e| Error::parse(path, e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::parse(
                path,
                format!("unsupported checkpoint format {:?}", ck.format),
            ));
        }
        let m = &ck.model;
        GmVae::from_parts(
            m.encoder.clone(),
            m.decoder.clone(),
            m.gmm.clone(),
            m.decoder_var,
            m.beta,
        )
        .map_err(|e| Error::parse(path, e.to_string()))?;
        m.gmm
            .validate(0.0)
            .map_err(|e| Error::parse(path, e.to_string()))?;
        Ok((ck, digest(&bytes)))
    }
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One row of the embedding export.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingRow {
    pub sample_id: usize,
    pub split: Option<SplitKind>,
    pub mu: Vec<f64>,
    pub var: Vec<f64>,
    pub gamma: Vec<f64>,
    pub hard_label: Option<usize>,
    pub true_label: Option<Label>,
}

/// Writes `sample_id, split, mu_1..d, var_1..d, gamma_1..K, hard_label,
/// true_label`. Rows with an empty `gamma` vector (baseline embeddings)
/// are written without the gamma and hard-label columns; all rows must
/// agree on that.
pub fn write_embeddings(path: &Path, rows: &[EmbeddingRow]) -> Result<()> {
    let d = rows.first().map_or(0, |r| r.mu.len());
    let k = rows.first().map_or(0, |r| r.gamma.len());
    if rows.iter().any(|r| r.mu.len() != d || r.var.len() != d || r.gamma.len() != k) {
        return Err(Error::Input("embedding rows disagree on width".into()));
    }
    let mut header = vec!["sample_id".to_string(), "split".to_string()];
    header.extend((1..=d).map(|j| format!("mu_{j}")));
    header.extend((1..=d).map(|j| format!("var_{j}")));
    header.extend((1..=k).map(|c| format!("gamma_{c}")));
    if k > 0 {
        header.push("hard_label".into());
    }
    header.push("true_label".into());
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![
                r.sample_id.to_string(),
                r.split.map_or("", SplitKind::as_str).to_string(),
            ];
            row.extend(r.mu.iter().map(|&x| fmt_f64(x)));
            row.extend(r.var.iter().map(|&x| fmt_f64(x)));
            row.extend(r.gamma.iter().map(|&x| fmt_f64(x)));
            if k > 0 {
                row.push(r.hard_label.map_or(String::new(), |c| c.to_string()));
            }
            row.push(r.true_label.map_or("", Label::as_str).to_string());
            row
        })
        .collect();
    write_table(path, &header, &body)
}

/// Embedding coordinates read back from any CSV with `sample_id` and
/// `mu_1..mu_d` columns.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub sample_ids: Vec<usize>,
    pub splits: Vec<Option<SplitKind>>,
    pub points: Tensor,
    pub hard_labels: Option<Vec<usize>>,
}

impl EmbeddingTable {
    pub fn read(path: &Path) -> Result<Self> {
        let t = Table::read(path)?;
        let id_col = t.col("sample_id")?;
        let mu_cols = t.numbered_columns("mu_");
        if mu_cols.is_empty() {
            return Err(Error::parse(path, "no mu_* columns"));
        }
        let split_col = t.has("split").then(|| t.col("split")).transpose()?;
        let hard_col = t.has("hard_label").then(|| t.col("hard_label")).transpose()?;
        let mut ids = Vec::with_capacity(t.len());
        let mut splits = Vec::with_capacity(t.len());
        let mut data = Vec::with_capacity(t.len() * mu_cols.len());
        let mut hard = Vec::new();
        for r in 0..t.len() {
            ids.push(t.usize_at(r, id_col)?);
            splits.push(split_col.and_then(|c| SplitKind::parse(t.str_at(r, c))));
            for &c in &mu_cols {
                data.push(t.f64_at(r, c)?);
            }
            if let Some(c) = hard_col {
                hard.push(t.usize_at(r, c)?);
            }
        }
        Ok(Self {
            sample_ids: ids,
            splits,
            points: Tensor::matrix(t.len(), mu_cols.len(), data)?,
            hard_labels: hard_col.map(|_| hard),
        })
    }

    /// Rows whose split equals `kind`.
    pub fn filter_split(&self, kind: SplitKind) -> Self {
        let keep: Vec<usize> = (0..self.sample_ids.len())
            .filter(|&i| self.splits[i] == Some(kind))
            .collect();
        Self {
            sample_ids: keep.iter().map(|&i| self.sample_ids[i]).collect(),
            splits: keep.iter().map(|&i| self.splits[i]).collect(),
            points: self.points.select_rows(&keep),
            hard_labels: self
                .hard_labels
                .as_ref()
                .map(|h| keep.iter().map(|&i| h[i]).collect()),
        }
    }
}

/// `epoch, loss, recon, cluster_kl, posterior_entropy, categorical_term,
/// reg, elbo, pi_1..pi_K`.
pub fn write_history(path: &Path, history: &History, k: usize) -> Result<()> {
    let mut header: Vec<String> = [
        "epoch",
        "loss",
        "recon",
        "cluster_kl",
        "posterior_entropy",
        "categorical_term",
        "reg",
        "elbo",
    ]
    .map(String::from)
    .to_vec();
    header.extend((1..=k).map(|c| format!("pi_{c}")));
    let rows: Vec<Vec<String>> = history
        .epochs
        .iter()
        .map(|e| {
            let t = &e.terms;
            let mut row = vec![
                e.epoch.to_string(),
                fmt_f64(e.loss),
                fmt_f64(t.recon),
                fmt_f64(t.cluster_kl),
                fmt_f64(t.posterior_entropy),
                fmt_f64(t.categorical_term),
                fmt_f64(t.reg),
                fmt_f64(t.elbo()),
            ];
            row.extend(e.pi.iter().map(|&p| fmt_f64(p)));
            row
        })
        .collect();
    write_table(path, &header, &rows)
}
