use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::elbo::ElboTerms;
use super::gmm::EmInputs;
use super::model::{standard_normal, GmVae, ModelConfig};
use crate::error::{Error, Result};
use crate::ndmath::{AdamConfig, AdamState, Tensor};

const INIT_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// EM passes over the full training set after each epoch.
    pub n_em: usize,
    pub variance_floor: f64,
    pub seed: u64,
    /// Log a progress line every this many epochs (0 disables).
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 0.0,
            batch_size: 64,
            epochs: 20_000,
            n_em: 1,
            variance_floor: 1e-6,
            seed: 0,
            log_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Input("batch_size must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0) {
            return Err(Error::Input("lr and weight_decay must be non-negative".into()));
        }
        if !(self.variance_floor > 0.0) {
            return Err(Error::Input("variance_floor must be positive".into()));
        }
        Ok(())
    }
}

/// Builds a freshly initialized model from the training seed.
pub fn init_model(model_cfg: &ModelConfig, data_dim: usize, seed: u64) -> Result<GmVae> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    GmVae::new(model_cfg, data_dim, &mut rng)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Batch-mean terms averaged over the epoch's minibatches.
    pub terms: ElboTerms,
    pub loss: f64,
    pub pi: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

/// EM-alternating training on the rows of `x`.
///
/// Each epoch runs Adam over seeded-shuffled minibatches on
/// `−ELBO + reg` (responsibilities taken at the sampled latent points and
/// held fixed for the step), then `n_em` EM updates of the mixture using
/// full-training-set embeddings.
pub fn train(model: &mut GmVae, x: &Tensor, cfg: &TrainConfig) -> Result<History> {
    train_with(model, x, cfg, |_| {})
}

/// [`train`] with a per-epoch callback.
pub fn train_with(
    model: &mut GmVae,
    x: &Tensor,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<History> {
    cfg.validate()?;
    if x.cols() != model.data_dim() || x.rows() == 0 {
        return Err(Error::Input(format!(
            "training data is {}x{}, model expects width {}",
            x.rows(),
            x.cols(),
            model.data_dim()
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    rng.set_stream(TRAIN_STREAM);
    let adam_cfg = AdamConfig {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::new(adam_cfg, model.params());
    let n = x.rows();
    let d = model.latent_dim;
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = History::default();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut terms = ElboTerms::default();
        let mut loss_acc = 0.0;
        let mut seen = 0usize;
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let xb = x.select_rows(idx);
            let eps = standard_normal(&[idx.len(), d], &mut rng);
            let diverged = |loss: f64| Error::TrainingDiverged {
                epoch,
                batch,
                loss,
                last_good_epoch: epoch.checked_sub(1),
            };
            let (obj, _) = match model.objective_sampled(&xb, &eps) {
                Ok(r) => r,
                Err(e) if e.is_numerical() => return Err(diverged(f64::NAN)),
                Err(e) => return Err(e),
            };
            if !obj.loss.is_finite() || !obj.terms.is_finite() {
                return Err(diverged(obj.loss));
            }
            let w = idx.len() as f64;
            terms.accumulate(&obj.terms, w);
            loss_acc += w * obj.loss;
            seen += idx.len();

            let grads = obj.gradients.ordered(model.n_param_tensors())?;
            let mut params = model.params_mut();
            if let Err(e) = adam.step(&mut params, &grads) {
                return Err(match e {
                    Error::NonFiniteGradient { .. } => diverged(obj.loss),
                    other => other,
                });
            }
        }
        let scale = 1.0 / seen as f64;
        let mut mean_terms = ElboTerms::default();
        mean_terms.accumulate(&terms, scale);

        for _ in 0..cfg.n_em {
            let (mu, var) = model.posterior(x)?;
            let eps = standard_normal(&[n, d], &mut rng);
            let mut z = mu.clone();
            for ((zi, vi), ei) in z.data_mut().iter_mut().zip(var.data()).zip(eps.data()) {
                *zi += vi.sqrt() * ei;
            }
            let var = var.map(|v| v.max(cfg.variance_floor));
            model.gmm = model.gmm.em_step(
                EmInputs {
                    z: &z,
                    mu: &mu,
                    var: &var,
                },
                cfg.variance_floor,
            )?;
        }

        let record = EpochRecord {
            epoch,
            terms: mean_terms,
            loss: loss_acc * scale,
            pi: model.gmm.pi.clone(),
            means: model.gmm.means.data().to_vec(),
            variances: model.gmm.variances.data().to_vec(),
        };
        if cfg.log_every > 0 && (epoch % cfg.log_every == 0 || epoch + 1 == cfg.epochs) {
            info!(
                "epoch {epoch}: loss {:.6e} recon {:.6e} pi {:?}",
                record.loss, record.terms.recon, record.pi
            );
        }
        on_epoch(&record);
        history.epochs.push(record);
    }
    Ok(history)
}
