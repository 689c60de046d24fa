//! Closed-form ELBO of the mixture VAE and the β-weighted KL regularizer.
//!
//! Per sample, with posterior `N(μ, diag σ²)`, responsibilities `γ` and
//! mixture `(π_c, μ_c, σ_c²)`:
//!
//! ```text
//! recon       = log N(x | μ̃(z), σ̃² I)
//! cluster_kl  = −½ Σ_c γ_c Σ_j [ log 2πσ_cj² + σ_j²/σ_cj² + (μ_j − μ_cj)²/σ_cj² ]
//! entropy     = ½ Σ_j [ log 2πσ_j² + 1 ]
//! categorical = Σ_c γ_c (log π_c − log γ_c)
//! reg         = β/2 Σ_j [ μ_j² + σ_j² − 1 − log σ_j² ]
//! loss        = −(recon + cluster_kl + entropy + categorical) + reg
//! ```
//!
//! Every reported term is a mean over the batch. Responsibilities and the
//! mixture are constants for differentiation.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::gmm::{GmmParams, Responsibilities};
use super::model::{GmVae, LatentBatch};
use crate::error::{Error, Result};
use crate::ndmath::{Gradients, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ElboTerms {
    pub recon: f64,
    pub cluster_kl: f64,
    pub posterior_entropy: f64,
    pub categorical_term: f64,
    pub reg: f64,
}

impl ElboTerms {
    pub fn elbo(&self) -> f64 {
        self.recon + self.cluster_kl + self.posterior_entropy + self.categorical_term
    }

    pub fn total_loss(&self) -> f64 {
        -self.elbo() + self.reg
    }

    pub(crate) fn accumulate(&mut self, other: &ElboTerms, w: f64) {
        self.recon += w * other.recon;
        self.cluster_kl += w * other.cluster_kl;
        self.posterior_entropy += w * other.posterior_entropy;
        self.categorical_term += w * other.categorical_term;
        self.reg += w * other.reg;
    }

    pub fn is_finite(&self) -> bool {
        [
            self.recon,
            self.cluster_kl,
            self.posterior_entropy,
            self.categorical_term,
            self.reg,
        ]
        .iter()
        .all(|x| x.is_finite())
    }
}

struct TermVars {
    recon: Var,
    cluster_kl: Var,
    entropy: Var,
    reg: Var,
    categorical: f64,
    loss: Var,
}

fn categorical_term(pi: &[f64], gamma: &Tensor) -> f64 {
    let mut s = 0.0;
    for i in 0..gamma.rows() {
        for (c, &g) in gamma.row(i).iter().enumerate() {
            if g > 0.0 {
                s += g * (pi[c].ln() - g.ln());
            }
        }
    }
    s
}

/// Constant matrices that turn the cluster term into two matmuls:
/// `S = (σ² + μ²)·P − 2μ·Q + (C + R)`, with `P_jc = 1/σ_cj²`,
/// `Q_jc = μ_cj/σ_cj²`, `C_c + R_c = Σ_j log 2πσ_cj² + μ_cj²/σ_cj²`.
fn cluster_operators(gmm: &GmmParams) -> (Tensor, Tensor, Tensor) {
    let (k, d) = (gmm.k(), gmm.dim());
    let mut p = Tensor::zeros(&[d, k]);
    let mut q = Tensor::zeros(&[d, k]);
    let mut offset = Tensor::zeros(&[k]);
    for c in 0..k {
        let mut acc = 0.0;
        for j in 0..d {
            let v = gmm.variances.get(c, j);
            let m = gmm.means.get(c, j);
            p.set(j, c, 1.0 / v);
            q.set(j, c, m / v);
            acc += (2.0 * PI * v).ln() + m * m / v;
        }
        offset.data_mut()[c] = acc;
    }
    (p, q, offset)
}

#[allow(clippy::too_many_arguments)]
fn record_terms(
    tape: &mut Tape,
    model: &GmVae,
    x: Var,
    mu: Var,
    logvar: Var,
    var: Var,
    z: Var,
    gamma: &Tensor,
) -> Result<TermVars> {
    let b = tape.value(x).rows() as f64;
    let inv_b = 1.0 / b;
    let d = model.latent_dim as f64;

    let x_hat = model
        .decoder
        .forward(tape, z, model.encoder.n_param_tensors())?;
    let recon_sum = tape.gaussian_log_density(x, x_hat, model.decoder_var)?;
    let recon = tape.scale(recon_sum, inv_b);

    let (p, q, offset) = cluster_operators(&model.gmm);
    let p = tape.constant(p);
    let q = tape.constant(q);
    let offset = tape.constant(offset);
    let mu_sq = tape.square(mu);
    let second = tape.add(var, mu_sq)?;
    let quad = tape.matmul(second, p)?;
    let cross = tape.matmul(mu, q)?;
    let cross = tape.scale(cross, -2.0);
    let s = tape.add(quad, cross)?;
    let s = tape.add_row(s, offset)?;
    let g = tape.constant(gamma.clone());
    let weighted = tape.mul(s, g)?;
    let cluster_sum = tape.sum(weighted);
    let cluster_kl = tape.scale(cluster_sum, -0.5 * inv_b);

    let logvar_sum = tape.sum(logvar);
    let entropy = tape.scale(logvar_sum, 0.5 * inv_b);
    let entropy = tape.add_scalar(entropy, 0.5 * d * ((2.0 * PI).ln() + 1.0));

    let categorical = categorical_term(&model.gmm.pi, gamma) * inv_b;

    // β/2 Σ (μ² + σ² − 1 − log σ²)
    let kl_inner = tape.sub(second, logvar)?;
    let kl_sum = tape.sum(kl_inner);
    let reg = tape.scale(kl_sum, 0.5 * model.beta * inv_b);
    let reg = tape.add_scalar(reg, -0.5 * model.beta * d);

    let pos = tape.add(recon, cluster_kl)?;
    let pos = tape.add(pos, entropy)?;
    let neg = tape.scale(pos, -1.0);
    let loss = tape.add(neg, reg)?;
    let loss = tape.add_scalar(loss, -categorical);

    Ok(TermVars {
        recon,
        cluster_kl,
        entropy,
        reg,
        categorical,
        loss,
    })
}

fn read_terms(tape: &Tape, t: &TermVars) -> ElboTerms {
    let s = |v: Var| tape.value(v).data()[0];
    ElboTerms {
        recon: s(t.recon),
        cluster_kl: s(t.cluster_kl),
        posterior_entropy: s(t.entropy),
        categorical_term: t.categorical,
        reg: s(t.reg),
    }
}

fn check_gamma(gamma: &Tensor, n: usize, k: usize) -> Result<()> {
    if gamma.rows() != n || gamma.cols() != k {
        return Err(Error::shape(
            "elbo",
            format!("responsibilities {:?} for {n} samples and {k} clusters", gamma.shape()),
        ));
    }
    Responsibilities {
        gamma: gamma.clone(),
    }
    .check_rows(1e-9)
}

/// ELBO terms for precomputed embeddings. The decoder runs on
/// `embeddings.z`; the cluster, entropy and regularizer terms use
/// `embeddings.mu` and `embeddings.var`.
pub fn elbo(model: &GmVae, x: &Tensor, embeddings: &LatentBatch, gamma: &Responsibilities) -> Result<ElboTerms> {
    let n = x.rows();
    if embeddings.len() != n || embeddings.mu.cols() != model.latent_dim {
        return Err(Error::shape("elbo", "embeddings do not match the batch"));
    }
    check_gamma(&gamma.gamma, n, model.n_clusters())?;
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let mu = tape.constant(embeddings.mu.clone());
    let var = tape.constant(embeddings.var.clone());
    let logvar = tape.constant(embeddings.var.map(f64::ln));
    let z = tape.constant(embeddings.z.clone());
    let t = record_terms(&mut tape, model, xv, mu, logvar, var, z, &gamma.gamma)?;
    Ok(read_terms(&tape, &t))
}

/// Result of one recorded objective evaluation.
pub struct Objective {
    pub terms: ElboTerms,
    pub loss: f64,
    pub gradients: Gradients,
}

impl GmVae {
    /// With `gamma = None`, responsibilities are evaluated at the sampled
    /// `z` under the current mixture.
    fn record_objective(
        &self,
        tape: &mut Tape,
        x: &Tensor,
        eps: &Tensor,
        gamma: Option<&Tensor>,
    ) -> Result<(TermVars, Option<Tensor>)> {
        let d = self.latent_dim;
        if eps.rows() != x.rows() || eps.cols() != d {
            return Err(Error::shape(
                "objective",
                format!("noise {:?} for batch of {}", eps.shape(), x.rows()),
            ));
        }
        if let Some(g) = gamma {
            check_gamma(g, x.rows(), self.n_clusters())?;
        }
        let xv = tape.constant(x.clone());
        let enc = self.encoder.forward(tape, xv, 0)?;
        let mu = tape.slice_cols(enc, 0, d)?;
        let logvar = tape.slice_cols(enc, d, 2 * d)?;
        let half = tape.scale(logvar, 0.5);
        let std = tape.exp(half);
        let var = tape.square(std);
        let e = tape.constant(eps.clone());
        let noise = tape.mul(std, e)?;
        let z = tape.add(mu, noise)?;
        if !tape.value(z).all_finite() {
            return Err(Error::Divergence("encoder produced non-finite latent samples".into()));
        }
        let fresh = match gamma {
            Some(_) => None,
            None => Some(self.gmm.responsibilities(tape.value(z))?.gamma),
        };
        let g = gamma.or(fresh.as_ref()).expect("one of the two is set");
        let t = record_terms(tape, self, xv, mu, logvar, var, z, g)?;
        Ok((t, fresh))
    }

    /// Loss `−ELBO + reg` through the encoder with fixed noise and
    /// responsibilities.
    pub fn loss_value(&self, x: &Tensor, eps: &Tensor, gamma: &Tensor) -> Result<f64> {
        let mut tape = Tape::new();
        let (t, _) = self.record_objective(&mut tape, x, eps, Some(gamma))?;
        Ok(tape.value(t.loss).data()[0])
    }

    /// Loss, its terms, and gradients for every encoder/decoder parameter
    /// (ids in [`GmVae::params`] order).
    pub fn objective(&self, x: &Tensor, eps: &Tensor, gamma: &Tensor) -> Result<Objective> {
        let mut tape = Tape::new();
        let (t, _) = self.record_objective(&mut tape, x, eps, Some(gamma))?;
        Self::finish(tape, t)
    }

    /// Training-step objective: responsibilities come from the current
    /// mixture at the sampled latent points and are returned alongside.
    pub fn objective_sampled(&self, x: &Tensor, eps: &Tensor) -> Result<(Objective, Tensor)> {
        let mut tape = Tape::new();
        let (t, gamma) = self.record_objective(&mut tape, x, eps, None)?;
        Ok((Self::finish(tape, t)?, gamma.expect("computed when not supplied")))
    }

    fn finish(mut tape: Tape, t: TermVars) -> Result<Objective> {
        let terms = read_terms(&tape, &t);
        let loss = tape.value(t.loss).data()[0];
        let gradients = tape.backward(t.loss)?;
        Ok(Objective {
            terms,
            loss,
            gradients,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmvae::model::ModelConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(k: usize, seed: u64) -> GmVae {
        let cfg = ModelConfig {
            n_clusters: k,
            hidden_dims: vec![3],
            decoder_var: 0.5,
            ..ModelConfig::default()
        };
        GmVae::new(&cfg, 4, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn unit_posterior_has_zero_regularizer() {
        let m = model(1, 0);
        let x = Tensor::filled(&[2, 4], 0.3);
        let emb = LatentBatch {
            mu: Tensor::zeros(&[2, 2]),
            var: Tensor::filled(&[2, 2], 1.0),
            eps: Tensor::zeros(&[2, 2]),
            z: Tensor::zeros(&[2, 2]),
        };
        let g = Responsibilities {
            gamma: Tensor::filled(&[2, 1], 1.0),
        };
        let t = elbo(&m, &x, &emb, &g).unwrap();
        assert!(t.reg.abs() < 1e-15);
    }

    #[test]
    fn standard_prior_reduces_to_negative_kl() {
        let mut m = model(1, 1);
        m.gmm = GmmParams::standard(2);
        let x = Tensor::filled(&[1, 4], 0.1);
        let (mu, var) = ([0.7, -0.4], [0.3, 2.2]);
        let emb = LatentBatch {
            mu: Tensor::matrix(1, 2, mu.to_vec()).unwrap(),
            var: Tensor::matrix(1, 2, var.to_vec()).unwrap(),
            eps: Tensor::zeros(&[1, 2]),
            z: Tensor::matrix(1, 2, mu.to_vec()).unwrap(),
        };
        let g = Responsibilities {
            gamma: Tensor::filled(&[1, 1], 1.0),
        };
        let t = elbo(&m, &x, &emb, &g).unwrap();
        let neg_kl: f64 = -0.5
            * (0..2)
                .map(|j| mu[j] * mu[j] + var[j] - 1.0 - var[j].ln())
                .sum::<f64>();
        assert!((t.cluster_kl + t.posterior_entropy - neg_kl).abs() < 1e-12);
        assert_eq!(t.categorical_term, 0.0);
    }

    #[test]
    fn bad_gamma_rows_are_rejected() {
        let m = model(2, 2);
        let x = Tensor::filled(&[1, 4], 0.1);
        let eps = Tensor::zeros(&[1, 2]);
        let gamma = Tensor::matrix(1, 2, vec![0.7, 0.7]).unwrap();
        assert!(matches!(m.loss_value(&x, &eps, &gamma), Err(Error::Contract(_))));
    }

    #[test]
    fn objective_terms_match_standalone_elbo() {
        let m = model(2, 3);
        let x = Tensor::matrix(2, 4, vec![0.1, 0.5, -0.3, 0.9, 0.2, 0.2, 0.0, -1.0]).unwrap();
        let eps = Tensor::matrix(2, 2, vec![0.3, -1.0, 0.5, 0.1]).unwrap();
        let emb = m.encode_with_noise(&x, eps.clone()).unwrap();
        let gamma = m.gmm.responsibilities(&emb.z).unwrap();
        let direct = elbo(&m, &x, &emb, &gamma).unwrap();
        let obj = m.objective(&x, &eps, &gamma.gamma).unwrap();
        assert!((direct.total_loss() - obj.loss).abs() < 1e-10);
        assert!((direct.recon - obj.terms.recon).abs() < 1e-10);
        assert_eq!(obj.gradients.len(), m.n_param_tensors());
    }
}
