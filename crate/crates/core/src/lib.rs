//! Gaussian-mixture variational autoencoder laboratory.
//!
//! - [`ndmath`]: tensors, a reverse-mode tape, MLPs, Adam, a Jacobi eigensolver
//! - [`datagen`]: the surface-reaction bifurcation dataset
//! - [`gmvae`]: model, ELBO, EM-alternating training, checkpoints
//! - [`spectral`]: kNN-graph Laplacian energy concentration (η)
//! - [`baselines`]: classical MDS and Isomap
//! - [`align`]: least-squares affine maps from latents to physics
//! - [`cli`]: the `gmvae-lab` command line

pub mod align;
pub mod baselines;
pub mod cli;
pub mod config;
pub mod csvio;
pub mod datagen;
pub mod error;
pub mod gmvae;
pub mod ndmath;
pub mod spectral;

pub use error::{Error, Result};
