//! Dense tensors, a small reverse-mode tape, MLPs, Adam, and a symmetric
//! eigensolver.

mod adam;
mod eig;
mod mlp;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use eig::{symmetric_eig, SymmetricEigen};
pub use mlp::{forward_mlp, Mlp};
pub use tape::{Gradients, ParamId, Tape, Var};
pub use tensor::Tensor;
