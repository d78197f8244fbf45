//! Dense-network numerics: matrices, fully connected layers, a reverse-mode
//! tape with fused forecasting-loss nodes, and Adam.

mod adam;
mod layer;
mod matrix;
mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use layer::{forward_dense, Activation, DenseLayer, LayerVars};
pub use matrix::Matrix;
pub use tape::{Gradients, LossKind, Tape, Var, DENOMINATOR_GUARD};
