//! Generic N-BEATS forecasting with zero-shot evaluation.

pub mod autodiff;
pub mod baselines;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision model, the default for analysis and checks.
pub type Model = model::NBeatsModel<f64>;
/// Single-precision model, roughly twice as fast to train.
pub type Model32 = model::NBeatsModel<f32>;
pub type Mat = autodiff::Matrix<f64>;
pub type Trace = model::ForwardTrace<f64>;
pub type Trained = training::TrainOutcome<f64>;
