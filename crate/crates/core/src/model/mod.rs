//! The generic N-BEATS network: blocks of fully connected layers with
//! backcast and forecast heads, chained by the doubly residual recursion
//!
//! ```text
//! x_1 = x,  x_{l+1} = x_l - Q h_l,  y = sum_l G h_l,  h_l = f(x_l)
//! ```
//!
//! plus the max-window scaling wrapper and the checkpoint format.

mod block;
pub mod checkpoint;
mod network;

pub use block::{block_forward, BlockWeights};
pub use network::{
    build_model, model_forward, window_scale, ForwardTrace, ModelConfig, NBeatsModel,
    LOOKBACK_MULTIPLES,
};
