//! Feed-forward function approximators with exact gradients, Adam, and soft
//! target updates.

mod adam;
pub mod checkpoint;
mod matrix;
mod mlp;

pub use adam::AdamState;
pub use matrix::Matrix;
pub use mlp::{soft_update, Activation, Grads, LayerShape, Layout, Mlp, Trace};
