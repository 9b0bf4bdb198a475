pub mod agent;
pub mod envs;
pub mod error;
pub mod harness;
pub mod nn;
pub mod propensity;
pub mod replay;
pub mod rng;

pub use error::{Error, Result};
