pub mod baselines;
pub mod bench;
pub mod cli;
pub mod error;
pub mod features;
pub mod kernels;
pub mod numerics;
pub mod spectrum;
pub mod variance;

pub use error::{Error, Result};
