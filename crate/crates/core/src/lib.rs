pub mod error;
pub mod special;
pub mod tridiag;
pub mod varprior;
pub mod data;
pub mod likelihood;
pub mod optimize;
pub mod adaptive;
pub mod baselines;
pub mod synth;
pub mod io;
pub mod export;
pub mod harness;

pub use error::{Error, Result};
