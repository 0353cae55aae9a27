//! Conditional density estimation: random-forest similarity weights feed a
//! local exponential-series (Legendre) density fit.

pub mod basis;
pub mod cli;
pub mod data;
pub mod error;
pub mod expfam;
pub mod estimator;
pub mod forest;
pub mod simbench;

pub use error::{Error, Result};
