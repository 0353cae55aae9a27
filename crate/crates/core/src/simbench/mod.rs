//! Simulation designs, the kernel baseline and the Monte Carlo driver.

pub mod designs;
pub mod kernel;
pub mod mc;

pub use designs::Design;
pub use kernel::{kernel_baseline, kernel_baseline_with, Bandwidths};
pub use mc::{run_mc, McConfig, McReport, McRow};
