//! Honest random-forest similarity weights around a query point.

pub mod branch;
pub mod config;
pub mod jackknife;
pub mod split;
pub mod weights;

pub use branch::{grow_branch, split_half, BranchResult, SplitRecord};
pub use config::{AxisBox, ForestConfig, SplitDimLaw, SplitScheme};
pub use jackknife::{se_subsample_plan, sigma_fe, SESubsamplePlan};
pub use split::{best_split, delta_tilde, SplitCandidate};
pub use weights::{draw_subsamples, grow_forest, mu_hat, weights, Forest, WeightVector};
