use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box. Each side is closed at `hi`; the lower side is open on
/// dimensions where a split has placed the box to the right of a threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AxisBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    #[serde(default, skip_serializing)]
    lo_open: Vec<bool>,
}

impl PartialEq for AxisBox {
    fn eq(&self, other: &Self) -> bool {
        self.lo == other.lo
            && self.hi == other.hi
            && (0..self.dim()).all(|m| self.lower_open(m) == other.lower_open(m))
    }
}

impl AxisBox {
    /// Closed box `[lo, hi]`.
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::config("box bounds must be nonempty and of equal length"));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::config("box requires finite lo < hi on every side"));
        }
        let d = lo.len();
        Ok(Self {
            lo,
            hi,
            lo_open: vec![false; d],
        })
    }

    /// The cube `[lo, hi]^d`.
    pub fn cube(d: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; d], vec![hi; d])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    fn lower_open(&self, m: usize) -> bool {
        self.lo_open.get(m).copied().unwrap_or(false)
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter().enumerate().all(|(m, &v)| {
                let above = if self.lower_open(m) {
                    v > self.lo[m]
                } else {
                    v >= self.lo[m]
                };
                above && v <= self.hi[m]
            })
    }

    /// Splits along `dim` at `threshold`: left keeps `v <= threshold`, right keeps `v > threshold`.
    pub fn split(&self, dim: usize, threshold: f64) -> (AxisBox, AxisBox) {
        let mut left = self.clone();
        let mut right = self.clone();
        left.hi[dim] = threshold;
        right.lo[dim] = threshold;
        right.lo_open.resize(self.dim(), false);
        right.lo_open[dim] = true;
        (left, right)
    }

    /// True when `self` lies inside `outer`.
    pub fn is_within(&self, outer: &AxisBox) -> bool {
        self.dim() == outer.dim()
            && (0..self.dim()).all(|m| self.lo[m] >= outer.lo[m] && self.hi[m] <= outer.hi[m])
    }

    /// Sum of side lengths; strictly decreases under a proper split.
    pub fn perimeter(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).sum()
    }
}

/// Which parameter's heterogeneity drives the split criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitScheme {
    /// Pseudo-outcomes `-V(t)^{-1}[mu(t) - phi(y_i)]` around the parent's exponential-series fit.
    ThetaHeterogeneity,
    /// Pseudo-outcomes `phi(y_i) - mean` around the parent's basis mean.
    MuHeterogeneity,
}

/// Distribution of the set of dimensions eligible at each split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitDimLaw {
    /// Draw `K = min(max(Poisson(mean), 1), d)` then `K` distinct dimensions uniformly.
    CappedPoisson { mean: f64 },
    /// A single dimension, uniformly.
    Singletons,
    /// Explicit law over subsets (0-based dimension indices).
    Custom { subsets: Vec<Vec<usize>>, probs: Vec<f64> },
}

impl Default for SplitDimLaw {
    fn default() -> Self {
        SplitDimLaw::CappedPoisson { mean: 5.0 }
    }
}

impl SplitDimLaw {
    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            SplitDimLaw::CappedPoisson { mean } => {
                if !(mean.is_finite() && *mean > 0.0) {
                    return Err(Error::config("Poisson mean must be positive"));
                }
            }
            SplitDimLaw::Singletons => {}
            SplitDimLaw::Custom { subsets, probs } => {
                if subsets.len() != probs.len() || subsets.is_empty() {
                    return Err(Error::config("custom law needs one probability per subset"));
                }
                if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return Err(Error::config("custom law probabilities must be nonnegative"));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::config("custom law probabilities must sum to 1"));
                }
                for (s, &p) in subsets.iter().zip(probs) {
                    if p > 0.0 && s.is_empty() {
                        return Err(Error::config("empty subset must have zero mass"));
                    }
                    if s.iter().any(|&m| m >= d) {
                        return Err(Error::config("subset references a dimension >= d"));
                    }
                }
                for m in 0..d {
                    let mass: f64 = subsets
                        .iter()
                        .zip(probs)
                        .filter(|(s, _)| s.len() == 1 && s[0] == m)
                        .map(|(_, p)| p)
                        .sum();
                    if mass <= 0.0 {
                        return Err(Error::config(format!(
                            "singleton {{{m}}} must have positive mass"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Sorted, distinct dimensions.
    pub fn draw<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> Vec<usize> {
        let mut dims = match self {
            SplitDimLaw::CappedPoisson { mean } => {
                let pois = Poisson::new(*mean).expect("validated Poisson mean");
                let k = (pois.sample(rng) as usize).max(1).min(d);
                index::sample(rng, d, k).into_vec()
            }
            SplitDimLaw::Singletons => vec![rng.random_range(0..d)],
            SplitDimLaw::Custom { subsets, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = subsets.len() - 1;
                for (k, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        chosen = k;
                        break;
                    }
                }
                let mut s = subsets[chosen].clone();
                s.dedup();
                s
            }
        };
        dims.sort_unstable();
        dims.dedup();
        dims
    }
}

/// Tuning parameters for growing similarity-weight forests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestConfig {
    /// Subsample size `s`.
    pub subsample_size: usize,
    /// Number of trees `N`.
    pub n_trees: usize,
    /// Basis order `J`.
    pub order: usize,
    /// Minimum child count.
    pub k_min: usize,
    /// Minimum child fraction, in `(0, 1/2)`.
    pub alpha_min: f64,
    pub initial_parent: AxisBox,
    #[serde(default)]
    pub split_dim_law: SplitDimLaw,
    pub scheme: SplitScheme,
    /// Candidate thresholds per dimension.
    pub n_grid: usize,
    pub seed: u64,
    /// Worker threads for tree growth. Results do not depend on it.
    #[serde(skip, default = "one")]
    pub workers: usize,
}

fn one() -> usize {
    1
}

impl ForestConfig {
    /// Settings used in the Monte Carlo designs: `J = 8`, `N = 2240`,
    /// `k = 10`, `alpha = 0.05`, parent `[1/4, 3/4]^d`.
    pub fn mc_defaults(d: usize, subsample_size: usize) -> Self {
        Self {
            subsample_size,
            n_trees: 2240,
            order: 8,
            k_min: 10,
            alpha_min: 0.05,
            initial_parent: AxisBox::cube(d, 0.25, 0.75).expect("valid cube"),
            split_dim_law: SplitDimLaw::default(),
            scheme: SplitScheme::ThetaHeterogeneity,
            n_grid: 32,
            seed: 0,
            workers: 1,
        }
    }

    /// Checks invariants against a sample of size `n` in dimension `d`.
    pub fn validate(&self, n: usize, d: usize) -> Result<()> {
        let s = self.subsample_size;
        if s >= n {
            return Err(Error::config(format!("subsample size s = {s} must be < n = {n}")));
        }
        if 2 * self.k_min > s {
            return Err(Error::config(format!(
                "2 * k_min = {} exceeds subsample size {s}",
                2 * self.k_min
            )));
        }
        if self.k_min == 0 {
            return Err(Error::config("k_min must be positive"));
        }
        if !(self.alpha_min > 0.0 && self.alpha_min < 0.5) {
            return Err(Error::config("alpha_min must lie in (0, 1/2)"));
        }
        if self.n_trees == 0 {
            return Err(Error::config("number of trees must be positive"));
        }
        if self.order == 0 {
            return Err(Error::config("basis order must be positive"));
        }
        if self.n_grid == 0 {
            return Err(Error::config("n_grid must be positive"));
        }
        AxisBox::new(self.initial_parent.lo.clone(), self.initial_parent.hi.clone())?;
        if self.initial_parent.dim() != d {
            return Err(Error::config(format!(
                "initial parent has dimension {}, data has {d}",
                self.initial_parent.dim()
            )));
        }
        if self.workers == 0 {
            return Err(Error::config("workers must be positive"));
        }
        self.split_dim_law.validate(d)
    }
}
