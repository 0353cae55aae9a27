//! Subsampling, per-tree leaves and the similarity weights
//!
//! ```text
//! w_i(x) = (1/N) sum_b 1[i in leaf_b(x)] / |leaf_b(x)|
//! ```
//!
//! where `leaf_b(x)` is the set of holdout observations sharing tree `b`'s
//! leaf with `x`. An empty leaf contributes nothing (0/0 = 0).

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::basis::BasisSpec;
use crate::data::{Dataset, PhiTable};
use crate::error::{Error, Result};
use crate::expfam::MomentVector;
use crate::forest::branch::{grow_branch, BranchResult};
use crate::forest::config::ForestConfig;

/// RNG stream for plan-level draws (subsamples, delete groups).
pub fn plan_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng
}

/// Independent RNG stream for tree `tree`.
pub fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64 + 1);
    rng
}

/// `s` distinct indices from `0..n`, ascending.
pub fn draw_subsample<R: Rng + ?Sized>(n: usize, s: usize, rng: &mut R) -> Vec<usize> {
    let mut v = index::sample(rng, n, s).into_vec();
    v.sort_unstable();
    v
}

/// `N` independent size-`s` subsamples of `0..n`, each without replacement.
pub fn draw_subsamples<R: Rng + ?Sized>(
    n: usize,
    cfg: &ForestConfig,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if cfg.subsample_size >= n {
        return Err(Error::config(format!(
            "subsample size s = {} must be < n = {n}",
            cfg.subsample_size
        )));
    }
    Ok((0..cfg.n_trees)
        .map(|_| draw_subsample(n, cfg.subsample_size, rng))
        .collect())
}

/// Nonnegative per-observation weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub weights: Vec<f64>,
}

impl WeightVector {
    /// `1/n` on every observation.
    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Leaves of a grown forest.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub subsamples: Vec<Vec<usize>>,
    pub branches: Vec<BranchResult>,
    n: usize,
}

impl Forest {
    pub fn n_trees(&self) -> usize {
        self.branches.len()
    }

    /// Similarity weights at the query point the forest was grown for.
    pub fn weights(&self) -> WeightVector {
        let mut w = vec![0.0; self.n];
        for b in &self.branches {
            if b.holdout_members.is_empty() {
                continue;
            }
            let share = 1.0 / b.holdout_members.len() as f64;
            for &i in &b.holdout_members {
                w[i] += share;
            }
        }
        let n_trees = self.branches.len() as f64;
        w.iter_mut().for_each(|v| *v /= n_trees);
        WeightVector { weights: w }
    }

    /// Per-tree leaf averages of `phi(y_i)`, row-major `N x J`; an empty
    /// leaf gives the zero vector.
    pub fn leaf_means(&self, phi: &PhiTable) -> Vec<f64> {
        self.branches
            .iter()
            .flat_map(|b| phi.mean_over(&b.holdout_members))
            .collect()
    }
}

/// Grows one branch per subsample; tree `b` uses RNG stream `b + 1` of
/// `cfg.seed`, so results do not depend on `cfg.workers`.
pub fn grow_forest(
    x: &[f64],
    data: &Dataset,
    phi: &PhiTable,
    spec: &BasisSpec,
    subsamples: Vec<Vec<usize>>,
    cfg: &ForestConfig,
) -> Result<Forest> {
    let grow = |(b, sub): (usize, &Vec<usize>)| {
        let mut rng = tree_rng(cfg.seed, b);
        grow_branch(x, data, phi, spec, sub, cfg, &mut rng)
    };
    let branches: Result<Vec<BranchResult>> = if cfg.workers <= 1 {
        subsamples.iter().enumerate().map(grow).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::config(format!("cannot build thread pool: {e}")))?;
        pool.install(|| subsamples.par_iter().enumerate().map(grow).collect())
    };
    Ok(Forest {
        subsamples,
        branches: branches?,
        n: data.len(),
    })
}

/// Similarity weights at `x` from a forest drawn with `cfg.seed`.
pub fn weights(x: &[f64], data: &Dataset, cfg: &ForestConfig, spec: &BasisSpec) -> Result<WeightVector> {
    cfg.validate(data.len(), data.dim())?;
    let phi = PhiTable::new(data, spec)?;
    let subsamples = draw_subsamples(data.len(), cfg, &mut plan_rng(cfg.seed))?;
    Ok(grow_forest(x, data, &phi, spec, subsamples, cfg)?.weights())
}

/// `sum_i w_i phi(y_i)`.
pub fn mu_hat(weights: &WeightVector, data: &Dataset, spec: &BasisSpec) -> Result<MomentVector> {
    if weights.len() != data.len() {
        return Err(Error::config("weight vector length differs from sample size"));
    }
    if weights.weights.iter().all(|&w| w == 0.0) {
        return Err(Error::AllWeightsZero);
    }
    let j = spec.order();
    let mut acc = vec![0.0; j];
    let mut row = vec![0.0; j];
    for (i, &w) in weights.weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        spec.basis_into(data.y(i), &mut row)?;
        for (a, r) in acc.iter_mut().zip(&row) {
            *a += w * r;
        }
    }
    Ok(MomentVector::from_slice(&acc))
}
