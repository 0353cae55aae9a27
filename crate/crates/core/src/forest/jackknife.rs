//! Delete-group subsample plan and the feasible delete-D jackknife standard error.

use rand::Rng;

use crate::error::{Error, Result};
use crate::forest::config::ForestConfig;
use crate::forest::weights::draw_subsample;

/// Fixed-width membership bitset over `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Bits(Vec<u64>);

impl Bits {
    fn from_indices(n: usize, idx: &[usize]) -> Self {
        let mut words = vec![0u64; n.div_ceil(64)];
        for &i in idx {
            words[i / 64] |= 1 << (i % 64);
        }
        Bits(words)
    }

    fn disjoint(&self, other: &Bits) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a & b == 0)
    }
}

/// Delete groups plus the tree subsamples drawn around them. Trees `2l` and
/// `2l + 1` (zero-based) avoid `delete_groups[l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SESubsamplePlan {
    pub delete_groups: Vec<Vec<usize>>,
    pub tree_subsamples: Vec<Vec<usize>>,
}

impl SESubsamplePlan {
    pub fn n_sigma(&self) -> usize {
        self.delete_groups.len()
    }

    /// For each delete group, the trees whose subsample misses it entirely.
    pub fn clean_trees(&self, n: usize) -> Vec<Vec<usize>> {
        let trees: Vec<Bits> = self
            .tree_subsamples
            .iter()
            .map(|s| Bits::from_indices(n, s))
            .collect();
        self.delete_groups
            .iter()
            .map(|g| {
                let g = Bits::from_indices(n, g);
                (0..trees.len()).filter(|&b| trees[b].disjoint(&g)).collect()
            })
            .collect()
    }
}

/// Draws `n_sigma` delete groups of size `d_sigma` and `cfg.n_trees` subsamples.
pub fn se_subsample_plan<R: Rng + ?Sized>(
    n: usize,
    cfg: &ForestConfig,
    n_sigma: usize,
    d_sigma: usize,
    rng: &mut R,
) -> Result<SESubsamplePlan> {
    let s = cfg.subsample_size;
    let n_trees = cfg.n_trees;
    if s >= n {
        return Err(Error::config(format!("subsample size s = {s} must be < n = {n}")));
    }
    if n_sigma == 0 || d_sigma == 0 {
        return Err(Error::config("N_sigma and D_sigma must be positive"));
    }
    if d_sigma >= n - s {
        return Err(Error::config(format!(
            "D_sigma = {d_sigma} must be < n - s = {}",
            n - s
        )));
    }
    if 2 * n_sigma + 1 >= n_trees {
        return Err(Error::config(format!(
            "need 2 N_sigma < N - 1, got N_sigma = {n_sigma}, N = {n_trees}"
        )));
    }

    let mut delete_groups = Vec::with_capacity(n_sigma);
    let mut tree_subsamples = Vec::with_capacity(n_trees);
    for _ in 0..n_sigma {
        let group = draw_subsample(n, d_sigma, rng);
        let mut deleted = vec![false; n];
        group.iter().for_each(|&i| deleted[i] = true);
        let kept: Vec<usize> = (0..n).filter(|&i| !deleted[i]).collect();
        for _ in 0..2 {
            // draw_subsample sorts, and `kept` is ascending, so the image is sorted too.
            let pos = draw_subsample(kept.len(), s, rng);
            tree_subsamples.push(pos.into_iter().map(|p| kept[p]).collect());
        }
        delete_groups.push(group);
    }
    while tree_subsamples.len() < n_trees {
        tree_subsamples.push(draw_subsample(n, s, rng));
    }
    Ok(SESubsamplePlan {
        delete_groups,
        tree_subsamples,
    })
}

/// Feasible jackknife standard error
///
/// ```text
/// sigma = sqrt( (n - D) / (D N_sigma) * sum_l [ t . (mu_{-l} - mu_av) ]^2 )
/// ```
///
/// `per_tree_h` is row-major `N x J`; `mu_{-l}` averages its rows over the
/// trees disjoint from delete group `l`.
pub fn sigma_fe(
    plan: &SESubsamplePlan,
    per_tree_h: &[f64],
    t_row: &[f64],
    n: usize,
    d_sigma: usize,
    n_sigma: usize,
) -> Result<f64> {
    let j = t_row.len();
    if per_tree_h.len() != plan.tree_subsamples.len() * j {
        return Err(Error::config("per-tree means do not match the plan and basis order"));
    }
    if n_sigma != plan.n_sigma() || n_sigma == 0 {
        return Err(Error::config("N_sigma does not match the plan"));
    }
    let projected = group_projections(plan, per_tree_h, t_row, n)?;
    let mean = projected.iter().sum::<f64>() / n_sigma as f64;
    let ss: f64 = projected.iter().map(|p| (p - mean) * (p - mean)).sum();
    let scale = (n - d_sigma) as f64 / (d_sigma as f64 * n_sigma as f64);
    Ok((scale * ss).sqrt())
}

/// `t . mu_{-l}` for every delete group.
fn group_projections(
    plan: &SESubsamplePlan,
    per_tree_h: &[f64],
    t_row: &[f64],
    n: usize,
) -> Result<Vec<f64>> {
    let j = t_row.len();
    let tree_proj: Vec<f64> = per_tree_h
        .chunks_exact(j.max(1))
        .map(|h| h.iter().zip(t_row).map(|(a, b)| a * b).sum())
        .collect();
    plan.clean_trees(n)
        .iter()
        .enumerate()
        .map(|(l, trees)| {
            if trees.is_empty() {
                return Err(Error::NoCleanTrees { group: l });
            }
            Ok(trees.iter().map(|&b| tree_proj[b]).sum::<f64>() / trees.len() as f64)
        })
        .collect()
}
