//! Honest growth of the single branch that contains the query point.
//!
//! A subsample is halved at random: the split half decides every split
//! along the path to `x`, and the holdout half populates the final leaf.

use rand::seq::index;
use rand::Rng;

use crate::basis::BasisSpec;
use crate::data::{Dataset, PhiTable};
use crate::error::{Error, Result};
use crate::expfam::NewtonOptions;
use crate::forest::config::{AxisBox, ForestConfig};
use crate::forest::split::{best_split, min_child_count, Pivot};

/// One executed split along the branch.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitRecord {
    pub dim: usize,
    pub threshold: f64,
    /// Split-half members in the parent.
    pub parent_count: usize,
    /// Split-half members in the retained child (the one containing `x`).
    pub kept_count: usize,
    pub other_count: usize,
    /// Minimum child size the split had to respect.
    pub min_child: f64,
    /// True when the theta pivot failed and basis-mean pseudo-outcomes were used.
    pub used_fallback: bool,
    /// Box after the split.
    pub child: AxisBox,
}

/// Outcome of growing one branch.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchResult {
    pub leaf_box: AxisBox,
    /// Holdout-half indices whose covariates lie in `leaf_box`, ascending.
    pub holdout_members: Vec<usize>,
    /// Holdout half of the subsample.
    pub holdout: Vec<usize>,
    /// Split-half indices inside the initial parent; only these outcomes are
    /// ever read while choosing splits.
    pub decision_members: Vec<usize>,
    pub splits: Vec<SplitRecord>,
}

/// Splits a subsample into `(holdout, split_half)` with `|split_half| = floor(s / 2)`
/// chosen uniformly. Both halves keep the ascending order of `subsample`.
pub fn split_half<R: Rng + ?Sized>(subsample: &[usize], rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let s = subsample.len();
    let mut chosen = vec![false; s];
    for k in index::sample(rng, s, s / 2) {
        chosen[k] = true;
    }
    let mut holdout = Vec::with_capacity(s - s / 2);
    let mut split = Vec::with_capacity(s / 2);
    for (k, &i) in subsample.iter().enumerate() {
        if chosen[k] {
            split.push(i);
        } else {
            holdout.push(i);
        }
    }
    (holdout, split)
}

/// Grows the branch containing `x` from one subsample.
pub fn grow_branch<R: Rng + ?Sized>(
    x: &[f64],
    data: &Dataset,
    phi: &PhiTable,
    spec: &BasisSpec,
    subsample: &[usize],
    cfg: &ForestConfig,
    rng: &mut R,
) -> Result<BranchResult> {
    let (holdout, split_pool) = split_half(subsample, rng);
    grow_from_halves(x, data, phi, spec, &holdout, &split_pool, cfg, rng)
}

/// Grows the branch for an already-drawn holdout/split partition.
#[allow(clippy::too_many_arguments)]
pub fn grow_from_halves<R: Rng + ?Sized>(
    x: &[f64],
    data: &Dataset,
    phi: &PhiTable,
    spec: &BasisSpec,
    holdout: &[usize],
    split_pool: &[usize],
    cfg: &ForestConfig,
    rng: &mut R,
) -> Result<BranchResult> {
    if !cfg.initial_parent.contains(x) {
        return Err(Error::config("query point lies outside the initial parent node"));
    }
    let newton = NewtonOptions::default();
    let d = data.dim();
    let mut current = cfg.initial_parent.clone();
    let mut members: Vec<usize> = split_pool
        .iter()
        .copied()
        .filter(|&i| current.contains(data.x(i)))
        .collect();
    let decision_members = members.clone();
    let mut splits = Vec::new();

    while members.len() >= 2 * cfg.k_min {
        let (pivot, used_fallback) = Pivot::for_members(cfg.scheme, &members, phi, spec, &newton);
        let rho = pivot.pseudo_outcomes(&members, phi);
        let dims = cfg.split_dim_law.draw(d, rng);
        let Some(cand) = best_split(&current, &members, &rho, data, cfg, &dims) else {
            break;
        };
        let (left, right) = current.split(cand.dim, cand.threshold);
        let (kept, kept_count, other_count) = if x[cand.dim] <= cand.threshold {
            (left, cand.left_count, cand.right_count)
        } else {
            (right, cand.right_count, cand.left_count)
        };
        splits.push(SplitRecord {
            dim: cand.dim,
            threshold: cand.threshold,
            parent_count: members.len(),
            kept_count,
            other_count,
            min_child: min_child_count(members.len(), cfg),
            used_fallback,
            child: kept.clone(),
        });
        current = kept;
        members.retain(|&i| current.contains(data.x(i)));
        debug_assert_eq!(members.len(), kept_count);
    }

    let holdout_members = holdout
        .iter()
        .copied()
        .filter(|&i| current.contains(data.x(i)))
        .collect();
    Ok(BranchResult {
        leaf_box: current,
        holdout_members,
        holdout: holdout.to_vec(),
        decision_members,
        splits,
    })
}
