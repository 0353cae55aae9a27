//! Split scoring: pseudo-outcomes around a parent pivot and the grid search
//! maximizing the heterogeneity proxy
//!
//! ```text
//! delta(C1, C2) = sum_j [ (sum_{i in C1} rho_ij)^2 / |C1| + (sum_{i in C2} rho_ij)^2 / |C2| ]
//! ```
//!
//! subject to both children keeping at least `max(alpha * |parent|, k_min)`
//! split-half members.

use crate::basis::BasisSpec;
use crate::data::{Dataset, PhiTable};
use crate::expfam::{solve_theta, MomentVector, NewtonOptions, ThetaSolution};
use crate::forest::config::{AxisBox, ForestConfig, SplitScheme};

/// Parameter estimate at a parent node around which pseudo-outcomes are formed.
#[derive(Debug, Clone)]
pub enum Pivot {
    Theta(ThetaSolution),
    Mu(MomentVector),
}

impl Pivot {
    /// Pivot for `members` under `scheme`. For the theta scheme, falls back to
    /// the basis mean when the parent's moments cannot be matched; the flag
    /// reports whether that happened.
    pub fn for_members(
        scheme: SplitScheme,
        members: &[usize],
        phi: &PhiTable,
        spec: &BasisSpec,
        newton: &NewtonOptions,
    ) -> (Pivot, bool) {
        let mean = MomentVector::from_slice(&phi.mean_over(members));
        match scheme {
            SplitScheme::MuHeterogeneity => (Pivot::Mu(mean), false),
            SplitScheme::ThetaHeterogeneity => match solve_theta(&mean, spec, newton) {
                Ok(sol) => (Pivot::Theta(sol), false),
                Err(e) => {
                    log::trace!("theta pivot failed ({e}); using basis-mean pseudo-outcomes");
                    (Pivot::Mu(mean), true)
                }
            },
        }
    }

    /// Pseudo-outcomes for `members`, row-major `members.len() x J`.
    pub fn pseudo_outcomes(&self, members: &[usize], phi: &PhiTable) -> Vec<f64> {
        let j = phi.order();
        let mut out = Vec::with_capacity(members.len() * j);
        match self {
            Pivot::Theta(sol) => {
                for &i in members {
                    out.extend(sol.pseudo_outcome(phi.row(i)).iter());
                }
            }
            Pivot::Mu(mu) => {
                for &i in members {
                    out.extend(phi.row(i).iter().zip(mu.as_slice()).map(|(p, m)| p - m));
                }
            }
        }
        out
    }
}

/// Heterogeneity proxy for a two-way partition of pseudo-outcome rows.
///
/// Both children must be nonempty.
pub fn delta_tilde<R: AsRef<[f64]>>(left: &[R], right: &[R]) -> f64 {
    assert!(!left.is_empty() && !right.is_empty(), "children must be nonempty");
    let child = |rows: &[R]| -> f64 {
        let j = rows[0].as_ref().len();
        let mut sums = vec![0.0; j];
        for r in rows {
            for (s, v) in sums.iter_mut().zip(r.as_ref()) {
                *s += v;
            }
        }
        sums.iter().map(|s| s * s).sum::<f64>() / rows.len() as f64
    };
    child(left) + child(right)
}

fn delta_from_sums(left: &[f64], n_left: usize, total: &[f64], n_total: usize) -> f64 {
    let n_right = (n_total - n_left) as f64;
    let n_left = n_left as f64;
    let mut score = 0.0;
    for (l, t) in left.iter().zip(total) {
        let r = t - l;
        score += l * l / n_left + r * r / n_right;
    }
    score
}

/// A feasible split found by [`best_split`].
#[derive(Debug, Clone, PartialEq)]
pub struct SplitCandidate {
    pub dim: usize,
    pub threshold: f64,
    pub score: f64,
    /// Members with coordinate `<= threshold`.
    pub left_count: usize,
    pub right_count: usize,
}

/// Smallest child size allowed for a parent holding `parent_count` members.
pub fn min_child_count(parent_count: usize, cfg: &ForestConfig) -> f64 {
    (cfg.alpha_min * parent_count as f64).max(cfg.k_min as f64)
}

/// Equally spaced interior thresholds between `lo` and `hi`.
pub fn threshold_grid(lo: f64, hi: f64, n_grid: usize) -> impl Iterator<Item = f64> {
    let step = (hi - lo) / (n_grid as f64 + 1.0);
    (1..=n_grid).map(move |k| lo + step * k as f64)
}

/// Grid search for the axis-aligned split of `parent` maximizing the
/// heterogeneity proxy over `allowed_dims`.
///
/// `rho` holds the pseudo-outcomes of `members` (row-major, aligned with
/// `members`). Ties go to the smallest `(dim, threshold)`. Returns `None` when
/// no candidate satisfies the child-size constraint.
pub fn best_split(
    parent: &AxisBox,
    members: &[usize],
    rho: &[f64],
    data: &Dataset,
    cfg: &ForestConfig,
    allowed_dims: &[usize],
) -> Option<SplitCandidate> {
    let m = members.len();
    if m == 0 {
        return None;
    }
    let j = rho.len() / m;
    debug_assert_eq!(rho.len(), m * j);
    debug_assert!(members.iter().all(|&i| parent.contains(data.x(i))));
    let min_child = min_child_count(m, cfg);

    let mut total = vec![0.0; j];
    for row in rho.chunks_exact(j) {
        for (t, v) in total.iter_mut().zip(row) {
            *t += v;
        }
    }

    let mut dims: Vec<usize> = allowed_dims.to_vec();
    dims.sort_unstable();
    dims.dedup();

    let mut best: Option<SplitCandidate> = None;
    let mut order: Vec<usize> = (0..m).collect();
    let mut left = vec![0.0; j];
    for &dim in &dims {
        let coord = |k: usize| data.x_coord(members[k], dim);
        order.sort_by(|&a, &b| coord(a).total_cmp(&coord(b)));
        let lo = coord(order[0]);
        let hi = coord(order[m - 1]);
        if !(hi > lo) {
            continue;
        }
        left.iter_mut().for_each(|v| *v = 0.0);
        let mut n_left = 0;
        for threshold in threshold_grid(lo, hi, cfg.n_grid) {
            while n_left < m && coord(order[n_left]) <= threshold {
                let row = &rho[order[n_left] * j..(order[n_left] + 1) * j];
                for (l, v) in left.iter_mut().zip(row) {
                    *l += v;
                }
                n_left += 1;
            }
            let n_right = m - n_left;
            if (n_left as f64) < min_child || (n_right as f64) < min_child {
                continue;
            }
            let score = delta_from_sums(&left, n_left, &total, m);
            if best.as_ref().is_none_or(|b| score > b.score) {
                best = Some(SplitCandidate {
                    dim,
                    threshold,
                    score,
                    left_count: n_left,
                    right_count: n_right,
                });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::config::SplitDimLaw;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(d: usize, k_min: usize, alpha: f64, n_grid: usize) -> ForestConfig {
        ForestConfig {
            subsample_size: 4 * k_min.max(1),
            n_trees: 1,
            order: 1,
            k_min,
            alpha_min: alpha,
            initial_parent: AxisBox::cube(d, 0.0, 1.0).unwrap(),
            split_dim_law: SplitDimLaw::Singletons,
            scheme: SplitScheme::MuHeterogeneity,
            n_grid,
            seed: 0,
            workers: 1,
        }
    }

    #[test]
    fn delta_tilde_examples() {
        let z: Vec<Vec<f64>> = vec![vec![0.0, 0.0]; 3];
        assert_eq!(delta_tilde(&z[..2], &z[2..]), 0.0);
        let left = vec![vec![1.0], vec![1.0]];
        let right = vec![vec![-2.0]];
        assert_abs_diff_eq!(delta_tilde(&left, &right), 6.0, epsilon = 1e-15);
        let left_perm = vec![vec![1.0], vec![1.0]];
        assert_eq!(delta_tilde(&left_perm, &right), delta_tilde(&left, &right));
    }

    /// Exhaustive re-evaluation of every grid candidate with `delta_tilde`.
    fn brute_force(
        parent: &AxisBox,
        members: &[usize],
        rho: &[f64],
        data: &Dataset,
        cfg: &ForestConfig,
        dims: &[usize],
    ) -> Option<(usize, f64, f64)> {
        let j = rho.len() / members.len();
        let min_child = min_child_count(members.len(), cfg);
        let mut best: Option<(usize, f64, f64)> = None;
        for &dim in dims {
            let coords: Vec<f64> = members.iter().map(|&i| data.x_coord(i, dim)).collect();
            let lo = coords.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = coords.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !(hi > lo) {
                continue;
            }
            for t in threshold_grid(lo, hi, cfg.n_grid) {
                let (mut l, mut r) = (Vec::new(), Vec::new());
                for (k, c) in coords.iter().enumerate() {
                    let row = rho[k * j..(k + 1) * j].to_vec();
                    if *c <= t {
                        l.push(row)
                    } else {
                        r.push(row)
                    }
                }
                if (l.len() as f64) < min_child || (r.len() as f64) < min_child {
                    continue;
                }
                let s = delta_tilde(&l, &r);
                if best.is_none_or(|b| s > b.2) {
                    best = Some((dim, t, s));
                }
            }
        }
        let _ = parent;
        best
    }

    #[test]
    fn separates_two_outcome_clusters() {
        // Outcomes low for x_0 < 0.5 and high otherwise; x_1 is noise.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 80;
        let mut y = Vec::new();
        let mut x = Vec::new();
        for i in 0..n {
            let x0 = (i as f64 + 0.5) / n as f64;
            let x1: f64 = rng.random();
            x.extend([x0, x1]);
            y.push(if x0 < 0.5 { 0.1 + 0.1 * rng.random::<f64>() } else { 0.8 + 0.1 * rng.random::<f64>() });
        }
        let data = Dataset::from_flat(y, x, 2).unwrap();
        let spec = BasisSpec::new(1).unwrap();
        let phi = PhiTable::new(&data, &spec).unwrap();
        let cfg = cfg(2, 5, 0.05, 31);
        let members: Vec<usize> = (0..n).collect();
        let (pivot, _) = Pivot::for_members(SplitScheme::MuHeterogeneity, &members, &phi, &spec, &NewtonOptions::default());
        let rho = pivot.pseudo_outcomes(&members, &phi);
        let split = best_split(&cfg.initial_parent, &members, &rho, &data, &cfg, &[0, 1]).unwrap();
        assert_eq!(split.dim, 0);
        assert!((split.threshold - 0.5).abs() < 0.04, "{split:?}");
        let oracle = brute_force(&cfg.initial_parent, &members, &rho, &data, &cfg, &[0, 1]).unwrap();
        assert_eq!((split.dim, split.threshold), (oracle.0, oracle.1));
        assert_abs_diff_eq!(split.score, oracle.2, epsilon = 1e-9);
    }

    #[test]
    fn identical_covariates_cannot_split() {
        let data = Dataset::from_flat(vec![0.1, 0.5, 0.9, 0.3], vec![0.5; 8], 2).unwrap();
        let cfg = cfg(2, 1, 0.1, 8);
        let rho = vec![0.1, -0.2, 0.3, 0.4];
        assert!(best_split(&cfg.initial_parent, &[0, 1, 2, 3], &rho, &data, &cfg, &[0, 1]).is_none());
    }

    #[test]
    fn random_instances_match_brute_force_and_respect_child_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let d = rng.random_range(1..=3);
            let m = rng.random_range(4..40);
            let j = rng.random_range(1..=3);
            let k_min = rng.random_range(1..=(m / 2));
            let alpha = rng.random_range(0.01..0.49);
            let cfg = cfg(d, k_min, alpha, rng.random_range(1..12));
            let x: Vec<f64> = (0..m * d).map(|_| (rng.random::<f64>() * 8.0).round() / 8.0).collect();
            let data = Dataset::from_flat(vec![0.5; m], x, d).unwrap();
            let rho: Vec<f64> = (0..m * j).map(|_| rng.random_range(-2.0..2.0)).collect();
            let members: Vec<usize> = (0..m).collect();
            let dims: Vec<usize> = (0..d).filter(|_| rng.random_bool(0.7)).collect();
            let got = best_split(&cfg.initial_parent, &members, &rho, &data, &cfg, &dims);
            let oracle = brute_force(&cfg.initial_parent, &members, &rho, &data, &cfg, &dims);
            match (got, oracle) {
                (None, None) => {}
                (Some(g), Some(o)) => {
                    // Identical partitions can tie to rounding; the score must still be maximal.
                    assert!((g.score - o.2).abs() <= 1e-9 * o.2.abs().max(1.0));
                    if (g.dim, g.threshold) != (o.0, o.1) {
                        assert!((g.score - o.2).abs() <= 1e-12 * o.2.abs().max(1.0));
                    }
                    let bound = min_child_count(m, &cfg);
                    assert!(g.left_count as f64 >= bound && g.right_count as f64 >= bound);
                    assert_eq!(g.left_count + g.right_count, m);
                }
                (g, o) => panic!("mismatch {g:?} vs {o:?}"),
            }
        }
    }

    #[test]
    fn theta_and_mu_schemes_agree_at_zero_pivot() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let spec = BasisSpec::new(3).unwrap();
        for _ in 0..50 {
            let m = 30;
            let x: Vec<f64> = (0..m * 2).map(|_| rng.random()).collect();
            let y: Vec<f64> = (0..m).map(|_| rng.random()).collect();
            let data = Dataset::from_flat(y, x, 2).unwrap();
            let phi = PhiTable::new(&data, &spec).unwrap();
            let members: Vec<usize> = (0..m).collect();
            let theta_pivot = Pivot::Theta(ThetaSolution::at(&[0.0; 3], &spec).unwrap());
            let mu_pivot = Pivot::Mu(MomentVector::zeros(3));
            let a = theta_pivot.pseudo_outcomes(&members, &phi);
            let b = mu_pivot.pseudo_outcomes(&members, &phi);
            for (u, v) in a.iter().zip(&b) {
                assert_abs_diff_eq!(*u, *v, epsilon = 1e-12);
            }
            let cfg = cfg(2, 3, 0.05, 16);
            let sa = best_split(&cfg.initial_parent, &members, &a, &data, &cfg, &[0, 1]);
            let sb = best_split(&cfg.initial_parent, &members, &b, &data, &cfg, &[0, 1]);
            assert_eq!(sa.map(|s| (s.dim, s.threshold)), sb.map(|s| (s.dim, s.threshold)));
        }
    }
}
