#![allow(dead_code)]

use std::collections::BTreeSet;

use forest_density::basis::BasisSpec;
use forest_density::data::{Dataset, PhiTable};
use forest_density::forest::weights::plan_rng;
use forest_density::forest::branch::grow_from_halves;
use forest_density::forest::{draw_subsamples, grow_forest, AxisBox, Forest, ForestConfig, SplitDimLaw, SplitScheme};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Shape of one random forest instance.
#[derive(Debug, Clone)]
pub struct Params {
    pub n: usize,
    pub d: usize,
    pub s_frac: f64,
    pub k_min: usize,
    pub alpha_min: f64,
    pub n_trees: usize,
    pub order: usize,
    pub theta_scheme: bool,
    pub n_grid: usize,
    /// Covariates rounded to a coarse grid so that ties occur.
    pub ties: bool,
    pub seed: u64,
}

impl Params {
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        Self {
            n: rng.random_range(20..=120),
            d: rng.random_range(1..=4),
            s_frac: rng.random_range(0.0..1.0),
            k_min: rng.random_range(1..=5),
            alpha_min: rng.random_range(0.01..0.45),
            n_trees: rng.random_range(1..=12),
            order: rng.random_range(1..=4),
            theta_scheme: rng.random(),
            n_grid: rng.random_range(2..=16),
            ties: rng.random_bool(0.3),
            seed: rng.random(),
        }
    }
}

pub struct Instance {
    pub data: Dataset,
    pub x: Vec<f64>,
    pub cfg: ForestConfig,
    pub spec: BasisSpec,
}

impl Instance {
    pub fn build(p: &Params) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let mut xs = Vec::with_capacity(p.n * p.d);
        for _ in 0..p.n * p.d {
            let v: f64 = rng.random();
            xs.push(if p.ties { (v * 10.0).floor() / 10.0 } else { v });
        }
        let y: Vec<f64> = (0..p.n).map(|_| rng.random::<f64>().powf(1.5)).collect();
        let data = Dataset::from_flat(y, xs, p.d).unwrap();
        let (lo, hi) = if rng.random_bool(0.5) { (0.0, 1.0) } else { (0.1, 0.9) };
        let x: Vec<f64> = (0..p.d).map(|_| rng.random_range(lo..=hi)).collect();
        let min_s = 2 * p.k_min;
        let s = min_s + ((p.n - 1 - min_s) as f64 * p.s_frac) as usize;
        let law = if p.d > 1 && rng.random_bool(0.5) {
            SplitDimLaw::Singletons
        } else {
            SplitDimLaw::CappedPoisson { mean: 5.0 }
        };
        let cfg = ForestConfig {
            subsample_size: s,
            n_trees: p.n_trees,
            order: p.order,
            k_min: p.k_min,
            alpha_min: p.alpha_min,
            initial_parent: AxisBox::cube(p.d, lo, hi).unwrap(),
            split_dim_law: law,
            scheme: if p.theta_scheme {
                SplitScheme::ThetaHeterogeneity
            } else {
                SplitScheme::MuHeterogeneity
            },
            n_grid: p.n_grid,
            seed: rng.random(),
            workers: 1,
        };
        let spec = BasisSpec::new(p.order).unwrap();
        Self { data, x, cfg, spec }
    }

    pub fn grow(&self, workers: usize) -> Forest {
        let mut cfg = self.cfg.clone();
        cfg.workers = workers;
        let phi = PhiTable::new(&self.data, &self.spec).unwrap();
        let subs = draw_subsamples(self.data.len(), &cfg, &mut plan_rng(cfg.seed)).unwrap();
        grow_forest(&self.x, &self.data, &phi, &self.spec, subs, &cfg).unwrap()
    }
}

/// Checks the structural invariants of one instance; returns the first violation.
pub fn check_structure(inst: &Instance) -> Result<(), String> {
    let forest = inst.grow(1);
    let cfg = &inst.cfg;
    let data = &inst.data;

    // Weight simplex with the 0/0 = 0 convention.
    let w = forest.weights();
    if w.weights.iter().any(|&v| !(v >= 0.0)) {
        return Err("negative or NaN weight".into());
    }
    let total: f64 = w.weights.iter().sum();
    let nonempty = forest.branches.iter().filter(|b| !b.holdout_members.is_empty()).count();
    let expected_total = nonempty as f64 / forest.n_trees() as f64;
    if (total - expected_total).abs() > 1e-12 {
        return Err(format!("weight total {total} with {nonempty} nonempty leaves"));
    }
    if nonempty == forest.n_trees() && (total - 1.0).abs() > 1e-12 {
        return Err(format!("weights sum to {total} with all leaves nonempty"));
    }

    for (b, (sub, br)) in forest.subsamples.iter().zip(&forest.branches).enumerate() {
        let sub_set: BTreeSet<usize> = sub.iter().copied().collect();
        let holdout: BTreeSet<usize> = br.holdout.iter().copied().collect();
        let split_half: BTreeSet<usize> = sub_set.difference(&holdout).copied().collect();
        if !holdout.is_subset(&sub_set) || split_half.len() != sub.len() / 2 {
            return Err(format!("tree {b}: halves do not partition the subsample"));
        }
        // Honesty.
        let decision: BTreeSet<usize> = br.decision_members.iter().copied().collect();
        if !decision.is_subset(&split_half) {
            return Err(format!("tree {b}: split decisions read non-split-half outcomes"));
        }
        if br.holdout_members.iter().any(|i| decision.contains(i) || !holdout.contains(i)) {
            return Err(format!("tree {b}: weighted index outside the holdout half"));
        }
        // Leaf membership and containment.
        let expected: Vec<usize> = br
            .holdout
            .iter()
            .copied()
            .filter(|&i| br.leaf_box.contains(data.x(i)))
            .collect();
        if expected != br.holdout_members {
            return Err(format!("tree {b}: leaf members do not match the leaf box"));
        }
        if !br.leaf_box.contains(&inst.x) {
            return Err(format!("tree {b}: leaf does not contain x"));
        }
        // (c3) on every executed split, with counts recomputed from the boxes.
        let mut parent = cfg.initial_parent.clone();
        for (k, sp) in br.splits.iter().enumerate() {
            if !sp.child.contains(&inst.x) || !sp.child.is_within(&parent) {
                return Err(format!("tree {b} split {k}: child does not contain x"));
            }
            let in_parent: Vec<usize> = br
                .decision_members
                .iter()
                .copied()
                .filter(|&i| parent.contains(data.x(i)))
                .collect();
            let kept = in_parent.iter().filter(|&&i| sp.child.contains(data.x(i))).count();
            let other = in_parent.len() - kept;
            let bound = (cfg.alpha_min * in_parent.len() as f64).max(cfg.k_min as f64);
            if in_parent.len() != sp.parent_count || kept != sp.kept_count || other != sp.other_count {
                return Err(format!("tree {b} split {k}: recorded counts disagree"));
            }
            if (kept.min(other) as f64) < bound {
                return Err(format!("tree {b} split {k}: child counts {kept}/{other} below {bound}"));
            }
            parent = sp.child.clone();
        }
        if br.leaf_box != parent {
            return Err(format!("tree {b}: leaf box is not the last child"));
        }
    }

    // Seed determinism across worker counts.
    if inst.grow(8) != forest {
        return Err("forest differs between 1 and 8 workers".into());
    }
    Ok(())
}

/// Shifted Legendre `phi_l(y)` from the explicit binomial sum, evaluated exactly
/// at `y = i / 100` in integer arithmetic.
pub fn binomial_phi_exact(l: usize, i: i128) -> f64 {
    let l128 = l as i128;
    let mut num: i128 = 0;
    for k in 0..=l128 {
        let term = binom(l128, k) * binom(l128 + k, k) * i.pow(k as u32) * 100i128.pow((l128 - k) as u32);
        if (l128 + k) % 2 == 0 {
            num += term;
        } else {
            num -= term;
        }
    }
    let den = 100f64.powi(l as i32);
    ((2 * l + 1) as f64).sqrt() * (num as f64 / den)
}

fn binom(n: i128, k: i128) -> i128 {
    (0..k).fold(1, |acc, j| acc * (n - j) / (j + 1))
}

/// `mu_1(theta)` for `J = 1` in closed form: `sqrt3 (coth a - 1/a)`, `a = sqrt3 theta`.
pub fn mu1_closed_form(theta: f64) -> f64 {
    let r3 = 3f64.sqrt();
    let a = r3 * theta;
    if a.abs() < 1e-3 {
        r3 * (a / 3.0 - a.powi(3) / 45.0)
    } else {
        r3 * (1.0 / a.tanh() - 1.0 / a)
    }
}

/// Solves `mu1_closed_form(theta) = m` by bisection.
pub fn bisect_theta1(m: f64) -> f64 {
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mu1_closed_form(mid) < m {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// All `k`-subsets of `0..n`, ascending.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Sample with `s + 3` points inside the parent and a configuration under
/// which no split is possible.
pub fn no_split_instance(s: usize, seed: u64) -> (Dataset, ForestConfig, BasisSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = s + 3;
    let y: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let x: Vec<f64> = (0..2 * n).map(|_| rng.random_range(0.2..0.8)).collect();
    let data = Dataset::from_flat(y, x, 2).unwrap();
    let mut cfg = ForestConfig::mc_defaults(2, s);
    cfg.initial_parent = AxisBox::cube(2, 0.0, 1.0).unwrap();
    // floor(s/2) < 2 k_min, so no split is ever attempted.
    cfg.k_min = s / 2;
    cfg.order = 3;
    (data, cfg, BasisSpec::new(3).unwrap())
}

/// Tree output for a given split half: basis mean over the holdout members of the leaf.
pub fn tree_output(data: &Dataset, phi: &PhiTable, spec: &BasisSpec, cfg: &ForestConfig, sub: &[usize], split: &[usize]) -> Vec<f64> {
    let holdout: Vec<usize> = sub.iter().copied().filter(|i| !split.contains(i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let br = grow_from_halves(&[0.5, 0.5], data, phi, spec, &holdout, split, cfg, &mut rng).unwrap();
    assert!(br.splits.is_empty());
    phi.mean_over(&br.holdout_members)
}
