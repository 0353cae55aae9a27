//! Conditional density estimate at a query point: forest weights, local
//! moments `mu_hat`, then the exponential-series fit matching them.

use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::data::{Dataset, PhiTable};
use crate::error::{Error, Result};
use crate::expfam::{solve_theta, t_functional, MomentVector, NewtonOptions, ThetaSolution};
use crate::forest::jackknife::{se_subsample_plan, sigma_fe, SESubsamplePlan};
use crate::forest::weights::{draw_subsamples, grow_forest, mu_hat, plan_rng, WeightVector};
use crate::forest::ForestConfig;

/// Delete-group settings for the jackknife standard error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeParams {
    pub n_sigma: usize,
    pub d_sigma: usize,
}

impl SeParams {
    /// `N_sigma = N / 4`, `D_sigma = n / 20` (at least 1 each).
    pub fn defaults(n: usize, n_trees: usize) -> Self {
        Self {
            n_sigma: (n_trees / 4).max(1),
            d_sigma: (n / 20).max(1),
        }
    }
}

/// A fitted `f_hat(. | x)` together with everything needed for standard errors.
#[derive(Debug, Clone)]
pub struct FittedConditionalDensity {
    pub query_x: Vec<f64>,
    pub mu_hat: MomentVector,
    pub theta_hat: ThetaSolution,
    /// Per-tree leaf means of `phi(y_i)`, row-major `N x J`.
    pub per_tree_h: Vec<f64>,
    pub plan: Option<SESubsamplePlan>,
    pub se_params: Option<SeParams>,
    pub config: ForestConfig,
    pub spec: BasisSpec,
    pub weights: WeightVector,
    /// Trees whose leaf held no holdout observation.
    pub empty_leaves: usize,
    n: usize,
}

/// Fits the conditional density at `x`. With `se` the trees come from the
/// delete-group plan so standard errors are available.
pub fn fit(
    data: &Dataset,
    x: &[f64],
    cfg: &ForestConfig,
    se: Option<SeParams>,
) -> Result<FittedConditionalDensity> {
    cfg.validate(data.len(), data.dim())?;
    if x.len() != data.dim() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("query point has the wrong dimension or is not finite"));
    }
    if !cfg.initial_parent.contains(x) {
        return Err(Error::config("query point lies outside the initial parent node"));
    }
    let spec = BasisSpec::new(cfg.order)?;
    let phi = PhiTable::new(data, &spec)?;
    let mut rng = plan_rng(cfg.seed);
    let (subsamples, plan) = match se {
        Some(p) => {
            let plan = se_subsample_plan(data.len(), cfg, p.n_sigma, p.d_sigma, &mut rng)?;
            (plan.tree_subsamples.clone(), Some(plan))
        }
        None => (draw_subsamples(data.len(), cfg, &mut rng)?, None),
    };
    let forest = grow_forest(x, data, &phi, &spec, subsamples, cfg)?;
    let weights = forest.weights();
    let per_tree_h = forest.leaf_means(&phi);
    let empty_leaves = forest
        .branches
        .iter()
        .filter(|b| b.holdout_members.is_empty())
        .count();
    let mu = mu_hat(&weights, data, &spec)?;
    let theta_hat = solve_theta(&mu, &spec, &NewtonOptions::default())?;
    Ok(FittedConditionalDensity {
        query_x: x.to_vec(),
        mu_hat: mu,
        theta_hat,
        per_tree_h,
        plan,
        se_params: se,
        config: cfg.clone(),
        spec,
        weights,
        empty_leaves,
        n: data.len(),
    })
}

/// Fit with externally supplied weights in place of the forest; no standard
/// errors. Used to compare against the unconditional estimator.
pub fn fit_with_weights(
    data: &Dataset,
    x: &[f64],
    cfg: &ForestConfig,
    weights: WeightVector,
) -> Result<FittedConditionalDensity> {
    let spec = BasisSpec::new(cfg.order)?;
    let mu = mu_hat(&weights, data, &spec)?;
    let theta_hat = solve_theta(&mu, &spec, &NewtonOptions::default())?;
    Ok(FittedConditionalDensity {
        query_x: x.to_vec(),
        mu_hat: mu,
        theta_hat,
        per_tree_h: Vec::new(),
        plan: None,
        se_params: None,
        config: cfg.clone(),
        spec,
        weights,
        empty_leaves: 0,
        n: data.len(),
    })
}

/// Unconditional exponential-series estimate: solve against the sample
/// mean of `phi(y_i)`.
pub fn fit_unconditional(ys: &[f64], spec: &BasisSpec) -> Result<ThetaSolution> {
    let target = MomentVector::sample_mean(ys, spec)?;
    solve_theta(&target, spec, &NewtonOptions::default())
}

impl FittedConditionalDensity {
    pub fn sample_size(&self) -> usize {
        self.n
    }

    /// `f_hat(y | x)`.
    pub fn pdf(&self, y: f64) -> Result<f64> {
        self.theta_hat.density(y, &self.spec)
    }

    /// Feasible jackknife standard error of `f_hat(y | x)`.
    pub fn std_error(&self, y: f64) -> Result<f64> {
        let t = t_functional(y, &self.theta_hat, &self.spec)?;
        self.std_error_with_row(t.as_slice())
    }

    /// Standard error formula with an arbitrary row vector in place of `T(y)`.
    pub fn std_error_with_row(&self, t_row: &[f64]) -> Result<f64> {
        let (Some(plan), Some(p)) = (&self.plan, self.se_params) else {
            return Err(Error::MissingPlan);
        };
        sigma_fe(plan, &self.per_tree_h, t_row, self.n, p.d_sigma, p.n_sigma)
    }

    /// Two-sided interval `f_hat(y | x) -/+ z sigma` at `level`.
    pub fn confidence_interval(&self, y: f64, level: f64) -> Result<(f64, f64)> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::config("confidence level must lie in (0, 1)"));
        }
        let sigma = self.std_error(y)?;
        let f = self.pdf(y)?;
        let z = normal_quantile(1.0 - (1.0 - level) / 2.0);
        Ok((f - z * sigma, f + z * sigma))
    }
}

/// Standard normal quantile (Wichura's AS241, about 1e-16 relative accuracy).
pub fn normal_quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

fn poly(c: &[f64; 8], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

const A: [f64; 8] = [
    3.387_132_872_796_366_5,
    1.331_416_678_917_843_8e2,
    1.971_590_950_306_551_3e3,
    1.373_169_376_550_946e4,
    4.592_195_393_154_987e4,
    6.726_577_092_700_87e4,
    3.343_057_558_358_813e4,
    2.509_080_928_730_122_7e3,
];
const B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091e1,
    6.871_870_074_920_579e2,
    5.394_196_021_424_751e3,
    2.121_379_430_158_659_7e4,
    3.930_789_580_009_271e4,
    2.872_908_573_572_194_3e4,
    5.226_495_278_852_545e3,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_5,
    4.630_337_846_156_546,
    5.769_497_221_460_691,
    3.647_848_324_763_204_5,
    1.270_458_252_452_368_4,
    2.417_807_251_774_506e-1,
    2.272_384_498_926_918_4e-2,
    7.745_450_142_783_414e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_759,
    1.676_384_830_183_803_8,
    6.897_673_349_851e-1,
    1.481_039_764_274_800_8e-1,
    1.519_866_656_361_645_7e-2,
    5.475_938_084_995_345e-4,
    1.050_750_071_644_416_9e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103,
    5.463_784_911_164_114,
    1.784_826_539_917_291_3,
    2.965_605_718_285_048_7e-1,
    2.653_218_952_657_612_4e-2,
    1.242_660_947_388_078_4e-3,
    2.711_555_568_743_487_6e-5,
    2.010_334_399_292_288_1e-7,
];
const F: [f64; 8] = [
    1.0,
    5.998_322_065_558_88e-1,
    1.369_298_809_227_358e-1,
    1.487_536_129_085_061_5e-2,
    7.868_691_311_456_133e-4,
    1.846_318_317_510_054_8e-5,
    1.421_511_758_316_446e-7,
    2.044_263_103_389_939_7e-15,
];
