//! Monte Carlo replications at `x = (1/2, 1/2, 1/2, 1/2)`: bias, SD, average
//! standard error, coverage and MISE of the forest estimator.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{fit, normal_quantile, SeParams};
use crate::forest::ForestConfig;
use crate::simbench::designs::{Design, DIM};
use crate::simbench::kernel::{kernel_baseline_with, Bandwidths};

pub const QUERY_X: [f64; DIM] = [0.5; DIM];
pub const MISE_LO: f64 = 0.15;
pub const MISE_HI: f64 = 0.85;
pub const MISE_POINTS: usize = 141;

/// Evaluation points used for the result tables.
pub const TABLE_POINTS: [f64; 7] = [0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875];

#[derive(Debug, Clone)]
pub struct McConfig {
    pub design: Design,
    pub n: usize,
    pub reps: usize,
    /// Forest settings; `seed` and `workers` are overridden per replication.
    pub forest: ForestConfig,
    pub se: Option<SeParams>,
    pub design_points: Vec<f64>,
    pub level: f64,
    pub seed: u64,
    /// Replications run in parallel on this many threads.
    pub workers: usize,
    pub kernel: bool,
    /// Odd number of grid points for the Simpson rule.
    pub mise_points: usize,
    /// Every replication uses the same random stream (testing hook).
    pub identical_seeds: bool,
}

impl McConfig {
    pub fn new(design: Design, n: usize, reps: usize, forest: ForestConfig) -> Self {
        let se = Some(SeParams::defaults(n, forest.n_trees));
        Self {
            design,
            n,
            reps,
            forest,
            se,
            design_points: TABLE_POINTS.to_vec(),
            level: 0.95,
            seed: 0,
            workers: 1,
            kernel: false,
            mise_points: MISE_POINTS,
            identical_seeds: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McRow {
    pub y: f64,
    pub truth: f64,
    pub bias: f64,
    pub sd: f64,
    pub avg_se: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepFailure {
    pub rep: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelSummary {
    pub rows: Vec<McRow>,
    pub mise: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct McReport {
    pub design: Design,
    pub n: usize,
    pub reps: usize,
    pub successes: usize,
    pub failures: Vec<RepFailure>,
    pub rows: Vec<McRow>,
    pub mise: f64,
    pub kernel: Option<KernelSummary>,
    pub runtime_secs: f64,
}

/// Per-replication results at the design points and on the MISE grid.
#[derive(Debug, Clone)]
struct RepOutcome {
    f: Vec<f64>,
    se: Option<Vec<f64>>,
    ise: f64,
    kernel: Option<(Vec<f64>, f64)>,
}

/// Uniform grid of `points` values over `[lo, hi]`.
pub fn grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(|k| lo + step * k as f64).collect()
}

/// Composite Simpson rule for equally spaced `values` over `[lo, hi]`.
pub fn simpson(values: &[f64], lo: f64, hi: f64) -> Result<f64> {
    let m = values.len();
    if m < 3 || m % 2 == 0 {
        return Err(Error::config("Simpson rule needs an odd number (>= 3) of points"));
    }
    let h = (hi - lo) / (m - 1) as f64;
    let mut acc = values[0] + values[m - 1];
    for (k, v) in values.iter().enumerate().take(m - 1).skip(1) {
        acc += if k % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    Ok(acc * h / 3.0)
}

fn rep_rng(cfg: &McConfig, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(if cfg.identical_seeds { 0 } else { rep as u64 + 1 });
    rng
}

fn one_rep(cfg: &McConfig, rep: usize, mise_grid: &[f64], truth_grid: &[f64]) -> Result<RepOutcome> {
    let mut rng = rep_rng(cfg, rep);
    let data = cfg.design.simulate(cfg.n, &mut rng)?;
    let mut fc = cfg.forest.clone();
    fc.seed = rng.random();
    fc.workers = 1;
    let fitted = fit(&data, &QUERY_X, &fc, cfg.se)?;

    let f = cfg
        .design_points
        .iter()
        .map(|&y| fitted.pdf(y))
        .collect::<Result<Vec<_>>>()?;
    let se = match cfg.se {
        Some(_) => Some(
            cfg.design_points
                .iter()
                .map(|&y| fitted.std_error(y))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let sq_err = mise_grid
        .iter()
        .zip(truth_grid)
        .map(|(&y, t)| fitted.pdf(y).map(|v| (v - t) * (v - t)))
        .collect::<Result<Vec<_>>>()?;
    let ise = simpson(&sq_err, MISE_LO, MISE_HI)?;

    let kernel = if cfg.kernel {
        kernel_rep(cfg, &data, mise_grid, truth_grid).ok()
    } else {
        None
    };
    Ok(RepOutcome { f, se, ise, kernel })
}

fn kernel_rep(
    cfg: &McConfig,
    data: &crate::data::Dataset,
    mise_grid: &[f64],
    truth_grid: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let bw = Bandwidths::rule_of_thumb(data)?;
    let at = cfg
        .design_points
        .iter()
        .map(|&y| kernel_baseline_with(data, y, &QUERY_X, &bw))
        .collect::<Result<Vec<_>>>()?;
    let sq_err = mise_grid
        .iter()
        .zip(truth_grid)
        .map(|(&y, t)| kernel_baseline_with(data, y, &QUERY_X, &bw).map(|v| (v - t) * (v - t)))
        .collect::<Result<Vec<_>>>()?;
    Ok((at, simpson(&sq_err, MISE_LO, MISE_HI)?))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Runs `cfg.reps` independent replications. Failed replications are
/// reported and left out of the aggregates.
pub fn run_mc(cfg: &McConfig) -> Result<McReport> {
    if cfg.reps < 2 {
        return Err(Error::config("Monte Carlo needs at least two replications"));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::config("confidence level must lie in (0, 1)"));
    }
    if cfg.workers == 0 {
        return Err(Error::config("workers must be positive"));
    }
    cfg.forest.validate(cfg.n, DIM)?;
    let truth = cfg
        .design_points
        .iter()
        .map(|&y| cfg.design.true_density(y, &QUERY_X))
        .collect::<Result<Vec<_>>>()?;
    let mise_grid = grid(MISE_LO, MISE_HI, cfg.mise_points);
    let truth_grid = mise_grid
        .iter()
        .map(|&y| cfg.design.true_density(y, &QUERY_X))
        .collect::<Result<Vec<_>>>()?;

    let start = Instant::now();
    let run = |rep: usize| one_rep(cfg, rep, &mise_grid, &truth_grid);
    let outcomes: Vec<Result<RepOutcome>> = if cfg.workers == 1 {
        (0..cfg.reps).map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::config(format!("cannot build thread pool: {e}")))?;
        pool.install(|| (0..cfg.reps).into_par_iter().map(run).collect())
    };

    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (rep, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(v) => ok.push(v),
            Err(e) => {
                log::warn!("replication {rep} failed: {e}");
                failures.push(RepFailure {
                    rep,
                    error: e.to_string(),
                });
            }
        }
    }

    let z = normal_quantile(1.0 - (1.0 - cfg.level) / 2.0);
    let rows = if ok.len() >= 2 {
        table_rows(cfg, &truth, &ok, z)
    } else {
        Vec::new()
    };
    let mise = if ok.is_empty() {
        f64::NAN
    } else {
        mean(&ok.iter().map(|o| o.ise).collect::<Vec<_>>())
    };
    let kernel = cfg.kernel.then(|| kernel_summary(cfg, &truth, &ok));

    Ok(McReport {
        design: cfg.design,
        n: cfg.n,
        reps: cfg.reps,
        successes: ok.len(),
        failures,
        rows,
        mise,
        kernel,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

fn table_rows(cfg: &McConfig, truth: &[f64], ok: &[RepOutcome], z: f64) -> Vec<McRow> {
    cfg.design_points
        .iter()
        .enumerate()
        .map(|(k, &y)| {
            let f: Vec<f64> = ok.iter().map(|o| o.f[k]).collect();
            let (avg_se, coverage) = if cfg.se.is_some() {
                let se: Vec<f64> = ok.iter().map(|o| o.se.as_ref().expect("se computed")[k]).collect();
                let hits = f
                    .iter()
                    .zip(&se)
                    .filter(|(fv, s)| (*fv - truth[k]).abs() <= z * *s)
                    .count();
                (mean(&se), hits as f64 / ok.len() as f64)
            } else {
                (f64::NAN, f64::NAN)
            };
            McRow {
                y,
                truth: truth[k],
                bias: mean(&f) - truth[k],
                sd: sd(&f),
                avg_se,
                coverage,
            }
        })
        .collect()
}

fn kernel_summary(cfg: &McConfig, truth: &[f64], ok: &[RepOutcome]) -> KernelSummary {
    let runs: Vec<&(Vec<f64>, f64)> = ok.iter().filter_map(|o| o.kernel.as_ref()).collect();
    let failures = ok.len() - runs.len();
    if runs.len() < 2 {
        return KernelSummary {
            rows: Vec::new(),
            mise: f64::NAN,
            failures,
        };
    }
    let rows = cfg
        .design_points
        .iter()
        .enumerate()
        .map(|(k, &y)| {
            let f: Vec<f64> = runs.iter().map(|r| r.0[k]).collect();
            McRow {
                y,
                truth: truth[k],
                bias: mean(&f) - truth[k],
                sd: sd(&f),
                avg_se: f64::NAN,
                coverage: f64::NAN,
            }
        })
        .collect();
    KernelSummary {
        rows,
        mise: mean(&runs.iter().map(|r| r.1).collect::<Vec<_>>()),
        failures,
    }
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        format!("{v}")
    }
}

impl McReport {
    /// CSV with columns `y,truth,bias,sd,avg_se,coverage`, one row per design
    /// point and a final `MISE` row carrying the MISE in the `bias` column.
    /// `comment` lines are written first, each prefixed by `# `.
    pub fn write_csv<W: Write>(&self, mut out: W, comment: &[String]) -> std::io::Result<()> {
        for line in comment {
            writeln!(out, "# {line}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["y", "truth", "bias", "sd", "avg_se", "coverage"])?;
        for r in &self.rows {
            w.write_record([
                fmt_num(r.y),
                fmt_num(r.truth),
                fmt_num(r.bias),
                fmt_num(r.sd),
                fmt_num(r.avg_se),
                fmt_num(r.coverage),
            ])?;
        }
        w.write_record(["MISE".to_string(), String::new(), fmt_num(self.mise), String::new(), String::new(), String::new()])?;
        w.flush()
    }

    pub fn row(&self, y: f64) -> Option<&McRow> {
        self.rows.iter().find(|r| r.y == y)
    }
}
