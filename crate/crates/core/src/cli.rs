//! Command-line front end: `fit` on user data and `mc` for the simulation designs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::Error;
use crate::estimator::{fit, SeParams};
use crate::forest::{AxisBox, ForestConfig, SplitDimLaw, SplitScheme};
use crate::simbench::designs::DIM;
use crate::simbench::{run_mc, Design, McConfig, McReport};

#[derive(Debug, Parser)]
#[command(name = "forest-density", version, about = "Random-forest conditional density estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate f(y | x) at a query point from a CSV sample.
    Fit(CommonArgs),
    /// Run Monte Carlo replications of a simulation design.
    Mc(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Failure with the exit status it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Exit 1: unreadable or invalid input or configuration.
    Input(String),
    /// Exit 2: the estimator itself failed.
    Estimation(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Estimation(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Estimation(m) => m,
        }
    }
}

/// Maps a library error raised during `stage`.
fn lib_error(stage: &str, e: Error) -> CliError {
    let msg = format!("{stage}: {e}");
    match e {
        Error::Config(_) | Error::Domain { .. } => CliError::Input(msg),
        _ => CliError::Estimation(msg),
    }
}

fn input_err(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

/// Forest settings as they appear in a config file; missing keys take defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsample_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_trees: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_min: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_parent: Option<AxisBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_dim_law: Option<SplitDimLaw>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<SplitScheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ForestSettings {
    fn resolve(&self, base: ForestConfig) -> ForestConfig {
        ForestConfig {
            subsample_size: self.subsample_size.unwrap_or(base.subsample_size),
            n_trees: self.n_trees.unwrap_or(base.n_trees),
            order: self.order.unwrap_or(base.order),
            k_min: self.k_min.unwrap_or(base.k_min),
            alpha_min: self.alpha_min.unwrap_or(base.alpha_min),
            initial_parent: self.initial_parent.clone().unwrap_or(base.initial_parent),
            split_dim_law: self.split_dim_law.clone().unwrap_or(base.split_dim_law),
            scheme: self.scheme.unwrap_or(base.scheme),
            n_grid: self.n_grid.unwrap_or(base.n_grid),
            seed: self.seed.unwrap_or(base.seed),
            workers: base.workers,
        }
    }

    fn from_config(c: &ForestConfig) -> Self {
        Self {
            subsample_size: Some(c.subsample_size),
            n_trees: Some(c.n_trees),
            order: Some(c.order),
            k_min: Some(c.k_min),
            alpha_min: Some(c.alpha_min),
            initial_parent: Some(c.initial_parent.clone()),
            split_dim_law: Some(c.split_dim_law.clone()),
            scheme: Some(c.scheme),
            n_grid: Some(c.n_grid),
            seed: Some(c.seed),
        }
    }
}

/// Configuration of the `fit` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// CSV with header; first column `y`, remaining columns covariates.
    /// Relative paths are taken relative to the config file.
    pub input: PathBuf,
    pub query: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standard_errors: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub se: Option<SeParams>,
    #[serde(default)]
    pub forest: ForestSettings,
}

/// Configuration of the `mc` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McRunConfig {
    pub design: Design,
    pub n: usize,
    pub reps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design_points: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standard_errors: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub se: Option<SeParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mise_points: Option<usize>,
    /// Master seed for the replications.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub forest: ForestSettings,
}

#[derive(Debug, Serialize)]
struct Provenance<'a, C: Serialize> {
    command: &'a str,
    package: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a C,
}

/// Default `y` grid for `fit`: `0, 0.05, ..., 1`.
pub fn default_y_grid() -> Vec<f64> {
    (0..=20).map(|k| k as f64 / 20.0).collect()
}

/// Default subsample size `n / 5`.
pub fn default_subsample(n: usize) -> usize {
    (n / 5).max(2)
}

fn read_config<C: for<'de> Deserialize<'de>>(path: &Path) -> Result<C, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| input_err(format!("config: cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| input_err(format!("config: invalid {}: {e}", path.display())))
}

/// Reads the input CSV: header row, then `y` followed by the covariates.
pub fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| input_err(format!("input: cannot read {}: {e}", path.display())))?;
    let width = rdr
        .headers()
        .map_err(|e| input_err(format!("input: bad header in {}: {e}", path.display())))?
        .len();
    if width < 2 {
        return Err(input_err(format!(
            "input: {} needs a y column and at least one covariate",
            path.display()
        )));
    }
    let mut y = Vec::new();
    let mut x = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| input_err(format!("input: row {row}: {e}")))?;
        if rec.len() != width {
            return Err(input_err(format!(
                "input: row {row} has {} fields, expected {width}",
                rec.len()
            )));
        }
        let vals = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| input_err(format!("input: row {row}: {e}")))?;
        if !(0.0..=1.0).contains(&vals[0]) {
            return Err(input_err(format!(
                "input: row {row}: y = {} lies outside [0, 1]",
                vals[0]
            )));
        }
        if vals[1..].iter().any(|v| !v.is_finite()) {
            return Err(input_err(format!("input: row {row}: covariate is not finite")));
        }
        y.push(vals[0]);
        x.extend_from_slice(&vals[1..]);
    }
    if y.is_empty() {
        return Err(input_err(format!("input: {} has no data rows", path.display())));
    }
    Dataset::from_flat(y, x, width - 1).map_err(|e| lib_error("input", e))
}

/// Covariate bounding box shrunk by 1% of its width on every side.
pub fn shrunk_bounding_box(data: &Dataset) -> Result<AxisBox, CliError> {
    let d = data.dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for i in 0..data.len() {
        for (m, &v) in data.x(i).iter().enumerate() {
            lo[m] = lo[m].min(v);
            hi[m] = hi[m].max(v);
        }
    }
    for m in 0..d {
        let w = hi[m] - lo[m];
        lo[m] += 0.01 * w;
        hi[m] -= 0.01 * w;
    }
    AxisBox::new(lo, hi).map_err(|_| {
        input_err("config: a covariate is constant; set forest.initial_parent explicitly")
    })
}

/// Formats a number for CSV output; `NA` for missing values.
fn num(v: Option<f64>) -> String {
    match v {
        Some(v) if !v.is_nan() => format!("{v}"),
        _ => "NA".to_string(),
    }
}

fn create_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| input_err(format!("output: cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| input_err(format!("output: cannot write {}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

/// Runs `fit`; returns the resolved configuration.
pub fn cmd_fit(args: &CommonArgs) -> Result<FitConfig, CliError> {
    let cfg: FitConfig = read_config(&args.config)?;
    let base_dir = args.config.parent().unwrap_or(Path::new("."));
    let input = base_dir.join(&cfg.input);
    let data = read_dataset(&input)?;
    let n = data.len();

    let mut forest_settings = cfg.forest.clone();
    if let Some(seed) = args.seed {
        forest_settings.seed = Some(seed);
    }
    let initial_parent = match &forest_settings.initial_parent {
        Some(b) => b.clone(),
        None => shrunk_bounding_box(&data)?,
    };
    let mut base = ForestConfig::mc_defaults(data.dim(), default_subsample(n));
    base.initial_parent = initial_parent;
    let mut forest = forest_settings.resolve(base);
    forest.workers = args.workers.max(1);
    forest.validate(n, data.dim()).map_err(|e| lib_error("config", e))?;

    let standard_errors = cfg.standard_errors.unwrap_or(true);
    let se = standard_errors.then(|| cfg.se.unwrap_or_else(|| SeParams::defaults(n, forest.n_trees)));
    let level = cfg.level.unwrap_or(0.95);
    if !(level > 0.0 && level < 1.0) {
        return Err(input_err("config: level must lie in (0, 1)"));
    }
    let y_grid = cfg.y_grid.clone().unwrap_or_else(default_y_grid);
    if let Some(bad) = y_grid.iter().find(|y| !(0.0..=1.0).contains(*y)) {
        return Err(input_err(format!("config: y_grid value {bad} lies outside [0, 1]")));
    }

    let resolved = FitConfig {
        input: cfg.input.clone(),
        query: cfg.query.clone(),
        y_grid: Some(y_grid.clone()),
        level: Some(level),
        standard_errors: Some(standard_errors),
        se,
        forest: ForestSettings::from_config(&forest),
    };

    log::info!("fitting n = {n}, d = {}, N = {}", data.dim(), forest.n_trees);
    let fitted = fit(&data, &cfg.query, &forest, se).map_err(|e| lib_error("estimation", e))?;

    let mut csv_out = Vec::new();
    writeln!(csv_out, "# config: {}", to_json(&resolved)).expect("write to memory");
    {
        let mut w = csv::Writer::from_writer(&mut csv_out);
        w.write_record(["y", "density", "std_error", "ci_lo", "ci_hi"])
            .expect("write to memory");
        for &y in &y_grid {
            let f = fitted.pdf(y).map_err(|e| lib_error("evaluation", e))?;
            let (s, lo, hi) = if se.is_some() {
                let s = fitted.std_error(y).map_err(|e| lib_error("standard error", e))?;
                let (lo, hi) = fitted
                    .confidence_interval(y, level)
                    .map_err(|e| lib_error("confidence interval", e))?;
                (Some(s), Some(lo), Some(hi))
            } else {
                (None, None, None)
            };
            w.write_record([num(Some(y)), num(Some(f)), num(s), num(lo), num(hi)])
                .expect("write to memory");
        }
        w.flush().expect("write to memory");
    }

    create_out(&args.out)?;
    write_file(&args.out.join("fit.csv"), &csv_out)?;
    let prov = Provenance {
        command: "fit",
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed: forest.seed,
        config: &resolved,
    };
    let mut prov_json = serde_json::to_value(&prov).expect("serializable");
    prov_json["diagnostics"] = serde_json::json!({
        "n": n,
        "theta": fitted.theta_hat.theta(),
        "newton_iterations": fitted.theta_hat.iterations,
        "residual_inf_norm": fitted.theta_hat.residual_inf_norm,
        "empty_leaves": fitted.empty_leaves,
    });
    write_file(
        &args.out.join("provenance.json"),
        serde_json::to_string_pretty(&prov_json).expect("serializable").as_bytes(),
    )?;
    Ok(resolved)
}

/// Runs `mc`; returns the resolved configuration and the report.
pub fn cmd_mc(args: &CommonArgs) -> Result<(McRunConfig, McReport), CliError> {
    let cfg: McRunConfig = read_config(&args.config)?;
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let forest = cfg
        .forest
        .resolve(ForestConfig::mc_defaults(DIM, default_subsample(cfg.n)));
    forest.validate(cfg.n, DIM).map_err(|e| lib_error("config", e))?;

    let mut mc = McConfig::new(cfg.design, cfg.n, cfg.reps, forest.clone());
    let standard_errors = cfg.standard_errors.unwrap_or(true);
    mc.se = if standard_errors {
        Some(cfg.se.unwrap_or_else(|| SeParams::defaults(cfg.n, forest.n_trees)))
    } else {
        None
    };
    if let Some(p) = &cfg.design_points {
        mc.design_points = p.clone();
    }
    mc.level = cfg.level.unwrap_or(mc.level);
    mc.kernel = cfg.kernel.unwrap_or(false);
    mc.mise_points = cfg.mise_points.unwrap_or(mc.mise_points);
    mc.seed = seed;
    mc.workers = args.workers.max(1);

    let resolved = McRunConfig {
        design: cfg.design,
        n: cfg.n,
        reps: cfg.reps,
        design_points: Some(mc.design_points.clone()),
        level: Some(mc.level),
        standard_errors: Some(standard_errors),
        se: mc.se,
        kernel: Some(mc.kernel),
        mise_points: Some(mc.mise_points),
        seed: Some(seed),
        forest: ForestSettings::from_config(&forest),
    };

    log::info!("running {} replications of {:?} at n = {}", cfg.reps, cfg.design, cfg.n);
    let report = run_mc(&mc).map_err(|e| lib_error("monte carlo", e))?;
    if report.successes < 2 {
        return Err(CliError::Estimation(format!(
            "monte carlo: only {} of {} replications succeeded; first failure: {}",
            report.successes,
            report.reps,
            report.failures.first().map_or("none", |f| f.error.as_str())
        )));
    }

    create_out(&args.out)?;
    let mut csv_out = Vec::new();
    report
        .write_csv(&mut csv_out, &[format!("config: {}", to_json(&resolved))])
        .expect("write to memory");
    write_file(&args.out.join("mc.csv"), &csv_out)?;
    let summary = serde_json::json!({
        "command": "mc",
        "package": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "config": resolved,
        "report": report,
    });
    write_file(
        &args.out.join("summary.json"),
        serde_json::to_string_pretty(&summary).expect("serializable").as_bytes(),
    )?;
    Ok((resolved, report))
}

/// Parses `args` and runs the selected command.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Fit(a) => cmd_fit(a).map(|_| ()),
        Command::Mc(a) => cmd_mc(a).map(|_| ()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
