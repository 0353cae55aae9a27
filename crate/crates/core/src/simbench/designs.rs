//! Outcome laws D1 to D3: truncated to an interval, then rescaled onto `[0, 1]`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, Continuous, ContinuousCDF, LogNormal, Normal};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Number of covariates in every design; `x_4` never enters the outcome law.
pub const DIM: usize = 4;

const COV_MEAN: f64 = 0.5;
const COV_VAR: f64 = 0.125;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Design {
    D1,
    D2,
    D3,
}

impl std::str::FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "D1" | "d1" => Ok(Design::D1),
            "D2" | "d2" => Ok(Design::D2),
            "D3" | "d3" => Ok(Design::D3),
            _ => Err(Error::config(format!("unknown design {s:?}, expected D1, D2 or D3"))),
        }
    }
}

/// Normal `N(mean, sd^2)` truncated to `[lo, hi]`, sampled by inverse CDF.
#[derive(Debug, Clone, Copy)]
struct TruncNormal {
    law: Normal,
    f_lo: f64,
    f_hi: f64,
}

impl TruncNormal {
    fn new(mean: f64, sd: f64, lo: f64, hi: f64) -> Self {
        let law = Normal::new(mean, sd).expect("valid normal");
        Self {
            law,
            f_lo: law.cdf(lo),
            f_hi: law.cdf(hi),
        }
    }

    fn mass(&self) -> f64 {
        self.f_hi - self.f_lo
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.law.inverse_cdf(self.f_lo + u * self.mass())
    }
}

/// `n` covariate rows (row-major `n x 4`), each coordinate an independent
/// `N(1/2, 1/8)` truncated to `[0, 1]`.
pub fn gen_covariates<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let law = TruncNormal::new(COV_MEAN, COV_VAR.sqrt(), 0.0, 1.0);
    (0..n * DIM)
        .map(|_| law.sample(rng).clamp(0.0, 1.0))
        .collect()
}

/// Untruncated outcome law at `x`.
enum Law {
    Beta(Beta),
    LogNormal(LogNormal),
    Mixture(Normal, Normal),
}

impl Law {
    fn cdf(&self, v: f64) -> f64 {
        match self {
            Law::Beta(b) => b.cdf(v),
            Law::LogNormal(l) => l.cdf(v),
            Law::Mixture(a, b) => 0.5 * (a.cdf(v) + b.cdf(v)),
        }
    }

    fn pdf(&self, v: f64) -> f64 {
        match self {
            Law::Beta(b) => b.pdf(v),
            Law::LogNormal(l) => l.pdf(v),
            Law::Mixture(a, b) => 0.5 * (a.pdf(v) + b.pdf(v)),
        }
    }
}

impl Design {
    /// Truncation interval of the untransformed outcome.
    pub fn support(self) -> (f64, f64) {
        match self {
            Design::D1 => (0.1, 0.9),
            Design::D2 => (0.25, 5.0),
            Design::D3 => (-12.0, 12.0),
        }
    }

    fn law(self, x: &[f64]) -> Law {
        match self {
            Design::D1 => Law::Beta(
                Beta::new(1.0 + x[0] / 4.0 + x[1] / 4.0, 1.0 + x[2] / 2.0).expect("valid beta"),
            ),
            Design::D2 => {
                let var = 1.0 + (x[2] - 0.5).powi(2);
                Law::LogNormal(LogNormal::new(0.5 + x[0] + x[1], var.sqrt()).expect("valid lognormal"))
            }
            Design::D3 => {
                let (m, sd) = mixture_params(x);
                Law::Mixture(
                    Normal::new(-m, sd).expect("valid normal"),
                    Normal::new(m, sd).expect("valid normal"),
                )
            }
        }
    }

    /// Draws one outcome in `[0, 1]` given covariates `x`.
    pub fn gen_outcome<R: Rng + ?Sized>(self, x: &[f64], rng: &mut R) -> f64 {
        let (a, b) = self.support();
        let v = match self.law(x) {
            Law::Beta(beta) => {
                let (lo, hi) = (beta.cdf(a), beta.cdf(b));
                let u: f64 = rng.random();
                beta.inverse_cdf(lo + u * (hi - lo))
            }
            Law::LogNormal(ln) => {
                let (lo, hi) = (ln.cdf(a), ln.cdf(b));
                let u: f64 = rng.random();
                ln.inverse_cdf(lo + u * (hi - lo))
            }
            Law::Mixture(..) => {
                let (m, sd) = mixture_params(x);
                let l = TruncNormal::new(-m, sd, a, b);
                let r = TruncNormal::new(m, sd, a, b);
                let pick_left = rng.random::<f64>() * (l.mass() + r.mass()) < l.mass();
                if pick_left { l.sample(rng) } else { r.sample(rng) }
            }
        };
        ((v - a) / (b - a)).clamp(0.0, 1.0)
    }

    /// Density of the rescaled outcome at `y` given `x`.
    pub fn true_density(self, y: f64, x: &[f64]) -> Result<f64> {
        check_unit(y)?;
        let (a, b) = self.support();
        let law = self.law(x);
        let mass = law.cdf(b) - law.cdf(a);
        Ok((b - a) * law.pdf(a + (b - a) * y) / mass)
    }

    /// CDF of the rescaled outcome at `y` given `x`.
    pub fn true_cdf(self, y: f64, x: &[f64]) -> Result<f64> {
        check_unit(y)?;
        let (a, b) = self.support();
        let law = self.law(x);
        let lo = law.cdf(a);
        Ok((law.cdf(a + (b - a) * y) - lo) / (law.cdf(b) - lo))
    }

    /// `n` draws of `(y, x)` from the design.
    pub fn simulate<R: Rng + ?Sized>(self, n: usize, rng: &mut R) -> Result<Dataset> {
        let x = gen_covariates(n, rng);
        let y = x.chunks_exact(DIM).map(|row| self.gen_outcome(row, rng)).collect();
        Dataset::from_flat(y, x, DIM)
    }
}

/// Component mean magnitude and standard deviation for D3.
fn mixture_params(x: &[f64]) -> (f64, f64) {
    (5.0 + x[0] + x[1], (18.0 + (x[2] - 0.5).powi(2) / 10.0).sqrt())
}

fn check_unit(y: f64) -> Result<()> {
    if (0.0..=1.0).contains(&y) {
        Ok(())
    } else {
        Err(Error::Domain { value: y })
    }
}
