//! Oracle kernel ratio estimator `f_yx(y, x) / f_x(x)` over `x_1..x_3`.

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Covariates entering the kernel estimator.
pub const KERNEL_DIMS: usize = 3;

/// Tri-weight kernel `35/32 (1 - u^2)^3` on `[-1, 1]`.
pub fn triweight(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        let v = 1.0 - u * u;
        35.0 / 32.0 * v * v * v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bandwidths {
    pub h_y: f64,
    /// Numerator bandwidths for `x_1..x_3`.
    pub h_x: [f64; KERNEL_DIMS],
    /// Denominator bandwidths for `x_1..x_3`.
    pub g_x: [f64; KERNEL_DIMS],
}

impl Bandwidths {
    /// `1.06 sd n^{-1/8}` in the joint density, `1.06 sd n^{-1/7}` in the marginal.
    pub fn rule_of_thumb(data: &Dataset) -> Result<Self> {
        let n = data.len();
        if n < 2 {
            return Err(Error::config("rule-of-thumb bandwidths need at least two observations"));
        }
        if data.dim() < KERNEL_DIMS {
            return Err(Error::config("kernel baseline needs at least three covariates"));
        }
        let nf = n as f64;
        let num = 1.06 * nf.powf(-1.0 / 8.0);
        let den = 1.06 * nf.powf(-1.0 / 7.0);
        let sd_y = sample_sd(data.outcomes().iter().copied());
        let mut h_x = [0.0; KERNEL_DIMS];
        let mut g_x = [0.0; KERNEL_DIMS];
        for m in 0..KERNEL_DIMS {
            let sd = sample_sd((0..n).map(|i| data.x_coord(i, m)));
            h_x[m] = num * sd;
            g_x[m] = den * sd;
        }
        let bw = Self {
            h_y: num * sd_y,
            h_x,
            g_x,
        };
        if bw.all().any(|h| !(h > 0.0)) {
            return Err(Error::config("degenerate bandwidth: a variable has zero spread"));
        }
        Ok(bw)
    }

    fn all(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(self.h_y).chain(self.h_x).chain(self.g_x)
    }
}

fn sample_sd(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    (v.map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Kernel estimate of `f(y | x)` with rule-of-thumb bandwidths.
pub fn kernel_baseline(data: &Dataset, y: f64, x: &[f64]) -> Result<f64> {
    kernel_baseline_with(data, y, x, &Bandwidths::rule_of_thumb(data)?)
}

/// Kernel estimate of `f(y | x)` with given bandwidths.
pub fn kernel_baseline_with(data: &Dataset, y: f64, x: &[f64], bw: &Bandwidths) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::config("kernel baseline needs a nonempty dataset"));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..data.len() {
        let xi = data.x(i);
        let mut kn = triweight((y - data.y(i)) / bw.h_y) / bw.h_y;
        let mut kd = 1.0;
        for m in 0..KERNEL_DIMS {
            let d = x[m] - xi[m];
            kn *= triweight(d / bw.h_x[m]) / bw.h_x[m];
            kd *= triweight(d / bw.g_x[m]) / bw.g_x[m];
        }
        num += kn;
        den += kd;
    }
    if den == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(num / den)
}
