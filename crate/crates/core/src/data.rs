use crate::basis::BasisSpec;
use crate::error::{Error, Result};

/// Outcomes `y_i` in `[0, 1]` with covariate rows `x_i` in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    /// Row-major `n x d`.
    x: Vec<f64>,
    dim: usize,
}

impl Dataset {
    /// Builds a dataset from outcomes and a row-major covariate buffer.
    pub fn from_flat(y: Vec<f64>, x: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("covariate dimension must be positive"));
        }
        if x.len() != y.len() * dim {
            return Err(Error::config(format!(
                "covariate buffer has {} values, expected {} x {}",
                x.len(),
                y.len(),
                dim
            )));
        }
        if let Some(&bad) = y.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain { value: bad });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "covariates",
            });
        }
        Ok(Self { y, x, dim })
    }

    pub fn from_rows(y: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::config("covariate rows have inconsistent lengths"));
        }
        Self::from_flat(y, rows.concat(), dim)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.y
    }

    pub fn y(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn x_coord(&self, i: usize, m: usize) -> f64 {
        self.x[i * self.dim + m]
    }

    /// Copy with outcomes replaced, keeping covariates.
    pub fn with_outcomes(&self, y: Vec<f64>) -> Result<Self> {
        Self::from_flat(y, self.x.clone(), self.dim)
    }
}

/// `phi(y_i)` for every observation, row-major `n x J`.
#[derive(Debug, Clone)]
pub struct PhiTable {
    values: Vec<f64>,
    order: usize,
}

impl PhiTable {
    pub fn new(data: &Dataset, spec: &BasisSpec) -> Result<Self> {
        Ok(Self {
            values: spec.basis_table(data.outcomes())?,
            order: spec.order(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.order..(i + 1) * self.order]
    }

    /// Mean of `phi(y_i)` over `members`; zero vector when empty.
    pub fn mean_over(&self, members: &[usize]) -> Vec<f64> {
        let mut acc = vec![0.0; self.order];
        if members.is_empty() {
            return acc;
        }
        for &i in members {
            for (a, v) in acc.iter_mut().zip(self.row(i)) {
                *a += v;
            }
        }
        let k = members.len() as f64;
        acc.iter_mut().for_each(|a| *a /= k);
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(Dataset::from_flat(vec![0.2, 1.5], vec![0.0, 1.0], 1).is_err());
        assert!(Dataset::from_flat(vec![0.2], vec![0.0, 1.0], 1).is_err());
        assert!(Dataset::from_flat(vec![0.2], vec![f64::NAN], 1).is_err());
        let d = Dataset::from_rows(vec![0.1, 0.9], &[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(d.x(1), &[3.0, 4.0]);
        assert_eq!(d.x_coord(0, 1), 2.0);
    }

    #[test]
    fn phi_mean() {
        let spec = BasisSpec::new(2).unwrap();
        let d = Dataset::from_flat(vec![0.0, 1.0], vec![0.0, 0.0], 1).unwrap();
        let phi = PhiTable::new(&d, &spec).unwrap();
        let m = phi.mean_over(&[0, 1]);
        assert!(m[0].abs() < 1e-15);
        assert!((m[1] - 5f64.sqrt()).abs() < 1e-12);
        assert_eq!(phi.mean_over(&[]), vec![0.0, 0.0]);
    }
}
