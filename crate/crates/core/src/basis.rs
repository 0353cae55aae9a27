//! Orthonormal shifted Legendre polynomials on `[0, 1]` and Gauss–Legendre
//! quadrature.
//!
//! `phi_l(y) = sqrt(2l + 1) * P_l(2y - 1)` where `P_l` is the classical
//! Legendre polynomial. Values are produced by the three-term recurrence
//!
//! ```text
//! (l + 1) P_{l+1}(t) = (2l + 1) t P_l(t) - l P_{l-1}(t)
//! ```
//!
//! which stays accurate at moderate degree, unlike the alternating binomial
//! expansion of the same polynomials.
//!
//! A [`BasisSpec`] bundles the order `J` (the constant `phi_0` is excluded)
//! with a quadrature rule and caches the basis evaluated at every node, so
//! integrals against `exp(theta' phi)` reduce to dot products.

use crate::error::{Error, Result};

/// Minimum number of Gauss–Legendre nodes used by [`BasisSpec::new`].
pub const MIN_DEFAULT_NODES: usize = 64;

/// Fixed-node quadrature rule on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Quadrature {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Gauss–Legendre rule with `n_nodes` points mapped from `[-1, 1]` to `[0, 1]`.
///
/// Exact for polynomials up to degree `2 * n_nodes - 1`. Nodes are returned in
/// increasing order.
pub fn make_quadrature(n_nodes: usize) -> Result<Quadrature> {
    if n_nodes < 2 {
        return Err(Error::config(format!(
            "quadrature needs at least 2 nodes, got {n_nodes}"
        )));
    }
    let n = n_nodes;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    // Roots are symmetric; solve for the upper half by Newton on P_n.
    for i in 0..n.div_ceil(2) {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, t);
            dp = d;
            let dt = p / d;
            t -= dt;
            if dt.abs() <= 1e-16 {
                let (_, d) = legendre_with_derivative(n, t);
                dp = d;
                break;
            }
        }
        let w = 2.0 / ((1.0 - t * t) * dp * dp);
        // t is the i-th largest root on [-1, 1].
        nodes[n - 1 - i] = 0.5 * (1.0 + t);
        nodes[i] = 0.5 * (1.0 - t);
        weights[n - 1 - i] = 0.5 * w;
        weights[i] = 0.5 * w;
    }
    Ok(Quadrature { nodes, weights })
}

/// `P_n(t)` and `P_n'(t)` on `[-1, 1]`.
fn legendre_with_derivative(n: usize, t: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = t;
    for k in 1..n {
        let k = k as f64;
        let next = ((2.0 * k + 1.0) * t * p - k * p_prev) / (k + 1.0);
        p_prev = p;
        p = next;
    }
    let d = n as f64 * (t * p - p_prev) / (t * t - 1.0);
    (p, d)
}

/// `sum_i w_i f(t_i)`; a non-finite integrand value is reported as an error.
pub fn integrate<F>(f: F, quad: &Quadrature) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let mut acc = 0.0;
    for (t, w) in quad.iter() {
        let v = f(t);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: "quadrature integrand",
            });
        }
        acc += w * v;
    }
    Ok(acc)
}

fn check_unit(y: f64) -> Result<()> {
    if (0.0..=1.0).contains(&y) {
        Ok(())
    } else {
        Err(Error::Domain { value: y })
    }
}

/// Orthonormal shifted Legendre polynomial `phi_l(y)` on `[0, 1]`.
pub fn legendre_eval(l: usize, y: f64) -> Result<f64> {
    check_unit(y)?;
    let t = 2.0 * y - 1.0;
    let mut p_prev = 1.0;
    if l == 0 {
        return Ok(1.0);
    }
    let mut p = t;
    for k in 1..l {
        let k = k as f64;
        let next = ((2.0 * k + 1.0) * t * p - k * p_prev) / (k + 1.0);
        p_prev = p;
        p = next;
    }
    Ok((2.0 * l as f64 + 1.0).sqrt() * p)
}

/// Writes `(phi_1(y), ..., phi_J(y))` into `out` (length `J`). No domain check.
fn fill_basis(y: f64, out: &mut [f64]) {
    let t = 2.0 * y - 1.0;
    let mut p_prev = 1.0;
    let mut p = t;
    for (idx, slot) in out.iter_mut().enumerate() {
        let l = idx + 1;
        if l > 1 {
            let k = (l - 1) as f64;
            let next = ((2.0 * k + 1.0) * t * p - k * p_prev) / (k + 1.0);
            p_prev = p;
            p = next;
        }
        *slot = (2.0 * l as f64 + 1.0).sqrt() * p;
    }
}

/// Basis order plus the quadrature rule used for every integral over `[0, 1]`.
#[derive(Debug, Clone)]
pub struct BasisSpec {
    order: usize,
    quad: Quadrature,
    /// Row-major `n_nodes x order` table of `phi_j(t_i)`.
    node_basis: Vec<f64>,
}

impl BasisSpec {
    /// Order `J` with the default Gauss–Legendre rule of `max(64, 4J + 16)` nodes.
    pub fn new(order: usize) -> Result<Self> {
        let n_nodes = MIN_DEFAULT_NODES.max(4 * order + 16);
        Self::with_quadrature(order, make_quadrature(n_nodes)?)
    }

    pub fn with_quadrature(order: usize, quad: Quadrature) -> Result<Self> {
        if order == 0 {
            return Err(Error::config("basis order J must be at least 1"));
        }
        let mut node_basis = vec![0.0; quad.len() * order];
        for (row, &t) in node_basis.chunks_exact_mut(order).zip(quad.nodes()) {
            fill_basis(t, row);
        }
        Ok(Self {
            order,
            quad,
            node_basis,
        })
    }

    /// Number of non-constant basis functions `J`.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quad
    }

    /// `phi(t_i)` at quadrature node `i`.
    pub fn node_row(&self, i: usize) -> &[f64] {
        &self.node_basis[i * self.order..(i + 1) * self.order]
    }

    /// `(phi_1(y), ..., phi_J(y))`.
    pub fn basis_vector(&self, y: f64) -> Result<Vec<f64>> {
        check_unit(y)?;
        let mut out = vec![0.0; self.order];
        fill_basis(y, &mut out);
        Ok(out)
    }

    /// Same as [`basis_vector`](Self::basis_vector) but writes into a caller buffer.
    pub fn basis_into(&self, y: f64, out: &mut [f64]) -> Result<()> {
        check_unit(y)?;
        assert_eq!(out.len(), self.order, "buffer length must equal J");
        fill_basis(y, out);
        Ok(())
    }

    /// Row-major `ys.len() x J` table of basis values.
    pub fn basis_table(&self, ys: &[f64]) -> Result<Vec<f64>> {
        let mut table = vec![0.0; ys.len() * self.order];
        for (row, &y) in table.chunks_exact_mut(self.order).zip(ys) {
            self.basis_into(y, row)?;
        }
        Ok(table)
    }
}
