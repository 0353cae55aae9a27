//! Exponential-series densities `f(y; theta) = exp(theta' phi(y)) / Z(theta)`
//! on `[0, 1]`, their moments and covariance, and the Newton solver that maps
//! a target moment vector back to `theta`.
//!
//! `mu(theta)` is the gradient of `log Z` and `V(theta)` its Hessian, so the
//! moment-matching Newton step `V^{-1} (mu_target - mu(theta))` uses the exact
//! Jacobian.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};

/// Moment vector `E[phi(Y)]` of length `J`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVector(pub DVector<f64>);

impl MomentVector {
    pub fn zeros(order: usize) -> Self {
        MomentVector(DVector::zeros(order))
    }

    pub fn from_slice(values: &[f64]) -> Self {
        MomentVector(DVector::from_column_slice(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True when every component satisfies `|mu_j| <= sqrt(2j + 1)`, the range
    /// of `phi_j` on `[0, 1]`.
    pub fn within_basis_bounds(&self) -> bool {
        self.0
            .iter()
            .enumerate()
            .all(|(idx, m)| m.abs() <= basis_sup(idx + 1))
    }

    /// Plain average of `phi(y_i)`.
    pub fn sample_mean(ys: &[f64], spec: &BasisSpec) -> Result<Self> {
        let j = spec.order();
        let mut acc = vec![0.0; j];
        let mut row = vec![0.0; j];
        for &y in ys {
            spec.basis_into(y, &mut row)?;
            for (a, r) in acc.iter_mut().zip(&row) {
                *a += r;
            }
        }
        let n = ys.len() as f64;
        Ok(MomentVector(DVector::from_iterator(
            j,
            acc.into_iter().map(|a| a / n),
        )))
    }
}

fn basis_sup(l: usize) -> f64 {
    (2.0 * l as f64 + 1.0).sqrt()
}

/// Quadrature evaluation of `log Z`, `mu` and optionally `V` at one `theta`.
struct Evaluation {
    log_z: f64,
    mu: DVector<f64>,
    cov: Option<DMatrix<f64>>,
}

fn check_theta(theta: &[f64], spec: &BasisSpec) -> Result<()> {
    if theta.len() != spec.order() {
        return Err(Error::config(format!(
            "theta has length {}, basis order is {}",
            theta.len(),
            spec.order()
        )));
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite { context: "theta" });
    }
    Ok(())
}

fn evaluate(theta: &[f64], spec: &BasisSpec, with_cov: bool) -> Result<Evaluation> {
    let quad = spec.quadrature();
    let j = spec.order();
    let mut scores = Vec::with_capacity(quad.len());
    let mut max_score = f64::NEG_INFINITY;
    for i in 0..quad.len() {
        let s: f64 = spec.node_row(i).iter().zip(theta).map(|(p, t)| p * t).sum();
        if !s.is_finite() {
            return Err(Error::NonFinite {
                context: "exponent theta'phi",
            });
        }
        max_score = max_score.max(s);
        scores.push(s);
    }
    let mut total = 0.0;
    for (s, w) in scores.iter_mut().zip(quad.weights()) {
        *s = w * (*s - max_score).exp();
        total += *s;
    }
    let log_z = max_score + total.ln();

    let mut mu = DVector::zeros(j);
    for (i, e) in scores.iter().enumerate() {
        let p = e / total;
        for (m, v) in mu.iter_mut().zip(spec.node_row(i)) {
            *m += p * v;
        }
    }

    let cov = with_cov.then(|| {
        let mut cov = DMatrix::zeros(j, j);
        let mut centered = vec![0.0; j];
        for (i, e) in scores.iter().enumerate() {
            let p = e / total;
            for ((c, v), m) in centered.iter_mut().zip(spec.node_row(i)).zip(mu.iter()) {
                *c = v - m;
            }
            for a in 0..j {
                let pa = p * centered[a];
                for b in a..j {
                    cov[(a, b)] += pa * centered[b];
                }
            }
        }
        for a in 0..j {
            for b in 0..a {
                cov[(a, b)] = cov[(b, a)];
            }
        }
        cov
    });

    Ok(Evaluation { log_z, mu, cov })
}

/// `log int_0^1 exp(theta' phi(t)) dt`, evaluated with max-subtraction.
pub fn log_partition(theta: &[f64], spec: &BasisSpec) -> Result<f64> {
    check_theta(theta, spec)?;
    Ok(evaluate(theta, spec, false)?.log_z)
}

/// Density `f(y; theta)`; strictly positive on `[0, 1]`.
pub fn density(y: f64, theta: &[f64], spec: &BasisSpec) -> Result<f64> {
    let phi = spec.basis_vector(y)?;
    let log_z = log_partition(theta, spec)?;
    Ok(density_from_parts(&phi, theta, log_z))
}

fn density_from_parts(phi: &[f64], theta: &[f64], log_z: f64) -> f64 {
    let s: f64 = phi.iter().zip(theta).map(|(p, t)| p * t).sum();
    (s - log_z).exp()
}

/// `mu(theta) = int phi f(.; theta)`.
pub fn moments(theta: &[f64], spec: &BasisSpec) -> Result<MomentVector> {
    check_theta(theta, spec)?;
    Ok(MomentVector(evaluate(theta, spec, false)?.mu))
}

/// `V(theta) = int (phi - mu)(phi - mu)' f(.; theta)`.
///
/// Fails with [`Error::Factorization`] when the quadrature matrix is not
/// positive definite.
pub fn covariance(theta: &[f64], spec: &BasisSpec) -> Result<DMatrix<f64>> {
    check_theta(theta, spec)?;
    let cov = evaluate(theta, spec, true)?.cov.expect("requested covariance");
    if Cholesky::new(cov.clone()).is_none() {
        return Err(Error::Factorization);
    }
    Ok(cov)
}

/// Newton solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Stop once `|mu_target - mu(theta)|_inf <= tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// `|theta|_inf` above this signals a target at the moment-space boundary.
    pub box_bound: f64,
    /// Maximum number of step halvings per iteration.
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100,
            box_bound: 50.0,
            max_halvings: 30,
        }
    }
}

impl NewtonOptions {
    pub fn with_tolerance(tol: f64, max_iter: usize) -> Self {
        Self {
            tol,
            max_iter,
            ..Self::default()
        }
    }
}

/// Converged solution of the moment equations together with `mu`, `log Z`
/// and the Cholesky factor of `V` at the accepted `theta`.
#[derive(Debug, Clone)]
pub struct ThetaSolution {
    pub theta: DVector<f64>,
    pub residual_inf_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Per-iteration residual history, starting at `theta = 0`.
    pub residual_history: Vec<f64>,
    moments: DVector<f64>,
    log_z: f64,
    cov_factor: Cholesky<f64, Dyn>,
}

impl ThetaSolution {
    /// Solution record at an arbitrary `theta` with zero recorded residual.
    pub fn at(theta: &[f64], spec: &BasisSpec) -> Result<Self> {
        check_theta(theta, spec)?;
        let ev = evaluate(theta, spec, true)?;
        let cov_factor =
            Cholesky::new(ev.cov.expect("requested covariance")).ok_or(Error::Factorization)?;
        Ok(Self {
            theta: DVector::from_column_slice(theta),
            residual_inf_norm: 0.0,
            iterations: 0,
            converged: true,
            residual_history: Vec::new(),
            moments: ev.mu,
            log_z: ev.log_z,
            cov_factor,
        })
    }

    pub fn theta(&self) -> &[f64] {
        self.theta.as_slice()
    }

    pub fn order(&self) -> usize {
        self.theta.len()
    }

    /// `mu(theta)` at the accepted `theta`.
    pub fn moments(&self) -> MomentVector {
        MomentVector(self.moments.clone())
    }

    pub fn log_partition(&self) -> f64 {
        self.log_z
    }

    /// `V(theta)` reconstructed from the cached factor.
    pub fn covariance(&self) -> DMatrix<f64> {
        let l = self.cov_factor.l();
        &l * l.transpose()
    }

    /// Solves `V(theta) z = rhs` with the cached factor.
    pub fn solve_covariance(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.cov_factor.solve(rhs)
    }

    /// `rho = -V^{-1} (mu(theta) - phi(y_i))` given precomputed `phi(y_i)`.
    pub fn pseudo_outcome(&self, phi_y: &[f64]) -> DVector<f64> {
        let diff = DVector::from_iterator(
            phi_y.len(),
            phi_y.iter().zip(self.moments.iter()).map(|(p, m)| p - m),
        );
        self.cov_factor.solve(&diff)
    }

    /// Density at `y` under this solution.
    pub fn density(&self, y: f64, spec: &BasisSpec) -> Result<f64> {
        let phi = spec.basis_vector(y)?;
        Ok(density_from_parts(&phi, self.theta(), self.log_z))
    }

    /// Inf-norm of `theta`.
    pub fn theta_inf_norm(&self) -> f64 {
        self.theta.amax()
    }
}

fn inf_norm_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Solves `mu(theta) = mu_target` by damped Newton iteration from `theta = 0`.
///
/// Each iteration takes the full step `V^{-1}(mu_target - mu(theta))` and halves
/// it until the residual inf-norm decreases and the convex objective
/// `psi(theta) - theta . mu_target` does not increase. The second condition
/// rejects overshoots into regions the quadrature cannot resolve. A target with some
/// `|mu_j| >= sqrt(2j + 1)`, or an iterate leaving the box `|theta|_inf <=
/// box_bound`, yields [`Error::BoundaryMoment`].
pub fn solve_theta(
    mu_target: &MomentVector,
    spec: &BasisSpec,
    opts: &NewtonOptions,
) -> Result<ThetaSolution> {
    let j = spec.order();
    if mu_target.len() != j {
        return Err(Error::config(format!(
            "target has {} moments, basis order is {j}",
            mu_target.len()
        )));
    }
    if mu_target.0.iter().any(|m| !m.is_finite()) {
        return Err(Error::NonFinite {
            context: "target moments",
        });
    }
    if mu_target
        .0
        .iter()
        .enumerate()
        .any(|(idx, m)| m.abs() >= basis_sup(idx + 1))
    {
        return Err(Error::BoundaryMoment {
            theta_inf_norm: f64::INFINITY,
        });
    }

    let target = &mu_target.0;
    let mut theta = DVector::zeros(j);
    let mut ev = evaluate(theta.as_slice(), spec, true)?;

    // mu(0) = 0 exactly; skip iterating so quadrature noise cannot cause a step.
    if target.iter().all(|&m| m == 0.0) {
        let mut sol = ThetaSolution::at(theta.as_slice(), spec)?;
        sol.residual_inf_norm = 0.0;
        sol.residual_history.push(0.0);
        return Ok(sol);
    }

    let dual = |ev: &Evaluation, theta: &DVector<f64>| ev.log_z - theta.dot(target);
    let mut objective = dual(&ev, &theta);
    let mut residual = inf_norm_diff(target, &ev.mu);
    let mut history = vec![residual];
    let mut iterations = 0;

    while residual > opts.tol {
        if iterations >= opts.max_iter {
            return Err(Error::NonConvergence {
                residual,
                iterations,
            });
        }
        let cov = ev.cov.take().expect("requested covariance");
        let factor = Cholesky::new(cov).ok_or(Error::Factorization)?;
        let direction = factor.solve(&(target - &ev.mu));

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let candidate = &theta + step * &direction;
            let cand_ev = evaluate(candidate.as_slice(), spec, true)?;
            let cand_res = inf_norm_diff(target, &cand_ev.mu);
            let cand_obj = dual(&cand_ev, &candidate);
            if cand_res < residual && cand_obj <= objective + 1e-12 * objective.abs().max(1.0) {
                accepted = Some((candidate, cand_ev, cand_res, cand_obj));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, cand_ev, cand_res, cand_obj)) = accepted else {
            if theta.amax() > 0.5 * opts.box_bound {
                return Err(Error::BoundaryMoment {
                    theta_inf_norm: theta.amax(),
                });
            }
            return Err(Error::NonConvergence {
                residual,
                iterations,
            });
        };
        theta = candidate;
        ev = cand_ev;
        residual = cand_res;
        objective = cand_obj;
        iterations += 1;
        history.push(residual);
        if theta.amax() > opts.box_bound {
            return Err(Error::BoundaryMoment {
                theta_inf_norm: theta.amax(),
            });
        }
    }

    let cov_factor =
        Cholesky::new(ev.cov.take().expect("requested covariance")).ok_or(Error::Factorization)?;
    Ok(ThetaSolution {
        theta,
        residual_inf_norm: residual,
        iterations,
        converged: true,
        residual_history: history,
        moments: ev.mu,
        log_z: ev.log_z,
        cov_factor,
    })
}

/// `rho_i(theta) = -V(theta)^{-1} [mu(theta) - phi(y_i)]`.
pub fn pseudo_outcomes_theta(theta: &ThetaSolution, y_i: f64, spec: &BasisSpec) -> Result<Vec<f64>> {
    let phi = spec.basis_vector(y_i)?;
    Ok(theta.pseudo_outcome(&phi).as_slice().to_vec())
}

/// Delta-method row vector
/// `T(y) = f(y; theta) [phi(y) - mu(theta)]' V(theta)^{-1}`, returned as a
/// column vector (V is symmetric).
pub fn t_functional(y: f64, theta: &ThetaSolution, spec: &BasisSpec) -> Result<DVector<f64>> {
    let phi = spec.basis_vector(y)?;
    let dens = density_from_parts(&phi, theta.theta(), theta.log_partition());
    Ok(theta.pseudo_outcome(&phi) * dens)
}
