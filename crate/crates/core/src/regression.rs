//! Sparse regression `y ≈ Θξ`: minimum-norm least squares, sequentially
//! thresholded least squares (STLS) and LASSO by coordinate descent.
//!
//! No intercept is added; a constant library term plays that role.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Plain,
    Stls,
    Lasso,
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolverKind::Plain => "plain",
            SolverKind::Stls => "stls",
            SolverKind::Lasso => "lasso",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseCoefficients {
    pub xi: Vec<f64>,
    /// `active[j]` ⇔ `xi[j] != 0`.
    pub active: Vec<bool>,
    pub solver: SolverKind,
    /// STLS threshold or LASSO weight; 0 for plain least squares.
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Every coefficient was thresholded away.
    pub degenerate: bool,
    /// LASSO objective after each sweep.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_trace: Vec<f64>,
    /// STLS active-set size after each iteration.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub support_trace: Vec<usize>,
}

impl SparseCoefficients {
    fn new(xi: Vec<f64>, solver: SolverKind, lambda: f64) -> Self {
        let active = xi.iter().map(|v| *v != 0.0).collect();
        SparseCoefficients {
            xi,
            active,
            solver,
            lambda,
            iterations: 1,
            converged: true,
            degenerate: false,
            objective_trace: Vec::new(),
            support_trace: Vec::new(),
        }
    }

    /// Hand-set coefficients, e.g. for a known model or a what-if.
    pub fn from_values(xi: Vec<f64>) -> Self {
        Self::new(xi, SolverKind::Plain, 0.0)
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    pub fn n_active(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.xi)
    }
}

fn check_dims(theta: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if theta.nrows() == 0 {
        return Err(Error::Dimension("design matrix has no rows".into()));
    }
    if theta.nrows() != y.len() {
        return Err(Error::Dimension(format!(
            "design matrix has {} rows but target has {}",
            theta.nrows(),
            y.len()
        )));
    }
    Ok(())
}

/// Minimum-norm least-squares solution via SVD with the usual relative
/// rank cutoff `ε·max(m, p)·σ_max`.
pub fn lstsq(theta: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let (m, p) = theta.shape();
    if p == 0 {
        return DVector::zeros(0);
    }
    let svd = theta.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    if !(sigma_max > 0.0) {
        return DVector::zeros(p);
    }
    let eps = f64::EPSILON * m.max(p) as f64 * sigma_max;
    svd.solve(y, eps).expect("both singular bases were computed")
}

/// `‖y − Θξ‖₂`.
pub fn residual_norm(theta: &DMatrix<f64>, y: &DVector<f64>, xi: &[f64]) -> f64 {
    (y - theta * DVector::from_column_slice(xi)).norm()
}

pub fn least_squares(theta: &DMatrix<f64>, y: &DVector<f64>) -> Result<SparseCoefficients> {
    check_dims(theta, y)?;
    let xi = lstsq(theta, y);
    let mut out = SparseCoefficients::new(xi.iter().copied().collect(), SolverKind::Plain, 0.0);
    out.active = vec![true; xi.len()];
    Ok(out)
}

fn solve_on(theta: &DMatrix<f64>, y: &DVector<f64>, active: &[bool]) -> Vec<f64> {
    let columns: Vec<usize> = (0..active.len()).filter(|&j| active[j]).collect();
    let mut xi = vec![0.0; active.len()];
    if columns.is_empty() {
        return xi;
    }
    let sub = lstsq(&theta.select_columns(&columns), y);
    for (value, &j) in sub.iter().zip(&columns) {
        xi[j] = *value;
    }
    xi
}

/// STLS with a fixed hard threshold; `max_iter = None` means `p + 1`.
pub fn stls(
    theta: &DMatrix<f64>,
    y: &DVector<f64>,
    threshold: f64,
    max_iter: Option<usize>,
) -> Result<SparseCoefficients> {
    stls_from(theta, y, threshold, max_iter, None)
}

/// STLS starting from a given active set (all columns when `None`).
pub fn stls_from(
    theta: &DMatrix<f64>,
    y: &DVector<f64>,
    threshold: f64,
    max_iter: Option<usize>,
    initial: Option<&[bool]>,
) -> Result<SparseCoefficients> {
    check_dims(theta, y)?;
    if !(threshold >= 0.0) || !threshold.is_finite() {
        return Err(Error::Parameter(format!("STLS threshold must be >= 0, got {threshold}")));
    }
    let p = theta.ncols();
    let mut active = match initial {
        Some(mask) if mask.len() != p => {
            return Err(Error::Dimension(format!("initial support has {} entries, expected {p}", mask.len())))
        }
        Some(mask) => mask.to_vec(),
        None => vec![true; p],
    };
    let max_iter = max_iter.unwrap_or(p + 1).max(1);
    let mut support_trace = Vec::new();
    let mut xi = vec![0.0; p];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let solution = solve_on(theta, y, &active);
        let next: Vec<bool> = solution.iter().zip(&active).map(|(v, a)| *a && v.abs() >= threshold).collect();
        xi = solution.iter().zip(&next).map(|(v, keep)| if *keep { *v } else { 0.0 }).collect();
        support_trace.push(next.iter().filter(|a| **a).count());
        let stable = next == active;
        active = next;
        if stable || active.iter().all(|a| !a) {
            converged = true;
            break;
        }
    }
    let mut out = SparseCoefficients::new(xi, SolverKind::Stls, threshold);
    out.active = out.xi.iter().map(|v| *v != 0.0).collect();
    out.iterations = iterations;
    out.converged = converged;
    out.degenerate = out.n_active() == 0;
    out.support_trace = support_trace;
    Ok(out)
}

/// `½‖y − Θξ‖² + λ‖ξ‖₁`.
pub fn lasso_objective(theta: &DMatrix<f64>, y: &DVector<f64>, xi: &[f64], lambda: f64) -> f64 {
    let r = residual_norm(theta, y, xi);
    0.5 * r * r + lambda * xi.iter().map(|v| v.abs()).sum::<f64>()
}

/// Largest violation of the LASSO optimality conditions at `xi`.
pub fn kkt_violation(theta: &DMatrix<f64>, y: &DVector<f64>, xi: &[f64], lambda: f64) -> f64 {
    let r = y - theta * DVector::from_column_slice(xi);
    let g = theta.tr_mul(&r);
    g.iter()
        .zip(xi)
        .map(|(g, x)| if *x != 0.0 { (g - lambda * x.signum()).abs() } else { (g.abs() - lambda).max(0.0) })
        .fold(0.0, f64::max)
}

fn soft_threshold(value: f64, lambda: f64) -> f64 {
    if value > lambda {
        value - lambda
    } else if value < -lambda {
        value + lambda
    } else {
        0.0
    }
}

/// Cyclic coordinate descent for `½‖y − Θξ‖² + λ‖ξ‖₁`, stopping once the
/// KKT violation is `≤ tol`.
pub fn lasso(theta: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, tol: f64, max_iter: usize) -> Result<SparseCoefficients> {
    check_dims(theta, y)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Parameter(format!("LASSO weight must be >= 0, got {lambda}")));
    }
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("LASSO tolerance must be > 0, got {tol}")));
    }
    let p = theta.ncols();
    let norms: Vec<f64> = theta.column_iter().map(|c| c.norm_squared()).collect();
    let mut xi = vec![0.0; p];
    let mut r = y.clone();
    let mut trace = vec![lasso_objective(theta, y, &xi, lambda)];
    let mut converged = kkt_violation(theta, y, &xi, lambda) <= tol;
    let mut sweeps = 0;
    while !converged && sweeps < max_iter {
        sweeps += 1;
        for j in 0..p {
            if norms[j] == 0.0 {
                continue;
            }
            let column = theta.column(j);
            let rho = column.dot(&r) + norms[j] * xi[j];
            let updated = soft_threshold(rho, lambda) / norms[j];
            let delta = updated - xi[j];
            if delta != 0.0 {
                r.axpy(-delta, &column, 1.0);
                xi[j] = updated;
            }
        }
        // fresh residual each sweep keeps rounding drift out of the stop test
        r = y - theta * DVector::from_column_slice(&xi);
        trace.push(0.5 * r.norm_squared() + lambda * xi.iter().map(|v| v.abs()).sum::<f64>());
        converged = kkt_violation(theta, y, &xi, lambda) <= tol;
    }
    let mut out = SparseCoefficients::new(xi, SolverKind::Lasso, lambda);
    out.iterations = sweeps;
    out.converged = converged;
    out.degenerate = out.n_active() == 0;
    out.objective_trace = trace;
    Ok(out)
}
