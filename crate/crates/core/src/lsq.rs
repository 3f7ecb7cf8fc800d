//! Levenberg–Marquardt nonlinear least squares with a finite-difference Jacobian.
//!
//! Minimizes `Σ r_i(p)²`. Damping follows Nielsen's update rule; the Jacobian uses
//! central differences so the residual closure is evaluated `2P + 1` times per iteration.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Stop when an accepted step improves the cost by less than this fraction.
    pub rel_tol: f64,
    /// Relative finite-difference step (absolute floor `fd_step` for parameters near 0).
    pub fd_step: f64,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            rel_tol: 1e-10,
            fd_step: 1e-5,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LmReport {
    pub params: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `JᵀJ` at the returned parameters.
    pub normal_matrix: DMatrix<f64>,
    pub n_residuals: usize,
}

impl LmReport {
    /// `sqrt(diag((JᵀJ)⁻¹) · cost / (M - P))`, the usual local least-squares error bars.
    pub fn std_errors(&self) -> Vec<f64> {
        let p = self.params.len();
        let dof = self.n_residuals.saturating_sub(p).max(1) as f64;
        let s2 = self.cost / dof;
        match self.normal_matrix.clone().pseudo_inverse(1e-300) {
            Ok(inv) => (0..p).map(|i| (inv[(i, i)].abs() * s2).sqrt()).collect(),
            Err(_) => vec![f64::NAN; p],
        }
    }
}

fn cost_of(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn jacobian<F>(f: &F, p: &[f64], fd_step: f64, m: usize) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let columns = (0..p.len())
        .into_par_iter()
        .map(|j| {
            let h = fd_step * p[j].abs().max(1.0);
            let mut plus = p.to_vec();
            let mut minus = p.to_vec();
            plus[j] += h;
            minus[j] -= h;
            let (rp, rm) = (f(&plus)?, f(&minus)?);
            Ok(rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut jac = DMatrix::zeros(m, p.len());
    for (j, col) in columns.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            jac[(i, j)] = *v;
        }
    }
    Ok(jac)
}

/// Minimize `Σ r(p)²` from `init`.
pub fn levenberg_marquardt<F>(residuals: F, init: &[f64], opts: &LmOptions) -> Result<LmReport>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let n = init.len();
    let mut p = init.to_vec();
    let mut r = residuals(&p)?;
    let m = r.len();
    if m < n {
        return Err(Error::InsufficientData(format!("{m} residuals for {n} parameters")));
    }
    let mut cost = cost_of(&r);
    if !cost.is_finite() {
        return Err(Error::InvalidInput("initial residuals are not finite".into()));
    }
    let mut jac = jacobian(&residuals, &p, opts.fd_step, m)?;
    let mut jtj = jac.transpose() * &jac;
    // Marquardt scaling: the damping multiplies the diagonal of JᵀJ.
    let mut mu = opts.initial_damping;
    let mut nu = 2.0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let g = jac.transpose() * DVector::from_column_slice(&r);
        if g.amax() < 1e-300 || cost == 0.0 {
            converged = true;
            break;
        }
        let mut a = jtj.clone();
        let floor = 1e-12 * (0..n).map(|i| jtj[(i, i)]).fold(0.0f64, f64::max).max(1e-300);
        for i in 0..n {
            a[(i, i)] += mu * jtj[(i, i)].max(floor);
        }
        let step = match a.clone().cholesky() {
            Some(ch) => ch.solve(&(-&g)),
            None => {
                mu *= nu;
                nu *= 2.0;
                continue;
            }
        };
        let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(x, d)| x + d).collect();
        let trial_r = match residuals(&trial) {
            Ok(r) => r,
            Err(e) => {
                log::debug!("trial step rejected: {e}");
                mu *= nu;
                nu *= 2.0;
                continue;
            }
        };
        let trial_cost = cost_of(&trial_r);
        // Predicted decrease of the quadratic model: -2 gᵀd - dᵀJᵀJd.
        let predicted = -(2.0 * g.dot(&step) + (&jtj * &step).dot(&step));
        let rho = if predicted > 0.0 { (cost - trial_cost) / predicted } else { -1.0 };
        let trial_jac = if trial_cost.is_finite() && rho > 0.0 {
            // A point whose neighbourhood cannot be evaluated is treated like a failed step.
            jacobian(&residuals, &trial, opts.fd_step, m)
                .inspect_err(|e| log::debug!("jacobian at trial point failed: {e}"))
                .ok()
        } else {
            None
        };
        if let Some(trial_jac) = trial_jac {
            let improvement = (cost - trial_cost) / cost.max(1e-300);
            p = trial;
            r = trial_r;
            cost = trial_cost;
            jac = trial_jac;
            jtj = jac.transpose() * &jac;
            mu *= (1.0f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));
            nu = 2.0;
            if improvement < opts.rel_tol {
                converged = true;
                break;
            }
        } else {
            mu *= nu;
            nu *= 2.0;
            if mu > 1e20 {
                // No downhill step exists at working precision: a stationary point.
                converged = true;
                break;
            }
        }
    }
    Ok(LmReport {
        params: p,
        cost,
        iterations,
        converged,
        normal_matrix: jtj,
        n_residuals: m,
    })
}
