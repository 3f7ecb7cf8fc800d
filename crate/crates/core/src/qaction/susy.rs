//! One-dimensional supersymmetric partner potentials (units ħ = 2m = 1).
//!
//! For `H₋ = -d²/dx² + V₋` with ground state `ψ`, the superpotential is `W_s = -ψ'/ψ`
//! and the partners are `V± = W_s² ± W_s'`. The log-derivative `W = ψ'/ψ` used by the
//! 2-D Riccati relations is `-W_s`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniformly sampled 1-D function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Samples1D {
    pub x0: f64,
    pub dx: f64,
    pub values: Vec<f64>,
}

impl Samples1D {
    pub fn from_fn(x0: f64, x1: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        let dx = (x1 - x0) / (n - 1) as f64;
        Self {
            x0,
            dx,
            values: (0..n).map(|k| f(x0 + k as f64 * dx)).collect(),
        }
    }

    pub fn x(&self, k: usize) -> f64 {
        self.x0 + k as f64 * self.dx
    }
}

/// Superpotential and partner potential on the nodes where both are resolved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SusyPartner {
    pub x: Vec<f64>,
    /// `W_s = -ψ'/ψ`.
    pub superpotential: Vec<f64>,
    /// `W = ψ'/ψ`, the 1-D restriction of `∇ log ψ`.
    pub log_derivative: Vec<f64>,
    pub v_minus: Vec<f64>,
    /// `V₊ = V₋ + 2 W_s'`.
    pub v_plus: Vec<f64>,
    /// `V₋ - (W_s² - W_s')`; constant `E_gr` when `ψ` is the ground state of `V₋`.
    pub riccati_residual: Vec<f64>,
}

/// Partner potential from a positive sampled ground state and its potential `V₋`.
pub fn susy_partner_1d(psi: &Samples1D, v_minus: &[f64], mask_fraction: f64) -> Result<SusyPartner> {
    let n = psi.values.len();
    if v_minus.len() != n {
        return Err(Error::InvalidInput(format!("{} potential samples for {n} wave-function samples", v_minus.len())));
    }
    if n < 5 {
        return Err(Error::InsufficientData("need at least 5 samples".into()));
    }
    let cut = mask_fraction * psi.values.iter().copied().fold(0.0, f64::max);
    let u: Vec<f64> = psi.values.iter().map(|&v| if v > cut && v > 0.0 { v.ln() } else { f64::NAN }).collect();
    let h = psi.dx;
    let mut out = SusyPartner {
        x: Vec::new(),
        superpotential: Vec::new(),
        log_derivative: Vec::new(),
        v_minus: Vec::new(),
        v_plus: Vec::new(),
        riccati_residual: Vec::new(),
    };
    for k in 2..n - 2 {
        let s = &u[k - 2..=k + 2];
        if s.iter().any(|v| v.is_nan()) {
            continue;
        }
        let w = (s[0] - 8.0 * s[1] + 8.0 * s[3] - s[4]) / (12.0 * h);
        let w_prime = (-s[0] + 16.0 * s[1] - 30.0 * s[2] + 16.0 * s[3] - s[4]) / (12.0 * h * h);
        let ws = -w;
        let ws_prime = -w_prime;
        out.x.push(psi.x(k));
        out.superpotential.push(ws);
        out.log_derivative.push(w);
        out.v_minus.push(v_minus[k]);
        out.v_plus.push(v_minus[k] + 2.0 * ws_prime);
        out.riccati_residual.push(v_minus[k] - (ws * ws - ws_prime));
    }
    if out.x.is_empty() {
        return Err(Error::AllMasked);
    }
    Ok(out)
}

/// Ground state of `-d²/dx² + V` with Dirichlet ends, fourth-order differences, dense diagonalization.
pub fn ground_state_1d(v: impl Fn(f64) -> f64, x0: f64, x1: f64, n: usize) -> Result<(Samples1D, f64)> {
    if n < 16 || !(x1 > x0) {
        return Err(Error::InvalidInput("need x1 > x0 and at least 16 nodes".into()));
    }
    let h = (x1 - x0) / (n - 1) as f64;
    let m = n - 2;
    let c = 1.0 / (12.0 * h * h);
    let mut ham = DMatrix::<f64>::zeros(m, m);
    for r in 0..m {
        ham[(r, r)] = 30.0 * c + v(x0 + (r + 1) as f64 * h);
        if r + 1 < m {
            ham[(r, r + 1)] = -16.0 * c;
            ham[(r + 1, r)] = -16.0 * c;
        }
        if r + 2 < m {
            ham[(r, r + 2)] = c;
            ham[(r + 2, r)] = c;
        }
    }
    let eig = ham.symmetric_eigen();
    let (idx, energy) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &e)| if e < acc.1 { (i, e) } else { acc });
    let col = eig.eigenvectors.column(idx);
    let sign = if col.sum() < 0.0 { -1.0 } else { 1.0 };
    let mut values = vec![0.0; n];
    for r in 0..m {
        values[r + 1] = (sign * col[r]).max(0.0);
    }
    let norm = (values.iter().map(|v| v * v).sum::<f64>() * h).sqrt();
    values.iter_mut().for_each(|v| *v /= norm);
    Ok((Samples1D { x0, dx: h, values }, energy))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shifted_oscillator_partner() {
        // ψ = e^{-x²/4} is the zero-energy ground state of V₋ = x²/4 - 1/2.
        let psi = Samples1D::from_fn(-6.0, 6.0, 241, |x| (-x * x / 4.0).exp());
        let v_minus: Vec<f64> = (0..241).map(|k| psi.x(k).powi(2) / 4.0 - 0.5).collect();
        let s = susy_partner_1d(&psi, &v_minus, 1e-12).unwrap_or_else(|e| panic!("{e}"));
        for k in 0..s.x.len() {
            let x = s.x[k];
            assert!((s.superpotential[k] - x / 2.0).abs() < 1e-6);
            assert!((s.v_plus[k] - (x * x / 4.0 + 0.5)).abs() < 1e-6);
            assert!((s.log_derivative[k] + s.superpotential[k]).abs() < 1e-15);
            let ws2 = s.superpotential[k].powi(2);
            assert!((s.v_plus[k] + s.v_minus[k] - 2.0 * ws2).abs() < 1e-6);
            assert!(s.riccati_residual[k].abs() < 1e-6);
        }
    }

    #[test]
    fn partner_difference_is_twice_superpotential_slope() {
        let psi = Samples1D::from_fn(-4.0, 4.0, 161, |x| (-x * x / 2.0 - 0.1 * x.powi(4)).exp());
        let v_minus = vec![0.3; 161];
        let s = susy_partner_1d(&psi, &v_minus, 1e-12).unwrap_or_else(|e| panic!("{e}"));
        let h = psi.dx;
        for k in 1..s.x.len() - 1 {
            let slope = (s.superpotential[k + 1] - s.superpotential[k - 1]) / (2.0 * h);
            assert!((s.v_plus[k] - s.v_minus[k] - 2.0 * slope).abs() < 1e-2);
        }
    }

    #[test]
    fn solved_ground_state_gives_constant_residual() {
        let (psi, e) = ground_state_1d(|x| x * x / 4.0, -8.0, 8.0, 401).unwrap_or_else(|e| panic!("{e}"));
        assert!((e - 0.5).abs() < 1e-6, "{e}");
        let v: Vec<f64> = (0..401).map(|k| psi.x(k).powi(2) / 4.0 - e).collect();
        let s = susy_partner_1d(&psi, &v, 1e-4).unwrap_or_else(|e| panic!("{e}"));
        let worst = s.riccati_residual.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let psi = Samples1D::from_fn(-1.0, 1.0, 20, |_| 1.0);
        assert!(susy_partner_1d(&psi, &[0.0; 5], 1e-6).is_err());
    }
}
