//! Quantum potential and Riccati residuals from a sampled ground state.
//!
//! With `U = log ψ_gr` the large-time quantum action satisfies
//! `2m̃ (Ṽ - Ṽ0) = |∇U|²`, and the Schrödinger equation becomes
//! `ΔU + |∇U|² = 2m (V - E_gr)`. Derivatives of `U` use fourth-order central differences.

use crate::error::{Error, Result};
use crate::grid::ScalarField2D;
use crate::model::ActionParams;

/// Default mask: nodes whose 5-point stencil dips below this fraction of `max ψ` are dropped.
pub const DEFAULT_MASK_FRACTION: f64 = 1e-6;

/// A field together with the nodes on which it is defined.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedField {
    /// Masked nodes hold 0.
    pub field: ScalarField2D,
    pub valid: Vec<bool>,
}

impl MaskedField {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// RMS over valid nodes selected by `select`.
    pub fn rms_where(&self, select: impl Fn(usize) -> bool) -> Option<f64> {
        let (mut s, mut n) = (0.0, 0usize);
        for (k, (&v, &ok)) in self.field.values.iter().zip(&self.valid).enumerate() {
            if ok && select(k) {
                s += v * v;
                n += 1;
            }
        }
        (n > 0).then(|| (s / n as f64).sqrt())
    }

    pub fn rms(&self) -> Option<f64> {
        self.rms_where(|_| true)
    }
}

struct LogDerivatives {
    ux: Vec<f64>,
    uy: Vec<f64>,
    lap: Vec<f64>,
    valid: Vec<bool>,
}

fn log_derivatives(psi: &ScalarField2D, mask_fraction: f64) -> Result<LogDerivatives> {
    let g = psi.grid;
    let cut = mask_fraction * psi.max();
    if !(cut > 0.0) {
        return Err(Error::AllMasked);
    }
    let n = g.len();
    let u: Vec<f64> = psi.values.iter().map(|&v| if v > cut { v.ln() } else { f64::NAN }).collect();
    let (hx, hy) = (g.dx(), g.dy());
    let mut out = LogDerivatives {
        ux: vec![0.0; n],
        uy: vec![0.0; n],
        lap: vec![0.0; n],
        valid: vec![false; n],
    };
    for i in 2..g.nx - 2 {
        for j in 2..g.ny - 2 {
            let at = |di: isize, dj: isize| u[g.index((i as isize + di) as usize, (j as isize + dj) as usize)];
            let (xm2, xm1, c, xp1, xp2) = (at(-2, 0), at(-1, 0), at(0, 0), at(1, 0), at(2, 0));
            let (ym2, ym1, yp1, yp2) = (at(0, -2), at(0, -1), at(0, 1), at(0, 2));
            let stencil = [xm2, xm1, c, xp1, xp2, ym2, ym1, yp1, yp2];
            if stencil.iter().any(|v| v.is_nan()) {
                continue;
            }
            let k = g.index(i, j);
            out.ux[k] = (xm2 - 8.0 * xm1 + 8.0 * xp1 - xp2) / (12.0 * hx);
            out.uy[k] = (ym2 - 8.0 * ym1 + 8.0 * yp1 - yp2) / (12.0 * hy);
            let uxx = (-xm2 + 16.0 * xm1 - 30.0 * c + 16.0 * xp1 - xp2) / (12.0 * hx * hx);
            let uyy = (-ym2 + 16.0 * ym1 - 30.0 * c + 16.0 * yp1 - yp2) / (12.0 * hy * hy);
            out.lap[k] = uxx + uyy;
            out.valid[k] = true;
        }
    }
    if !out.valid.iter().any(|v| *v) {
        return Err(Error::AllMasked);
    }
    Ok(out)
}

/// `m̃ (Ṽ - Ṽ0) = ½ |∇ψ/ψ|²` on nodes where `ψ` is resolved.
pub fn riccati_quantum_potential(psi: &ScalarField2D, mask_fraction: f64) -> Result<MaskedField> {
    let d = log_derivatives(psi, mask_fraction)?;
    let values = (0..psi.grid.len())
        .map(|k| if d.valid[k] { 0.5 * (d.ux[k] * d.ux[k] + d.uy[k] * d.uy[k]) } else { 0.0 })
        .collect();
    Ok(MaskedField {
        field: ScalarField2D { grid: psi.grid, values },
        valid: d.valid,
    })
}

/// Pointwise `ΔU + |∇U|² - 2m (V - E_gr)`.
pub fn riccati_residual(
    psi: &ScalarField2D,
    classical: &ActionParams,
    e_gr: f64,
    mask_fraction: f64,
) -> Result<MaskedField> {
    let d = log_derivatives(psi, mask_fraction)?;
    let g = psi.grid;
    let mut values = vec![0.0; g.len()];
    for i in 0..g.nx {
        for j in 0..g.ny {
            let k = g.index(i, j);
            if d.valid[k] {
                let v = classical.potential(g.x(i), g.y(j));
                values[k] = d.lap[k] + d.ux[k] * d.ux[k] + d.uy[k] * d.uy[k] - 2.0 * classical.mass * (v - e_gr);
            }
        }
    }
    Ok(MaskedField {
        field: ScalarField2D { grid: g, values },
        valid: d.valid,
    })
}

/// `m̃ (Ṽ - Ṽ0)` of a fitted action on the nodes valid in `like`, with `Ṽ0` its minimum there.
pub fn fitted_quantum_potential(params: &ActionParams, like: &MaskedField) -> MaskedField {
    let g = like.field.grid;
    let raw = ScalarField2D::from_fn(g, |x, y| params.potential(x, y));
    let v0 = raw
        .values
        .iter()
        .zip(&like.valid)
        .filter(|(_, ok)| **ok)
        .map(|(v, _)| *v)
        .fold(f64::INFINITY, f64::min);
    let values = raw
        .values
        .iter()
        .zip(&like.valid)
        .map(|(v, ok)| if *ok { params.mass * (v - v0) } else { 0.0 })
        .collect();
    MaskedField {
        field: ScalarField2D { grid: g, values },
        valid: like.valid.clone(),
    }
}

/// Relative RMS difference `‖a - b‖ / ‖b‖` over nodes valid in both with `ψ > region_fraction · max ψ`.
pub fn relative_rms_difference(a: &MaskedField, b: &MaskedField, psi: &ScalarField2D, region_fraction: f64) -> Result<f64> {
    let cut = region_fraction * psi.max();
    let (mut diff, mut norm, mut n) = (0.0, 0.0, 0usize);
    for k in 0..psi.values.len() {
        if a.valid[k] && b.valid[k] && psi.values[k] > cut {
            diff += (a.field.values[k] - b.field.values[k]).powi(2);
            norm += b.field.values[k].powi(2);
            n += 1;
        }
    }
    if n == 0 || norm == 0.0 {
        return Err(Error::AllMasked);
    }
    Ok((diff / norm).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid2D;

    fn grid() -> Grid2D {
        Grid2D::square(5.0, 101).unwrap_or_else(|e| panic!("{e}"))
    }

    fn harmonic_psi() -> ScalarField2D {
        ScalarField2D::from_fn(grid(), |x, y| (-(x * x + y * y) / 2.0).exp() / std::f64::consts::PI.sqrt())
    }

    #[test]
    fn harmonic_quantum_potential_is_the_classical_potential() {
        let q = riccati_quantum_potential(&harmonic_psi(), DEFAULT_MASK_FRACTION).unwrap_or_else(|e| panic!("{e}"));
        let g = grid();
        let mut min = f64::INFINITY;
        for i in 0..g.nx {
            for j in 0..g.ny {
                let k = g.index(i, j);
                if q.valid[k] {
                    let (x, y) = (g.x(i), g.y(j));
                    assert!((q.field.values[k] - 0.5 * (x * x + y * y)).abs() < 1e-9);
                    min = min.min(q.field.values[k]);
                }
            }
        }
        assert!(min.abs() < 1e-12);
        assert!(q.field.at(50, 50).abs() < 1e-20);
        assert!(q.valid[g.index(50, 50)]);
    }

    #[test]
    fn harmonic_residual_vanishes_and_shifts_with_energy() {
        let h = ActionParams::classical(0.0);
        let r = riccati_residual(&harmonic_psi(), &h, 1.0, DEFAULT_MASK_FRACTION).unwrap_or_else(|e| panic!("{e}"));
        assert!(r.rms().unwrap_or(f64::NAN) < 1e-3);
        let delta = 0.07;
        let s = riccati_residual(&harmonic_psi(), &h, 1.0 + delta, DEFAULT_MASK_FRACTION).unwrap_or_else(|e| panic!("{e}"));
        for k in 0..s.valid.len() {
            if s.valid[k] {
                let shift = s.field.values[k] - r.field.values[k];
                assert!((shift - 2.0 * delta).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn all_masked_is_an_error() {
        let zero = ScalarField2D::zeros(grid());
        assert!(matches!(riccati_quantum_potential(&zero, 1e-6), Err(Error::AllMasked)));
    }

    #[test]
    fn fitted_route_agrees_for_harmonic_action() {
        let q = riccati_quantum_potential(&harmonic_psi(), DEFAULT_MASK_FRACTION).unwrap_or_else(|e| panic!("{e}"));
        let mut p = ActionParams::classical(0.0);
        p.coeffs.v0 = 1.0;
        let f = fitted_quantum_potential(&p, &q);
        let d = relative_rms_difference(&q, &f, &harmonic_psi(), 0.01).unwrap_or(f64::NAN);
        assert!(d < 1e-9, "{d}");
    }
}
