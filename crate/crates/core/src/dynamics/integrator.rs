//! Fourth-order symplectic integration of `H = |p|²/2m + V(x, y)`.
//!
//! Yoshida's triple-jump composition of the leapfrog, written as four drifts and three kicks.
//! The tangent map is the exact linearization of the same discrete map.

use crate::error::{Error, Result};
use crate::model::{ActionParams, PhaseState, PotentialCoeffs};

/// Escape guard: trajectories leaving `|x|, |y| <= ESCAPE_BOUND` are treated as unbounded.
pub const ESCAPE_BOUND: f64 = 50.0;

const CBRT2: f64 = 1.259_921_049_894_873_2;
const W1: f64 = 1.0 / (2.0 - CBRT2);
const W0: f64 = -CBRT2 / (2.0 - CBRT2);
const DRIFT: [f64; 4] = [W1 / 2.0, (W0 + W1) / 2.0, (W0 + W1) / 2.0, W1 / 2.0];
const KICK: [f64; 3] = [W1, W0, W1];

/// Tangent vector `(δx, δy, δpx, δpy)`.
pub type Tangent = [f64; 4];

/// Fixed-step integrator bound to one Hamiltonian.
#[derive(Clone, Copy, Debug)]
pub struct Yoshida4 {
    inv_mass: f64,
    coeffs: PotentialCoeffs,
    pub dt: f64,
}

impl Yoshida4 {
    pub fn new(action: &ActionParams, dt: f64) -> Result<Self> {
        action.validate()?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
        }
        Ok(Self {
            inv_mass: 1.0 / action.mass,
            coeffs: action.coeffs,
            dt,
        })
    }

    /// Advance by `tau` (normally `dt`; shorter sub-steps refine section crossings).
    #[inline]
    pub fn step_by(&self, s: &mut PhaseState, tau: f64) {
        for k in 0..3 {
            let c = DRIFT[k] * tau * self.inv_mass;
            s.x += c * s.px;
            s.y += c * s.py;
            let g = self.coeffs.gradient(s.x, s.y);
            let d = KICK[k] * tau;
            s.px -= d * g[0];
            s.py -= d * g[1];
        }
        let c = DRIFT[3] * tau * self.inv_mass;
        s.x += c * s.px;
        s.y += c * s.py;
        s.t += tau;
    }

    #[inline]
    pub fn step(&self, s: &mut PhaseState) {
        self.step_by(s, self.dt);
    }

    /// One step of the state together with its tangent vector.
    #[inline]
    pub fn step_tangent(&self, s: &mut PhaseState, v: &mut Tangent) {
        let tau = self.dt;
        for k in 0..3 {
            let c = DRIFT[k] * tau * self.inv_mass;
            s.x += c * s.px;
            s.y += c * s.py;
            v[0] += c * v[2];
            v[1] += c * v[3];
            let (g, h) = self.coeffs.gradient_hessian(s.x, s.y);
            let d = KICK[k] * tau;
            s.px -= d * g[0];
            s.py -= d * g[1];
            v[2] -= d * (h[0][0] * v[0] + h[0][1] * v[1]);
            v[3] -= d * (h[1][0] * v[0] + h[1][1] * v[1]);
        }
        let c = DRIFT[3] * tau * self.inv_mass;
        s.x += c * s.px;
        s.y += c * s.py;
        v[0] += c * v[2];
        v[1] += c * v[3];
        s.t += tau;
    }
}

#[inline]
pub(crate) fn check_bounds(s: &PhaseState) -> Result<()> {
    if s.x.abs() > ESCAPE_BOUND || s.y.abs() > ESCAPE_BOUND || !s.is_finite() {
        return Err(Error::Escaped {
            bound: ESCAPE_BOUND,
            t: s.t,
        });
    }
    Ok(())
}

/// Number of fixed steps covering `t`; the step is shrunk so that `t = n · dt` exactly.
pub(crate) fn steps_for(t: f64, dt: f64) -> Result<(usize, f64)> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidInput(format!("integration time must be non-negative, got {t}")));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
    }
    let n = (t / dt - 1e-9).ceil().max(0.0) as usize;
    Ok((n, if n == 0 { dt } else { t / n as f64 }))
}

/// Integrate for time `t` and return every `stride`-th state, starting with `s0`.
pub fn integrate(action: &ActionParams, s0: PhaseState, t: f64, dt: f64, stride: usize) -> Result<Vec<PhaseState>> {
    let (n, dt) = steps_for(t, dt)?;
    let flow = Yoshida4::new(action, dt)?;
    let stride = stride.max(1);
    let mut s = s0;
    check_bounds(&s)?;
    let mut out = Vec::with_capacity(n / stride + 2);
    out.push(s);
    for k in 1..=n {
        flow.step(&mut s);
        if k % 64 == 0 || k == n {
            check_bounds(&s)?;
        }
        if k % stride == 0 || k == n {
            out.push(s);
        }
    }
    Ok(out)
}
