//! Poincaré sections of the real-time flow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActionParams, PhaseState};

use super::integrator::{check_bounds, Yoshida4};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SectionAxis {
    X,
    Y,
}

/// Plane `q = value` crossed with `sign(q̇) = direction`; the other coordinate pair is recorded.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionSpec {
    pub axis: SectionAxis,
    pub value: f64,
    /// `+1` for crossings with increasing coordinate, `-1` for decreasing.
    pub direction: i8,
}

impl Default for SectionSpec {
    fn default() -> Self {
        Self {
            axis: SectionAxis::Y,
            value: 0.0,
            direction: 1,
        }
    }
}

impl SectionSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.value.is_finite() || !(self.direction == 1 || self.direction == -1) {
            return Err(Error::InvalidInput("section needs a finite plane and direction ±1".into()));
        }
        Ok(())
    }

    /// Signed distance to the plane, oriented so that an accepted crossing goes from − to +.
    #[inline]
    fn signed(&self, s: &PhaseState) -> f64 {
        let q = match self.axis {
            SectionAxis::X => s.x,
            SectionAxis::Y => s.y,
        };
        f64::from(self.direction) * (q - self.value)
    }

    /// `(q, p)` of the coordinate not sectioned.
    #[inline]
    fn record(&self, s: &PhaseState) -> SectionPoint {
        match self.axis {
            SectionAxis::Y => SectionPoint { q: s.x, p: s.px, t: s.t },
            SectionAxis::X => SectionPoint { q: s.y, p: s.py, t: s.t },
        }
    }
}

/// One crossing: for the default `y = 0` plane, `q = x` and `p = px`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionPoint {
    pub q: f64,
    pub p: f64,
    pub t: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionResult {
    pub points: Vec<SectionPoint>,
    /// False when the time cap was reached before the requested number of crossings.
    pub complete: bool,
    /// Largest `|H - E|` over the recorded crossings.
    pub max_energy_error: f64,
}

/// Tolerance on the distance to the plane after refinement.
pub const CROSSING_TOL: f64 = 1e-10;

/// Sub-step from `s` (just before the plane) that lands on it, by safeguarded secant iteration.
fn refine(flow: &Yoshida4, spec: &SectionSpec, s: &PhaseState, g0: f64, g1: f64) -> PhaseState {
    let (mut lo, mut hi) = (0.0, flow.dt);
    let (mut glo, mut ghi) = (g0, g1);
    let mut best = *s;
    for _ in 0..60 {
        let mut tau = lo - glo * (hi - lo) / (ghi - glo);
        if !(tau > lo && tau < hi) {
            tau = 0.5 * (lo + hi);
        }
        let mut q = *s;
        flow.step_by(&mut q, tau);
        let g = spec.signed(&q);
        best = q;
        if g.abs() < CROSSING_TOL {
            break;
        }
        if g < 0.0 {
            lo = tau;
            glo = g;
        } else {
            hi = tau;
            ghi = g;
        }
    }
    best
}

/// Up to `n_crossings` section points within `max_time`.
pub fn poincare_section(
    action: &ActionParams,
    s0: PhaseState,
    spec: &SectionSpec,
    n_crossings: usize,
    dt: f64,
    max_time: f64,
) -> Result<SectionResult> {
    spec.validate()?;
    if n_crossings == 0 {
        return Err(Error::InvalidInput("need at least one crossing".into()));
    }
    let flow = Yoshida4::new(action, dt)?;
    let e0 = action.hamiltonian(&s0);
    let mut s = s0;
    let mut g = spec.signed(&s);
    let mut points = Vec::with_capacity(n_crossings);
    let mut max_energy_error = 0.0f64;
    let mut k = 0usize;
    while points.len() < n_crossings && s.t - s0.t < max_time {
        let prev = s;
        flow.step(&mut s);
        k += 1;
        if k % 64 == 0 {
            check_bounds(&s)?;
        }
        let g_new = spec.signed(&s);
        if g < 0.0 && g_new >= 0.0 {
            let hit = if g_new.abs() < CROSSING_TOL { s } else { refine(&flow, spec, &prev, g, g_new) };
            max_energy_error = max_energy_error.max((action.hamiltonian(&hit) - e0).abs());
            points.push(spec.record(&hit));
        }
        g = g_new;
    }
    check_bounds(&s)?;
    let complete = points.len() >= n_crossings;
    if !complete {
        log::warn!("section: {} of {n_crossings} crossings within t = {max_time}", points.len());
    }
    Ok(SectionResult {
        points,
        complete,
        max_energy_error,
    })
}
