//! Polynomial potentials, action parameters and phase-space points.
//!
//! Units throughout: ħ = 1, lengths and times dimensionless.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients of the symmetric quartic-coupled polynomial potential
///
/// ```text
/// V(x, y) = v0 + v11·xy + v2·(x² + y²) + v22·x²y² + v13·(xy³ + x³y)
///         + v4·(x⁴ + y⁴) + v24·(x²y⁴ + x⁴y²) + v44·x⁴y⁴
/// ```
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PotentialCoeffs {
    #[serde(default)]
    pub v0: f64,
    #[serde(default)]
    pub v11: f64,
    #[serde(default)]
    pub v2: f64,
    #[serde(default)]
    pub v22: f64,
    #[serde(default)]
    pub v13: f64,
    #[serde(default)]
    pub v4: f64,
    #[serde(default)]
    pub v24: f64,
    #[serde(default)]
    pub v44: f64,
}

/// Names of the coefficients in storage order.
pub const COEFF_NAMES: [&str; 8] = ["v0", "v11", "v2", "v22", "v13", "v4", "v24", "v44"];

impl PotentialCoeffs {
    /// The Pullen–Edmonds potential `v2·(x² + y²) + v22·x²y²`.
    pub fn pullen_edmonds(v2: f64, v22: f64) -> Self {
        Self {
            v2,
            v22,
            ..Self::default()
        }
    }

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.v0, self.v11, self.v2, self.v22, self.v13, self.v4, self.v24, self.v44,
        ]
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        Self {
            v0: a[0],
            v11: a[1],
            v2: a[2],
            v22: a[3],
            v13: a[4],
            v4: a[5],
            v24: a[6],
            v44: a[7],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in COEFF_NAMES.iter().zip(self.to_array()) {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "potential coefficient {name} is not finite"
                )));
            }
        }
        Ok(())
    }

    /// True for the classical Pullen–Edmonds shape: only `v2 > 0` and `v22 >= 0` set.
    pub fn is_pullen_edmonds(&self) -> bool {
        self.v2 > 0.0
            && self.v22 >= 0.0
            && [self.v0, self.v11, self.v13, self.v4, self.v24, self.v44]
                .iter()
                .all(|&c| c == 0.0)
    }

    #[inline]
    pub fn value(&self, x: f64, y: f64) -> f64 {
        let (x2, y2) = (x * x, y * y);
        let xy = x * y;
        let x2y2 = x2 * y2;
        self.v0
            + self.v11 * xy
            + self.v2 * (x2 + y2)
            + self.v22 * x2y2
            + self.v13 * xy * (x2 + y2)
            + self.v4 * (x2 * x2 + y2 * y2)
            + self.v24 * x2y2 * (x2 + y2)
            + self.v44 * x2y2 * x2y2
    }

    /// Analytic gradient `(∂V/∂x, ∂V/∂y)`.
    #[inline]
    pub fn gradient(&self, x: f64, y: f64) -> [f64; 2] {
        [self.dv_dx(x, y), self.dv_dx(y, x)]
    }

    // The ansatz is symmetric under x <-> y, so ∂V/∂y(x, y) = ∂V/∂x(y, x).
    #[inline]
    fn dv_dx(&self, x: f64, y: f64) -> f64 {
        let (x2, y2) = (x * x, y * y);
        self.v11 * y
            + 2.0 * self.v2 * x
            + 2.0 * self.v22 * x * y2
            + self.v13 * (y2 * y + 3.0 * x2 * y)
            + 4.0 * self.v4 * x2 * x
            + self.v24 * (2.0 * x * y2 * y2 + 4.0 * x2 * x * y2)
            + 4.0 * self.v44 * x2 * x * y2 * y2
    }

    #[inline]
    fn d2v_dx2(&self, x: f64, y: f64) -> f64 {
        let (x2, y2) = (x * x, y * y);
        2.0 * self.v2
            + 2.0 * self.v22 * y2
            + 6.0 * self.v13 * x * y
            + 12.0 * self.v4 * x2
            + self.v24 * (2.0 * y2 * y2 + 12.0 * x2 * y2)
            + 12.0 * self.v44 * x2 * y2 * y2
    }

    #[inline]
    fn d2v_dxdy(&self, x: f64, y: f64) -> f64 {
        let (x2, y2) = (x * x, y * y);
        self.v11
            + 4.0 * self.v22 * x * y
            + 3.0 * self.v13 * (y2 + x2)
            + self.v24 * (8.0 * x * y2 * y + 8.0 * x2 * x * y)
            + 16.0 * self.v44 * x2 * x * y2 * y
    }

    /// Gradient and Hessian together, sharing the monomials.
    #[inline]
    pub fn gradient_hessian(&self, x: f64, y: f64) -> ([f64; 2], [[f64; 2]; 2]) {
        let (x2, y2) = (x * x, y * y);
        let (x3, y3) = (x2 * x, y2 * y);
        let (x4, y4) = (x2 * x2, y2 * y2);
        let xy = x * y;
        let gx = self.v11 * y
            + 2.0 * self.v2 * x
            + 2.0 * self.v22 * x * y2
            + self.v13 * (y3 + 3.0 * x2 * y)
            + 4.0 * self.v4 * x3
            + self.v24 * (2.0 * x * y4 + 4.0 * x3 * y2)
            + 4.0 * self.v44 * x3 * y4;
        let gy = self.v11 * x
            + 2.0 * self.v2 * y
            + 2.0 * self.v22 * y * x2
            + self.v13 * (x3 + 3.0 * y2 * x)
            + 4.0 * self.v4 * y3
            + self.v24 * (2.0 * y * x4 + 4.0 * y3 * x2)
            + 4.0 * self.v44 * y3 * x4;
        let hxx = 2.0 * self.v2
            + 2.0 * self.v22 * y2
            + 6.0 * self.v13 * xy
            + 12.0 * self.v4 * x2
            + self.v24 * (2.0 * y4 + 12.0 * x2 * y2)
            + 12.0 * self.v44 * x2 * y4;
        let hyy = 2.0 * self.v2
            + 2.0 * self.v22 * x2
            + 6.0 * self.v13 * xy
            + 12.0 * self.v4 * y2
            + self.v24 * (2.0 * x4 + 12.0 * x2 * y2)
            + 12.0 * self.v44 * y2 * x4;
        let hxy = self.v11
            + 4.0 * self.v22 * xy
            + 3.0 * self.v13 * (x2 + y2)
            + 8.0 * self.v24 * xy * (x2 + y2)
            + 16.0 * self.v44 * x3 * y3;
        ([gx, gy], [[hxx, hxy], [hxy, hyy]])
    }

    /// Analytic Hessian `[[V_xx, V_xy], [V_xy, V_yy]]`.
    #[inline]
    pub fn hessian(&self, x: f64, y: f64) -> [[f64; 2]; 2] {
        let xy = self.d2v_dxdy(x, y);
        [[self.d2v_dx2(x, y), xy], [xy, self.d2v_dx2(y, x)]]
    }
}

/// Mass, log-normalization and potential of one Euclidean or real-time action.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionParams {
    pub mass: f64,
    #[serde(default)]
    pub log_norm: f64,
    #[serde(flatten)]
    pub coeffs: PotentialCoeffs,
}

impl ActionParams {
    pub fn new(mass: f64, log_norm: f64, coeffs: PotentialCoeffs) -> Self {
        Self {
            mass,
            log_norm,
            coeffs,
        }
    }

    /// Classical Pullen–Edmonds action with unit mass and `v2 = 0.5`.
    pub fn classical(v22: f64) -> Self {
        Self::new(1.0, 0.0, PotentialCoeffs::pullen_edmonds(0.5, v22))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::InvalidInput(format!(
                "mass must be positive and finite, got {}",
                self.mass
            )));
        }
        if !self.log_norm.is_finite() {
            return Err(Error::InvalidInput("log_norm is not finite".into()));
        }
        self.coeffs.validate()
    }

    #[inline]
    pub fn potential(&self, x: f64, y: f64) -> f64 {
        self.coeffs.value(x, y)
    }

    /// Real-time Hamiltonian `(px² + py²)/2m + V`.
    #[inline]
    pub fn hamiltonian(&self, s: &PhaseState) -> f64 {
        (s.px * s.px + s.py * s.py) / (2.0 * self.mass) + self.coeffs.value(s.x, s.y)
    }
}

/// A point of 2-D phase space with its time stamp.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub x: f64,
    pub y: f64,
    pub px: f64,
    pub py: f64,
    pub t: f64,
}

impl PhaseState {
    pub fn new(x: f64, y: f64, px: f64, py: f64) -> Self {
        Self {
            x,
            y,
            px,
            py,
            t: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.px.is_finite()
            && self.py.is_finite()
            && self.t.is_finite()
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.y, self.px, self.py]
    }
}
