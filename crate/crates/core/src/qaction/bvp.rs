//! Stationary paths of the discretized Euclidean action.
//!
//! The path is sampled at `n` uniform nodes with pinned endpoints. The discrete action
//!
//! ```text
//! S = Σ_k m |x_{k+1} - x_k|² / 2h + h Σ_k w_k V(x_k)      (trapezoid weights w_k)
//! ```
//!
//! is minimized by damped Newton steps; the Hessian is block tridiagonal with 2×2 blocks.
//! Its stationarity condition is the discrete equation of motion `m ẍ = +∇V`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ActionParams;

type Vec2 = [f64; 2];
type Mat2 = [[f64; 2]; 2];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

/// A stationary path of the Euclidean action between two pinned endpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EuclideanTrajectory {
    pub a: Vec2,
    pub b: Vec2,
    pub t: f64,
    pub samples: Vec<TrajectorySample>,
    /// Discrete action along the path.
    pub action_value: f64,
    /// Largest equation-of-motion residual `|m ẍ - ∇V|` over interior nodes.
    pub residual: f64,
    pub iterations: usize,
    /// Action of a distinct stationary path found from a perturbed start, if probing was enabled.
    pub alternate_action: Option<f64>,
}

impl EuclideanTrajectory {
    fn step(&self) -> f64 {
        self.t / (self.samples.len() - 1) as f64
    }

    fn node(&self, k: usize) -> Vec2 {
        [self.samples[k].x, self.samples[k].y]
    }

    /// `∂S/∂b`, the discrete momentum `m ẋ(T)` at the final endpoint.
    pub fn end_momentum(&self, params: &ActionParams) -> Vec2 {
        let h = self.step();
        let n = self.samples.len();
        let (last, prev) = (self.node(n - 1), self.node(n - 2));
        let g = params.coeffs.gradient(last[0], last[1]);
        [
            params.mass * (last[0] - prev[0]) / h + 0.5 * h * g[0],
            params.mass * (last[1] - prev[1]) / h + 0.5 * h * g[1],
        ]
    }

    /// `-∂S/∂a`, the discrete momentum `m ẋ(0)` at the initial endpoint.
    pub fn start_momentum(&self, params: &ActionParams) -> Vec2 {
        let h = self.step();
        let (first, next) = (self.node(0), self.node(1));
        let g = params.coeffs.gradient(first[0], first[1]);
        [
            params.mass * (next[0] - first[0]) / h - 0.5 * h * g[0],
            params.mass * (next[1] - first[1]) / h - 0.5 * h * g[1],
        ]
    }

    /// Euclidean energy `-½ m ẋ² + V` on each interval, from midpoint velocities.
    pub fn interval_energies(&self, params: &ActionParams) -> Vec<f64> {
        let h = self.step();
        self.samples
            .windows(2)
            .map(|w| {
                let (vx, vy) = ((w[1].x - w[0].x) / h, (w[1].y - w[0].y) / h);
                let v = 0.5 * (params.potential(w[0].x, w[0].y) + params.potential(w[1].x, w[1].y));
                -0.5 * params.mass * (vx * vx + vy * vy) + v
            })
            .collect()
    }
}

/// Newton relaxation settings for the Euclidean boundary-value problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BvpSolver {
    pub n_nodes: usize,
    /// Convergence threshold on the equation-of-motion residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Re-solve from a perturbed start and report a second stationary path if one exists.
    pub probe_alternatives: bool,
}

impl Default for BvpSolver {
    fn default() -> Self {
        Self {
            n_nodes: 129,
            tol: 1e-11,
            max_iter: 100,
            probe_alternatives: false,
        }
    }
}

#[inline]
fn inv2(m: &Mat2) -> Option<Mat2> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if !(det > 0.0 && m[0][0] > 0.0) {
        return None;
    }
    Some([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]])
}

#[inline]
fn mul2(m: &Mat2, v: &Vec2) -> Vec2 {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

/// Solve the symmetric block-tridiagonal system with diagonal blocks `diag`, off-diagonal
/// blocks `-c·I`. Returns `None` if the matrix is not positive definite.
fn solve_block_tridiagonal(diag: &[Mat2], c: f64, rhs: &[Vec2]) -> Option<Vec<Vec2>> {
    let n = diag.len();
    let mut inv = Vec::with_capacity(n);
    let mut e = Vec::with_capacity(n);
    let mut ci = inv2(&diag[0])?;
    inv.push(ci);
    e.push(rhs[0]);
    for k in 1..n {
        let prev = &inv[k - 1];
        let mut ck = diag[k];
        for r in 0..2 {
            for s in 0..2 {
                ck[r][s] -= c * c * prev[r][s];
            }
        }
        ci = inv2(&ck)?;
        let pe = mul2(prev, &e[k - 1]);
        e.push([rhs[k][0] + c * pe[0], rhs[k][1] + c * pe[1]]);
        inv.push(ci);
    }
    let mut x = vec![[0.0; 2]; n];
    x[n - 1] = mul2(&inv[n - 1], &e[n - 1]);
    for k in (0..n - 1).rev() {
        let r = [e[k][0] + c * x[k + 1][0], e[k][1] + c * x[k + 1][1]];
        x[k] = mul2(&inv[k], &r);
    }
    Some(x)
}

struct Discretization<'a> {
    params: &'a ActionParams,
    h: f64,
}

impl Discretization<'_> {
    fn action(&self, path: &[Vec2]) -> f64 {
        let (m, h) = (self.params.mass, self.h);
        let n = path.len();
        let mut kin = 0.0;
        for w in path.windows(2) {
            let (dx, dy) = (w[1][0] - w[0][0], w[1][1] - w[0][1]);
            kin += dx * dx + dy * dy;
        }
        let mut pot = 0.5 * (self.params.potential(path[0][0], path[0][1])
            + self.params.potential(path[n - 1][0], path[n - 1][1]));
        for p in &path[1..n - 1] {
            pot += self.params.potential(p[0], p[1]);
        }
        0.5 * m * kin / h + h * pot
    }

    /// Gradient of the action with respect to interior nodes.
    fn gradient(&self, path: &[Vec2]) -> Vec<Vec2> {
        let (m, h) = (self.params.mass, self.h);
        path.windows(3)
            .map(|w| {
                let g = self.params.coeffs.gradient(w[1][0], w[1][1]);
                [
                    m * (2.0 * w[1][0] - w[0][0] - w[2][0]) / h + h * g[0],
                    m * (2.0 * w[1][1] - w[0][1] - w[2][1]) / h + h * g[1],
                ]
            })
            .collect()
    }

    fn hessian_diagonal(&self, path: &[Vec2], shift: f64) -> Vec<Mat2> {
        let (m, h) = (self.params.mass, self.h);
        path[1..path.len() - 1]
            .iter()
            .map(|p| {
                let hv = self.params.coeffs.hessian(p[0], p[1]);
                [
                    [2.0 * m / h + h * hv[0][0] + shift, h * hv[0][1]],
                    [h * hv[1][0], 2.0 * m / h + h * hv[1][1] + shift],
                ]
            })
            .collect()
    }

    /// Equation-of-motion residual: gradient divided by the node weight `h`.
    fn residual(&self, grad: &[Vec2]) -> f64 {
        grad.iter().fold(0.0f64, |r, g| r.max(g[0].abs()).max(g[1].abs())) / self.h
    }
}

impl BvpSolver {
    fn check(&self, params: &ActionParams, t: f64) -> Result<()> {
        params.validate()?;
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::InvalidInput(format!("transition time must be positive, got {t}")));
        }
        if self.n_nodes < 16 {
            return Err(Error::InvalidInput(format!(
                "need at least 16 time nodes, got {}",
                self.n_nodes
            )));
        }
        Ok(())
    }

    fn relax(&self, disc: &Discretization, mut path: Vec<Vec2>) -> Result<(Vec<Vec2>, f64, usize)> {
        let c = disc.params.mass / disc.h;
        let extent = path.iter().fold(1.0f64, |m, p| m.max(p[0].abs()).max(p[1].abs()));
        // Rounding in the second difference alone gives a residual of order eps·m·|x|/h².
        let floor = 64.0 * f64::EPSILON * c * extent / disc.h;
        let tol = self.tol.max(floor);
        let max_move = extent;
        let mut grad = disc.gradient(&path);
        let mut residual = disc.residual(&grad);
        let mut s = disc.action(&path);
        for iter in 0..self.max_iter {
            if residual < tol {
                return Ok((path, residual, iter));
            }
            let rhs: Vec<Vec2> = grad.iter().map(|g| [-g[0], -g[1]]).collect();
            let mut shift = 0.0;
            let step = loop {
                if let Some(step) = solve_block_tridiagonal(&disc.hessian_diagonal(&path, shift), c, &rhs) {
                    break step;
                }
                shift = if shift == 0.0 { 1e-3 * c } else { 10.0 * shift };
                if shift > 1e12 * c {
                    return Err(Error::NoConvergence {
                        iterations: iter,
                        residual,
                    });
                }
            };
            let longest = step.iter().fold(0.0f64, |m, d| m.max(d[0].abs()).max(d[1].abs()));
            if longest < 1e-14 * extent {
                // Newton has stalled at rounding level.
                return Ok((path, residual, iter));
            }
            let slope: f64 = step.iter().zip(&grad).map(|(d, g)| d[0] * g[0] + d[1] * g[1]).sum();
            let mut alpha = (max_move / longest).min(1.0);
            let mut accepted = false;
            for _ in 0..40 {
                let mut trial = path.clone();
                for (p, d) in trial[1..].iter_mut().zip(&step) {
                    p[0] += alpha * d[0];
                    p[1] += alpha * d[1];
                }
                if trial.iter().any(|p| p[0].abs().max(p[1].abs()) > 10.0 * extent) {
                    alpha *= 0.5;
                    continue;
                }
                let st = disc.action(&trial);
                let trial_grad = disc.gradient(&trial);
                let trial_res = disc.residual(&trial_grad);
                // Near convergence the action is flat to rounding; accept residual decrease instead.
                if st.is_finite() && (st <= s + 1e-4 * alpha * slope || trial_res < residual) {
                    path = trial;
                    s = st;
                    grad = trial_grad;
                    residual = trial_res;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                return Err(Error::NoConvergence {
                    iterations: iter,
                    residual,
                });
            }
        }
        if residual < tol {
            Ok((path, residual, self.max_iter))
        } else {
            Err(Error::NoConvergence {
                iterations: self.max_iter,
                residual,
            })
        }
    }

    pub fn solve(&self, params: &ActionParams, a: Vec2, b: Vec2, t: f64) -> Result<EuclideanTrajectory> {
        self.check(params, t)?;
        let n = self.n_nodes;
        let disc = Discretization {
            params,
            h: t / (n - 1) as f64,
        };
        // Start from the stationary path of the quadratic part of the potential.
        let omega = (2.0 * params.coeffs.v2.max(0.0) / params.mass).sqrt();
        let weights = |s: f64| -> (f64, f64) {
            let wt = omega * t;
            if wt < 1e-6 {
                (1.0 - s, s)
            } else {
                // sinh(ω(T-τ))/sinh(ωT) and sinh(ωτ)/sinh(ωT), written to avoid overflow.
                let den = -(-2.0 * wt).exp_m1();
                let f = |u: f64| (-(wt - u)).exp() * -(-2.0 * u).exp_m1() / den;
                (f(wt * (1.0 - s)), f(wt * s))
            }
        };
        let line = |bump: f64| -> Vec<Vec2> {
            (0..n)
                .map(|k| {
                    let s = k as f64 / (n - 1) as f64;
                    let (wa, wb) = weights(s);
                    let hump = bump * (std::f64::consts::PI * s).sin();
                    [wa * a[0] + wb * b[0] + hump, wa * a[1] + wb * b[1] - hump]
                })
                .collect()
        };
        let line = |bump: f64| {
            let mut path = line(bump);
            path[0] = a;
            path[n - 1] = b;
            path
        };
        let (path, residual, iterations) = self.relax(&disc, line(0.0))?;
        let action_value = disc.action(&path);
        let mut alternate_action = None;
        if self.probe_alternatives {
            for bump in [-1.0, 1.0] {
                if let Ok((alt, _, _)) = self.relax(&disc, line(bump)) {
                    let dist = alt
                        .iter()
                        .zip(&path)
                        .fold(0.0f64, |d, (p, q)| d.max((p[0] - q[0]).abs()).max((p[1] - q[1]).abs()));
                    if dist > 1e-6 {
                        let s_alt = disc.action(&alt);
                        log::warn!(
                            "second stationary path between {a:?} and {b:?}: action {s_alt} vs {action_value}"
                        );
                        alternate_action = Some(s_alt);
                        break;
                    }
                }
            }
        }
        let samples = path
            .iter()
            .enumerate()
            .map(|(k, p)| TrajectorySample {
                t: k as f64 * disc.h,
                x: p[0],
                y: p[1],
            })
            .collect();
        Ok(EuclideanTrajectory {
            a,
            b,
            t,
            samples,
            action_value,
            residual,
            iterations,
            alternate_action,
        })
    }

    /// Action and endpoint momenta extrapolated from `n` and `2n - 1` nodes (error `O(h⁴)`).
    pub fn solve_extrapolated(&self, params: &ActionParams, a: Vec2, b: Vec2, t: f64) -> Result<ExtrapolatedPath> {
        let coarse = self.solve(params, a, b, t)?;
        let fine = BvpSolver {
            n_nodes: 2 * self.n_nodes - 1,
            probe_alternatives: false,
            ..*self
        }
        .solve(params, a, b, t)?;
        let rich = |f: f64, c: f64| (4.0 * f - c) / 3.0;
        let (pf, pc) = (fine.end_momentum(params), coarse.end_momentum(params));
        let (qf, qc) = (fine.start_momentum(params), coarse.start_momentum(params));
        Ok(ExtrapolatedPath {
            action: rich(fine.action_value, coarse.action_value),
            end_momentum: [rich(pf[0], pc[0]), rich(pf[1], pc[1])],
            start_momentum: [rich(qf[0], qc[0]), rich(qf[1], qc[1])],
        })
    }
}

/// Richardson-extrapolated action and endpoint momenta of one boundary-value problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtrapolatedPath {
    pub action: f64,
    pub end_momentum: Vec2,
    pub start_momentum: Vec2,
}

/// Stationary Euclidean path from `a` at time 0 to `b` at time `t` on `n_nodes` nodes.
pub fn solve_euclidean_bvp(
    params: &ActionParams,
    a: Vec2,
    b: Vec2,
    t: f64,
    n_nodes: usize,
) -> Result<EuclideanTrajectory> {
    BvpSolver {
        n_nodes,
        ..BvpSolver::default()
    }
    .solve(params, a, b, t)
}
