//! Imaginary-time Schrödinger evolution on a 2-D grid.
//!
//! The propagator `exp(-H dt)` with `H = -∇²/2m + V` is split as
//! `exp(-V dt/2) exp(-K dt) exp(-V dt/2)`. The kinetic factor is applied
//! exactly in the sine basis, which carries the homogeneous Dirichlet
//! condition at the grid edges.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid2D, ScalarField2D};
use crate::model::ActionParams;

/// Amplitudes at or below this value are flagged as underflowed.
pub const AMPLITUDE_FLOOR: f64 = 1e-280;

/// Values this far below zero (relative to the maximum) count as a sign change.
const NEGATIVITY_FLOOR: f64 = 1e-8;

/// Unnormalized type-I discrete sine transform, applied to contiguous rows.
///
/// `X_k = Σ_{n=1..N} x_n sin(π k n / (N + 1))`; applying it twice multiplies by `(N + 1)/2`.
#[derive(Clone)]
pub struct SineTransform {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl SineTransform {
    pub fn new(n: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(2 * (n + 1));
        Self { n, fft }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Transform every length-`n` row of `data` in place.
    pub fn apply_rows(&self, data: &mut [f64], buf: &mut Vec<Complex<f64>>, scratch: &mut Vec<Complex<f64>>) {
        let n = self.n;
        let m = 2 * (n + 1);
        let rows = data.len() / n;
        buf.clear();
        buf.resize(rows * m, Complex::default());
        for (row, chunk) in data.chunks_exact(n).zip(buf.chunks_exact_mut(m)) {
            for (k, &v) in row.iter().enumerate() {
                chunk[k + 1] = Complex::new(v, 0.0);
                chunk[m - 1 - k] = Complex::new(-v, 0.0);
            }
        }
        scratch.resize(self.fft.get_inplace_scratch_len(), Complex::default());
        self.fft.process_with_scratch(buf, scratch);
        for (row, chunk) in data.chunks_exact_mut(n).zip(buf.chunks_exact(m)) {
            for (k, v) in row.iter_mut().enumerate() {
                *v = -0.5 * chunk[k + 1].im;
            }
        }
    }
}

fn transpose(src: &[f64], dst: &mut [f64], rows: usize, cols: usize) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

#[derive(Default)]
struct Workspace {
    transposed: Vec<f64>,
    buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

/// Sine-basis representation of the interior of a grid: `ni × nj` unknowns.
#[derive(Clone)]
struct SineBasis {
    ni: usize,
    nj: usize,
    dst_x: SineTransform,
    dst_y: SineTransform,
    /// `k²` per x-mode and y-mode.
    kx2: Vec<f64>,
    ky2: Vec<f64>,
}

impl SineBasis {
    fn new(grid: &Grid2D) -> Self {
        let (ni, nj) = (grid.nx - 2, grid.ny - 2);
        let lx = grid.x_max - grid.x_min;
        let ly = grid.y_max - grid.y_min;
        let kx2 = (1..=ni)
            .map(|k| (std::f64::consts::PI * k as f64 / lx).powi(2))
            .collect();
        let ky2 = (1..=nj)
            .map(|k| (std::f64::consts::PI * k as f64 / ly).powi(2))
            .collect();
        Self {
            ni,
            nj,
            dst_x: SineTransform::new(ni),
            dst_y: SineTransform::new(nj),
            kx2,
            ky2,
        }
    }

    /// Forward transform in place; output is laid out y-mode-major (`jj * ni + ii`).
    fn forward(&self, interior: &mut [f64], ws: &mut Workspace) {
        self.dst_y.apply_rows(interior, &mut ws.buf, &mut ws.scratch);
        ws.transposed.resize(interior.len(), 0.0);
        transpose(interior, &mut ws.transposed, self.ni, self.nj);
        self.dst_x.apply_rows(&mut ws.transposed, &mut ws.buf, &mut ws.scratch);
        interior.copy_from_slice(&ws.transposed);
    }

    /// Inverse of [`Self::forward`] up to the factor `(ni + 1)(nj + 1)/4`.
    fn backward(&self, spectrum: &mut [f64], ws: &mut Workspace) {
        self.dst_x.apply_rows(spectrum, &mut ws.buf, &mut ws.scratch);
        ws.transposed.resize(spectrum.len(), 0.0);
        transpose(spectrum, &mut ws.transposed, self.nj, self.ni);
        self.dst_y.apply_rows(&mut ws.transposed, &mut ws.buf, &mut ws.scratch);
        spectrum.copy_from_slice(&ws.transposed);
    }

    fn inverse_scale(&self) -> f64 {
        4.0 / ((self.ni + 1) as f64 * (self.nj + 1) as f64)
    }
}

fn interior_of(field: &ScalarField2D) -> Vec<f64> {
    let g = &field.grid;
    let mut out = Vec::with_capacity((g.nx - 2) * (g.ny - 2));
    for i in 1..g.nx - 1 {
        out.extend_from_slice(&field.values[g.index(i, 1)..g.index(i, g.ny - 1)]);
    }
    out
}

fn field_from_interior(grid: Grid2D, interior: &[f64]) -> ScalarField2D {
    let mut field = ScalarField2D::zeros(grid);
    let nj = grid.ny - 2;
    for (ii, row) in interior.chunks_exact(nj).enumerate() {
        let start = grid.index(ii + 1, 1);
        field.values[start..start + nj].copy_from_slice(row);
    }
    field
}

/// Strang-split imaginary-time propagator for one action, grid and step size.
///
/// Immutable once built; share it across threads to evolve many initial states.
#[derive(Clone)]
pub struct SplitOperator {
    grid: Grid2D,
    dt: f64,
    basis: SineBasis,
    /// `exp(-K dt)` with the inverse-transform normalization folded in, y-mode-major.
    kinetic: Vec<f64>,
    pot_half: Vec<f64>,
    pot_full: Vec<f64>,
}

impl SplitOperator {
    pub fn new(action: &ActionParams, grid: Grid2D, dt: f64) -> Result<Self> {
        action.validate()?;
        grid.validate()?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
        }
        let basis = SineBasis::new(&grid);
        let scale = basis.inverse_scale();
        let mut kinetic = Vec::with_capacity(basis.ni * basis.nj);
        for &ky2 in &basis.ky2 {
            for &kx2 in &basis.kx2 {
                kinetic.push(scale * (-(kx2 + ky2) * dt / (2.0 * action.mass)).exp());
            }
        }
        let mut pot_half = Vec::with_capacity(basis.ni * basis.nj);
        for i in 1..grid.nx - 1 {
            for j in 1..grid.ny - 1 {
                pot_half.push((-0.5 * dt * action.potential(grid.x(i), grid.y(j))).exp());
            }
        }
        let pot_full = pot_half.iter().map(|p| p * p).collect();
        Ok(Self {
            grid,
            dt,
            basis,
            kinetic,
            pot_half,
            pot_full,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    fn kinetic_step(&self, psi: &mut [f64], ws: &mut Workspace) {
        self.basis.forward(psi, ws);
        psi.iter_mut().zip(&self.kinetic).for_each(|(v, k)| *v *= k);
        self.basis.backward(psi, ws);
    }

    fn evolve_interior(&self, psi: &mut [f64], steps: usize, ws: &mut Workspace) {
        if steps == 0 {
            return;
        }
        psi.iter_mut().zip(&self.pot_half).for_each(|(v, p)| *v *= p);
        for step in 0..steps {
            self.kinetic_step(psi, ws);
            let factors = if step + 1 == steps { &self.pot_half } else { &self.pot_full };
            psi.iter_mut().zip(factors).for_each(|(v, p)| *v *= p);
        }
    }

    /// Apply `steps` Strang steps to `field`. Boundary nodes are zero on output.
    pub fn evolve(&self, field: &ScalarField2D, steps: usize) -> Result<ScalarField2D> {
        if field.grid != self.grid {
            return Err(Error::InvalidInput("field grid differs from propagator grid".into()));
        }
        if !field.is_finite() {
            return Err(Error::InvalidInput("initial field is not finite".into()));
        }
        let mut psi = interior_of(field);
        self.evolve_interior(&mut psi, steps, &mut Workspace::default());
        check_range(&psi)?;
        Ok(field_from_interior(self.grid, &psi))
    }
}

fn check_range(values: &[f64]) -> Result<()> {
    let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !max.is_finite() || max > 1e300 {
        return Err(Error::OutOfRange(format!("max |value| = {max:e}")));
    }
    if max < 1e-300 {
        return Err(Error::OutOfRange(format!("field underflowed, max |value| = {max:e}")));
    }
    Ok(())
}

fn step_count(t: f64, dt: f64) -> Result<usize> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
    }
    if !(t.is_finite() && t >= dt * (1.0 - 1e-9)) {
        return Err(Error::InvalidInput(format!(
            "evolution time {t} must be at least the time step {dt}"
        )));
    }
    Ok((t / dt - 1e-9).ceil().max(1.0) as usize)
}

/// `exp(-H t)` applied to `field` with step `dt` (shrunk so a whole number of steps spans `t`).
///
/// No normalization is applied.
pub fn evolve_imaginary(field: &ScalarField2D, action: &ActionParams, t: f64, dt: f64) -> Result<ScalarField2D> {
    let steps = step_count(t, dt)?;
    let op = SplitOperator::new(action, field.grid, t / steps as f64)?;
    op.evolve(field, steps)
}

/// Rayleigh quotient `<ψ|H|ψ> / <ψ|ψ>` with the kinetic term evaluated exactly in the sine basis.
pub fn rayleigh_energy(field: &ScalarField2D, action: &ActionParams) -> f64 {
    let grid = field.grid;
    let basis = SineBasis::new(&grid);
    let mut psi = interior_of(field);
    let potential: f64 = {
        let mut acc = 0.0;
        let mut k = 0;
        for i in 1..grid.nx - 1 {
            for j in 1..grid.ny - 1 {
                acc += action.potential(grid.x(i), grid.y(j)) * psi[k] * psi[k];
                k += 1;
            }
        }
        acc
    };
    let norm: f64 = psi.iter().map(|v| v * v).sum();
    basis.forward(&mut psi, &mut Workspace::default());
    let parseval = basis.inverse_scale();
    let mut kinetic = 0.0;
    for (jj, &ky2) in basis.ky2.iter().enumerate() {
        for (ii, &kx2) in basis.kx2.iter().enumerate() {
            let c = psi[jj * basis.ni + ii];
            kinetic += (kx2 + ky2) / (2.0 * action.mass) * c * c;
        }
    }
    (parseval * kinetic + potential) / norm
}

/// Normalized ground state and its energy.
#[derive(Clone, Debug)]
pub struct GroundState {
    pub psi: ScalarField2D,
    pub energy: f64,
    /// Imaginary time evolved until convergence.
    pub time: f64,
}

/// Imaginary-time relaxation to the ground state.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GroundStateSolver {
    pub dt: f64,
    /// Stop once successive energy estimates differ by less than this.
    pub tol: f64,
    /// Steps between renormalization and energy checks.
    pub check_every: usize,
    pub max_time: f64,
}

impl Default for GroundStateSolver {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            tol: 1e-10,
            check_every: 200,
            max_time: 200.0,
        }
    }
}

impl GroundStateSolver {
    pub fn solve(&self, action: &ActionParams, grid: Grid2D) -> Result<GroundState> {
        if !(self.tol > 0.0) || self.check_every == 0 {
            return Err(Error::InvalidInput("tolerance and check interval must be positive".into()));
        }
        let op = SplitOperator::new(action, grid, self.dt)?;
        // Gaussian of the harmonic part as starting guess.
        let omega = (2.0 * action.coeffs.v2.max(0.05) / action.mass).sqrt();
        let width = action.mass * omega;
        let guess = ScalarField2D::from_fn(grid, |x, y| (-0.5 * width * (x * x + y * y)).exp());
        let mut psi = interior_of(&guess);
        let mut ws = Workspace::default();
        let cell = grid.dx() * grid.dy();
        let normalize = |psi: &mut Vec<f64>| -> Result<()> {
            let n = (psi.iter().map(|v| v * v).sum::<f64>() * cell).sqrt();
            if !(n.is_finite() && n > 0.0) {
                return Err(Error::OutOfRange(format!("norm {n:e}")));
            }
            psi.iter_mut().for_each(|v| *v /= n);
            Ok(())
        };
        normalize(&mut psi)?;
        let max_blocks = (self.max_time / (self.dt * self.check_every as f64)).ceil() as usize;
        let mut previous = f64::INFINITY;
        for block in 1..=max_blocks {
            op.evolve_interior(&mut psi, self.check_every, &mut ws);
            normalize(&mut psi)?;
            let field = field_from_interior(grid, &psi);
            let energy = rayleigh_energy(&field, action);
            let (lo, hi) = (field.min(), field.max());
            if lo < -NEGATIVITY_FLOOR * hi {
                return Err(Error::SignChange);
            }
            if (energy - previous).abs() < self.tol {
                let mut psi = field;
                psi.values.iter_mut().for_each(|v| *v = v.max(0.0));
                let n = psi.l2_norm();
                psi.scale(1.0 / n);
                log::debug!("ground state converged: E = {energy:.12}, blocks = {block}");
                return Ok(GroundState {
                    psi,
                    energy,
                    time: block as f64 * self.check_every as f64 * self.dt,
                });
            }
            previous = energy;
        }
        Err(Error::NoConvergence {
            iterations: max_blocks,
            residual: f64::NAN,
        })
    }
}

/// Ground state with the default step size and check interval.
pub fn ground_state(action: &ActionParams, grid: Grid2D, tol: f64) -> Result<GroundState> {
    GroundStateSolver {
        tol,
        ..GroundStateSolver::default()
    }
    .solve(action, grid)
}

/// One Euclidean transition amplitude `G(x_fi, T; x_in, 0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub x_in: [f64; 2],
    pub x_fi: [f64; 2],
    pub t: f64,
    pub amplitude: f64,
    /// Set when the amplitude is at or below [`AMPLITUDE_FLOOR`].
    #[serde(default)]
    pub underflow: bool,
}

/// Kernel samples from every source to every target; sources and targets snap to nodes.
///
/// Each source is a discrete delta of weight `1/(dx·dy)` evolved for time `t`.
pub fn transition_amplitudes_between(
    action: &ActionParams,
    grid: Grid2D,
    sources: &[[f64; 2]],
    targets: &[[f64; 2]],
    t: f64,
    dt: f64,
) -> Result<Vec<TransitionRecord>> {
    let steps = step_count(t, dt)?;
    let snap = |p: &[f64; 2]| -> Result<(usize, usize)> { grid.nearest_interior_node(p[0], p[1]) };
    let src_nodes = sources.iter().map(snap).collect::<Result<Vec<_>>>()?;
    let dst_nodes = targets.iter().map(snap).collect::<Result<Vec<_>>>()?;
    let op = SplitOperator::new(action, grid, t / steps as f64)?;
    let weight = 1.0 / (grid.dx() * grid.dy());
    let nj = grid.ny - 2;
    let per_source = src_nodes
        .par_iter()
        .map(|&(si, sj)| {
            let mut psi = vec![0.0; (grid.nx - 2) * nj];
            psi[(si - 1) * nj + (sj - 1)] = weight;
            op.evolve_interior(&mut psi, steps, &mut Workspace::default());
            check_range(&psi)?;
            Ok(dst_nodes
                .iter()
                .map(|&(fi, fj)| {
                    let amplitude = psi[(fi - 1) * nj + (fj - 1)];
                    TransitionRecord {
                        x_in: [grid.x(si), grid.y(sj)],
                        x_fi: [grid.x(fi), grid.y(fj)],
                        t,
                        amplitude,
                        underflow: amplitude <= AMPLITUDE_FLOOR,
                    }
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_source.into_iter().flatten().collect())
}

/// All `N²` ordered pairs over `points`, source-major.
pub fn transition_amplitudes(
    action: &ActionParams,
    grid: Grid2D,
    points: &[[f64; 2]],
    t: f64,
    dt: f64,
) -> Result<Vec<TransitionRecord>> {
    transition_amplitudes_between(action, grid, points, points, t, dt)
}

/// `η = -log(G / ref_norm)` for every record.
pub fn eta_field(records: &[TransitionRecord], ref_norm: f64) -> Result<Vec<f64>> {
    if !(ref_norm > 0.0 && ref_norm.is_finite()) {
        return Err(Error::InvalidInput(format!("reference normalization must be positive, got {ref_norm}")));
    }
    records
        .iter()
        .enumerate()
        .map(|(index, r)| {
            if r.amplitude > 0.0 {
                Ok(-(r.amplitude / ref_norm).ln())
            } else {
                Err(Error::NonPositiveAmplitude {
                    index,
                    amplitude: r.amplitude,
                })
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PotentialCoeffs;
    use nalgebra::DMatrix;

    fn harmonic() -> ActionParams {
        ActionParams::classical(0.0)
    }

    fn exact_harmonic(grid: Grid2D) -> ScalarField2D {
        ScalarField2D::from_fn(grid, |x, y| (-(x * x + y * y) / 2.0).exp())
    }

    fn sq(n: usize) -> Grid2D {
        Grid2D::square(5.0, n).unwrap_or_else(|e| panic!("{e}"))
    }

    #[test]
    fn sine_transform_is_its_own_inverse() {
        let n = 13;
        let t = SineTransform::new(n);
        let x: Vec<f64> = (0..n).map(|k| ((k * 7 + 3) % 11) as f64 - 4.5).collect();
        let mut y = x.clone();
        let (mut b, mut s) = (Vec::new(), Vec::new());
        t.apply_rows(&mut y, &mut b, &mut s);
        // Direct O(n²) sum as reference.
        for k in 1..=n {
            let direct: f64 = (1..=n)
                .map(|m| x[m - 1] * (std::f64::consts::PI * (k * m) as f64 / (n + 1) as f64).sin())
                .sum();
            assert!((direct - y[k - 1]).abs() < 1e-12);
        }
        t.apply_rows(&mut y, &mut b, &mut s);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b * 2.0 / (n + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn harmonic_ground_state_decays_at_unit_rate() {
        let grid = sq(96);
        let psi = exact_harmonic(grid);
        let t = 0.5;
        let out = evolve_imaginary(&psi, &harmonic(), t, 1e-3).unwrap_or_else(|e| panic!("{e}"));
        let scale = (-t).exp();
        let (mut err, mut norm) = (0.0, 0.0);
        for (a, b) in psi.values.iter().zip(&out.values) {
            err += (b - a * scale).powi(2);
            norm += (a * scale).powi(2);
        }
        assert!((err / norm).sqrt() < 1e-4, "relative error {}", (err / norm).sqrt());
    }

    #[test]
    fn free_flat_field_is_unchanged_away_from_walls() {
        let grid = sq(64);
        let free = ActionParams::new(1.0, 0.0, PotentialCoeffs::default());
        let flat = ScalarField2D::from_fn(grid, |_, _| 1.0);
        let out = evolve_imaginary(&flat, &free, 1e-3, 1e-3).unwrap_or_else(|e| panic!("{e}"));
        let mut worst = 0.0f64;
        for i in 16..48 {
            for j in 16..48 {
                worst = worst.max((out.at(i, j) - 1.0).abs());
            }
        }
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn step_halving_converges_at_second_order() {
        let grid = sq(48);
        let action = ActionParams::classical(0.25);
        let init = ScalarField2D::from_fn(grid, |x, y| (-(x - 0.7).powi(2) - 0.5 * (y + 0.3).powi(2)).exp());
        let t = 0.4;
        let run = |dt: f64| evolve_imaginary(&init, &action, t, dt).unwrap_or_else(|e| panic!("{e}"));
        let (a, b, c) = (run(0.1), run(0.05), run(0.025));
        let diff = |u: &ScalarField2D, v: &ScalarField2D| {
            u.values.iter().zip(&v.values).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
        };
        let ratio = diff(&a, &b) / diff(&b, &c);
        assert!((ratio - 4.0).abs() < 0.4, "ratio {ratio}");
    }

    #[test]
    fn rejects_bad_steps() {
        let grid = sq(32);
        let psi = exact_harmonic(grid);
        assert!(evolve_imaginary(&psi, &harmonic(), 1.0, 0.0).is_err());
        assert!(evolve_imaginary(&psi, &harmonic(), 1e-4, 1e-3).is_err());
        assert!(evolve_imaginary(&psi, &harmonic(), -1.0, 1e-3).is_err());
    }

    #[test]
    fn harmonic_ground_energy() {
        let gs = ground_state(&harmonic(), sq(64), 1e-10).unwrap_or_else(|e| panic!("{e}"));
        assert!((gs.energy - 1.0).abs() < 1e-3, "{}", gs.energy);
        assert!((gs.psi.l2_norm() - 1.0).abs() < 1e-10);
        assert!(gs.psi.min() >= 0.0);
    }

    /// Dense diagonalization of the same discrete Hamiltonian, built from explicit sine sums.
    fn dense_ground_energy(action: &ActionParams, grid: Grid2D) -> f64 {
        let (ni, nj) = (grid.nx - 2, grid.ny - 2);
        let kin1 = |n: usize, len: f64| {
            let mut t = DMatrix::<f64>::zeros(n, n);
            for a in 0..n {
                for b in 0..n {
                    let mut s = 0.0;
                    for k in 1..=n {
                        let kk = std::f64::consts::PI * k as f64 / len;
                        let phase = std::f64::consts::PI * k as f64 / (n + 1) as f64;
                        s += kk * kk / (2.0 * action.mass)
                            * (phase * (a + 1) as f64).sin()
                            * (phase * (b + 1) as f64).sin();
                    }
                    t[(a, b)] = 2.0 / (n + 1) as f64 * s;
                }
            }
            t
        };
        let tx = kin1(ni, grid.x_max - grid.x_min);
        let ty = kin1(nj, grid.y_max - grid.y_min);
        let dim = ni * nj;
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        for i in 0..ni {
            for j in 0..nj {
                let r = i * nj + j;
                h[(r, r)] += action.potential(grid.x(i + 1), grid.y(j + 1));
                for jp in 0..nj {
                    h[(r, i * nj + jp)] += ty[(j, jp)];
                }
                for ip in 0..ni {
                    h[(r, ip * nj + j)] += tx[(i, ip)];
                }
            }
        }
        h.symmetric_eigenvalues().min()
    }

    #[test]
    fn coupled_ground_energy_matches_dense_diagonalization() {
        let grid = sq(32);
        let action = ActionParams::classical(0.25);
        let oracle = dense_ground_energy(&action, grid);
        let gs = ground_state(&action, grid, 1e-12).unwrap_or_else(|e| panic!("{e}"));
        assert!((gs.energy - oracle).abs() < 1e-6, "{} vs {oracle}", gs.energy);
    }

    #[test]
    fn ground_state_is_exchange_symmetric() {
        let grid = sq(48);
        let gs = ground_state(&ActionParams::classical(0.25), grid, 1e-10).unwrap_or_else(|e| panic!("{e}"));
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                assert!((gs.psi.at(i, j) - gs.psi.at(j, i)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn kernel_is_symmetric() {
        let grid = sq(64);
        let pts = [[0.5, -0.3], [-1.0, 0.8], [1.2, 1.1]];
        let recs = transition_amplitudes(&ActionParams::classical(0.25), grid, &pts, 1.0, 1e-2)
            .unwrap_or_else(|e| panic!("{e}"));
        let n = pts.len();
        for a in 0..n {
            for b in 0..n {
                let (g_ab, g_ba) = (recs[a * n + b].amplitude, recs[b * n + a].amplitude);
                assert!((g_ab / g_ba - 1.0).abs() < 1e-6);
                assert!(g_ab > 0.0);
            }
        }
    }

    #[test]
    fn free_kernel_matches_closed_form() {
        let grid = Grid2D::square(8.0, 161).unwrap_or_else(|e| panic!("{e}"));
        let free = ActionParams::new(1.0, 0.0, PotentialCoeffs::default());
        let t = 0.5;
        let pts = [[0.0, 0.0], [0.5, -0.4], [-0.8, 0.3]];
        let recs = transition_amplitudes(&free, grid, &pts, t, 1e-2).unwrap_or_else(|e| panic!("{e}"));
        for r in &recs {
            let d2 = (r.x_in[0] - r.x_fi[0]).powi(2) + (r.x_in[1] - r.x_fi[1]).powi(2);
            let exact = 1.0 / (2.0 * std::f64::consts::PI * t) * (-d2 / (2.0 * t)).exp();
            assert!((r.amplitude / exact - 1.0).abs() < 0.01, "{} vs {exact}", r.amplitude);
        }
    }

    #[test]
    fn outside_points_are_rejected() {
        let grid = sq(32);
        assert!(transition_amplitudes(&harmonic(), grid, &[[6.0, 0.0]], 1.0, 0.1).is_err());
    }

    #[test]
    fn eta_edge_cases() {
        let rec = |amplitude| TransitionRecord {
            x_in: [0.0; 2],
            x_fi: [0.0; 2],
            t: 1.0,
            amplitude,
            underflow: false,
        };
        let recs = [rec(0.3), rec(0.05)];
        let eta = eta_field(&recs, 0.3).unwrap_or_default();
        assert_eq!(eta[0], 0.0);
        let eta2 = eta_field(&recs, 7.0).unwrap_or_default();
        assert!(((eta[0] - eta[1]) - (eta2[0] - eta2[1])).abs() < 1e-14);
        assert!(eta_field(&[rec(0.0)], 1.0).is_err());
    }
}
