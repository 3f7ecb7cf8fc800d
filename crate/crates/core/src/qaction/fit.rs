//! Global least-squares fit of a local Euclidean action to transition amplitudes.
//!
//! Each measured amplitude `G(b, T; a, 0)` is compared with `Z̃ exp(-Σ̃(a → b))`, where
//! `Σ̃` is the action of the stationary path of the trial action. The constant term `ṽ0`
//! and `log Z̃` enter only through `log Z̃ - ṽ0 T`, so `Z̃` is tied to the trial mass and
//! quadratic coefficient (see [`reference_log_norm`]) and `ṽ0` carries the energy offset.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsq::{levenberg_marquardt, LmOptions};
use crate::model::{ActionParams, PotentialCoeffs};
use crate::qaction::bvp::BvpSolver;
use crate::schrodinger::TransitionRecord;

/// Uniform `n × n` lattice of boundary points in `[-half_width, half_width]²`.
///
/// With four points per side `x²` takes only two values on the lattice, which leaves the
/// sextic and octic couplings nearly degenerate with `ṽ22`; the default uses six.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingBox {
    pub half_width: f64,
    pub n_per_side: usize,
}

impl Default for SamplingBox {
    fn default() -> Self {
        Self {
            half_width: 1.5,
            n_per_side: 6,
        }
    }
}

impl SamplingBox {
    pub fn points(&self) -> Vec<[f64; 2]> {
        let n = self.n_per_side;
        let coord = |k: usize| {
            if n == 1 {
                0.0
            } else {
                -self.half_width + 2.0 * self.half_width * k as f64 / (n - 1) as f64
            }
        };
        (0..n)
            .flat_map(|i| (0..n).map(move |j| [coord(i), coord(j)]))
            .collect()
    }
}

/// Transition amplitudes at a common transition time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitDataset {
    pub records: Vec<TransitionRecord>,
    pub region: SamplingBox,
}

impl FitDataset {
    pub const MIN_POINTS: usize = 10;

    pub fn new(records: Vec<TransitionRecord>, region: SamplingBox) -> Result<Self> {
        let ds = Self { records, region };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self
            .records
            .first()
            .map(|r| r.t)
            .ok_or_else(|| Error::InsufficientData("empty dataset".into()))?;
        let mut points: Vec<[f64; 2]> = Vec::new();
        for (index, r) in self.records.iter().enumerate() {
            if r.t != t {
                return Err(Error::InvalidInput(format!(
                    "record {index} has transition time {} instead of {t}",
                    r.t
                )));
            }
            if !(r.amplitude > 0.0) || r.underflow {
                return Err(Error::NonPositiveAmplitude {
                    index,
                    amplitude: r.amplitude,
                });
            }
            for p in [r.x_in, r.x_fi] {
                if !points.contains(&p) {
                    points.push(p);
                }
            }
        }
        if points.len() < Self::MIN_POINTS {
            return Err(Error::InsufficientData(format!(
                "{} distinct boundary points, need at least {}",
                points.len(),
                Self::MIN_POINTS
            )));
        }
        Ok(())
    }

    pub fn transition_time(&self) -> f64 {
        self.records.first().map_or(f64::NAN, |r| r.t)
    }
}

/// Settings of the action fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub bvp: BvpSolver,
    /// Extrapolate each path action from `n` and `2n - 1` nodes.
    pub richardson: bool,
    /// Compare raw amplitudes instead of log-amplitudes.
    pub raw_amplitudes: bool,
    pub max_iter: usize,
    pub rel_tol: f64,
    /// Coefficients held at their initial value, in `COEFF_NAMES` order.
    #[serde(default)]
    pub frozen: [bool; 8],
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            bvp: BvpSolver {
                n_nodes: 65,
                ..BvpSolver::default()
            },
            richardson: true,
            raw_amplitudes: false,
            max_iter: 200,
            rel_tol: 1e-10,
            frozen: [false; 8],
        }
    }
}

/// `log Z̃ = log(m̃ω̃ / (π (1 - e^{-2ω̃T})))` with `ω̃ = sqrt(2ṽ2/m̃)`.
///
/// This is the exact prefactor of the 2-D harmonic kernel once the zero-point factor
/// `e^{-ω̃T}` is moved into `ṽ0`; for `ω̃ → 0` it reduces to the free value `m̃/(2πT)`.
pub fn reference_log_norm(mass: f64, v2: f64, t: f64) -> f64 {
    let omega = (2.0 * v2.max(0.0) / mass).sqrt();
    let x = 2.0 * omega * t;
    if x < 1e-8 {
        (mass / (2.0 * std::f64::consts::PI * t)).ln()
    } else {
        (mass * omega / (std::f64::consts::PI * -(-x).exp_m1())).ln()
    }
}

/// Path action for every record, in record order.
pub fn path_actions(params: &ActionParams, data: &FitDataset, opts: &FitOptions) -> Result<Vec<f64>> {
    let t = data.transition_time();
    data.records
        .par_iter()
        .enumerate()
        .map(|(index, r)| {
            let s = if opts.richardson {
                opts.bvp.solve_extrapolated(params, r.x_in, r.x_fi, t).map(|p| p.action)
            } else {
                opts.bvp.solve(params, r.x_in, r.x_fi, t).map(|p| p.action_value)
            };
            s.map_err(|e| Error::PairFailed {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

/// `Z̃ exp(-Σ̃)` for one pair of boundary points.
pub fn predicted_amplitude(params: &ActionParams, a: [f64; 2], b: [f64; 2], t: f64) -> Result<f64> {
    predicted_amplitude_with(params, a, b, t, &FitOptions::default())
}

pub fn predicted_amplitude_with(
    params: &ActionParams,
    a: [f64; 2],
    b: [f64; 2],
    t: f64,
    opts: &FitOptions,
) -> Result<f64> {
    let s = if opts.richardson {
        opts.bvp.solve_extrapolated(params, a, b, t)?.action
    } else {
        opts.bvp.solve(params, a, b, t)?.action_value
    };
    Ok((params.log_norm - s).exp())
}

fn residual_vector(params: &ActionParams, data: &FitDataset, opts: &FitOptions) -> Result<Vec<f64>> {
    let actions = path_actions(params, data, opts)?;
    Ok(data
        .records
        .iter()
        .zip(actions)
        .map(|(r, s)| {
            let log_pred = params.log_norm - s;
            if opts.raw_amplitudes {
                r.amplitude - log_pred.exp()
            } else {
                r.amplitude.ln() - log_pred
            }
        })
        .collect())
}

/// `ε = Σ |log G - (log Z̃ - Σ̃)|²`, or the raw-amplitude form when requested.
pub fn fit_error(params: &ActionParams, data: &FitDataset, opts: &FitOptions) -> Result<f64> {
    data.validate()?;
    Ok(residual_vector(params, data, opts)?.iter().map(|r| r * r).sum())
}

/// Parameter layout of the optimizer: `ln m̃` followed by the free coefficients of
/// `[ṽ0, ṽ11, ṽ2, ṽ22, ṽ13, ṽ4, ṽ24, ṽ44]`.
struct Layout {
    base: [f64; 8],
    free: Vec<usize>,
    t: f64,
}

impl Layout {
    fn new(init: &ActionParams, frozen: &[bool; 8], t: f64) -> Self {
        Self {
            base: init.coeffs.to_array(),
            free: (0..8).filter(|&k| !frozen[k]).collect(),
            t,
        }
    }

    fn unpack(&self, theta: &[f64]) -> ActionParams {
        let mass = theta[0].exp();
        let mut c = self.base;
        for (slot, &k) in self.free.iter().enumerate() {
            c[k] = theta[slot + 1];
        }
        let coeffs = PotentialCoeffs::from_array(c);
        ActionParams::new(mass, reference_log_norm(mass, coeffs.v2, self.t), coeffs)
    }

    fn pack(&self, p: &ActionParams) -> Vec<f64> {
        let c = p.coeffs.to_array();
        let mut theta = vec![p.mass.ln()];
        theta.extend(self.free.iter().map(|&k| c[k]));
        theta
    }
}

/// One-sigma surrogate error bars from the local quadratic model of `ε`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitUncertainty {
    pub mass: f64,
    pub coeffs: PotentialCoeffs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ActionParams,
    /// Final `ε`.
    pub residual: f64,
    pub uncertainty: FitUncertainty,
    pub iterations: usize,
    pub converged: bool,
    pub n_pairs: usize,
}

/// Minimize [`fit_error`] over mass and all eight potential coefficients.
///
/// The log-normalization of `init` is ignored; it follows [`reference_log_norm`].
pub fn fit_quantum_action(data: &FitDataset, init: &ActionParams, opts: &FitOptions) -> Result<FitResult> {
    data.validate()?;
    init.validate()?;
    let t = data.transition_time();
    let layout = Layout::new(init, &opts.frozen, t);
    let residuals = |theta: &[f64]| residual_vector(&layout.unpack(theta), data, opts);
    let lm = LmOptions {
        max_iter: opts.max_iter,
        rel_tol: opts.rel_tol,
        ..LmOptions::default()
    };
    let report = levenberg_marquardt(residuals, &layout.pack(init), &lm)?;
    if !report.converged {
        return Err(Error::NoConvergence {
            iterations: report.iterations,
            residual: report.cost,
        });
    }
    let params = layout.unpack(&report.params);
    let err = report.std_errors();
    let mut c = [0.0; 8];
    for (slot, &k) in layout.free.iter().enumerate() {
        c[k] = err[slot + 1];
    }
    log::info!(
        "action fit: eps = {:.3e} after {} iterations, m = {:.6}, v2 = {:.6}, v22 = {:.6}",
        report.cost,
        report.iterations,
        params.mass,
        params.coeffs.v2,
        params.coeffs.v22
    );
    Ok(FitResult {
        params,
        residual: report.cost,
        uncertainty: FitUncertainty {
            mass: params.mass * err[0],
            coeffs: PotentialCoeffs::from_array(c),
        },
        iterations: report.iterations,
        converged: report.converged,
        n_pairs: data.records.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exact 2-D harmonic kernel for `V = v2 |x|²`, mass m.
    fn harmonic_kernel(mass: f64, v2: f64, a: [f64; 2], b: [f64; 2], t: f64) -> f64 {
        let w = (2.0 * v2 / mass).sqrt();
        let (aa, bb, ab) = (a[0] * a[0] + a[1] * a[1], b[0] * b[0] + b[1] * b[1], a[0] * b[0] + a[1] * b[1]);
        let s = mass * w / (2.0 * (w * t).sinh()) * ((aa + bb) * (w * t).cosh() - 2.0 * ab);
        mass * w / (2.0 * std::f64::consts::PI * (w * t).sinh()) * (-s).exp()
    }

    fn dataset(f: impl Fn([f64; 2], [f64; 2]) -> f64, t: f64) -> FitDataset {
        let region = SamplingBox { half_width: 1.5, n_per_side: 4 };
        let pts = region.points();
        let mut records = Vec::new();
        for a in &pts {
            for b in &pts {
                records.push(TransitionRecord {
                    x_in: *a,
                    x_fi: *b,
                    t,
                    amplitude: f(*a, *b),
                    underflow: false,
                });
            }
        }
        FitDataset::new(records, region).unwrap_or_else(|e| panic!("{e}"))
    }

    #[test]
    fn reference_norm_reproduces_harmonic_prefactor() {
        let t = 4.5;
        let lz = reference_log_norm(1.0, 0.5, t);
        let g = harmonic_kernel(1.0, 0.5, [0.0; 2], [0.0; 2], t);
        // Path at rest at the minimum: Σ̃ = ṽ0 T with ṽ0 = ω = 1.
        assert!((lz - t - g.ln()).abs() < 1e-12);
        let free = reference_log_norm(1.0, 0.0, t);
        assert!((free - (1.0 / (2.0 * std::f64::consts::PI * t)).ln()).abs() < 1e-12);
    }

    #[test]
    fn self_generated_data_has_zero_error() {
        let t = 4.5;
        let mut truth = ActionParams::new(0.97, 0.0, PotentialCoeffs::pullen_edmonds(0.56, 0.24));
        truth.coeffs.v0 = 1.1;
        truth.coeffs.v4 = -0.001;
        truth.log_norm = reference_log_norm(truth.mass, truth.coeffs.v2, t);
        let opts = FitOptions::default();
        let data = dataset(
            |a, b| predicted_amplitude_with(&truth, a, b, t, &opts).unwrap_or(f64::NAN),
            t,
        );
        let eps = fit_error(&truth, &data, &opts).unwrap_or(f64::NAN);
        assert!(eps < 1e-10, "{eps}");
        // Relabeling invariance.
        let mut shuffled = data.clone();
        shuffled.records.reverse();
        shuffled.records.swap(3, 17);
        let eps2 = fit_error(&truth, &shuffled, &opts).unwrap_or(f64::NAN);
        assert!((eps - eps2).abs() < 1e-20);
    }

    #[test]
    fn free_amplitude_is_gaussian_in_separation() {
        let t = 2.0;
        let free = ActionParams::new(0.8, 0.3, PotentialCoeffs::default());
        let g0 = predicted_amplitude(&free, [0.0; 2], [0.0; 2], t).unwrap_or(f64::NAN);
        let g1 = predicted_amplitude(&free, [0.2, -0.1], [1.0, 0.5], t).unwrap_or(f64::NAN);
        let d2 = 0.8f64.powi(2) + 0.6f64.powi(2);
        assert!((g1 / g0 - (-0.8 * d2 / (2.0 * t)).exp()).abs() < 1e-10);
        assert!((g0 - 0.3f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn constant_shift_scales_amplitude() {
        let t = 4.5;
        let p = ActionParams::new(0.976, 0.0, PotentialCoeffs::pullen_edmonds(0.5684, 0.2469));
        let mut q = p;
        q.coeffs.v0 += 0.1;
        let (a, b) = ([1.5, 0.5], [-0.5, 1.5]);
        let gp = predicted_amplitude(&p, a, b, t).unwrap_or(f64::NAN);
        let gq = predicted_amplitude(&q, a, b, t).unwrap_or(f64::NAN);
        assert!((gq / gp - (-0.1 * t).exp()).abs() < 1e-10);
        let gr = predicted_amplitude(&p, b, a, t).unwrap_or(f64::NAN);
        assert!((gr / gp - 1.0).abs() < 1e-10);
    }

    #[test]
    fn exact_harmonic_kernel_fits_back_to_classical_action() {
        let t = 4.5;
        let data = dataset(|a, b| harmonic_kernel(1.0, 0.5, a, b, t), t);
        let mut init = ActionParams::new(1.1, 0.0, PotentialCoeffs::pullen_edmonds(0.45, 0.02));
        init.coeffs.v0 = 0.8;
        let fit = fit_quantum_action(&data, &init, &FitOptions::default()).unwrap_or_else(|e| panic!("{e}"));
        let c = fit.params.coeffs;
        assert!((fit.params.mass - 1.0).abs() < 1e-3, "{}", fit.params.mass);
        assert!((c.v2 - 0.5).abs() < 1e-3, "{}", c.v2);
        assert!((c.v0 - 1.0).abs() < 2e-3, "{}", c.v0);
        for v in [c.v11, c.v22, c.v13, c.v4, c.v24, c.v44] {
            assert!(v.abs() < 1e-3, "{c:?}");
        }
        assert!(fit.residual < 1e-12, "{}", fit.residual);
    }

    #[test]
    fn dataset_validation() {
        let rec = |p: [f64; 2], amplitude| TransitionRecord {
            x_in: p,
            x_fi: p,
            t: 1.0,
            amplitude,
            underflow: false,
        };
        let few: Vec<_> = (0..4).map(|k| rec([k as f64, 0.0], 1.0)).collect();
        assert!(FitDataset::new(few, SamplingBox::default()).is_err());
        let mut many: Vec<_> = (0..12).map(|k| rec([k as f64, 0.0], 1.0)).collect();
        assert!(FitDataset::new(many.clone(), SamplingBox::default()).is_ok());
        many[3].amplitude = 0.0;
        assert!(FitDataset::new(many, SamplingBox::default()).is_err());
    }
}
