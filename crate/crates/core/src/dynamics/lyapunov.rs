//! Finite-time maximal Lyapunov exponents.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActionParams, PhaseState};

use super::integrator::{check_bounds, steps_for, Tangent, Yoshida4};
use super::shell::ShellSampler;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovOptions {
    pub dt: f64,
    /// Steps between tangent renormalizations.
    pub renorm_every: usize,
    /// Approximate number of `(t, λ(t))` samples kept in the trace.
    pub trace_points: usize,
    /// Initial tangent direction in `(δx, δy, δpx, δpy)`; normalized internally.
    pub tangent: Tangent,
}

impl Default for LyapunovOptions {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            renorm_every: 100,
            trace_points: 200,
            tangent: [0.5, 0.5, 0.5, 0.5],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: f64,
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovRecord {
    /// Index of the sample within its ensemble (0 for a single run).
    pub index: u64,
    pub initial: PhaseState,
    pub energy: f64,
    pub horizon: f64,
    pub lambda: f64,
    pub trace: Vec<TracePoint>,
}

fn norm4(v: &Tangent) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3]).sqrt()
}

/// `λ(T_c) = (1/T_c) Σ log |δ|` from the linearized flow with periodic renormalization.
pub fn lyapunov_finite_time(action: &ActionParams, s0: PhaseState, t_c: f64, opts: &LyapunovOptions) -> Result<LyapunovRecord> {
    if !(t_c > 0.0) {
        return Err(Error::InvalidInput(format!("horizon must be positive, got {t_c}")));
    }
    if opts.renorm_every == 0 {
        return Err(Error::InvalidInput("renorm_every must be at least 1".into()));
    }
    let (n, dt) = steps_for(t_c, opts.dt)?;
    let flow = Yoshida4::new(action, dt)?;
    let mut v = opts.tangent;
    let n0 = norm4(&v);
    if !(n0 > 0.0 && n0.is_finite()) {
        return Err(Error::InvalidInput("initial tangent vector must be non-zero".into()));
    }
    v.iter_mut().for_each(|c| *c /= n0);
    let mut s = s0;
    check_bounds(&s)?;
    let n_renorm = n.div_ceil(opts.renorm_every);
    let trace_every = (n_renorm / opts.trace_points.max(1)).max(1);
    let mut trace = Vec::with_capacity(opts.trace_points + 2);
    let mut log_sum = 0.0;
    let mut done = 0usize;
    let mut block = 0usize;
    while done < n {
        let m = opts.renorm_every.min(n - done);
        for _ in 0..m {
            flow.step_tangent(&mut s, &mut v);
        }
        done += m;
        block += 1;
        check_bounds(&s)?;
        let growth = norm4(&v);
        if !(growth.is_finite() && growth > 1e-300 && growth < 1e300) {
            return Err(Error::TangentOverflow);
        }
        log_sum += growth.ln();
        v.iter_mut().for_each(|c| *c /= growth);
        if block % trace_every == 0 || done == n {
            let t = done as f64 * dt;
            trace.push(TracePoint { t, lambda: log_sum / t });
        }
    }
    Ok(LyapunovRecord {
        index: 0,
        initial: s0,
        energy: action.hamiltonian(&s0),
        horizon: t_c,
        lambda: log_sum / t_c,
        trace,
    })
}

/// Two-trajectory estimate: a partner at phase-space distance `d0` is pulled back to `d0`
/// whenever the separation exceeds `threshold`.
pub fn lyapunov_two_trajectory(
    action: &ActionParams,
    s0: PhaseState,
    t_c: f64,
    dt: f64,
    d0: f64,
    threshold: f64,
) -> Result<f64> {
    if !(d0 > 0.0 && threshold > d0) {
        return Err(Error::InvalidInput("need 0 < d0 < threshold".into()));
    }
    let (n, dt) = steps_for(t_c, dt)?;
    let flow = Yoshida4::new(action, dt)?;
    let mut a = s0;
    let dir = 0.5;
    let mut b = PhaseState {
        x: a.x + dir * d0,
        y: a.y + dir * d0,
        px: a.px + dir * d0,
        py: a.py + dir * d0,
        ..a
    };
    let mut log_sum = 0.0;
    let dist = |a: &PhaseState, b: &PhaseState| {
        let (u, w) = (a.as_array(), b.as_array());
        (0..4).map(|k| (u[k] - w[k]).powi(2)).sum::<f64>().sqrt()
    };
    let rescale = |a: &PhaseState, b: &mut PhaseState, d: f64| {
        let f = d0 / d;
        b.x = a.x + f * (b.x - a.x);
        b.y = a.y + f * (b.y - a.y);
        b.px = a.px + f * (b.px - a.px);
        b.py = a.py + f * (b.py - a.py);
    };
    for k in 1..=n {
        flow.step(&mut a);
        flow.step(&mut b);
        let d = dist(&a, &b);
        if d > threshold || k == n {
            log_sum += (d / d0).ln();
            rescale(&a, &mut b, d);
        }
        if k % 1024 == 0 {
            check_bounds(&a)?;
        }
    }
    Ok(log_sum / t_c)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Classical,
    Quantum,
}

impl std::fmt::Display for SystemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SystemKind::Classical => "classical",
            SystemKind::Quantum => "quantum",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleFailure {
    pub index: u64,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEnsemble {
    pub system: SystemKind,
    pub action: ActionParams,
    pub energy: f64,
    /// Coupling of the classical system this ensemble belongs to.
    pub v22: f64,
    pub horizon: f64,
    pub seed: u64,
    /// Successful records, sorted by sample index.
    pub records: Vec<LyapunovRecord>,
    pub failures: Vec<EnsembleFailure>,
}

impl LyapunovEnsemble {
    pub fn lambdas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.lambda).collect()
    }
}

/// Which ensemble to run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsembleSpec {
    pub system: SystemKind,
    pub action: ActionParams,
    pub energy: f64,
    pub v22: f64,
    pub n: usize,
    pub horizon: f64,
    pub seed: u64,
}

/// `n` independent seeded samples, evaluated in parallel. Sample `k` depends only on
/// `(seed, k)`, so results do not depend on scheduling. `progress(done, n)` is called as
/// samples finish.
pub fn run_ensemble(
    spec: &EnsembleSpec,
    opts: &LyapunovOptions,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> Result<LyapunovEnsemble> {
    if spec.n == 0 {
        return Err(Error::InvalidInput("ensemble size must be at least 1".into()));
    }
    let sampler = ShellSampler::new(&spec.action, spec.energy)?;
    let done = std::sync::atomic::AtomicUsize::new(0);
    let outcomes: Vec<(u64, Result<LyapunovRecord>)> = (0..spec.n as u64)
        .into_par_iter()
        .map(|k| {
            let r = sampler
                .sample(spec.seed, k)
                .and_then(|s0| lyapunov_finite_time(&spec.action, s0, spec.horizon, opts))
                .map(|mut rec| {
                    rec.index = k;
                    rec.energy = spec.energy;
                    rec
                });
            let finished = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
            if let Some(cb) = progress {
                cb(finished, spec.n);
            }
            (k, r)
        })
        .collect();
    let mut records = Vec::with_capacity(spec.n);
    let mut failures = Vec::new();
    for (index, r) in outcomes {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => {
                log::warn!("ensemble sample {index} failed: {e}");
                failures.push(EnsembleFailure {
                    index,
                    message: e.to_string(),
                });
            }
        }
    }
    records.sort_by_key(|r| r.index);
    Ok(LyapunovEnsemble {
        system: spec.system,
        action: spec.action,
        energy: spec.energy,
        v22: spec.v22,
        horizon: spec.horizon,
        seed: spec.seed,
        records,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn on_shell(p: &ActionParams, e: f64, x: f64, y: f64, px: f64) -> PhaseState {
        PhaseState::new(x, y, px, (2.0 * p.mass * (e - p.potential(x, y)) - px * px).sqrt())
    }

    #[test]
    fn integrable_flow_has_vanishing_exponent() {
        let h = ActionParams::classical(0.0);
        let rec = lyapunov_finite_time(&h, on_shell(&h, 2.0, 0.4, -0.3, 0.9), 2e4, &LyapunovOptions::default())
            .unwrap_or_else(|e| panic!("{e}"));
        assert!(rec.lambda.abs() < 1e-3, "{}", rec.lambda);
        assert!((rec.energy - 2.0).abs() < 1e-10);
        let last = rec.trace.last().copied().unwrap_or(TracePoint { t: 0.0, lambda: f64::NAN });
        assert_eq!(last.t, 2e4);
        assert_eq!(last.lambda, rec.lambda);
        assert!(rec.trace.windows(2).all(|w| w[1].t > w[0].t));
    }

    /// A sampled start in the chaotic sea of the coupled system at E = 2.
    fn chaotic_start(p: &ActionParams) -> PhaseState {
        ShellSampler::new(p, 2.0).and_then(|s| s.sample(1, 54)).unwrap_or_else(|e| panic!("{e}"))
    }

    #[test]
    fn tangent_map_agrees_with_two_trajectory_oracle() {
        let p = ActionParams::classical(0.25);
        let s0 = chaotic_start(&p);
        let t_c = 2e4;
        let tangent = lyapunov_finite_time(&p, s0, t_c, &LyapunovOptions::default()).unwrap_or_else(|e| panic!("{e}"));
        assert!(tangent.lambda > 0.01, "{}", tangent.lambda);
        let oracle = lyapunov_two_trajectory(&p, s0, t_c, 1e-3, 1e-8, 1e-4).unwrap_or(f64::NAN);
        assert!((tangent.lambda / oracle - 1.0).abs() < 0.05, "{} vs {oracle}", tangent.lambda);
        let other = LyapunovOptions {
            tangent: [0.0, 1.0, -0.3, 0.2],
            ..LyapunovOptions::default()
        };
        let rotated = lyapunov_finite_time(&p, s0, t_c, &other).unwrap_or_else(|e| panic!("{e}"));
        assert!((rotated.lambda / tangent.lambda - 1.0).abs() < 0.02, "{} vs {}", rotated.lambda, tangent.lambda);
        let half = lyapunov_finite_time(&p, s0, t_c / 2.0, &LyapunovOptions::default()).unwrap_or_else(|e| panic!("{e}"));
        assert!((half.lambda / tangent.lambda - 1.0).abs() < 0.1);
    }

    #[test]
    fn ensemble_is_deterministic_and_reduces_to_single_runs() {
        let p = ActionParams::classical(0.25);
        let spec = EnsembleSpec {
            system: SystemKind::Classical,
            action: p,
            energy: 2.0,
            v22: 0.25,
            n: 4,
            horizon: 50.0,
            seed: 3,
        };
        let opts = LyapunovOptions::default();
        let a = run_ensemble(&spec, &opts, None).unwrap_or_else(|e| panic!("{e}"));
        let b = run_ensemble(&spec, &opts, Some(&|_, _| {})).unwrap_or_else(|e| panic!("{e}"));
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 4);
        assert!(a.failures.is_empty());
        let s0 = ShellSampler::new(&p, 2.0).and_then(|s| s.sample(3, 2)).unwrap_or_default();
        let single = lyapunov_finite_time(&p, s0, 50.0, &opts).unwrap_or_else(|e| panic!("{e}"));
        assert_eq!(a.records[2].lambda, single.lambda);
        assert_eq!(a.records[2].initial, s0);
    }

    #[test]
    fn integrable_ensemble_is_regular() {
        let h = ActionParams::classical(0.0);
        let spec = EnsembleSpec {
            system: SystemKind::Classical,
            action: h,
            energy: 2.0,
            v22: 0.0,
            n: 100,
            horizon: 2e4,
            seed: 1,
        };
        let opts = LyapunovOptions {
            dt: 1e-2,
            ..LyapunovOptions::default()
        };
        let ens = run_ensemble(&spec, &opts, None).unwrap_or_else(|e| panic!("{e}"));
        assert!(ens.lambdas().iter().all(|l| *l < 1e-3), "{:?}", ens.lambdas());
    }

    #[test]
    fn bad_input_is_rejected() {
        let p = ActionParams::classical(0.25);
        let s0 = chaotic_start(&p);
        assert!(lyapunov_finite_time(&p, s0, 0.0, &LyapunovOptions::default()).is_err());
        let zero = LyapunovOptions {
            tangent: [0.0; 4],
            ..LyapunovOptions::default()
        };
        assert!(lyapunov_finite_time(&p, s0, 1.0, &zero).is_err());
        let never = LyapunovOptions {
            renorm_every: 0,
            ..LyapunovOptions::default()
        };
        assert!(lyapunov_finite_time(&p, s0, 1.0, &never).is_err());
    }
}
