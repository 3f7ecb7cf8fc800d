//! Uniform sampling of initial conditions on an energy shell.
//!
//! Positions are uniform on the potential well `{V <= E}` around the minimum, the momentum
//! magnitude follows from `E - V` and its direction is uniform. In two dimensions this is the
//! microcanonical measure projected on configuration space.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{ActionParams, PhaseState};

use super::integrator::ESCAPE_BOUND;

pub const MAX_ATTEMPTS: usize = 100_000;

/// Number of radial probes per ray when bounding and checking the well.
const RAY_STEPS: usize = 400;

/// Reusable sampler for one `(action, E)` pair.
#[derive(Clone, Debug)]
pub struct ShellSampler {
    action: ActionParams,
    energy: f64,
    center: [f64; 2],
    half_width: f64,
}

impl ShellSampler {
    /// The well is taken around the origin, the minimum of every symmetric potential of the model.
    pub fn new(action: &ActionParams, energy: f64) -> Result<Self> {
        action.validate()?;
        let center = [0.0, 0.0];
        let v_min = action.potential(center[0], center[1]);
        if !(energy > v_min) {
            return Err(Error::InvalidInput(format!(
                "energy {energy} does not exceed the potential minimum {v_min}"
            )));
        }
        // Radial extent of the well over a fan of directions.
        let mut reach = 0.0f64;
        for k in 0..720 {
            let th = k as f64 * std::f64::consts::PI / 360.0;
            let (c, s) = (th.cos(), th.sin());
            let dr = ESCAPE_BOUND / RAY_STEPS as f64;
            let mut r = 0.0;
            while r < ESCAPE_BOUND && action.potential(center[0] + r * c, center[1] + r * s) <= energy {
                r += dr;
            }
            // Refine the edge by bisection between r - dr and r.
            let (mut lo, mut hi) = ((r - dr).max(0.0), r);
            for _ in 0..50 {
                let mid = 0.5 * (lo + hi);
                if action.potential(center[0] + mid * c, center[1] + mid * s) <= energy {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            reach = reach.max(hi);
        }
        if reach >= ESCAPE_BOUND {
            return Err(Error::InvalidInput(format!(
                "the well at energy {energy} is not bounded within |x|,|y| <= {ESCAPE_BOUND}"
            )));
        }
        Ok(Self {
            action: *action,
            energy,
            center,
            half_width: reach * 1.01 + 1e-12,
        })
    }

    /// Half-width of the square that encloses the well.
    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Whether `(x, y)` lies in the well: `V <= E` along the whole segment from the minimum.
    pub fn in_well(&self, x: f64, y: f64) -> bool {
        let v = &self.action;
        if v.potential(x, y) > self.energy {
            return false;
        }
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        let n = ((dx.hypot(dy) / self.half_width) * 64.0).ceil() as usize;
        (1..n).all(|k| {
            let s = k as f64 / n as f64;
            v.potential(self.center[0] + s * dx, self.center[1] + s * dy) <= self.energy
        })
    }

    pub fn sample_with(&self, rng: &mut impl Rng) -> Result<PhaseState> {
        let w = self.half_width;
        for _ in 0..MAX_ATTEMPTS {
            let x = self.center[0] + rng.gen_range(-w..w);
            let y = self.center[1] + rng.gen_range(-w..w);
            if !self.in_well(x, y) {
                continue;
            }
            let kinetic = self.energy - self.action.potential(x, y);
            let p = (2.0 * self.action.mass * kinetic.max(0.0)).sqrt();
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            let s = PhaseState::new(x, y, p * phi.cos(), p * phi.sin());
            return Ok(s);
        }
        Err(Error::SamplingFailed(MAX_ATTEMPTS))
    }

    /// Sample number `index` of the stream selected by `seed`; independent of evaluation order.
    pub fn sample(&self, seed: u64, index: u64) -> Result<PhaseState> {
        self.sample_with(&mut sample_rng(seed, index))
    }
}

/// Generator of sample `index` under `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One state with `H = E`, position uniform on the well, momentum direction uniform.
pub fn sample_energy_shell(action: &ActionParams, energy: f64, seed: u64) -> Result<PhaseState> {
    ShellSampler::new(action, energy)?.sample(seed, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_lie_on_the_shell_and_are_reproducible() {
        let p = ActionParams::classical(0.25);
        let sampler = ShellSampler::new(&p, 2.0).unwrap_or_else(|e| panic!("{e}"));
        for k in 0..200 {
            let s = sampler.sample(7, k).unwrap_or_else(|e| panic!("{e}"));
            assert!((p.hamiltonian(&s) - 2.0).abs() < 1e-12);
            assert_eq!(s, sampler.sample(7, k).unwrap_or_default());
        }
        assert_ne!(sampler.sample(7, 0).unwrap_or_default(), sampler.sample(8, 0).unwrap_or_default());
        let one = sample_energy_shell(&p, 2.0, 7).unwrap_or_default();
        assert_eq!(one, sampler.sample(7, 0).unwrap_or_default());
    }

    #[test]
    fn low_energy_concentrates_at_the_minimum() {
        let p = ActionParams::classical(0.25);
        let sampler = ShellSampler::new(&p, 1e-4).unwrap_or_else(|e| panic!("{e}"));
        for k in 0..100 {
            let s = sampler.sample(1, k).unwrap_or_else(|e| panic!("{e}"));
            assert!(s.x.hypot(s.y) <= (1e-4f64 / 0.5).sqrt() * (1.0 + 1e-9));
        }
    }

    #[test]
    fn energy_below_minimum_is_rejected() {
        assert!(ShellSampler::new(&ActionParams::classical(0.25), -0.1).is_err());
    }

    #[test]
    fn positions_are_uniform_on_the_disc() {
        // Harmonic well: {V <= E} is the disc r² <= 2E. Equal-area cells in (r², θ).
        let p = ActionParams::classical(0.0);
        let e = 2.0;
        let sampler = ShellSampler::new(&p, e).unwrap_or_else(|e| panic!("{e}"));
        let (nr, nt) = (5usize, 8usize);
        let mut counts = vec![0usize; nr * nt];
        let n = 100_000u64;
        let mut rng = sample_rng(11, 0);
        for _ in 0..n {
            let s = sampler.sample_with(&mut rng).unwrap_or_else(|e| panic!("{e}"));
            let u = (s.x * s.x + s.y * s.y) / (2.0 * e);
            let th = s.y.atan2(s.x).rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU;
            let (i, j) = (((u * nr as f64) as usize).min(nr - 1), ((th * nt as f64) as usize).min(nt - 1));
            counts[i * nt + j] += 1;
        }
        let expected = n as f64 / (nr * nt) as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 39 degrees of freedom: the 1% critical value is 62.43.
        assert!(chi2 < 62.43, "chi2 = {chi2}");
    }
}
