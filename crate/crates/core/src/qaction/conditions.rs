//! Consistency checks of a fitted action against the amplitudes it parametrizes.
//!
//! Writing `G(b, T; a, 0) = G₀ e^{-η(b, a)}`, a local action reproduces the amplitudes iff the
//! endpoint momenta of its stationary paths are `p(T) = ∇_b η` and `p(0) = -∇_a η`. Combined
//! with Euclidean energy conservation this gives
//! `2m̃ (Ṽ(b) - Ṽ(a)) = |∇_b η|² - |∇_a η|²`.
//! Gradients of `η` come from central differences over records whose endpoints sit on a
//! symmetric stencil around the point of interest.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ActionParams;
use crate::qaction::fit::{FitDataset, FitOptions};
use crate::schrodinger::TransitionRecord;

type Key = [u64; 4];

fn key(a: [f64; 2], b: [f64; 2]) -> Key {
    [a[0].to_bits(), a[1].to_bits(), b[0].to_bits(), b[1].to_bits()]
}

/// Lookup of `η = -log G` by (source, endpoint).
struct EtaTable {
    eta: HashMap<Key, f64>,
    /// For each source and axis: sorted endpoint coordinates along lines of the other axis.
    records: Vec<TransitionRecord>,
}

impl EtaTable {
    fn new(records: &[TransitionRecord]) -> Self {
        let eta = records
            .iter()
            .filter(|r| r.amplitude > 0.0)
            .map(|r| (key(r.x_in, r.x_fi), -r.amplitude.ln()))
            .collect();
        Self {
            eta,
            records: records.to_vec(),
        }
    }

    /// Central-difference `∇_b η(b, a)` with the smallest symmetric offset available, per axis.
    fn endpoint_gradient(&self, a: [f64; 2], b: [f64; 2]) -> [Option<f64>; 2] {
        let mut out = [None, None];
        for (d, slot) in out.iter_mut().enumerate() {
            let mut best: Option<(f64, f64)> = None;
            for r in &self.records {
                if r.x_in != a || r.x_fi[1 - d] != b[1 - d] || r.x_fi[d] <= b[d] {
                    continue;
                }
                let h = r.x_fi[d] - b[d];
                let mut mirror = b;
                mirror[d] = b[d] - h;
                // Stencil points come from grid nodes, so mirrored coordinates match to rounding.
                let lo = self.lookup_near(a, mirror, d, h);
                if let (Some(lo), Some(&hi)) = (lo, self.eta.get(&key(a, r.x_fi))) {
                    if best.is_none_or(|(bh, _)| h < bh) {
                        best = Some((h, (hi - lo) / (2.0 * h)));
                    }
                }
            }
            *slot = best.map(|(_, g)| g);
        }
        out
    }

    fn lookup_near(&self, a: [f64; 2], p: [f64; 2], d: usize, h: f64) -> Option<f64> {
        if let Some(v) = self.eta.get(&key(a, p)) {
            return Some(*v);
        }
        let tol = 1e-9 * h.max(1.0);
        self.records
            .iter()
            .find(|r| r.x_in == a && r.x_fi[1 - d] == p[1 - d] && (r.x_fi[d] - p[d]).abs() < tol)
            .and_then(|r| self.eta.get(&key(r.x_in, r.x_fi)).copied())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub max_deviation: f64,
    pub mean_deviation: f64,
    pub n_checked: usize,
}

impl ConditionReport {
    fn from_deviations(devs: &[f64]) -> Result<Self> {
        if devs.is_empty() {
            return Err(Error::InsufficientData(
                "no record has symmetric neighbouring endpoints for a finite difference".into(),
            ));
        }
        Ok(Self {
            max_deviation: devs.iter().copied().fold(0.0, f64::max),
            mean_deviation: devs.iter().sum::<f64>() / devs.len() as f64,
            n_checked: devs.len(),
        })
    }
}

fn distinct_pairs(records: &[TransitionRecord], only: Option<&[[f64; 2]]>) -> Vec<([f64; 2], [f64; 2])> {
    let mut seen = std::collections::HashSet::new();
    records
        .iter()
        .filter(|r| only.is_none_or(|pts| pts.contains(&r.x_fi) && pts.contains(&r.x_in)))
        .filter(|r| seen.insert(key(r.x_in, r.x_fi)))
        .map(|r| (r.x_in, r.x_fi))
        .collect()
}

/// Largest relative mismatch between the path end momentum and `∇_b η`.
///
/// Per axis with a symmetric stencil, `|p_d - ∂_d η| / |p|`. When `only` is given, the check
/// runs on pairs with both points in that set; the other records only serve as neighbours.
pub fn verify_momentum_condition(
    params: &ActionParams,
    data: &FitDataset,
    opts: &FitOptions,
    only: Option<&[[f64; 2]]>,
) -> Result<ConditionReport> {
    let table = EtaTable::new(&data.records);
    let t = data.transition_time();
    let pairs = distinct_pairs(&data.records, only);
    let devs = pairs
        .par_iter()
        .map(|&(a, b)| -> Result<Vec<f64>> {
            let grad = table.endpoint_gradient(a, b);
            if grad.iter().all(Option::is_none) {
                return Ok(Vec::new());
            }
            let p = opts.bvp.solve_extrapolated(params, a, b, t)?.end_momentum;
            let norm = p[0].hypot(p[1]).max(1e-8);
            Ok((0..2)
                .filter_map(|d| grad[d].map(|g| (p[d] - g).abs() / norm))
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    ConditionReport::from_deviations(&devs.concat())
}

/// Mismatch in `2m̃ (Ṽ(b) - Ṽ(a)) = |∇_b η|² - |∇_a η|²`, relative to `|∇_b η|² + |∇_a η|²`.
///
/// `∇_a η(b, a)` is read from the records sourced at `b` (the kernel is symmetric).
pub fn verify_energy_balance(params: &ActionParams, data: &FitDataset, only: Option<&[[f64; 2]]>) -> Result<ConditionReport> {
    let table = EtaTable::new(&data.records);
    let pairs = distinct_pairs(&data.records, only);
    let devs: Vec<f64> = pairs
        .par_iter()
        .filter_map(|&(a, b)| {
            let gb = table.endpoint_gradient(a, b);
            let ga = table.endpoint_gradient(b, a);
            let (gb, ga) = match (gb, ga) {
                ([Some(b0), Some(b1)], [Some(a0), Some(a1)]) => ([b0, b1], [a0, a1]),
                _ => return None,
            };
            let (nb, na) = (gb[0] * gb[0] + gb[1] * gb[1], ga[0] * ga[0] + ga[1] * ga[1]);
            let scale = nb + na;
            if scale < 1e-12 {
                return None;
            }
            let lhs = 2.0 * params.mass * (params.potential(b[0], b[1]) - params.potential(a[0], a[1]));
            Some((lhs - (nb - na)).abs() / scale)
        })
        .collect();
    ConditionReport::from_deviations(&devs)
}

/// Each point plus its `±offset` neighbours along both axes.
pub fn stencil_points(points: &[[f64; 2]], offset: f64) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(points.len() * 5);
    for p in points {
        for q in [
            *p,
            [p[0] + offset, p[1]],
            [p[0] - offset, p[1]],
            [p[0], p[1] + offset],
            [p[0], p[1] - offset],
        ] {
            if !out.contains(&q) {
                out.push(q);
            }
        }
    }
    out
}
