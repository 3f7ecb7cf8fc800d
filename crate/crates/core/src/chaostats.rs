//! Statistics of Lyapunov-exponent ensembles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsq::{levenberg_marquardt, LmOptions};

pub const DEFAULT_LAMBDA_C: f64 = 0.005;
pub const NEAR_ZERO_WINDOW: (f64, f64, usize) = (-0.01, 0.05, 60);
pub const POSITIVE_WINDOW: (f64, f64, usize) = (0.0, 0.25, 50);

/// Histogram on `[edges[0], edges[n]]`; the last bin is closed on the right.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Number of values inside the window.
    pub normalization: u64,
    pub below: u64,
    pub above: u64,
}

impl LambdaHistogram {
    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self, k: usize) -> f64 {
        self.edges[k + 1] - self.edges[k]
    }

    pub fn center(&self, k: usize) -> f64 {
        0.5 * (self.edges[k] + self.edges[k + 1])
    }

    /// Counts per unit λ per value inside the window (integrates to 1 over the window).
    pub fn densities(&self) -> Vec<f64> {
        let n = self.normalization.max(1) as f64;
        (0..self.n_bins()).map(|k| self.counts[k] as f64 / (n * self.width(k))).collect()
    }

    /// Total count including overflow.
    pub fn total(&self) -> u64 {
        self.normalization + self.below + self.above
    }

    /// Fraction of all values below each edge; the last entry also counts values equal to the top edge.
    pub fn cdf_at_edges(&self) -> Vec<f64> {
        let total = self.total() as f64;
        let mut acc = self.below;
        let mut out = Vec::with_capacity(self.edges.len());
        out.push(acc as f64 / total);
        for c in &self.counts {
            acc += c;
            out.push(acc as f64 / total);
        }
        out
    }
}

/// Counts of `lambdas` in `n_bins` equal bins on `[lo, hi]`; outside values go to overflow.
pub fn histogram(lambdas: &[f64], lo: f64, hi: f64, n_bins: usize) -> Result<LambdaHistogram> {
    if lambdas.is_empty() {
        return Err(Error::InsufficientData("empty exponent list".into()));
    }
    if n_bins < 2 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidInput(format!("need lo < hi and at least 2 bins, got [{lo}, {hi}], {n_bins}")));
    }
    let w = (hi - lo) / n_bins as f64;
    let edges: Vec<f64> = (0..=n_bins).map(|k| if k == n_bins { hi } else { lo + k as f64 * w }).collect();
    let mut counts = vec![0u64; n_bins];
    let (mut below, mut above) = (0u64, 0u64);
    for &l in lambdas {
        if l < lo || l.is_nan() {
            below += 1;
        } else if l > hi {
            above += 1;
        } else {
            let mut k = (((l - lo) / w) as usize).min(n_bins - 1);
            // Guard against rounding at bin boundaries.
            while k > 0 && l < edges[k] {
                k -= 1;
            }
            while k + 1 < n_bins && l >= edges[k + 1] {
                k += 1;
            }
            counts[k] += 1;
        }
    }
    let normalization = counts.iter().sum();
    Ok(LambdaHistogram {
        edges,
        counts,
        normalization,
        below,
        above,
    })
}

/// Fraction of exponents above `lambda_c`.
pub fn chaotic_ratio(lambdas: &[f64], lambda_c: f64) -> f64 {
    if lambdas.is_empty() {
        return 0.0;
    }
    lambdas.iter().filter(|&&l| l > lambda_c).count() as f64 / lambdas.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub lambda: f64,
    pub p: f64,
}

/// Empirical CDF `P(λ) = #{λ_i <= λ}/n` at the sorted unique values.
pub fn cumulative(lambdas: &[f64]) -> Vec<CdfPoint> {
    let mut v: Vec<f64> = lambdas.iter().copied().filter(|l| !l.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<CdfPoint> = Vec::new();
    for (k, &l) in v.iter().enumerate() {
        let p = (k + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.lambda == l => last.p = p,
            _ => out.push(CdfPoint { lambda: l, p }),
        }
    }
    out
}

/// `P(λ)` by step evaluation of a sampled CDF.
pub fn cdf_at(cdf: &[CdfPoint], lambda: f64) -> f64 {
    match cdf.partition_point(|c| c.lambda <= lambda) {
        0 => 0.0,
        k => cdf[k - 1].p,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub mean: f64,
    pub sigma: f64,
    pub amplitude: f64,
    /// `‖fit - data‖ / ‖data‖` over the fitted bins.
    pub relative_error: f64,
    pub n_bins: usize,
}

/// Least-squares Gaussian `A exp(-(λ - μ)²/2σ²)` through the bin densities with centre above `min_lambda`.
pub fn gaussian_fit(hist: &LambdaHistogram, min_lambda: f64) -> Result<GaussianFit> {
    let dens = hist.densities();
    let bins: Vec<usize> = (0..hist.n_bins()).filter(|&k| hist.edges[k] >= min_lambda).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = bins.iter().map(|&k| (hist.center(k), dens[k])).unzip();
    let nonzero = ys.iter().filter(|&&y| y > 0.0).count();
    if nonzero < 5 {
        return Err(Error::InsufficientData(format!("{nonzero} non-empty bins, need at least 5")));
    }
    // Moment estimates as the starting point.
    let mass: f64 = ys.iter().sum();
    let mu0 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / mass;
    let var0 = xs.iter().zip(&ys).map(|(x, y)| (x - mu0).powi(2) * y).sum::<f64>() / mass;
    let peak = ys.iter().copied().fold(0.0, f64::max);
    let bin_w = hist.width(0);
    let sigma0 = var0.sqrt().max(bin_w);
    let residuals = |p: &[f64]| -> Result<Vec<f64>> {
        let s = p[2].exp();
        Ok(xs.iter().zip(&ys).map(|(x, y)| p[0] * (-(x - p[1]).powi(2) / (2.0 * s * s)).exp() - y).collect())
    };
    let report = levenberg_marquardt(residuals, &[peak, mu0, sigma0.ln()], &LmOptions::default())?;
    let (amp, mean, sigma) = (report.params[0], report.params[1], report.params[2].exp());
    if !(sigma > 0.1 * bin_w) || !sigma.is_finite() || !(amp > 0.0) {
        return Err(Error::DegenerateFit(format!("sigma {sigma:e}, amplitude {amp:e}")));
    }
    let norm = ys.iter().map(|y| y * y).sum::<f64>().sqrt();
    Ok(GaussianFit {
        mean,
        sigma,
        amplitude: amp,
        relative_error: report.cost.sqrt() / norm,
        n_bins: xs.len(),
    })
}

/// Settings of [`summarize`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryOptions {
    pub lambda_c: f64,
    /// Extra cutoffs at which `R` is reported.
    pub sensitivity: Vec<f64>,
    /// Histogram window `(lo, hi, bins)` of the Gaussian fit.
    pub positive_window: (f64, f64, usize),
    /// Average every exponent instead of only those above `lambda_c`.
    pub mean_over_all: bool,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        Self {
            lambda_c: DEFAULT_LAMBDA_C,
            sensitivity: vec![0.002, 0.01],
            positive_window: POSITIVE_WINDOW,
            mean_over_all: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosSummary {
    pub system: String,
    pub v22: f64,
    pub energy: f64,
    pub lambda_c: f64,
    pub ratio: f64,
    /// `R` at the sensitivity cutoffs, as `(cutoff, R)`.
    pub ratio_sensitivity: Vec<(f64, f64)>,
    /// Mean exponent entering the linear fit: over `λ > lambda_c` unless configured otherwise.
    pub mean: Option<f64>,
    pub gaussian: Option<GaussianFit>,
    pub n: usize,
}

/// Summary of one ensemble: chaotic fraction, its sensitivity to the cutoff and the Gaussian fit.
pub fn summarize(system: &str, v22: f64, energy: f64, lambdas: &[f64], opts: &SummaryOptions) -> Result<ChaosSummary> {
    if lambdas.is_empty() {
        return Err(Error::InsufficientData("empty ensemble".into()));
    }
    let lambda_c = opts.lambda_c;
    let pool: Vec<f64> = lambdas
        .iter()
        .copied()
        .filter(|&l| opts.mean_over_all || l > lambda_c)
        .collect();
    let mean = (!pool.is_empty()).then(|| pool.iter().sum::<f64>() / pool.len() as f64);
    let (lo, hi, n) = opts.positive_window;
    let gaussian = histogram(lambdas, lo, hi, n).and_then(|h| gaussian_fit(&h, lambda_c));
    let gaussian = match gaussian {
        Ok(g) => Some(g),
        Err(e) => {
            log::warn!("{system} v22={v22} E={energy}: no Gaussian fit ({e})");
            None
        }
    };
    Ok(ChaosSummary {
        system: system.to_string(),
        v22,
        energy,
        lambda_c,
        ratio: chaotic_ratio(lambdas, lambda_c),
        ratio_sensitivity: opts.sensitivity.iter().map(|&c| (c, chaotic_ratio(lambdas, c))).collect(),
        mean,
        gaussian,
        n: lambdas.len(),
    })
}

/// Ordinary least squares `⟨λ⟩ = λ⁰ + slope · E` over the means of the summaries.
pub fn linear_fit_mean_vs_e(summaries: &[ChaosSummary]) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = summaries
        .iter()
        .filter_map(|s| s.mean.map(|m| (s.energy, m)))
        .collect();
    linear_fit(&pts)
}

/// `(intercept, slope)` of a least-squares line through at least three points.
pub fn linear_fit(pts: &[(f64, f64)]) -> Result<(f64, f64)> {
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!("{} points, need at least 3", pts.len())));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all abscissae coincide".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Ok((my - slope * mx, slope))
}
