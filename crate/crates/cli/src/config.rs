//! Run configuration: one TOML file with a section per pipeline concern.

use std::path::{Path, PathBuf};

use qchaos_core::dynamics::{LyapunovOptions, SectionSpec};
use qchaos_core::qaction::{BvpSolver, FitOptions, SamplingBox};
use qchaos_core::schrodinger::GroundStateSolver;
use qchaos_core::{ActionParams, Grid2D, PotentialCoeffs, COEFF_NAMES};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PipelineError, Result};

/// Classical action. `v22` in `[model]` is overridden by each entry of `couplings`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub mass: f64,
    pub log_norm: f64,
    pub v0: f64,
    pub v11: f64,
    pub v2: f64,
    pub v22: f64,
    pub v13: f64,
    pub v4: f64,
    pub v24: f64,
    pub v44: f64,
    /// Values of `v22` run through the pipeline.
    pub couplings: Vec<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            mass: 1.0,
            log_norm: 0.0,
            v0: 0.0,
            v11: 0.0,
            v2: 0.5,
            v22: 0.25,
            v13: 0.0,
            v4: 0.0,
            v24: 0.0,
            v44: 0.0,
            couplings: vec![0.05, 0.25],
        }
    }
}

impl ModelConfig {
    /// Classical action at coupling `v22`.
    pub fn action(&self, v22: f64) -> ActionParams {
        let coeffs = PotentialCoeffs {
            v0: self.v0,
            v11: self.v11,
            v2: self.v2,
            v22,
            v13: self.v13,
            v4: self.v4,
            v24: self.v24,
            v44: self.v44,
        };
        ActionParams::new(self.mass, self.log_norm, coeffs)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// The grid is the square `[-half_width, half_width]²` with `nodes` points per side.
    pub half_width: f64,
    pub nodes: usize,
    pub dt: f64,
    pub transition_time: f64,
    pub ground_tol: f64,
    pub check_every: usize,
    pub max_time: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            half_width: 5.0,
            nodes: 128,
            dt: 1e-3,
            transition_time: 4.5,
            ground_tol: 1e-10,
            check_every: 200,
            max_time: 200.0,
        }
    }
}

impl SolverConfig {
    pub fn grid(&self) -> Result<Grid2D> {
        Ok(Grid2D::square(self.half_width, self.nodes)?)
    }

    pub fn ground_solver(&self) -> GroundStateSolver {
        GroundStateSolver {
            dt: self.dt,
            tol: self.ground_tol,
            check_every: self.check_every,
            max_time: self.max_time,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub half_width: f64,
    pub n_per_side: usize,
    /// Offset, in grid nodes, of the stencil targets used for the momentum checks.
    pub stencil_nodes: usize,
    pub bvp_nodes: usize,
    pub richardson: bool,
    pub raw_amplitudes: bool,
    pub max_iter: usize,
    pub rel_tol: f64,
    /// Coefficients held at their classical value.
    #[serde(default)]
    pub frozen: Vec<String>,
}

impl Default for FitConfig {
    fn default() -> Self {
        let region = SamplingBox::default();
        let fit = FitOptions::default();
        Self {
            half_width: region.half_width,
            n_per_side: region.n_per_side,
            stencil_nodes: 2,
            bvp_nodes: fit.bvp.n_nodes,
            richardson: fit.richardson,
            raw_amplitudes: fit.raw_amplitudes,
            max_iter: fit.max_iter,
            rel_tol: fit.rel_tol,
            frozen: Vec::new(),
        }
    }
}

impl FitConfig {
    pub fn region(&self) -> SamplingBox {
        SamplingBox {
            half_width: self.half_width,
            n_per_side: self.n_per_side,
        }
    }

    pub fn options(&self) -> Result<FitOptions> {
        let mut frozen = [false; 8];
        for name in &self.frozen {
            let k = COEFF_NAMES
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| PipelineError::Config(format!("fit.frozen: unknown coefficient `{name}`")))?;
            frozen[k] = true;
        }
        Ok(FitOptions {
            bvp: BvpSolver {
                n_nodes: self.bvp_nodes,
                ..BvpSolver::default()
            },
            richardson: self.richardson,
            raw_amplitudes: self.raw_amplitudes,
            max_iter: self.max_iter,
            rel_tol: self.rel_tol,
            frozen,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiccatiConfig {
    /// Nodes with `ψ` below this fraction of its maximum are masked.
    pub mask_fraction: f64,
    /// Comparison region `ψ > region_fraction · max ψ`.
    pub region_fraction: f64,
    /// Measure how the residual responds to grid refinement.
    pub refine: bool,
    /// Coarse grid of the refinement study; the fine grid has `2n - 1` nodes. On the production
    /// grid the residual is limited by the ground-state tolerance, not by the grid.
    pub refinement_nodes: usize,
    /// Ground-state tolerance of the refinement study.
    pub refinement_tol: f64,
}

impl Default for RiccatiConfig {
    fn default() -> Self {
        Self {
            mask_fraction: 1e-6,
            region_fraction: 0.01,
            refine: true,
            refinement_nodes: 24,
            refinement_tol: 1e-14,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SusyConfig {
    pub half_width: f64,
    pub nodes: usize,
    pub mask_fraction: f64,
}

impl Default for SusyConfig {
    fn default() -> Self {
        Self {
            half_width: 8.0,
            nodes: 401,
            mask_fraction: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsConfig {
    pub energies: Vec<f64>,
    pub ensemble_size: usize,
    pub horizon: f64,
    pub dt: f64,
    pub renorm_every: usize,
    pub seed: u64,
    /// Number of ensemble members whose `λ(t)` trace is written.
    pub trace_records: usize,
    pub trace_points: usize,
    pub section: SectionSpec,
    pub section_energies: Vec<f64>,
    pub section_orbits: usize,
    pub section_crossings: usize,
    pub section_max_time: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            energies: vec![2.0, 4.0, 6.0, 8.0],
            ensemble_size: 500,
            horizon: 2e4,
            dt: 1e-3,
            renorm_every: 100,
            seed: 1,
            trace_records: 8,
            trace_points: 200,
            section: SectionSpec::default(),
            section_energies: vec![2.0, 6.0],
            section_orbits: 24,
            section_crossings: 400,
            section_max_time: 1e5,
        }
    }
}

impl DynamicsConfig {
    pub fn lyapunov_options(&self) -> LyapunovOptions {
        LyapunovOptions {
            dt: self.dt,
            renorm_every: self.renorm_every,
            trace_points: self.trace_points,
            ..LyapunovOptions::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    pub lambda_c: f64,
    pub sensitivity: Vec<f64>,
    pub near_zero: Window,
    pub positive: Window,
    /// Average all exponents in the mean-vs-energy fit instead of the chaotic subset.
    pub mean_over_all: bool,
}

impl Default for StatsConfig {
    fn default() -> Self {
        use qchaos_core::chaostats::{DEFAULT_LAMBDA_C, NEAR_ZERO_WINDOW, POSITIVE_WINDOW};
        let w = |(lo, hi, bins): (f64, f64, usize)| Window { lo, hi, bins };
        Self {
            lambda_c: DEFAULT_LAMBDA_C,
            sensitivity: vec![0.002, 0.01],
            near_zero: w(NEAR_ZERO_WINDOW),
            positive: w(POSITIVE_WINDOW),
            mean_over_all: false,
        }
    }
}

impl StatsConfig {
    pub fn summary_options(&self) -> qchaos_core::chaostats::SummaryOptions {
        qchaos_core::chaostats::SummaryOptions {
            lambda_c: self.lambda_c,
            sensitivity: self.sensitivity.clone(),
            positive_window: (self.positive.lo, self.positive.hi, self.positive.bins),
            mean_over_all: self.mean_over_all,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("qchaos-out"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub solver: SolverConfig,
    pub fit: FitConfig,
    pub riccati: RiccatiConfig,
    pub susy: SusyConfig,
    pub dynamics: DynamicsConfig,
    pub stats: StatsConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            PipelineError::Config(m) => PipelineError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Checks the preconditions of every module the pipeline calls.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Config(m));
        let m = &self.model;
        if m.couplings.is_empty() {
            return bad("model.couplings must list at least one v22 value".into());
        }
        for &v22 in &m.couplings {
            if !(v22.is_finite() && v22 >= 0.0) {
                return bad(format!("model.couplings: {v22} is not a non-negative number"));
            }
            m.action(v22).validate().map_err(|e| PipelineError::Config(format!("model: {e}")))?;
        }
        let s = &self.solver;
        self.solver.grid().map_err(|e| PipelineError::Config(format!("solver: {e}")))?;
        if !(s.dt > 0.0 && s.transition_time >= s.dt && s.ground_tol > 0.0 && s.check_every > 0 && s.max_time > 0.0) {
            return bad("solver: dt, ground_tol, check_every and max_time must be positive and transition_time >= dt".into());
        }
        let f = &self.fit;
        if f.n_per_side * f.n_per_side < qchaos_core::qaction::FitDataset::MIN_POINTS {
            return bad(format!(
                "fit.n_per_side = {} gives fewer than {} boundary points",
                f.n_per_side,
                qchaos_core::qaction::FitDataset::MIN_POINTS
            ));
        }
        if !(f.half_width > 0.0 && f.half_width < s.half_width) {
            return bad("fit.half_width must lie inside the solver grid".into());
        }
        if f.bvp_nodes < 16 || f.max_iter == 0 || !(f.rel_tol > 0.0) {
            return bad("fit: bvp_nodes >= 16, max_iter >= 1 and rel_tol > 0 are required".into());
        }
        if f.stencil_nodes == 0 {
            return bad("fit.stencil_nodes must be at least 1".into());
        }
        f.options()?;
        let r = &self.riccati;
        if !(r.mask_fraction > 0.0 && r.mask_fraction < 1.0 && r.region_fraction > 0.0 && r.region_fraction < 1.0) {
            return bad("riccati: mask_fraction and region_fraction must lie in (0, 1)".into());
        }
        if r.refine && (r.refinement_nodes < Grid2D::MIN_NODES || !(r.refinement_tol > 0.0)) {
            return bad(format!("riccati: refinement_nodes >= {} and refinement_tol > 0 are required", Grid2D::MIN_NODES));
        }
        if self.susy.nodes < 16 || !(self.susy.half_width > 0.0) {
            return bad("susy: need nodes >= 16 and a positive half_width".into());
        }
        let d = &self.dynamics;
        if d.energies.is_empty() || d.energies.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return bad("dynamics.energies must be positive".into());
        }
        if d.ensemble_size == 0 || !(d.horizon > 0.0) || !(d.dt > 0.0) || d.renorm_every == 0 {
            return bad("dynamics: ensemble_size, horizon, dt and renorm_every must be positive".into());
        }
        d.section.validate().map_err(|e| PipelineError::Config(format!("dynamics.section: {e}")))?;
        if d.section_crossings == 0 || !(d.section_max_time > 0.0) {
            return bad("dynamics: section_crossings and section_max_time must be positive".into());
        }
        let st = &self.stats;
        for w in [st.near_zero, st.positive] {
            if !(w.lo < w.hi) || w.bins < 2 {
                return bad("stats: histogram windows need lo < hi and at least 2 bins".into());
            }
        }
        if !st.lambda_c.is_finite() || st.sensitivity.iter().any(|c| !c.is_finite()) {
            return bad("stats: cutoffs must be finite".into());
        }
        Ok(())
    }
}

/// Hex SHA-256 of any serializable value, through its JSON form.
pub fn hash_of<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).unwrap_or_default();
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap_or_else(|e| panic!("{e}"));
        let text = cfg.to_toml().unwrap_or_default();
        let back = RunConfig::from_toml(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml().unwrap_or_default(), text);
    }

    #[test]
    fn partial_file_takes_defaults() {
        let cfg = RunConfig::from_toml("[model]\ncouplings = [0.0]\n[dynamics]\nensemble_size = 10\n")
            .unwrap_or_else(|e| panic!("{e}"));
        assert_eq!(cfg.model.couplings, vec![0.0]);
        assert_eq!(cfg.model.v2, 0.5);
        assert_eq!(cfg.dynamics.ensemble_size, 10);
        assert_eq!(cfg.dynamics.horizon, 2e4);
        assert_eq!(cfg.solver, SolverConfig::default());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in [
            "[model]\ncouplings = []\n",
            "[model]\ncouplings = [-1.0]\n",
            "[model]\ncouplings = [0.25]\nmass = 0.0\n",
            "[unknown]\nx = 1\n",
        ] {
            let err = RunConfig::from_toml(text).err();
            assert!(matches!(err, Some(PipelineError::Config(_))), "{text}: {err:?}");
        }
        let mut cfg = RunConfig::default();
        cfg.fit.frozen = vec!["v99".into()];
        assert!(matches!(cfg.validate(), Err(PipelineError::Config(_))));
    }

    #[test]
    fn hashes_separate_sections() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.dynamics.seed = 2;
        assert_eq!(hash_of(&a.fit), hash_of(&b.fit));
        assert_ne!(hash_of(&a.dynamics), hash_of(&b.dynamics));
    }
}
