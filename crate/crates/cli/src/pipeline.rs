//! Stage graph: ground-state → amplitudes → fit-action → riccati → dynamics → stats → report.
//!
//! Every stage unit lives in its own directory under the output root with a manifest holding
//! the hash of the configuration it depends on and the hashes of its input and output files.
//! A unit whose manifest still matches is not recomputed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use qchaos_core::chaostats::{self, ChaosSummary};
use qchaos_core::dynamics::{
    poincare_section, run_ensemble, EnsembleSpec, SectionAxis, ShellSampler, SystemKind,
};
use qchaos_core::qaction::{
    fit_quantum_action, fitted_quantum_potential, ground_state_1d, relative_rms_difference, riccati_quantum_potential,
    riccati_residual, susy_partner_1d, verify_energy_balance, verify_momentum_condition, ConditionReport, FitDataset,
    FitResult,
};
use qchaos_core::schrodinger::{transition_amplitudes_between, GroundStateSolver, AMPLITUDE_FLOOR};
use qchaos_core::{ActionParams, Grid2D, ScalarField2D, TransitionRecord, COEFF_NAMES};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::{fmt_num, read_json, relative, sha256_file, write_atomic, CsvData, CsvTable, Manifest};
use crate::config::{hash_of, RunConfig};
use crate::error::{PipelineError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, clap::ValueEnum)]
pub enum Stage {
    GroundState,
    Amplitudes,
    FitAction,
    Riccati,
    Susy1d,
    Poincare,
    Lyapunov,
    Stats,
    Report,
    All,
}

impl Stage {
    /// Execution order of `all`.
    pub const ORDER: [Stage; 9] = [
        Stage::GroundState,
        Stage::Amplitudes,
        Stage::FitAction,
        Stage::Riccati,
        Stage::Susy1d,
        Stage::Poincare,
        Stage::Lyapunov,
        Stage::Stats,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::GroundState => "ground-state",
            Stage::Amplitudes => "amplitudes",
            Stage::FitAction => "fit-action",
            Stage::Riccati => "riccati",
            Stage::Susy1d => "susy1d",
            Stage::Poincare => "poincare",
            Stage::Lyapunov => "lyapunov",
            Stage::Stats => "stats",
            Stage::Report => "report",
            Stage::All => "all",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Directory name of everything computed at one coupling.
pub fn coupling_dir(v22: f64) -> String {
    format!("v22-{}", fmt_num(v22))
}

pub fn ensemble_dir(system: SystemKind, energy: f64) -> String {
    format!("{system}-E{}", fmt_num(energy))
}

/// Unit directories relative to the output root.
pub mod units {
    use super::*;

    pub fn ground_state(v22: f64) -> String {
        format!("{}/ground_state", coupling_dir(v22))
    }
    pub fn amplitudes(v22: f64) -> String {
        format!("{}/amplitudes", coupling_dir(v22))
    }
    pub fn fit(v22: f64) -> String {
        format!("{}/fit", coupling_dir(v22))
    }
    pub fn riccati(v22: f64) -> String {
        format!("{}/riccati", coupling_dir(v22))
    }
    pub fn poincare(v22: f64, system: SystemKind, energy: f64) -> String {
        format!("{}/poincare/{}", coupling_dir(v22), ensemble_dir(system, energy))
    }
    pub fn lyapunov(v22: f64, system: SystemKind, energy: f64) -> String {
        format!("{}/lyapunov/{}", coupling_dir(v22), ensemble_dir(system, energy))
    }
    pub const SUSY: &str = "susy1d";
    pub const STATS: &str = "stats";
    pub const REPORT: &str = "report";
    pub const PLOTS: &str = "plots";
}

pub const SYSTEMS: [SystemKind; 2] = [SystemKind::Classical, SystemKind::Quantum];

/// Ground-state summary stored next to `psi.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundStateInfo {
    pub v22: f64,
    pub energy: f64,
    pub time: f64,
    pub grid: Grid2D,
}

/// Content of `fit.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitArtifact {
    pub v22: f64,
    pub transition_time: f64,
    pub classical: ActionParams,
    pub fit: FitResult,
    pub momentum: Option<ConditionReport>,
    pub energy_balance: Option<ConditionReport>,
}

impl FitArtifact {
    /// Action driving the real-time quantum dynamics: the constant `ṽ0` only shifts energies,
    /// so it is dropped and energies are measured from the minimum as in the classical system.
    pub fn dynamics_action(&self) -> ActionParams {
        let mut p = self.fit.params;
        p.coeffs.v0 = 0.0;
        p.log_norm = 0.0;
        p
    }
}

/// Content of `riccati.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiccatiArtifact {
    pub v22: f64,
    pub e_gr: f64,
    /// Relative RMS difference between the two routes to `m̃(Ṽ - Ṽ0)`.
    pub route_difference: f64,
    pub residual_rms: f64,
    pub refined: Option<RefinedResidual>,
}

/// Residual on a coarse grid and on its refinement, both with a tight ground-state tolerance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinedResidual {
    pub coarse_nodes: usize,
    pub coarse_rms: f64,
    pub fine_nodes: usize,
    pub fine_rms: f64,
}

/// Content of `susy.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SusyArtifact {
    /// Ground-state energy of the `y = 0` slice in units `ħ = 1`.
    pub energy: f64,
    /// Spread of `V₋ - (W_s² - W_s')` over the resolved nodes; zero for an exact ground state.
    pub riccati_spread: f64,
    /// Largest violation of `V₊ + V₋ = 2 W_s²`.
    pub sum_identity: f64,
    pub n_nodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFitRow {
    pub system: String,
    pub v22: f64,
    pub intercept: f64,
    pub slope: f64,
}

/// Content of `stats.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsArtifact {
    pub summaries: Vec<ChaosSummary>,
    pub linear_fits: Vec<LinearFitRow>,
}

impl StatsArtifact {
    pub fn summary(&self, system: SystemKind, v22: f64, energy: f64) -> Option<&ChaosSummary> {
        let name = system.to_string();
        self.summaries
            .iter()
            .find(|s| s.system == name && s.v22 == v22 && s.energy == energy)
    }

    pub fn linear_fit(&self, system: SystemKind, v22: f64) -> Option<&LinearFitRow> {
        let name = system.to_string();
        self.linear_fits.iter().find(|s| s.system == name && s.v22 == v22)
    }
}

type Outputs = Vec<(String, Vec<u8>)>;

pub struct Pipeline {
    pub cfg: RunConfig,
    pub root: PathBuf,
    pub force: bool,
}

impl Pipeline {
    pub fn new(cfg: RunConfig, root: impl Into<PathBuf>, force: bool) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            root: root.into(),
            force,
        })
    }

    pub fn run(&self, stage: Stage) -> Result<()> {
        match stage {
            Stage::All => Stage::ORDER.iter().try_for_each(|&s| self.run(s)),
            Stage::GroundState => self.each_coupling(|v| self.ground_state(v)),
            Stage::Amplitudes => self.each_coupling(|v| self.amplitudes(v)),
            Stage::FitAction => self.each_coupling(|v| self.fit_action(v)),
            Stage::Riccati => self.each_coupling(|v| self.riccati(v)),
            Stage::Susy1d => self.susy1d(),
            Stage::Poincare => self.each_coupling(|v| self.poincare(v)),
            Stage::Lyapunov => self.each_coupling(|v| self.lyapunov(v)),
            Stage::Stats => self.stats(),
            Stage::Report => self.report(),
        }
    }

    fn each_coupling(&self, f: impl Fn(f64) -> Result<()>) -> Result<()> {
        self.cfg.model.couplings.iter().try_for_each(|&v| f(v))
    }

    pub fn path(&self, unit: &str, file: &str) -> PathBuf {
        self.root.join(unit).join(file)
    }

    // Configuration hashes: each covers exactly the settings the unit's computation reads.

    fn hash_ground_state(&self, v22: f64) -> String {
        hash_of(&("ground-state", self.cfg.model.action(v22), &self.cfg.solver))
    }

    fn hash_amplitudes(&self, v22: f64) -> String {
        let f = &self.cfg.fit;
        hash_of(&(
            "amplitudes",
            self.cfg.model.action(v22),
            &self.cfg.solver,
            (f.half_width, f.n_per_side, f.stencil_nodes),
        ))
    }

    fn hash_fit(&self, v22: f64) -> String {
        hash_of(&("fit-action", self.cfg.model.action(v22), &self.cfg.fit))
    }

    fn hash_riccati(&self, v22: f64) -> String {
        hash_of(&("riccati", self.cfg.model.action(v22), &self.cfg.solver, &self.cfg.riccati))
    }

    fn hash_susy(&self) -> String {
        hash_of(&("susy1d", self.cfg.model.action(0.0), &self.cfg.susy))
    }

    fn hash_poincare(&self, v22: f64, system: SystemKind, energy: f64) -> String {
        let d = &self.cfg.dynamics;
        hash_of(&(
            "poincare",
            self.cfg.model.action(v22),
            system,
            energy,
            (d.dt, d.seed, &d.section, d.section_orbits, d.section_crossings, d.section_max_time),
        ))
    }

    fn hash_lyapunov(&self, v22: f64, system: SystemKind, energy: f64) -> String {
        let d = &self.cfg.dynamics;
        hash_of(&(
            "lyapunov",
            self.cfg.model.action(v22),
            system,
            energy,
            (d.ensemble_size, d.horizon, d.dt, d.renorm_every, d.seed, d.trace_records, d.trace_points),
        ))
    }

    fn hash_stats(&self) -> String {
        hash_of(&("stats", &self.cfg.model.couplings, &self.cfg.dynamics.energies, &self.cfg.stats))
    }

    fn hash_report(&self) -> String {
        hash_of(&("report", &self.cfg.model, &self.cfg.dynamics.energies))
    }

    /// The dependency unit must exist and have been produced under the current configuration.
    fn require(&self, stage: Stage, needs: Stage, unit: &str, expected: &str) -> Result<()> {
        let Some(m) = Manifest::load(&self.root, unit) else {
            return Err(PipelineError::MissingDependency {
                stage: stage.name(),
                needs: needs.name(),
                reason: format!("{} not found; run `--stage {needs}` first", Manifest::path(&self.root, unit).display()),
            });
        };
        if m.config_hash != expected {
            if self.force {
                log::warn!("{stage}: reusing {unit}, produced under a different configuration (--force)");
            } else {
                return Err(PipelineError::MissingDependency {
                    stage: stage.name(),
                    needs: needs.name(),
                    reason: format!("{unit} is stale for the current configuration; rerun `--stage {needs}` or pass --force"),
                });
            }
        }
        Ok(())
    }

    /// Run `compute` for one unit unless its manifest is still fresh.
    fn execute(
        &self,
        stage: Stage,
        unit: &str,
        config_hash: String,
        inputs: &[PathBuf],
        compute: impl FnOnce() -> Result<Outputs>,
    ) -> Result<()> {
        let mut input_hashes = BTreeMap::new();
        for p in inputs {
            input_hashes.insert(relative(&self.root, p), sha256_file(p)?);
        }
        if !self.force {
            if let Some(m) = Manifest::load(&self.root, unit) {
                if m.is_fresh(&self.root, &config_hash, &input_hashes) {
                    log::info!("{stage}: {unit} is up to date");
                    return Ok(());
                }
            }
        }
        log::info!("{stage}: computing {unit}");
        let started = std::time::Instant::now();
        let outputs = compute()?;
        let mut output_hashes = BTreeMap::new();
        for (name, bytes) in &outputs {
            let path = self.path(unit, name);
            write_atomic(&path, bytes)?;
            output_hashes.insert(relative(&self.root, &path), sha256_file(&path)?);
        }
        let manifest = Manifest {
            stage: stage.name().to_string(),
            unit: unit.to_string(),
            config_hash,
            inputs: input_hashes,
            outputs: output_hashes,
        };
        crate::artifact::write_json(&Manifest::path(&self.root, unit), &manifest)?;
        log::info!("{stage}: {unit} done in {:.1} s", started.elapsed().as_secs_f64());
        Ok(())
    }

    fn ground_state(&self, v22: f64) -> Result<()> {
        let unit = units::ground_state(v22);
        let action = self.cfg.model.action(v22);
        self.execute(Stage::GroundState, &unit, self.hash_ground_state(v22), &[], || {
            let grid = self.cfg.solver.grid()?;
            let gs = self.cfg.solver.ground_solver().solve(&action, grid)?;
            log::info!("v22 = {v22}: E_gr = {:.10}", gs.energy);
            let info = GroundStateInfo {
                v22,
                energy: gs.energy,
                time: gs.time,
                grid,
            };
            let potential = ScalarField2D::from_fn(grid, |x, y| action.potential(x, y));
            Ok(vec![
                ("psi.csv".into(), field_csv(&gs.psi)),
                ("potential.csv".into(), field_csv(&potential)),
                ("ground_state.json".into(), json_bytes(&info)?),
            ])
        })
    }

    /// Lattice points and their stencil neighbours, snapped to interior grid nodes.
    pub fn boundary_points(&self) -> Result<(Vec<[f64; 2]>, Vec<[f64; 2]>)> {
        let grid = self.cfg.solver.grid()?;
        let s = self.cfg.fit.stencil_nodes;
        let mut lattice = Vec::new();
        let mut targets = Vec::new();
        for p in self.cfg.fit.region().points() {
            let (i, j) = grid.nearest_interior_node(p[0], p[1])?;
            let node = [grid.x(i), grid.y(j)];
            if !lattice.contains(&node) {
                lattice.push(node);
            }
            let mut push = |ii: usize, jj: usize| {
                let q = [grid.x(ii), grid.y(jj)];
                if !targets.contains(&q) {
                    targets.push(q);
                }
            };
            push(i, j);
            if i < s + 1 || j < s + 1 || i + s + 1 >= grid.nx || j + s + 1 >= grid.ny {
                return Err(PipelineError::Config("fit lattice stencil reaches the grid boundary".into()));
            }
            push(i + s, j);
            push(i - s, j);
            push(i, j + s);
            push(i, j - s);
        }
        Ok((lattice, targets))
    }

    fn amplitudes(&self, v22: f64) -> Result<()> {
        let unit = units::amplitudes(v22);
        let action = self.cfg.model.action(v22);
        self.execute(Stage::Amplitudes, &unit, self.hash_amplitudes(v22), &[], || {
            let grid = self.cfg.solver.grid()?;
            let (lattice, targets) = self.boundary_points()?;
            let s = &self.cfg.solver;
            let records = transition_amplitudes_between(&action, grid, &lattice, &targets, s.transition_time, s.dt)?;
            let flagged = records.iter().filter(|r| r.underflow).count();
            if flagged > 0 {
                log::warn!("v22 = {v22}: {flagged} amplitudes at or below the underflow floor");
            }
            let mut table = CsvTable::new(&["x_in_x", "x_in_y", "x_fi_x", "x_fi_y", "T", "amplitude"]);
            for r in &records {
                table.row(&[r.x_in[0], r.x_in[1], r.x_fi[0], r.x_fi[1], r.t, r.amplitude]);
            }
            let mut pts = CsvTable::new(&["x", "y"]);
            for p in &lattice {
                pts.row(p);
            }
            Ok(vec![
                ("records.csv".into(), table.into_bytes()),
                ("lattice.csv".into(), pts.into_bytes()),
            ])
        })
    }

    pub fn read_records(&self, v22: f64) -> Result<(Vec<TransitionRecord>, Vec<[f64; 2]>)> {
        let unit = units::amplitudes(v22);
        let path = self.path(&unit, "records.csv");
        let rows = CsvData::read(&path)?.numbers(&path, &["x_in_x", "x_in_y", "x_fi_x", "x_fi_y", "T", "amplitude"])?;
        let records = rows
            .iter()
            .map(|r| TransitionRecord {
                x_in: [r[0], r[1]],
                x_fi: [r[2], r[3]],
                t: r[4],
                amplitude: r[5],
                underflow: r[5] <= AMPLITUDE_FLOOR,
            })
            .collect();
        let lpath = self.path(&unit, "lattice.csv");
        let lattice = CsvData::read(&lpath)?
            .numbers(&lpath, &["x", "y"])?
            .into_iter()
            .map(|r| [r[0], r[1]])
            .collect();
        Ok((records, lattice))
    }

    fn fit_action(&self, v22: f64) -> Result<()> {
        let unit = units::fit(v22);
        let amp = units::amplitudes(v22);
        self.require(Stage::FitAction, Stage::Amplitudes, &amp, &self.hash_amplitudes(v22))?;
        let inputs = [self.path(&amp, "records.csv"), self.path(&amp, "lattice.csv")];
        self.execute(Stage::FitAction, &unit, self.hash_fit(v22), &inputs, || {
            let (records, lattice) = self.read_records(v22)?;
            let region = self.cfg.fit.region();
            let on_lattice: Vec<TransitionRecord> = records
                .iter()
                .filter(|r| lattice.contains(&r.x_in) && lattice.contains(&r.x_fi))
                .copied()
                .collect();
            let data = FitDataset::new(on_lattice, region)?;
            let opts = self.cfg.fit.options()?;
            let classical = self.cfg.model.action(v22);
            let fit = fit_quantum_action(&data, &classical, &opts)?;
            let all = FitDataset::new(records, region)?;
            let momentum = verify_momentum_condition(&fit.params, &all, &opts, Some(&lattice))
                .map_err(|e| log::warn!("v22 = {v22}: momentum condition not evaluated: {e}"))
                .ok();
            let energy_balance = verify_energy_balance(&fit.params, &all, Some(&lattice))
                .map_err(|e| log::warn!("v22 = {v22}: energy balance not evaluated: {e}"))
                .ok();
            let artifact = FitArtifact {
                v22,
                transition_time: data.transition_time(),
                classical,
                fit,
                momentum,
                energy_balance,
            };
            Ok(vec![("fit.json".into(), json_bytes(&artifact)?)])
        })
    }

    pub fn read_fit(&self, v22: f64) -> Result<FitArtifact> {
        read_json(&self.path(&units::fit(v22), "fit.json"))
    }

    pub fn read_ground_state(&self, v22: f64) -> Result<(ScalarField2D, GroundStateInfo)> {
        let unit = units::ground_state(v22);
        let info: GroundStateInfo = read_json(&self.path(&unit, "ground_state.json"))?;
        let path = self.path(&unit, "psi.csv");
        let values: Vec<f64> = CsvData::read(&path)?
            .numbers(&path, &["value"])?
            .into_iter()
            .map(|r| r[0])
            .collect();
        let psi = ScalarField2D::from_values(info.grid, values).map_err(|e| PipelineError::artifact(&path, e))?;
        Ok((psi, info))
    }

    fn riccati(&self, v22: f64) -> Result<()> {
        let unit = units::riccati(v22);
        let (gs, fit) = (units::ground_state(v22), units::fit(v22));
        self.require(Stage::Riccati, Stage::GroundState, &gs, &self.hash_ground_state(v22))?;
        self.require(Stage::Riccati, Stage::FitAction, &fit, &self.hash_fit(v22))?;
        let inputs = [
            self.path(&gs, "psi.csv"),
            self.path(&gs, "ground_state.json"),
            self.path(&fit, "fit.json"),
        ];
        self.execute(Stage::Riccati, &unit, self.hash_riccati(v22), &inputs, || {
            let (psi, info) = self.read_ground_state(v22)?;
            let fit = self.read_fit(v22)?;
            let rc = &self.cfg.riccati;
            let quantum = riccati_quantum_potential(&psi, rc.mask_fraction)?;
            let fitted = fitted_quantum_potential(&fit.fit.params, &quantum);
            let route_difference = relative_rms_difference(&quantum, &fitted, &psi, rc.region_fraction)?;
            let classical = self.cfg.model.action(v22);
            let residual_rms_of = |psi: &ScalarField2D, e: f64| -> Result<(qchaos_core::qaction::MaskedField, f64)> {
                let res = riccati_residual(psi, &classical, e, rc.mask_fraction)?;
                let cut = rc.region_fraction * psi.max();
                let rms = res
                    .rms_where(|k| psi.values[k] > cut)
                    .ok_or(qchaos_core::Error::AllMasked)?;
                Ok((res, rms))
            };
            let (residual, residual_rms) = residual_rms_of(&psi, info.energy)?;
            let refined = if rc.refine {
                let solver = GroundStateSolver {
                    tol: rc.refinement_tol,
                    ..self.cfg.solver.ground_solver()
                };
                let coarse = Grid2D::square(self.cfg.solver.half_width, rc.refinement_nodes)?;
                let mut rms = [0.0; 2];
                for (k, grid) in [coarse, coarse.refined()].into_iter().enumerate() {
                    let gs = solver.solve(&classical, grid)?;
                    rms[k] = residual_rms_of(&gs.psi, gs.energy)?.1;
                }
                Some(RefinedResidual {
                    coarse_nodes: coarse.nx,
                    coarse_rms: rms[0],
                    fine_nodes: coarse.refined().nx,
                    fine_rms: rms[1],
                })
            } else {
                None
            };
            log::info!("v22 = {v22}: route difference {route_difference:.3e}, Riccati residual {residual_rms:.3e}");
            let mut qp = CsvTable::new(&["x", "y", "riccati", "fitted"]);
            let mut rs = CsvTable::new(&["x", "y", "value"]);
            let g = psi.grid;
            for i in 0..g.nx {
                for j in 0..g.ny {
                    let k = g.index(i, j);
                    if quantum.valid[k] {
                        qp.row(&[g.x(i), g.y(j), quantum.field.values[k], fitted.field.values[k]]);
                    }
                    if residual.valid[k] {
                        rs.row(&[g.x(i), g.y(j), residual.field.values[k]]);
                    }
                }
            }
            let artifact = RiccatiArtifact {
                v22,
                e_gr: info.energy,
                route_difference,
                residual_rms,
                refined,
            };
            Ok(vec![
                ("quantum_potential.csv".into(), qp.into_bytes()),
                ("residual.csv".into(), rs.into_bytes()),
                ("riccati.json".into(), json_bytes(&artifact)?),
            ])
        })
    }

    /// Supersymmetric partner of the `y = 0` slice of the classical potential (`ħ = 2m = 1` units).
    fn susy1d(&self) -> Result<()> {
        let action = self.cfg.model.action(0.0);
        self.execute(Stage::Susy1d, units::SUSY, self.hash_susy(), &[], || {
            let sc = &self.cfg.susy;
            let two_m = 2.0 * action.mass;
            let (psi, e) = ground_state_1d(|x| two_m * action.potential(x, 0.0), -sc.half_width, sc.half_width, sc.nodes)?;
            let v_minus: Vec<f64> = (0..psi.values.len())
                .map(|k| two_m * action.potential(psi.x(k), 0.0) - e)
                .collect();
            let s = susy_partner_1d(&psi, &v_minus, sc.mask_fraction)?;
            let (lo, hi) = s
                .riccati_residual
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(r), hi.max(r)));
            let sum_identity = (0..s.x.len())
                .map(|k| (s.v_plus[k] + s.v_minus[k] - 2.0 * s.superpotential[k].powi(2)).abs())
                .fold(0.0, f64::max);
            let mut t = CsvTable::new(&["x", "superpotential", "v_minus", "v_plus", "riccati_residual"]);
            for k in 0..s.x.len() {
                t.row(&[s.x[k], s.superpotential[k], s.v_minus[k], s.v_plus[k], s.riccati_residual[k]]);
            }
            let artifact = SusyArtifact {
                energy: e / two_m,
                riccati_spread: hi - lo,
                sum_identity,
                n_nodes: s.x.len(),
            };
            Ok(vec![("partner.csv".into(), t.into_bytes()), ("susy.json".into(), json_bytes(&artifact)?)])
        })
    }

    /// Action of one system, with the fit as a dependency for the quantum one.
    fn system_action(&self, stage: Stage, v22: f64, system: SystemKind) -> Result<(ActionParams, Vec<PathBuf>)> {
        match system {
            SystemKind::Classical => Ok((self.cfg.model.action(v22), Vec::new())),
            SystemKind::Quantum => {
                let unit = units::fit(v22);
                self.require(stage, Stage::FitAction, &unit, &self.hash_fit(v22))?;
                Ok((self.read_fit(v22)?.dynamics_action(), vec![self.path(&unit, "fit.json")]))
            }
        }
    }

    fn poincare(&self, v22: f64) -> Result<()> {
        let d = &self.cfg.dynamics;
        for system in SYSTEMS {
            for &energy in &d.section_energies {
                let (action, inputs) = self.system_action(Stage::Poincare, v22, system)?;
                let unit = units::poincare(v22, system, energy);
                self.execute(Stage::Poincare, &unit, self.hash_poincare(v22, system, energy), &inputs, || {
                    let sampler = ShellSampler::new(&action, energy)?;
                    let orbits = (0..d.section_orbits as u64)
                        .into_par_iter()
                        .map(|k| {
                            let s0 = sampler.sample(d.seed, k)?;
                            poincare_section(&action, s0, &d.section, d.section_crossings, d.dt, d.section_max_time)
                        })
                        .collect::<qchaos_core::Result<Vec<_>>>()?;
                    let (q, p) = match d.section.axis {
                        SectionAxis::Y => ("x", "px"),
                        SectionAxis::X => ("y", "py"),
                    };
                    let mut t = CsvTable::new(&["orbit_id", "crossing_index", q, p]);
                    let mut incomplete = 0;
                    let mut max_energy_error = 0.0f64;
                    for (id, o) in orbits.iter().enumerate() {
                        incomplete += usize::from(!o.complete);
                        max_energy_error = max_energy_error.max(o.max_energy_error);
                        for (c, pt) in o.points.iter().enumerate() {
                            t.row(&[id as f64, c as f64, pt.q, pt.p]);
                        }
                    }
                    if incomplete > 0 {
                        log::warn!("{unit}: {incomplete} orbits hit the time cap before {} crossings", d.section_crossings);
                    }
                    let info = serde_json::json!({
                        "energy": energy,
                        "orbits": orbits.len(),
                        "incomplete": incomplete,
                        "max_energy_error": max_energy_error,
                    });
                    Ok(vec![("points.csv".into(), t.into_bytes()), ("section.json".into(), json_bytes(&info)?)])
                })?;
            }
        }
        Ok(())
    }

    fn lyapunov(&self, v22: f64) -> Result<()> {
        let d = &self.cfg.dynamics;
        let opts = d.lyapunov_options();
        for system in SYSTEMS {
            for &energy in &d.energies {
                let (action, inputs) = self.system_action(Stage::Lyapunov, v22, system)?;
                let unit = units::lyapunov(v22, system, energy);
                self.execute(Stage::Lyapunov, &unit, self.hash_lyapunov(v22, system, energy), &inputs, || {
                    let spec = EnsembleSpec {
                        system,
                        action,
                        energy,
                        v22,
                        n: d.ensemble_size,
                        horizon: d.horizon,
                        seed: d.seed,
                    };
                    let step = (d.ensemble_size / 10).max(1);
                    let progress = |done: usize, n: usize| {
                        if done % step == 0 || done == n {
                            log::info!("{unit}: {done}/{n}");
                        }
                    };
                    let ens = run_ensemble(&spec, &opts, Some(&progress))?;
                    let mut t = CsvTable::new(&["seed", "x0", "y0", "px0", "py0", "E", "lambda"]);
                    for r in &ens.records {
                        let s = r.initial;
                        t.row(&[r.index as f64, s.x, s.y, s.px, s.py, r.energy, r.lambda]);
                    }
                    let mut tr = CsvTable::new(&["seed", "t", "lambda"]);
                    for r in ens.records.iter().take(d.trace_records) {
                        for p in &r.trace {
                            tr.row(&[r.index as f64, p.t, p.lambda]);
                        }
                    }
                    Ok(vec![
                        ("ensemble.csv".into(), t.into_bytes()),
                        ("traces.csv".into(), tr.into_bytes()),
                        ("failures.json".into(), json_bytes(&ens.failures)?),
                    ])
                })?;
            }
        }
        Ok(())
    }

    pub fn read_lambdas(&self, v22: f64, system: SystemKind, energy: f64) -> Result<Vec<f64>> {
        let path = self.path(&units::lyapunov(v22, system, energy), "ensemble.csv");
        Ok(CsvData::read(&path)?
            .numbers(&path, &["lambda"])?
            .into_iter()
            .map(|r| r[0])
            .collect())
    }

    fn stats(&self) -> Result<()> {
        let d = &self.cfg.dynamics;
        let mut inputs = Vec::new();
        for &v22 in &self.cfg.model.couplings {
            for system in SYSTEMS {
                for &energy in &d.energies {
                    let unit = units::lyapunov(v22, system, energy);
                    self.require(Stage::Stats, Stage::Lyapunov, &unit, &self.hash_lyapunov(v22, system, energy))?;
                    inputs.push(self.path(&unit, "ensemble.csv"));
                }
            }
        }
        self.execute(Stage::Stats, units::STATS, self.hash_stats(), &inputs, || {
            let st = &self.cfg.stats;
            let opts = st.summary_options();
            let mut outputs: Outputs = Vec::new();
            let mut summaries = Vec::new();
            let mut linear_fits = Vec::new();
            for &v22 in &self.cfg.model.couplings {
                for system in SYSTEMS {
                    let mut per_energy = Vec::new();
                    for &energy in &d.energies {
                        let lambdas = self.read_lambdas(v22, system, energy)?;
                        let stem = format!("{}-{}", coupling_dir(v22), ensemble_dir(system, energy));
                        if lambdas.is_empty() {
                            log::warn!("stats: {stem} has no exponents");
                            continue;
                        }
                        for (name, w) in [("near_zero", st.near_zero), ("positive", st.positive)] {
                            let h = chaostats::histogram(&lambdas, w.lo, w.hi, w.bins)?;
                            let mut t = CsvTable::new(&["bin_lo", "bin_hi", "count", "density"]);
                            for (k, dens) in h.densities().iter().enumerate() {
                                t.row(&[h.edges[k], h.edges[k + 1], h.counts[k] as f64, *dens]);
                            }
                            outputs.push((format!("hist/{stem}-{name}.csv"), t.into_bytes()));
                        }
                        let mut c = CsvTable::new(&["lambda", "p"]);
                        for p in chaostats::cumulative(&lambdas) {
                            c.row(&[p.lambda, p.p]);
                        }
                        outputs.push((format!("cdf/{stem}.csv"), c.into_bytes()));
                        let s = chaostats::summarize(&system.to_string(), v22, energy, &lambdas, &opts)?;
                        per_energy.push(s.clone());
                        summaries.push(s);
                    }
                    match chaostats::linear_fit_mean_vs_e(&per_energy) {
                        Ok((intercept, slope)) => linear_fits.push(LinearFitRow {
                            system: system.to_string(),
                            v22,
                            intercept,
                            slope,
                        }),
                        Err(e) => log::warn!("stats: no linear fit for {system} v22 = {v22}: {e}"),
                    }
                }
            }
            let mut header = vec!["system", "v22", "E", "lambda_c", "R"];
            let sens: Vec<String> = st.sensitivity.iter().map(|c| format!("R_at_{}", fmt_num(*c))).collect();
            header.extend(sens.iter().map(String::as_str));
            header.extend(["mean", "sigma", "eps_fit", "n"]);
            let mut t = CsvTable::new(&header);
            for s in &summaries {
                let mut row = vec![s.system.clone(), fmt_num(s.v22), fmt_num(s.energy), fmt_num(s.lambda_c), fmt_num(s.ratio)];
                row.extend(s.ratio_sensitivity.iter().map(|(_, r)| fmt_num(*r)));
                let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), fmt_num);
                row.push(opt(s.mean));
                row.push(opt(s.gaussian.as_ref().map(|g| g.sigma)));
                row.push(opt(s.gaussian.as_ref().map(|g| g.relative_error)));
                row.push(s.n.to_string());
                t.row_text(&row);
            }
            outputs.push(("summary.csv".into(), t.into_bytes()));
            let mut lf = CsvTable::new(&["system", "v22", "lambda0", "slope"]);
            for r in &linear_fits {
                lf.row_text(&[r.system.clone(), fmt_num(r.v22), fmt_num(r.intercept), fmt_num(r.slope)]);
            }
            outputs.push(("linear_fit.csv".into(), lf.into_bytes()));
            outputs.push(("stats.json".into(), json_bytes(&StatsArtifact { summaries, linear_fits })?));
            Ok(outputs)
        })
    }

    pub fn read_stats(&self) -> Result<StatsArtifact> {
        read_json(&self.path(units::STATS, "stats.json"))
    }

    fn report(&self) -> Result<()> {
        let mut inputs = Vec::new();
        for &v22 in &self.cfg.model.couplings {
            let unit = units::fit(v22);
            self.require(Stage::Report, Stage::FitAction, &unit, &self.hash_fit(v22))?;
            inputs.push(self.path(&unit, "fit.json"));
            for (file, unit) in [
                ("ground_state.json", units::ground_state(v22)),
                ("riccati.json", units::riccati(v22)),
            ] {
                let p = self.path(&unit, file);
                if p.exists() {
                    inputs.push(p);
                }
            }
        }
        let stats = self.path(units::STATS, "stats.json");
        if stats.exists() {
            inputs.push(stats);
        }
        self.execute(Stage::Report, units::REPORT, self.hash_report(), &inputs, || {
            let mut outputs: Outputs = Vec::new();
            let mut md = String::from("# Run report\n");
            for &v22 in &self.cfg.model.couplings {
                let fit = self.read_fit(v22)?;
                outputs.push((format!("table1-{}.csv", coupling_dir(v22)), table1(&fit)));
                md.push_str(&format!("\n## v22 = {}\n\n", fmt_num(v22)));
                let p = &fit.fit.params;
                md.push_str(&format!(
                    "Fitted action: m = {:.6}, v0 = {:.6}, v2 = {:.6}, v22 = {:.6}, v4 = {:.6} (eps = {:.3e}, {} pairs)\n",
                    p.mass, p.coeffs.v0, p.coeffs.v2, p.coeffs.v22, p.coeffs.v4, fit.fit.residual, fit.fit.n_pairs
                ));
                if let Ok((_, info)) = self.read_ground_state(v22) {
                    md.push_str(&format!("Ground-state energy: {:.8}\n", info.energy));
                }
                if let Some(m) = &fit.momentum {
                    md.push_str(&format!("Momentum condition: max deviation {:.3e}\n", m.max_deviation));
                }
                if let Some(e) = &fit.energy_balance {
                    md.push_str(&format!("Energy balance: max deviation {:.3e}\n", e.max_deviation));
                }
                if let Ok(r) = read_json::<RiccatiArtifact>(&self.path(&units::riccati(v22), "riccati.json")) {
                    md.push_str(&format!(
                        "Riccati: route difference {:.3e}, residual RMS {:.3e}\n",
                        r.route_difference, r.residual_rms
                    ));
                    if let Some(f) = &r.refined {
                        md.push_str(&format!(
                            "Residual under refinement: {:.3e} on {} nodes, {:.3e} on {} nodes\n",
                            f.coarse_rms, f.coarse_nodes, f.fine_rms, f.fine_nodes
                        ));
                    }
                }
            }
            if let Ok(stats) = self.read_stats() {
                md.push_str("\n## Chaotic fraction\n\n| v22 | E | R classical | R quantum |\n|---|---|---|---|\n");
                for &v22 in &self.cfg.model.couplings {
                    for &e in &self.cfg.dynamics.energies {
                        let r = |s: SystemKind| {
                            stats.summary(s, v22, e).map_or_else(|| "-".to_string(), |x| format!("{:.4}", x.ratio))
                        };
                        md.push_str(&format!(
                            "| {} | {} | {} | {} |\n",
                            fmt_num(v22),
                            fmt_num(e),
                            r(SystemKind::Classical),
                            r(SystemKind::Quantum)
                        ));
                    }
                }
            }
            outputs.push(("report.md".into(), md.into_bytes()));
            Ok(outputs)
        })?;
        crate::plots::emit_plots(self)?;
        Ok(())
    }
}

/// Table with classical and fitted columns, one row per action parameter.
pub fn table1(fit: &FitArtifact) -> Vec<u8> {
    let mut t = CsvTable::new(&["parameter", "classical", "quantum", "uncertainty"]);
    let (c, q, u) = (&fit.classical, &fit.fit.params, &fit.fit.uncertainty);
    t.row_text(&["m".into(), fmt_num(c.mass), fmt_num(q.mass), fmt_num(u.mass)]);
    t.row_text(&["log_norm".into(), fmt_num(c.log_norm), fmt_num(q.log_norm), "nan".into()]);
    let (ca, qa, ua) = (c.coeffs.to_array(), q.coeffs.to_array(), u.coeffs.to_array());
    for k in 0..COEFF_NAMES.len() {
        t.row_text(&[COEFF_NAMES[k].into(), fmt_num(ca[k]), fmt_num(qa[k]), fmt_num(ua[k])]);
    }
    t.into_bytes()
}

fn field_csv(f: &ScalarField2D) -> Vec<u8> {
    let mut t = CsvTable::new(&["x", "y", "value"]);
    for (x, y, v) in f.iter_nodes() {
        t.row(&[x, y, v]);
    }
    t.into_bytes()
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| PipelineError::Config(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Output root: the explicit directory if given, else the configured one.
pub fn output_root(cfg: &RunConfig, explicit: Option<&Path>) -> PathBuf {
    explicit.map_or_else(|| cfg.output.dir.clone(), Path::to_path_buf)
}
