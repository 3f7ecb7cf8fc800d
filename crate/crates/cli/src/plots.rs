//! Plot-ready data files and a generic matplotlib script that renders them.
//!
//! Every plot gets its own CSV under `plots/` plus an entry in `plots/index.json`.
//! A plot whose source artifact is missing is listed in [`PlotSummary::missing`];
//! the rest are still written.

use std::path::Path;

use qchaos_core::dynamics::SectionAxis;
use serde::Serialize;

use crate::artifact::{fmt_num, write_atomic, write_json, CsvData, CsvTable};
use crate::error::Result;
use crate::pipeline::{coupling_dir, ensemble_dir, units, Pipeline, SYSTEMS};

pub const SCRIPT: &str = include_str!("plot.py");

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlotEntry {
    pub name: String,
    /// `surface`, `lines`, `scatter` or `bars`.
    pub kind: &'static str,
    pub file: String,
    pub x: String,
    pub y: Vec<String>,
    /// Column splitting the rows into separate series (traces, orbits).
    pub group: Option<String>,
    pub title: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PlotSummary {
    pub written: Vec<PlotEntry>,
    /// `(plot name, reason)`.
    pub missing: Vec<(String, String)>,
}

impl PlotSummary {
    fn skip(&mut self, name: impl Into<String>, reason: impl std::fmt::Display) {
        self.missing.push((name.into(), reason.to_string()));
    }
}

struct Emitter {
    dir: std::path::PathBuf,
    summary: PlotSummary,
}

impl Emitter {
    /// Copy selected columns of `source` into a plot file.
    fn columns(&mut self, mut entry: PlotEntry, source: &Path, columns: &[(&str, &str)]) -> Result<()> {
        if !source.exists() {
            self.summary.skip(entry.name, format!("{} not found", source.display()));
            return Ok(());
        }
        let data = CsvData::read(source)?;
        let names: Vec<&str> = columns.iter().map(|c| c.0).collect();
        let rows = data.numbers(source, &names)?;
        if rows.is_empty() {
            self.summary.skip(entry.name, format!("{} has no rows", source.display()));
            return Ok(());
        }
        let header: Vec<&str> = columns.iter().map(|c| c.1).collect();
        let mut t = CsvTable::new(&header);
        for r in &rows {
            t.row(r);
        }
        entry.file = format!("{}.csv", entry.name);
        write_atomic(&self.dir.join(&entry.file), &t.into_bytes())?;
        self.summary.written.push(entry);
        Ok(())
    }

    fn table(&mut self, mut entry: PlotEntry, table: CsvTable) -> Result<()> {
        entry.file = format!("{}.csv", entry.name);
        write_atomic(&self.dir.join(&entry.file), &table.into_bytes())?;
        self.summary.written.push(entry);
        Ok(())
    }
}

fn entry(name: String, kind: &'static str, x: &str, y: &[&str], group: Option<&str>, title: String) -> PlotEntry {
    PlotEntry {
        name,
        kind,
        file: String::new(),
        x: x.to_string(),
        y: y.iter().map(|s| s.to_string()).collect(),
        group: group.map(str::to_string),
        title,
    }
}

/// Write every plot whose inputs exist, the index and the plotting script.
pub fn emit_plots(p: &Pipeline) -> Result<PlotSummary> {
    let mut e = Emitter {
        dir: p.root.join(units::PLOTS),
        summary: PlotSummary::default(),
    };
    let cfg = &p.cfg;
    let d = &cfg.dynamics;
    for &v22 in &cfg.model.couplings {
        let c = coupling_dir(v22);
        let tag = format!("v22 = {}", fmt_num(v22));
        e.columns(
            entry(format!("ground_state_surface-{c}"), "surface", "x", &["psi"], None, format!("Ground state, {tag}")),
            &p.path(&units::ground_state(v22), "psi.csv"),
            &[("x", "x"), ("y", "y"), ("value", "psi")],
        )?;
        e.columns(
            entry(
                format!("quantum_potential_surface-{c}"),
                "surface",
                "x",
                &["riccati", "fitted"],
                None,
                format!("Quantum potential m(V - V0), {tag}"),
            ),
            &p.path(&units::riccati(v22), "quantum_potential.csv"),
            &[("x", "x"), ("y", "y"), ("riccati", "riccati"), ("fitted", "fitted")],
        )?;
        let (q, pq) = match d.section.axis {
            SectionAxis::Y => ("x", "px"),
            SectionAxis::X => ("y", "py"),
        };
        for system in SYSTEMS {
            for &energy in &d.section_energies {
                let stem = format!("{c}-{}", ensemble_dir(system, energy));
                e.columns(
                    entry(
                        format!("poincare_section-{stem}"),
                        "scatter",
                        q,
                        &[pq],
                        Some("orbit_id"),
                        format!("Poincare section, {system}, {tag}, E = {}", fmt_num(energy)),
                    ),
                    &p.path(&units::poincare(v22, system, energy), "points.csv"),
                    &[("orbit_id", "orbit_id"), (q, q), (pq, pq)],
                )?;
            }
            for &energy in &d.energies {
                let stem = format!("{c}-{}", ensemble_dir(system, energy));
                e.columns(
                    entry(
                        format!("lyapunov_traces-{stem}"),
                        "lines",
                        "t",
                        &["lambda"],
                        Some("seed"),
                        format!("Finite-time Lyapunov exponent, {system}, {tag}, E = {}", fmt_num(energy)),
                    ),
                    &p.path(&units::lyapunov(v22, system, energy), "traces.csv"),
                    &[("seed", "seed"), ("t", "t"), ("lambda", "lambda")],
                )?;
                for window in ["near_zero", "positive"] {
                    e.columns(
                        entry(
                            format!("lambda_distribution_{window}-{stem}"),
                            "bars",
                            "bin_lo",
                            &["density"],
                            None,
                            format!("Lyapunov exponent distribution, {system}, {tag}, E = {}", fmt_num(energy)),
                        ),
                        &p.path(units::STATS, &format!("hist/{stem}-{window}.csv")),
                        &[("bin_lo", "bin_lo"), ("bin_hi", "bin_hi"), ("density", "density")],
                    )?;
                }
            }
        }
    }
    match p.read_stats() {
        Ok(stats) => {
            for &v22 in &cfg.model.couplings {
                let name = format!("chaotic_fraction_vs_energy-{}", coupling_dir(v22));
                let mut t = CsvTable::new(&["E", "classical", "quantum"]);
                let mut complete = true;
                for &energy in &d.energies {
                    let r: Vec<f64> = SYSTEMS
                        .iter()
                        .filter_map(|&s| stats.summary(s, v22, energy).map(|x| x.ratio))
                        .collect();
                    if r.len() == 2 {
                        t.row(&[energy, r[0], r[1]]);
                    } else {
                        complete = false;
                    }
                }
                if complete {
                    e.table(
                        entry(
                            name,
                            "lines",
                            "E",
                            &["classical", "quantum"],
                            None,
                            format!("Chaotic fraction of phase space, v22 = {}", fmt_num(v22)),
                        ),
                        t,
                    )?;
                } else {
                    e.summary.skip(name, "ensemble summary missing for some energy");
                }
            }
        }
        Err(err) => {
            for &v22 in &cfg.model.couplings {
                e.summary
                    .skip(format!("chaotic_fraction_vs_energy-{}", coupling_dir(v22)), &err);
            }
        }
    }
    let mut summary = e.summary;
    write_json(&e.dir.join("index.json"), &summary.written)?;
    write_atomic(&e.dir.join("plot.py"), SCRIPT.as_bytes())?;
    if !summary.missing.is_empty() {
        let names: Vec<&str> = summary.missing.iter().map(|m| m.0.as_str()).collect();
        log::warn!("plots: {} skipped: {}", names.len(), names.join(", "));
    }
    summary.missing.sort();
    Ok(summary)
}
