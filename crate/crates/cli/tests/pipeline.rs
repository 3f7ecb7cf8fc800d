use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;

use qchaos_cli::artifact::{read_json, CsvData, Manifest};
use qchaos_cli::pipeline::{units, FitArtifact};
use qchaos_cli::plots::emit_plots;
use qchaos_cli::{Pipeline, PipelineError, RunConfig, Stage};

fn tiny_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.model.couplings = vec![0.25];
    cfg.solver.nodes = 64;
    cfg.fit.n_per_side = 4;
    cfg.fit.stencil_nodes = 1;
    cfg.fit.bvp_nodes = 33;
    cfg.fit.frozen = ["v11", "v13", "v24", "v44"].map(String::from).to_vec();
    cfg.riccati.refine = false;
    cfg.susy.nodes = 101;
    cfg.dynamics.energies = vec![2.0, 4.0, 6.0];
    cfg.dynamics.ensemble_size = 6;
    cfg.dynamics.horizon = 40.0;
    cfg.dynamics.section_energies = vec![2.0];
    cfg.dynamics.section_orbits = 2;
    cfg.dynamics.section_crossings = 10;
    cfg
}

fn ok<T>(r: Result<T, PipelineError>) -> T {
    r.unwrap_or_else(|e| panic!("{e}"))
}

/// One complete run shared by the read-only tests.
fn full_run() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap_or_else(|e| panic!("{e}"));
        ok(ok(Pipeline::new(tiny_config(), dir.path(), false)).run(Stage::All));
        dir
    })
    .path()
}

fn files(root: &Path, ext: &str) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap_or_else(|e| panic!("{e}")) {
            let p = entry.unwrap_or_else(|e| panic!("{e}")).path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == ext) {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}

fn mtime(p: &Path) -> std::time::SystemTime {
    std::fs::metadata(p)
        .and_then(|m| m.modified())
        .unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn fit_consumes_cached_amplitudes_without_recomputing_them() {
    let dir = tempfile::tempdir().unwrap_or_else(|e| panic!("{e}"));
    let p = ok(Pipeline::new(tiny_config(), dir.path(), false));
    ok(p.run(Stage::GroundState));
    ok(p.run(Stage::Amplitudes));
    let records = p.path(&units::amplitudes(0.25), "records.csv");
    let manifest = Manifest::path(dir.path(), &units::amplitudes(0.25));
    let before = (mtime(&records), mtime(&manifest));
    ok(p.run(Stage::Amplitudes));
    ok(p.run(Stage::FitAction));
    assert_eq!(before, (mtime(&records), mtime(&manifest)));

    let fit = p.path(&units::fit(0.25), "fit.json");
    let stamp = mtime(&fit);
    ok(p.run(Stage::FitAction));
    assert_eq!(stamp, mtime(&fit), "fresh unit was recomputed");

    // A changed fit setting invalidates only the fit.
    let mut cfg = tiny_config();
    cfg.fit.rel_tol = 1e-9;
    let p2 = ok(Pipeline::new(cfg, dir.path(), false));
    ok(p2.run(Stage::FitAction));
    assert_ne!(stamp, mtime(&fit));
    assert_eq!(before, (mtime(&records), mtime(&manifest)));
}

#[test]
fn missing_and_stale_dependencies_are_refused() {
    let dir = tempfile::tempdir().unwrap_or_else(|e| panic!("{e}"));
    let p = ok(Pipeline::new(tiny_config(), dir.path(), false));
    let err = p.run(Stage::FitAction).err();
    assert!(
        matches!(err, Some(PipelineError::MissingDependency { needs: "amplitudes", .. })),
        "{err:?}"
    );
    assert_eq!(err.map(|e| e.exit_code()), Some(3));

    ok(p.run(Stage::Amplitudes));
    let mut cfg = tiny_config();
    cfg.solver.transition_time = 4.0;
    let stale = ok(Pipeline::new(cfg.clone(), dir.path(), false));
    let err = stale.run(Stage::FitAction).err();
    assert!(matches!(err, Some(PipelineError::MissingDependency { .. })), "{err:?}");
    let forced = ok(Pipeline::new(cfg, dir.path(), true));
    ok(forced.run(Stage::FitAction));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = full_run();
    let b = tempfile::tempdir().unwrap_or_else(|e| panic!("{e}"));
    ok(ok(Pipeline::new(tiny_config(), b.path(), false)).run(Stage::All));
    let fa = files(a, "csv");
    let fb = files(b.path(), "csv");
    assert!(fa.len() > 20);
    assert_eq!(fa.len(), fb.len());
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.strip_prefix(a).ok(), y.strip_prefix(b.path()).ok());
        assert!(std::fs::read(x).ok() == std::fs::read(y).ok(), "{} differs", x.display());
    }
}

#[test]
fn csv_artifacts_follow_the_format_contract() {
    for path in files(full_run(), "csv") {
        let text = std::fs::read_to_string(&path).unwrap_or_default();
        assert!(text.ends_with('\n'), "{}", path.display());
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
        assert!(header.iter().all(|h| h.parse::<f64>().is_err()), "{}", path.display());
        for line in lines {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(cells.len(), header.len(), "{}: {line}", path.display());
            for c in cells {
                let Ok(v) = c.parse::<f64>() else { continue };
                let a = v.abs();
                let scientific = c.contains('e');
                if v != 0.0 && v.is_finite() {
                    assert_eq!(scientific, !(1e-4..=1e6).contains(&a), "{}: {c}", path.display());
                }
            }
        }
    }
}

#[test]
fn report_emits_the_parameter_table() {
    let root = full_run();
    let data = CsvData::read(&root.join("report/table1-v22-0.25.csv")).unwrap_or_else(|e| panic!("{e}"));
    assert_eq!(data.header, ["parameter", "classical", "quantum", "uncertainty"]);
    let names: Vec<&str> = data.rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, ["m", "log_norm", "v0", "v11", "v2", "v22", "v13", "v4", "v24", "v44"]);
    let fit: FitArtifact = read_json(&root.join("v22-0.25/fit/fit.json")).unwrap_or_else(|e| panic!("{e}"));
    assert_eq!(data.rows[5][1], "0.25");
    assert!((fit.fit.params.coeffs.v22 - 0.25).abs() < 0.02, "{:?}", fit.fit.params);
    // Frozen coefficients stay at their classical values.
    assert_eq!(fit.fit.params.coeffs.v44, 0.0);
}

#[test]
fn plot_data_covers_every_product() {
    let plots = full_run().join("plots");
    for f in ["index.json", "plot.py", "ground_state_surface-v22-0.25.csv", "quantum_potential_surface-v22-0.25.csv"] {
        assert!(plots.join(f).exists(), "{f}");
    }
    let section = CsvData::read(&plots.join("poincare_section-v22-0.25-classical-E2.csv")).unwrap_or_else(|e| panic!("{e}"));
    assert_eq!(section.header, ["orbit_id", "x", "px"]);
    let r = CsvData::read(&plots.join("chaotic_fraction_vs_energy-v22-0.25.csv")).unwrap_or_else(|e| panic!("{e}"));
    assert_eq!(r.header, ["E", "classical", "quantum"]);
    let e: Vec<&str> = r.rows.iter().map(|row| row[0].as_str()).collect();
    assert_eq!(e, ["2", "4", "6"]);
    assert_eq!(files(&plots, "csv").iter().filter(|p| p.to_string_lossy().contains("lambda_distribution")).count(), 12);
}

#[test]
fn plots_list_what_is_missing_and_emit_the_rest() {
    let dir = tempfile::tempdir().unwrap_or_else(|e| panic!("{e}"));
    let p = ok(Pipeline::new(tiny_config(), dir.path(), false));
    ok(p.run(Stage::GroundState));
    let summary = ok(emit_plots(&p));
    let written: Vec<&str> = summary.written.iter().map(|e| e.name.as_str()).collect();
    assert_eq!(written, ["ground_state_surface-v22-0.25"]);
    let missing: Vec<&str> = summary.missing.iter().map(|m| m.0.as_str()).collect();
    assert!(missing.contains(&"chaotic_fraction_vs_energy-v22-0.25"));
    assert!(missing.contains(&"lambda_distribution_positive-v22-0.25-quantum-E6"));
    assert!(missing.contains(&"quantum_potential_surface-v22-0.25"));
    assert!(dir.path().join("plots/plot.py").exists());
}

fn qchaos(args: &[&str], dir: &Path) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_qchaos"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "off")
        .stderr(std::process::Stdio::null())
        .env_remove("QCHAOS_OUT")
        .env_remove("QCHAOS_THREADS")
        .status()
        .ok()
        .and_then(|s| s.code())
        .unwrap_or(-1)
}

#[test]
fn command_line_exit_codes() {
    let dir = tempfile::tempdir().unwrap_or_else(|e| panic!("{e}"));
    let d = dir.path();
    let write = |name: &str, text: &str| std::fs::write(d.join(name), text).unwrap_or_else(|e| panic!("{e}"));
    write("bad_key.toml", "[model]\nmas = 1.0\n");
    write("bad_value.toml", "[dynamics]\nensemble_size = 0\n");
    write("ok.toml", &ok(tiny_config().to_toml()));
    assert_eq!(qchaos(&["--config", "bad_key.toml"], d), 1);
    assert_eq!(qchaos(&["--config", "bad_value.toml"], d), 1);
    assert_eq!(qchaos(&["--config", "absent.toml"], d), 1);
    assert_eq!(qchaos(&["--config", "ok.toml", "--threads", "0"], d), 1);
    assert_eq!(qchaos(&["--config", "ok.toml", "--stage", "stats", "--out", "o"], d), 3);
    assert_eq!(qchaos(&["--config", "ok.toml", "--stage", "susy1d", "--out", "o"], d), 0);
    assert!(d.join("o/susy1d/partner.csv").exists());
    assert_ne!(qchaos(&["--stage", "nonsense"], d), 0);
}
