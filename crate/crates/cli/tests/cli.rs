use std::path::{Path, PathBuf};
use std::process::Command;

use gradflow_cli::config::{Duration, InitialSpec, RunConfig, SnapshotFormat, SourceSpec, TableauSource};
use gradflow_cli::experiments::{
    accuracy_space, accuracy_time, build_space, build_stepper, initial_state, load_state, save_state, simulate,
    snapshot_steps,
};
use gradflow_cli::output::read_energy_csv;
use gradflow_core::BoundaryKind;
use proptest::prelude::*;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn gradflow(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_gradflow"))
        .args(args)
        .output()
        .expect("failed to launch gradflow")
}

/// Small rolls run writing into `dir`.
fn small_rolls(dir: &Path) -> RunConfig {
    let mut cfg = RunConfig::from_file(&configs_dir().join("rolls.cfg")).unwrap();
    cfg.mesh.cells = vec![8, 8];
    cfg.mesh.upper = vec![30.0, 30.0];
    cfg.time.tau = 0.5;
    cfg.time.duration = Duration::Steps(6);
    cfg.output.dir = dir.to_path_buf();
    cfg.output.snapshot_times = vec![1.0, 3.0];
    cfg.output.snapshot_format = SnapshotFormat::Both;
    cfg
}

#[test]
fn presets_parse_validate_and_round_trip() {
    let mut count = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("cfg") {
            continue;
        }
        let cfg = RunConfig::from_file(&path).unwrap();
        cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(RunConfig::parse(&cfg.to_string()).unwrap(), cfg, "{}", path.display());
        count += 1;
    }
    assert!(count >= 7);
}

#[test]
fn rolls_preset_values() {
    let cfg = RunConfig::from_file(&configs_dir().join("rolls.cfg")).unwrap();
    assert_eq!(cfg.model.epsilon, 0.3);
    assert_eq!(cfg.model.g, 0.0);
    assert_eq!(cfg.mesh.degree, 2);
    assert_eq!(cfg.mesh.bc, BoundaryKind::Periodic);
    assert_eq!(cfg.time.tableau, TableauSource::Builtin("gl4".into()));
    assert_eq!(cfg.steps_for(0.1).unwrap(), 1980);
    let hex = RunConfig::from_file(&configs_dir().join("hexagons.cfg")).unwrap();
    assert_eq!((hex.model.epsilon, hex.model.g), (0.1, 1.0));
}

fn arb_config() -> impl Strategy<Value = RunConfig> {
    (
        (1usize..=2, 0usize..=4, 2usize..50, -50.0f64..0.0, 1e-3f64..60.0),
        (-1.0f64..1.0, -2.0f64..2.0, 1e-6f64..1.0, 0usize..12, any::<bool>()),
        (0u8..4, any::<u64>(), 0.0f64..1.0, prop::collection::vec(0.0f64..100.0, 0..5)),
        (1usize..8, prop::collection::vec(2usize..200, 0..4), prop::collection::vec(1e-4f64..1.0, 0..4)),
        prop_oneof![Just(None), (1usize..1000).prop_map(Some)],
    )
        .prop_map(
            |((dim, k, n, lo, len), (eps, g, tau, l, reject), (init, seed, amp, snaps), (spc, cells, taus), steps)| {
                let mut cfg = RunConfig::default();
                cfg.mesh.cells = vec![n; dim];
                cfg.mesh.lower = vec![lo; dim];
                cfg.mesh.upper = vec![lo + len; dim];
                cfg.mesh.degree = k;
                cfg.mesh.bc = if reject { BoundaryKind::Natural } else { BoundaryKind::Periodic };
                cfg.model.epsilon = eps;
                cfg.model.g = g;
                cfg.time.tau = tau;
                cfg.time.duration = match steps {
                    Some(s) => Duration::Steps(s),
                    None => Duration::FinalTime(tau * 7.0),
                };
                cfg.pc.max_iterations = l;
                cfg.pc.reject_growth = !reject;
                cfg.initial = match init {
                    0 => InitialSpec::Zero,
                    1 => InitialSpec::Random { seed, amplitude: amp },
                    2 => InitialSpec::Manufactured("sine-quarter".into()),
                    _ => InitialSpec::File(PathBuf::from("fields/start.field")),
                };
                cfg.source = if init == 2 {
                    SourceSpec::Manufactured("sine-quarter".into())
                } else {
                    SourceSpec::None
                };
                cfg.output.snapshot_times = snaps;
                cfg.output.samples_per_cell = spc;
                cfg.sweep.cells = cells;
                cfg.sweep.tau = taus;
                cfg
            },
        )
}

proptest! {
    #[test]
    fn config_round_trip(cfg in arb_config()) {
        let text = cfg.to_string();
        prop_assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }
}

#[test]
fn check_tableau_reports() {
    let out = gradflow(&["check-tableau", "qz2"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("verdict: algebraically stable"), "{text}");
    assert!(text.contains("0.25"), "{text}");

    let out = gradflow(&["check-tableau", configs_dir().join("forward-euler.tableau").to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("not algebraically stable"), "{text}");
}

#[test]
fn malformed_tableau_file_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.tableau");
    std::fs::write(&path, "# two stages\n1/2 | 1/2 0\n1 | 1/2 one\n  | 1/2 1/2\n").unwrap();
    let out = gradflow(&["check-tableau", path.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn malformed_config_reports_line_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    std::fs::write(&path, "[mesh]\ndegree = 2\n[time]\ntau = 0.1\nsteps = many\n").unwrap();
    let out = gradflow(&["simulate", "-c", path.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 5"), "{err}");

    let out = gradflow(&["simulate", "--set", "time.tau=-1", "--set", "output.dir=/nonexistent"]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("time.tau"), "{err}");
}

#[test]
fn print_config_reflects_overrides() {
    let cfg_path = configs_dir().join("rolls.cfg");
    let out = gradflow(&["simulate", "-c", cfg_path.to_str().unwrap(), "--set", "time.tau=0.25", "--print-config"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = RunConfig::parse(&text).unwrap();
    assert_eq!(cfg.time.tau, 0.25);
    assert_eq!(cfg.model.epsilon, 0.3);
}

#[test]
fn simulate_writes_outputs_and_is_reproducible() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let s1 = simulate(&small_rolls(d1.path())).unwrap();
    let s2 = simulate(&small_rolls(d2.path())).unwrap();
    assert_eq!(s1.records, s2.records);
    assert!(s1.energy_stable());
    for name in ["energy.csv", "snapshot_000002.csv", "snapshot_000006.csv", "final.field"] {
        let a = std::fs::read(d1.path().join(name)).unwrap();
        let b = std::fs::read(d2.path().join(name)).unwrap();
        assert!(a == b, "{name} differs between identical runs");
    }
    assert!(d1.path().join("snapshot_000002.vtk").exists());
    assert_eq!(s1.snapshots.len(), 4);

    let records = read_energy_csv(&d1.path().join("energy.csv")).unwrap();
    assert_eq!(records, s1.records);
    assert_eq!(records.len(), 7);
    for w in records.windows(2) {
        assert!(w[1].energy <= w[0].energy);
        assert_eq!(w[1].dissipation, w[0].energy - w[1].energy);
        assert!(w[1].dissipation + 1e-10 * w[0].energy >= w[1].bound);
    }

    let vtk = std::fs::read_to_string(d1.path().join("snapshot_000002.vtk")).unwrap();
    assert!(vtk.starts_with("# vtk DataFile Version 3.0"));
    assert!(vtk.contains("DIMENSIONS 32 32 1"));
    assert!(vtk.contains("POINT_DATA 1024"));
    let csv = std::fs::read_to_string(d1.path().join("snapshot_000002.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 32 * 32);
}

#[test]
fn different_seeds_differ() {
    let d1 = tempfile::tempdir().unwrap();
    let mut cfg = small_rolls(d1.path());
    cfg.time.duration = Duration::Steps(1);
    cfg.output.snapshot_format = SnapshotFormat::None;
    let a = simulate(&cfg).unwrap();
    cfg.initial = InitialSpec::Random { seed: 7, amplitude: 0.1 };
    let b = simulate(&cfg).unwrap();
    assert_ne!(a.records[0].energy, b.records[0].energy);
}

#[test]
fn field_round_trip_preserves_energy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_rolls(dir.path());
    let summary = simulate(&cfg).unwrap();
    let space = build_space(&cfg, None).unwrap();
    let stepper = build_stepper(&cfg, space.clone()).unwrap();
    let loaded = load_state(&dir.path().join("final.field"), &stepper).unwrap();
    let e0 = summary.final_state.energy();
    assert!((loaded.energy() - e0).abs() <= 1e-14 * e0);
    assert_eq!(loaded.u.coeffs(), summary.final_state.u.coeffs());
    assert_eq!(loaded.step, 6);

    // Saving again reproduces the file byte for byte.
    let again = dir.path().join("again.field");
    save_state(&again, &space, &loaded).unwrap();
    assert_eq!(std::fs::read(&again).unwrap(), std::fs::read(dir.path().join("final.field")).unwrap());

    // Restart from the file.
    let mut restart = cfg.clone();
    restart.initial = InitialSpec::File(dir.path().join("final.field"));
    let state = initial_state(&restart, &stepper).unwrap();
    assert_eq!(state.t, loaded.t);

    // A different mesh is rejected.
    let mut other = cfg.clone();
    other.mesh.cells = vec![4, 4];
    let space = build_space(&other, None).unwrap();
    let stepper = build_stepper(&other, space).unwrap();
    assert!(load_state(&dir.path().join("final.field"), &stepper).is_err());
}

#[test]
fn default_snapshot_steps() {
    let mut cfg = RunConfig::default();
    cfg.output.snapshot_times.clear();
    assert_eq!(snapshot_steps(&cfg, 60), vec![10, 20, 30, 40, 50, 60]);
    assert_eq!(snapshot_steps(&cfg, 3), vec![1, 2, 3]);
    cfg.time.tau = 0.1;
    cfg.output.snapshot_times = vec![1.2, 12.0, 500.0];
    assert_eq!(snapshot_steps(&cfg, 1980), vec![12, 120]);
}

#[test]
fn single_resolution_accuracy_has_blank_order() {
    let mut cfg = RunConfig::from_file(&configs_dir().join("accuracy-space-k1.cfg")).unwrap();
    cfg.sweep.cells = vec![8];
    cfg.time.duration = Duration::Steps(2);
    let table = accuracy_space(&cfg).unwrap();
    assert_eq!(table.rows.len(), 1);
    assert!(table.rows[0].order_l2.is_none());
    assert!(table.to_string().contains(" -"));
    assert!(table.rows[0].error_l2 > 0.0 && table.rows[0].error_l2 < 0.5);
}

#[test]
fn accuracy_needs_an_exact_solution() {
    let mut cfg = RunConfig::default();
    cfg.mesh.cells = vec![4, 4];
    cfg.time.duration = Duration::Steps(1);
    assert!(accuracy_time(&cfg).is_err());
    let out = gradflow(&["accuracy-space", "--set", "mesh.cells=4 4", "--set", "time.steps=1"]);
    assert!(!out.status.success());
}

#[test]
fn uncertified_tableau_needs_override() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_rolls(dir.path());
    cfg.time.tableau = TableauSource::File(configs_dir().join("forward-euler.tableau"));
    cfg.time.duration = Duration::Steps(1);
    cfg.output.snapshot_format = SnapshotFormat::None;
    assert!(simulate(&cfg).is_err());
    cfg.solver.allow_uncertified = true;
    cfg.time.tau = 1e-4;
    simulate(&cfg).unwrap();
}
