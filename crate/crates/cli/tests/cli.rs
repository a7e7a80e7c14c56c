use std::fs;
use std::path::Path;
use std::process::Command;

use imreg_cli::output::{fmt_f64, read_csv, write_csv, KeyValues};
use imreg_cli::{run_experiment, run_sweep, ExperimentConfig, RunStatus};
use proptest::prelude::*;

const OUTPUTS: [&str; 6] = ["config.toml", "trajectory.csv", "summary.txt", "diagnostics.txt", "lyapunov.csv", "plot.gp"];

fn short() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.integrator.horizon = 20.0;
    cfg.integrator.transient = 5.0;
    cfg
}

fn imreg(config: &Path, out: &Path, extra: &[&str]) -> (i32, String, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_imreg"))
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs");
    (
        o.status.code().expect("exit code"),
        String::from_utf8_lossy(&o.stdout).into_owned(),
        String::from_utf8_lossy(&o.stderr).into_owned(),
    )
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("in.toml");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn empty_file_gives_defaults() {
    assert_eq!(ExperimentConfig::from_toml_str("").unwrap(), ExperimentConfig::default());
    ExperimentConfig::default().validate(false).unwrap();
    ExperimentConfig::default().validate(true).unwrap();
}

#[test]
fn config_round_trips_through_toml() {
    let mut cfg = short();
    cfg.gains.ell = Some(7.5);
    cfg.sweep.lambda = vec![1.0, 2.5];
    let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn unknown_keys_are_rejected() {
    let err = ExperimentConfig::from_toml_str("[gains]\nlamda = 3\n").unwrap_err();
    assert!(err.to_string().contains("lamda"), "{err}");
}

#[test]
fn all_problems_are_reported_together() {
    let cfg = ExperimentConfig::from_toml_str(
        "[system]\nomega = -1\n[gains]\nroots = [-1, -1]\nk = -2\n[integrator]\nh = 0\n[thresholds]\nregulation_window = 2\n",
    )
    .unwrap();
    let err = cfg.validate(false).unwrap_err();
    let text = err.to_string();
    for key in ["system.omega", "gains.roots", "gains.k", "integrator.h", "thresholds.regulation_window"] {
        assert!(err.problems.iter().any(|p| p.contains(key)), "{key} missing from {text}");
    }
    assert!(text.starts_with(&format!("invalid configuration ({} problems)", err.problems.len())));
}

#[test]
fn empty_grid_is_rejected() {
    let mut cfg = short();
    cfg.sweep.k = vec![];
    assert!(cfg.validate(true).is_err());
    assert!(cfg.validate(false).is_ok());
    let dir = tempfile::tempdir().unwrap();
    assert!(run_sweep(&cfg, dir.path()).is_err());
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write_config(dir.path(), "[integrator]\nhorizon = 20\ntransient = 5\n");
    let (code, stdout, _) = imreg(&ok, &dir.path().join("ok"), &[]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("status = success"));

    // Without output injection nothing drives e to zero.
    let (code, stdout, _) = imreg(&ok, &dir.path().join("k0"), &["--k", "0"]);
    assert_eq!(code, 1, "{stdout}");
    assert!(stdout.contains("regulated = false"));

    // Too little damping for the fast filter: the state blows up.
    let (code, stdout, _) = imreg(&ok, &dir.path().join("blowup"), &["--lambda", "40", "--k", "5"]);
    assert_eq!(code, 2, "{stdout}");
    assert!(stdout.contains("status = integration_failure"));
    assert!(dir.path().join("blowup/trajectory.csv").exists());

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[integrator]\nh = -1\nhorizon = 0\n").unwrap();
    let (code, _, stderr) = imreg(&bad, &dir.path().join("bad"), &[]);
    assert_eq!(code, 3);
    assert!(stderr.contains("integrator.h") && stderr.contains("integrator.horizon"), "{stderr}");

    let (code, _, _) = imreg(&dir.path().join("missing.toml"), &dir.path().join("x"), &[]);
    assert_eq!(code, 3);
}

#[test]
fn run_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_experiment(&short(), dir.path()).unwrap();
    for f in OUTPUTS {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let traj = read_csv(&dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(traj.names[0], "t");
    assert!(traj.names.iter().any(|n| n == "e"));
    assert!(traj.names.iter().any(|n| n == "theta_tilde5"));
    assert_eq!(traj.rows.len(), outcome.trajectory.times().len());
    let t = traj.column("t").unwrap();
    assert!(t.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(*t.last().unwrap(), 20.0);

    let written = ExperimentConfig::load(&dir.path().join("config.toml")).unwrap();
    let mut expected = short();
    expected.output.dir = written.output.dir.clone();
    assert_eq!(written, expected);

    let summary = KeyValues::parse(&fs::read_to_string(dir.path().join("summary.txt")).unwrap());
    assert_eq!(summary, outcome.summary.to_key_values());
    assert_eq!(summary.get_f64("sup_e"), Some(outcome.summary.sup_e));
    let lyap = read_csv(&dir.path().join("lyapunov.csv")).unwrap();
    assert_eq!(lyap.names[0], "t");
}

#[test]
fn runs_are_bit_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut cfg = short();
    cfg.output.dir = "same".into();
    run_experiment(&cfg, a.path()).unwrap();
    run_experiment(&cfg, b.path()).unwrap();
    for f in OUTPUTS {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn worked_example_regulates() {
    let dir = tempfile::tempdir().unwrap();
    let s = run_experiment(&ExperimentConfig::default(), dir.path()).unwrap().summary;
    assert_eq!((s.lambda, s.k), (40.0, 40.0));
    assert_eq!(s.status, RunStatus::Success);
    assert!(s.sup_e <= 1e-2, "{s:?}");
    assert!(s.settling_time.is_some_and(|t| t < 10.0), "{s:?}");
    assert!(s.meets_all());
}

#[test]
fn invariant_start_stays_put() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml_str("[initial]\nstart = \"invariant\"\n[integrator]\nhorizon = 20\n").unwrap();
    let s = run_experiment(&cfg, dir.path()).unwrap().summary;
    assert!(s.max_abs_e <= 1e-4 && s.theta_tilde_max <= 1e-4, "{s:?}");
    assert_eq!(s.settling_time, Some(0.0));
}

#[test]
fn single_point_sweep_matches_single_run() {
    let mut cfg = short();
    cfg.sweep.lambda = vec![cfg.gains.lambda];
    cfg.sweep.k = vec![cfg.gains.k];
    let sweep_dir = tempfile::tempdir().unwrap();
    let report = run_sweep(&cfg, sweep_dir.path()).unwrap();
    assert_eq!(report.rows.len(), 1);
    let row = &report.rows[0];
    assert_eq!(report.smallest, Some((cfg.gains.lambda, cfg.gains.k)));

    let mut single = cfg.clone();
    single.output.dir = row.dir.display().to_string();
    let run_dir = tempfile::tempdir().unwrap();
    let outcome = run_experiment(&single, run_dir.path()).unwrap();
    assert_eq!(row.result.as_ref().unwrap(), &outcome.summary);
    for f in OUTPUTS {
        assert_eq!(fs::read(row.dir.join(f)).unwrap(), fs::read(run_dir.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn sweep_reports_smallest_passing_pair() {
    let mut cfg = short();
    cfg.sweep.lambda = vec![5.0, 40.0];
    cfg.sweep.k = vec![0.0, 40.0];
    let dir = tempfile::tempdir().unwrap();
    let report = run_sweep(&cfg, dir.path()).unwrap();
    assert_eq!(report.rows.len(), 4);
    assert_eq!(report.smallest, Some((40.0, 40.0)));
    assert!(report.upward_closed);
    for r in &report.rows {
        assert!(r.dir.join("summary.txt").exists());
        let point_cfg = ExperimentConfig::load(&r.dir.join("config.toml")).unwrap();
        assert_eq!((point_cfg.gains.lambda, point_cfg.gains.k), (r.point.lambda, r.point.k));
    }
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let summary = KeyValues::parse(&fs::read_to_string(dir.path().join("sweep_summary.txt")).unwrap());
    assert_eq!(summary.get_f64("smallest_lambda"), Some(40.0));
    assert_eq!(summary.get("upward_closed"), Some("true"));
}

#[test]
fn csv_has_seventeen_significant_digits() {
    assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
    assert_eq!(fmt_f64(-2.0), "-2.0000000000000000e0");
}

proptest! {
    #[test]
    fn csv_round_trip_is_lossless(rows in prop::collection::vec(prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 3), 0..20)) {
        let dir = tempfile::tempdir().unwrap();
        let names: Vec<String> = ["t", "a", "b"].iter().map(|s| s.to_string()).collect();
        let path = dir.path().join("x.csv");
        write_csv(&path, &names, rows.clone()).unwrap();
        let table = read_csv(&path).unwrap();
        prop_assert_eq!(table.names, names);
        prop_assert_eq!(table.rows.len(), rows.len());
        for (a, b) in table.rows.iter().flatten().zip(rows.iter().flatten()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn key_values_round_trip(vals in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..10)) {
        let mut kv = KeyValues::default();
        for (i, v) in vals.iter().enumerate() {
            kv.float(&format!("k{i}"), *v);
        }
        let back = KeyValues::parse(&kv.render());
        for (i, v) in vals.iter().enumerate() {
            prop_assert_eq!(back.get_f64(&format!("k{i}")).map(f64::to_bits), Some(v.to_bits()));
        }
    }
}
