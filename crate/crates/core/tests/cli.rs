use std::path::Path;
use std::process::{Command, Output};

fn mqi(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mqi")).args(args).current_dir(cwd).env_remove("MQI_WORKERS").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn derive_prints_baseline_constants() {
    let dir = tempfile::tempdir().unwrap();
    let o = mqi(&["derive"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    for line in [
        "lambda_w0 = 19",
        "lambda_w1 = 19",
        "zeta = 0.5",
        "En_patient = 13",
        "sigma_n2 = 30",
        "delta = 0.707107",
        "gamma = -0.0645497",
        "chi = 0",
        "sigma_eps2 = 0.25",
        "alpha = -0.361705",
    ] {
        assert!(text.lines().any(|l| l == line), "missing `{line}` in\n{text}");
    }
}

#[test]
fn derive_reads_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "delta_n = 16\n").unwrap();
    let o = mqi(&["derive", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("lambda_w0 = 11\n") && text.contains("lambda_w1 = 27\n"), "{text}");
}

#[test]
fn smallest_run_writes_one_row_per_metric() {
    let dir = tempfile::tempdir().unwrap();
    let o = mqi(&["run", "--reps", "2", "--workers", "2", "--out", "runs", "--seed", "7"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let runs: Vec<_> = std::fs::read_dir(dir.path().join("runs")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(runs.len(), 1);
    assert!(runs[0].file_name().unwrap().to_str().unwrap().ends_with("-seed7"));
    let summary = std::fs::read_to_string(runs[0].join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + mqi::evaluation::MetricKey::all().len());
    let ledger = std::fs::read_to_string(runs[0].join("ledger.csv")).unwrap();
    assert_eq!(ledger.lines().count(), 3);

    let figs = dir.path().join("figs");
    let summary_path = runs[0].join("summary.csv");
    let o = mqi(&["plot", summary_path.to_str().unwrap(), "--out", figs.to_str().unwrap()], dir.path());
    assert!(o.status.success());
    assert!(figs.join("hospital_spearman.svg").exists());
    assert!(figs.join("region_spearman.svg").exists());
}

#[test]
fn simulate_writes_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let o = mqi(&["simulate", "--seed", "3", "--out", "d.csv"], dir.path());
    assert!(o.status.success());
    let text = std::fs::read_to_string(dir.path().join("d.csv")).unwrap();
    assert!(text.starts_with("replication,region,"));
    let again = mqi(&["simulate", "--seed", "3"], dir.path());
    assert_eq!(stdout(&again), text);
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "R = 20\nsigma_zeta = 1\n").unwrap();
    let o = mqi(&["run", "--config", cfg.to_str().unwrap(), "--reps", "1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("sigma_zeta"), "{err}");
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(!dir.path().join("runs").exists());
}

#[test]
fn usage_and_runtime_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(mqi(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(mqi(&["derive", "--config", "missing.toml"], dir.path()).status.code(), Some(1));
    std::fs::write(dir.path().join("bad.csv"), "not a summary\n").unwrap();
    assert_eq!(mqi(&["plot", "bad.csv"], dir.path()).status.code(), Some(2));
    std::fs::write(dir.path().join("runs"), "a file").unwrap();
    assert_eq!(mqi(&["run", "--reps", "1", "--out", "runs/x"], dir.path()).status.code(), Some(2));
}

#[test]
fn empty_summary_warns_without_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.csv"), format!("{}\n", mqi::evaluation::SUMMARY_HEADER)).unwrap();
    let o = mqi(&["plot", "s.csv", "--out", "figs"], dir.path());
    assert!(o.status.success());
    assert!(String::from_utf8(o.stderr).unwrap().contains("warning"));
    assert!(!dir.path().join("figs").exists());
}

#[test]
fn bundled_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let base = mqi::config::load_config(&dir.join("baseline.toml")).unwrap();
    assert_eq!(base.scenario, mqi::Scenario::baseline());
    assert!(base.sweep.is_none());
    for p in ["rho", "xi_theta_mux", "xi_n_theta", "delta_n", "p_y_bar", "sigma_eta"] {
        let c = mqi::config::load_config(&dir.join(format!("sweep_{p}.toml"))).unwrap();
        let sweep = c.sweep.unwrap();
        assert_eq!(sweep.param.key(), p);
        assert_eq!(Some(sweep.values), sweep.param.preset_grid(), "{p}");
    }
}
