use std::path::Path;
use std::process::Command;

use csopt::cli::run;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn csopt(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("csopt").chain(args.iter().copied()), &mut out, &mut err);
    Run {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn golden(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn tau_table_matches_golden() {
    let r = csopt(&["tau-table", "--skip-sim"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.stdout, golden("tau_table_analytic.csv"));
    assert!(r.stderr.is_empty(), "no seed is drawn without simulation");
}

#[test]
fn ase_sweep_matches_golden() {
    let r = csopt(&["ase-sweep", "--from-dbm", "-60", "--to-dbm", "-10", "--step-db", "5"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.stdout, golden("ase_sweep_coarse.csv"));
}

#[test]
fn seeded_sim_sweep_matches_golden() {
    let args = [
        "ase-sweep",
        "--is-dbm=-50,-45",
        "--with-sim",
        "--replications",
        "20",
        "--seed",
        "42",
    ];
    let r = csopt(&args);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.stdout, golden("ase_sweep_sim_seed42.csv"));
}

#[test]
fn csv_layout() {
    let r = csopt(&[
        "tau-table",
        "--skip-sim",
        "--lambda",
        "1e-3",
        "--is-dbm",
        "-40,-10",
        "--beta-c-db",
        "3",
    ]);
    assert_eq!(r.code, 0);
    let lines: Vec<&str> = r.stdout.split('\n').collect();
    assert_eq!(lines[0], "lambda,is_dbm,beta_c_db,tau_analytic,tau_sim,tau_sim_ci95");
    assert_eq!(lines.len(), 4, "two rows and a trailing newline");
    assert!(lines[1].starts_with("0.001,-40,3,") && lines[1].ends_with(",,"));
    assert!(!r.stdout.contains('\r'));

    // round-trip exact floats
    let tau = column(&r.stdout, "tau_analytic")[0];
    assert_eq!(tau.to_string().parse::<f64>().unwrap(), tau);

    let sweep = csopt(&["ase-sweep", "--is-dbm", "-45"]);
    assert_eq!(
        sweep.stdout.lines().next().unwrap(),
        "is_dbm,tau,r_s_m,lambda_t,p_s,eta_analytic"
    );
}

#[test]
fn default_sweep_peaks_inside_range() {
    let r = csopt(&["ase-sweep"]);
    let eta = column(&r.stdout, "eta_analytic");
    assert_eq!(eta.len(), 51);
    let peak = (0..eta.len()).max_by(|&a, &b| eta[a].total_cmp(&eta[b])).unwrap();
    assert!(peak > 0 && peak < 50);
    assert!(eta[..=peak].windows(2).all(|w| w[0] < w[1]));
    assert!(eta[peak..].windows(2).all(|w| w[0] > w[1]));
}

#[test]
fn config_errors_exit_2() {
    for args in [
        &["ase-sweep", "--step-db", "0"][..],
        &["optimize", "--beta-db", ""],
        &["optimize", "--alpha", "3"],
        &["optimize", "--method", "bisection"],
        &["ase-sweep", "--is-dbm", "35"],
        &["tau-table", "--lambda", "0", "--skip-sim"],
        &["mac-sim", "--seed", "x"],
        &["frobnicate"],
        &["tau-table", "--no-such-flag"],
    ] {
        let r = csopt(args);
        assert_eq!(r.code, 2, "{args:?}: {}", r.stderr);
        assert!(!r.stderr.is_empty());
        assert!(r.stdout.is_empty());
    }
    let r = csopt(&["optimize", "--alpha", "3"]);
    assert!(r.stderr.contains("alpha = 4"), "{}", r.stderr);
}

#[test]
fn numerical_failure_exits_3_and_names_the_operation() {
    let r = csopt(&["geo-sim", "--replications", "2", "--region-m", "300", "--seed", "1"]);
    assert_eq!(r.code, 3);
    assert!(r.stderr.contains("geo-sim"), "{}", r.stderr);
}

#[test]
fn help_goes_to_stdout() {
    let r = csopt(&["--help"]);
    assert_eq!(r.code, 0);
    for cmd in ["tau-table", "ase-sweep", "optimize", "mac-sim", "geo-sim"] {
        assert!(r.stdout.contains(cmd));
    }
}

#[test]
fn drawn_seed_is_printed_and_reproduces() {
    let args = ["geo-sim", "--replications", "20"];
    let first = csopt(&args);
    assert_eq!(first.code, 0);
    let seed = first
        .stderr
        .trim()
        .strip_prefix("seed: ")
        .expect(&first.stderr)
        .to_string();
    let again = csopt(&[&args[..], &["--seed", &seed]].concat());
    assert_eq!(again.stdout, first.stdout);
    assert!(again.stderr.is_empty());
}

#[test]
fn jobs_do_not_change_output() {
    let base = [
        "tau-table",
        "--lambda",
        "1e-3",
        "--is-dbm",
        "-40",
        "--slots",
        "3000",
        "--seeds",
        "4",
        "--seed",
        "5",
    ];
    let one = csopt(&[&base[..], &["--jobs", "1"]].concat());
    let four = csopt(&[&base[..], &["--jobs", "4"]].concat());
    assert_eq!(one.code, 0, "{}", one.stderr);
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(one.stdout.lines().count(), 3);
}

#[test]
fn config_file_layers_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "# table subset\nlambda = 1e-4\nis-dbm = -10\nbeta-c-db = 3\n").unwrap();
    let cfg = cfg.to_str().unwrap();

    let from_file = csopt(&["tau-table", "--skip-sim", "--config", cfg]);
    assert_eq!(from_file.code, 0, "{}", from_file.stderr);
    assert!(from_file.stdout.lines().nth(1).unwrap().starts_with("0.0001,-10,3,"));

    let overridden = csopt(&["tau-table", "--skip-sim", "--config", cfg, "--lambda", "1e-2"]);
    assert!(overridden.stdout.lines().nth(1).unwrap().starts_with("0.01,-10,3,"));

    let bad = dir.path().join("bad.conf");
    std::fs::write(&bad, "colour = blue\n").unwrap();
    assert_eq!(csopt(&["tau-table", "--config", bad.to_str().unwrap()]).code, 2);
    assert_eq!(csopt(&["tau-table", "--config", "/nonexistent/run.conf"]).code, 2);
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("table.csv");
    let r = csopt(&["tau-table", "--skip-sim", "--out", path.to_str().unwrap()]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.is_empty());
    assert_eq!(
        std::fs::read_to_string(&path).unwrap(),
        golden("tau_table_analytic.csv")
    );
}

#[test]
fn optimize_methods_agree() {
    let parse = |args: &[&str]| -> serde_json::Value {
        let r = csopt(args);
        assert_eq!(r.code, 0, "{}", r.stderr);
        serde_json::from_str(&r.stdout).unwrap()
    };
    let newton = parse(&["optimize", "--beta-db", "10"]);
    let grid = parse(&["optimize", "--beta-db", "10", "--method", "grid"]);
    let n = newton[0]["report"]["optimal_threshold_dbm"].as_f64().unwrap();
    let g = grid[0]["report"]["optimal_threshold_dbm"].as_f64().unwrap();
    assert!((n - g).abs() <= 0.1, "{n} vs {g}");
    assert_eq!(newton[0]["certified"], true);
    assert_eq!(newton[0]["report"]["method"], "newton");
    assert_eq!(grid[0]["report"]["method"], "grid");
}

#[test]
fn optimize_default_sweep_ordering() {
    let r = csopt(&["optimize"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: serde_json::Value = serde_json::from_str(&r.stdout).unwrap();
    let entries = v.as_array().unwrap();
    assert_eq!(entries.len(), 21);
    let optima: Vec<f64> = entries
        .iter()
        .map(|e| e["report"]["optimal_threshold_dbm"].as_f64().unwrap())
        .collect();
    assert!(optima.windows(2).all(|w| w[1] <= w[0]), "{optima:?}");
    for e in entries {
        let best = e["report"]["converged_state"]["ase"].as_f64().unwrap();
        let no_beb = e["no_beb"]["ase"].as_f64().unwrap();
        assert!(best >= no_beb);
        assert_eq!(e["certified"], true);
    }
    // stable key order in the text itself
    let at = |key: &str| r.stdout.find(&format!("\n    \"{key}\":")).unwrap();
    let order = ["beta_db", "report", "grid_certificate", "certified", "no_beb"].map(at);
    assert!(order.windows(2).all(|w| w[0] < w[1]), "{order:?}");
}

#[test]
fn mac_sim_reports_runs() {
    let r = csopt(&["mac-sim", "--slots", "3000", "--seeds", "2", "--seed", "3"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: serde_json::Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(v["runs"].as_array().unwrap().len(), 2);
    let tau = v["tau_hat"]["estimate"].as_f64().unwrap();
    let analytic = v["analytic"]["tau"].as_f64().unwrap();
    assert!((tau - analytic).abs() < 0.02, "{tau} vs {analytic}");
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_csopt");
    let ok = Command::new(bin).args(["tau-table", "--skip-sim"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(String::from_utf8(ok.stdout).unwrap(), golden("tau_table_analytic.csv"));
    let bad = Command::new(bin)
        .args(["ase-sweep", "--step-db", "0"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let failed = Command::new(bin)
        .args(["geo-sim", "--replications", "2", "--region-m", "300", "--seed", "1"])
        .output()
        .unwrap();
    assert_eq!(failed.status.code(), Some(3));
}
