use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn robins(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robins"))
        .args(args)
        .current_dir(dir)
        .env_remove("ROBINS_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn bare_solve_reproduces_the_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let o = robins(dir.path(), &["solve", "--out", "res"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = json(&dir.path().join("res/equilibrium.json"));
    let (lo, hi) = (v["M_low"].as_f64().unwrap(), v["M_high"].as_f64().unwrap());
    assert!((lo - 0.3240).abs() < 0.02 * 0.3240, "{lo}");
    assert!((hi - 2.1322).abs() < 0.02 * 2.1322, "{hi}");
    let csv = fs::read_to_string(dir.path().join("res/equilibrium.csv")).unwrap();
    assert!(csv.starts_with("M,u,du,p,D,Y,hI,hS\n"));
    assert!(!csv.contains('\r'));
    assert!(o.stdout.starts_with(b"M_low"));
}

#[test]
fn zero_theta_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = robins(dir.path(), &["solve", "--set", "market.theta=0"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("theta") && err.contains("> 0"), "{err}");
    assert!(o.stdout.is_empty());
}

#[test]
fn unknown_keys_and_bad_files_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), r#"{"market": {"theta": 2.8, "zeta": 1}}"#).unwrap();
    for args in [
        &["solve", "--config", "bad.json"][..],
        &["solve", "--config", "missing.json"],
        &["solve", "--set", "solver.nope=3"],
        &["sweep", "--axis", "kappa"],
    ] {
        let o = robins(dir.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn missing_equilibrium_exits_one_naming_the_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let o = robins(dir.path(), &["solve", "--set", "market.theta=10", "--out", "res"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("payout_barrier"), "{}", stderr(&o));
}

#[test]
fn gamma_sweep_writes_four_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = robins(
        dir.path(),
        &[
            "sweep",
            "--axis",
            "gamma",
            "--values",
            "0.02,0.1,0.2,0.3",
            "--out",
            "res",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("res/sweep_gamma.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "value,M_low,M_high,dM,status");
    assert_eq!(lines.len(), 5);
    let expected = [(0.6444, 1.6011), (0.4237, 1.9475), (0.3240, 2.1322), (0.2687, 2.2427)];
    for (line, (lo, hi)) in lines[1..].iter().zip(expected) {
        let f: Vec<&str> = line.split(',').collect();
        let (got_lo, got_hi): (f64, f64) = (f[1].parse().unwrap(), f[2].parse().unwrap());
        assert!((got_lo - lo).abs() < 0.02 * lo, "{line}");
        assert!((got_hi - hi).abs() < 0.02 * hi, "{line}");
        assert_eq!(f[4], "solved");
    }
}

#[test]
fn flag_overrides_file_overrides_default() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("cfg.json"),
        r#"{"market": {"gamma": 0.1, "rho": 0.5}, "output": {"directory": "from_file"}}"#,
    )
    .unwrap();
    let o = robins(
        dir.path(),
        &["solve", "--config", "cfg.json", "--set", "market.rho=0.2"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v = json(&dir.path().join("from_file/equilibrium.json"));
    assert_eq!(v["params"]["rho"].as_f64(), Some(0.2));
    assert_eq!(v["params"]["gamma"].as_f64(), Some(0.1));
    assert_eq!(v["params"]["theta"].as_f64(), Some(2.8));

    let o = robins(dir.path(), &["solve", "--config", "cfg.json", "--out", "from_flag"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("from_flag/equilibrium.json").exists());
}

#[test]
fn env_var_redirects_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_robins"))
        .args(["density"])
        .current_dir(dir.path())
        .env("ROBINS_OUT_DIR", "env_out")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("env_out/density.csv")).unwrap();
    assert!(text.starts_with("M,pi\n"));
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let sets = [
        "--set",
        "simulation.horizon=200",
        "--set",
        "simulation.paths=3",
        "--set",
        "output.stride=50",
        "--set",
        "output.emit_svg=true",
    ];
    for out in ["a", "b"] {
        for cmd in ["solve", "simulate", "cycles", "density"] {
            let mut args = vec![cmd, "--out", out];
            args.extend(sets);
            let o = robins(dir.path(), &args);
            assert!(o.status.success(), "{cmd}: {}", stderr(&o));
        }
    }
    let (a, b) = (snapshot(&dir.path().join("a")), snapshot(&dir.path().join("b")));
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    for want in [
        "equilibrium.csv",
        "path.csv",
        "occupancy.csv",
        "durations.csv",
        "cycles.json",
        "density.csv",
        "path.svg",
        "u.svg",
    ] {
        assert!(names.contains(&want), "{want} missing from {names:?}");
    }
    assert_eq!(a, b);
}

#[test]
fn simulation_outputs_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let o = robins(
        dir.path(),
        &[
            "simulate",
            "--out",
            "res",
            "--set",
            "simulation.horizon=100",
            "--set",
            "output.stride=100",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let path = fs::read_to_string(dir.path().join("res/path.csv")).unwrap();
    // 1e5 steps at stride 100, plus the start.
    assert_eq!(path.lines().count(), 1 + 1001);
    let occ = fs::read_to_string(dir.path().join("res/occupancy.csv")).unwrap();
    let total: f64 = occ
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-9, "{total}");
}

#[test]
fn emit_csv_off_keeps_only_the_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let o = robins(dir.path(), &["solve", "--out", "res", "--set", "output.emit_csv=false"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let names: Vec<String> = snapshot(&dir.path().join("res")).into_iter().map(|(n, _)| n).collect();
    assert_eq!(names, ["equilibrium.json"]);
}

#[test]
fn reproduce_runs_a_filtered_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let o = robins(dir.path(), &["reproduce", "benchmark_boundaries"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.contains("PASS benchmark_boundaries"), "{out}");
    assert!(out.trim_end().ends_with("1/1 criteria passed"), "{out}");

    let o = robins(dir.path(), &["reproduce", "no_such_criterion"]);
    assert_eq!(o.status.code(), Some(2));
}
