use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use freesde::cli::{validate, Command as RunCommand, RawArgs, RunConfig};

fn freesde(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freesde"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("spawn binary")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn first_line(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn zero_noise_ou_stays_at_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = freesde(&["simulate", "--model", "ou", "--sigma", "0", "--n", "4", "--L", "8", "--seed", "1"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 9);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[2], "0", "{row}");
    }
    assert!(dir.path().join("run.jsonl").exists());
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases: &[&[&str]] = &[
        &["simulate", "--model", "nope"],
        &["spectrum", "--model", "ou", "--a", "2"],
        &["simulate", "--model", "cir", "--a", "0"],
        &["simulate", "--model", "ou", "--M", "3"],
        &["strong-order", "--model", "ou", "--n", "3", "--L", "10", "--R-list", "3"],
        &["simulate", "--model", "ou", "--T", "1", "--L", "3", "--dt", "0.5"],
        &["simulate", "--model", "ou", "--bogus", "1"],
    ];
    for args in cases {
        let o = freesde(args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
    let unknown = freesde(&["simulate", "--model", "nope"], dir.path());
    assert!(stderr(&unknown).contains("ou, gbm1, cir"));
}

#[test]
fn strict_psd_failure_names_path_and_step() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "simulate", "--model", "cir", "--a", "0.1", "--sigma", "8", "--n", "6", "--L", "8", "--dt", "0.5", "--seed", "3",
    ];
    let mut strict = args.to_vec();
    strict.push("--strict-psd");
    let o = freesde(&strict, dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let msg = stderr(&o);
    assert!(msg.contains("path 0") && msg.contains("step"), "{msg}");

    let o = freesde(&args, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let clamps: usize = csv
        .lines()
        .find_map(|l| l.strip_prefix("# clamp_events="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(clamps > 0);
}

#[test]
fn header_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = freesde(&["spectrum", "--model", "gbm1", "--n", "8", "--L", "16", "--M", "3", "--seed", "42"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let header = first_line(&dir.path().join("histogram.csv"));
    assert_eq!(header, first_line(&dir.path().join("moments.csv")));
    let parsed = RunConfig::from_header(&header).unwrap();
    assert_eq!(parsed.seed, 42);
    assert_eq!(parsed.header_line(), header);

    // Re-running from the header gives the same artifacts.
    let again = tempfile::tempdir().unwrap();
    let fields: Vec<String> = header
        .trim_start_matches("# ")
        .split_whitespace()
        .filter(|f| !f.starts_with("command=") && !f.starts_with("strict-psd=") && !f.starts_with("dt="))
        .flat_map(|f| {
            let (k, v) = f.split_once('=').unwrap();
            [format!("--{k}"), v.to_string()]
        })
        .collect();
    let mut args = vec!["spectrum".to_string()];
    args.extend(fields);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = freesde(&args, again.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for name in ["histogram.csv", "moments.csv"] {
        assert_eq!(
            fs::read(dir.path().join(name)).unwrap(),
            fs::read(again.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(&config, "model = \"cir\"\nn = 5\nL = 16\nM = 4\nseed = 9\nsigma = 0.5\n").unwrap();
    let mut flags = RawArgs::default();
    flags.config = Some(config.clone());
    flags.set("n", "7").unwrap();
    let resolved = validate(RunCommand::Spectrum, flags).unwrap();
    assert_eq!(resolved.n, 7);
    assert_eq!(resolved.seed, 9);
    assert_eq!(resolved.paths, 4);
    assert_eq!(resolved.model.param("sigma"), 0.5);

    let out = dir.path().join("out");
    let o = freesde(&["spectrum", "--config", config.to_str().unwrap(), "--n", "7"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(first_line(&out.join("moments.csv")).contains("n=7"));
}

#[test]
fn studies_report_a_fitted_order() {
    let dir = tempfile::tempdir().unwrap();
    let o = freesde(
        &["strong-order", "--model", "ou", "--n", "4", "--dt", "2^-8", "--R-list", "2,4,8", "--M", "40", "--seed", "5"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("strong_error.csv")).unwrap();
    let fit = csv.lines().last().unwrap();
    assert!(fit.starts_with("# fitted_order="), "{fit}");
    let p: f64 = fit["# fitted_order=".len()..].split(',').next().unwrap().parse().unwrap();
    assert!((0.7..1.4).contains(&p), "{p}");
    let log = fs::read_to_string(dir.path().join("run.jsonl")).unwrap();
    assert!(log.lines().all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));
}
