use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn ddsindy(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddsindy")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = ddsindy(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

fn lines(path: PathBuf) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
}

/// Every file under `dir`, by name.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect();
    files.sort();
    files
}

/// A scratch directory holding the default noiseless surrogate.
fn with_surrogate() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--out", "sim"]);
    dir
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

#[test]
fn fit_writes_metrics_and_coefficients() {
    let dir = with_surrogate();
    let cfg = write_config(dir.path(), "fit.toml", "[model]\npreset = \"dd_exp_tina\"\nomega = 0.05\n");
    ok(dir.path(), &["fit", "--config", &cfg, "--data", "sim/surrogate.csv", "--out", "fit"]);
    let metrics = json(dir.path().join("fit/metrics.json"));
    assert!(metrics["rmse_train"].as_f64().unwrap() >= 0.0);
    assert!(metrics["rmse_validation"].as_f64().unwrap() >= 0.0);
    let coefficients = json(dir.path().join("fit/coefficients.json"));
    let labels: Vec<&str> = coefficients["terms"].as_array().unwrap().iter().map(|t| t["label"].as_str().unwrap()).collect();
    for label in ["C", "T", "I_Nq", "I_Aq", "exp(ω·T)", "exp(ω·T)·I_Nq", "exp(ω·T)·I_Aq"] {
        assert!(labels.contains(&label), "{label} missing from {labels:?}");
    }
    let predictions = lines(dir.path().join("fit/predictions.csv"));
    assert_eq!(predictions[0], "t,yhat");
    assert_eq!(predictions.len(), 1 + 143);
    assert!(dir.path().join("fit/manifest.json").exists());
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = with_surrogate();
    let cfg = write_config(dir.path(), "bad.toml", "[model]\npreset = \"dd\"\nbogus_knob = 3\n");
    let out = ddsindy(dir.path(), &["fit", "--config", &cfg, "--data", "sim/surrogate.csv"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_knob"));
}

#[test]
fn fit_with_unresolved_omega_is_a_config_error() {
    let dir = with_surrogate();
    let cfg = write_config(dir.path(), "fit.toml", "[model]\npreset = \"dd_exp\"\n");
    assert_eq!(code(&ddsindy(dir.path(), &["fit", "--config", &cfg, "--data", "sim/surrogate.csv"])), 2);
}

#[test]
fn missing_data_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&ddsindy(dir.path(), &["fit", "--data", "nowhere.csv"])), 3);
    fs::write(dir.path().join("short.csv"), "t,C,T\n2011-01,1,2\n2011-02,1,2\n").unwrap();
    assert_eq!(code(&ddsindy(dir.path(), &["fit", "--data", "short.csv"])), 2);
    fs::write(dir.path().join("garbled.csv"), "t,C\n2011-01,one\n").unwrap();
    assert_eq!(code(&ddsindy(dir.path(), &["fit", "--data", "garbled.csv"])), 3);
}

#[test]
fn bad_flags_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&ddsindy(dir.path(), &["fit", "--no-such-flag"])), 2);
    assert_eq!(code(&ddsindy(dir.path(), &["simulate", "--workers", "0"])), 2);
    assert_eq!(code(&ddsindy(dir.path(), &["--help"])), 0);
}

#[test]
fn optimize_recovers_omega_deterministically() {
    let dir = with_surrogate();
    let cfg = write_config(dir.path(), "opt.toml", "seed = 11\n[model]\npreset = \"dd_exp_tina\"\n");
    ok(dir.path(), &["optimize", "--config", &cfg, "--data", "sim/surrogate.csv", "--out", "a"]);
    ok(dir.path(), &["optimize", "--config", &cfg, "--data", "sim/surrogate.csv", "--out", "b"]);
    let omega = json(dir.path().join("a/omega.json"));
    let w = omega["omega_star"].as_f64().unwrap();
    assert!((w - 0.05).abs() <= 0.02 * 0.05, "ω* = {w}");
    assert_eq!(omega["evaluations"], 30 * 200);
    assert_eq!(lines(dir.path().join("a/pso_history.csv")).len(), 1 + 200);
    assert_eq!(snapshot(&dir.path().join("a")), snapshot(&dir.path().join("b")));
    let manifest = json(dir.path().join("a/manifest.json"));
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["command"], "optimize");
}

#[test]
fn inverted_bounds_are_a_config_error() {
    let dir = with_surrogate();
    let cfg = write_config(dir.path(), "opt.toml", "[model]\npreset = \"dd_exp_tina\"\n[pso]\nbounds = [1.0, 0.5]\n");
    assert_eq!(code(&ddsindy(dir.path(), &["optimize", "--config", &cfg, "--data", "sim/surrogate.csv"])), 2);
}

#[test]
fn sweeps_write_profiles() {
    let dir = with_surrogate();
    let omega_only = write_config(
        dir.path(),
        "omega.toml",
        "[model]\npreset = \"dd_exp_tina\"\nomega = 0.05\n[sweep]\nomega = true\nsigma = false\n",
    );
    ok(dir.path(), &["sweep", "--config", &omega_only, "--data", "sim/surrogate.csv", "--out", "omega"]);
    let profile = lines(dir.path().join("omega/sweep_omega.csv"));
    assert_eq!(profile[0], "omega,rmse_validation");
    assert_eq!(profile.len(), 1 + 15);
    assert!(!dir.path().join("omega/sweep_sigma.csv").exists());

    let sigma_default = write_config(dir.path(), "sigma.toml", "[model]\npreset = \"dd\"\n");
    ok(dir.path(), &["sweep", "--config", &sigma_default, "--data", "sim/surrogate.csv", "--out", "sigma"]);
    let profile = lines(dir.path().join("sigma/sweep_sigma.csv"));
    assert_eq!(profile.len(), 1 + 12);
    assert!(profile[1].starts_with("0.25,") && profile[12].starts_with("3,"));
    assert_eq!(json(dir.path().join("sigma/sweep_sigma.json"))["reference"], 1.0);

    let both = write_config(dir.path(), "both.toml", "[model]\npreset = \"dd_exp_tina\"\nomega = 0.05\n");
    ok(dir.path(), &["sweep", "--config", &both, "--data", "sim/surrogate.csv", "--out", "both"]);
    let omega = fs::read(dir.path().join("both/sweep_omega.csv")).unwrap();
    let sigma = fs::read(dir.path().join("both/sweep_sigma.csv")).unwrap();
    assert_ne!(omega, sigma);
    assert_eq!(omega, fs::read(dir.path().join("omega/sweep_omega.csv")).unwrap());
}

#[test]
fn simulate_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let quiet = write_config(dir.path(), "quiet.toml", "seed = 7\n[surrogate]\nnoise_sd = 0.0\n");
    let noisy = write_config(dir.path(), "noisy.toml", "seed = 7\n[surrogate]\nnoise_sd = 0.5\n");
    ok(dir.path(), &["simulate", "--config", &quiet, "--out", "a"]);
    ok(dir.path(), &["simulate", "--config", &quiet, "--out", "b"]);
    ok(dir.path(), &["simulate", "--config", &noisy, "--out", "c"]);
    assert_eq!(snapshot(&dir.path().join("a")), snapshot(&dir.path().join("b")));
    let column = |run: &str, name: &str| -> Vec<String> {
        let rows = lines(dir.path().join(run).join("surrogate.csv"));
        let index = rows[0].split(',').position(|h| h == name).unwrap();
        rows[1..].iter().map(|r| r.split(',').nth(index).unwrap().to_string()).collect()
    };
    assert_eq!(column("a", "T"), column("c", "T"));
    assert_eq!(column("a", "I_Nq"), column("c", "I_Nq"));
    assert_ne!(column("a", "C"), column("c", "C"));

    let short = write_config(dir.path(), "short.toml", "[surrogate]\nyears = 1\n");
    assert_eq!(code(&ddsindy(dir.path(), &["simulate", "--config", &short])), 2);
}

#[test]
fn simulate_renewal_section() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "re.toml",
        "[renewal]\nsigma = 1.0\nhorizon = 5.0\ndt = 0.1\nhistory = 1.0\n[renewal.terms]\n\"1\" = 1.5\n",
    );
    ok(dir.path(), &["simulate", "--config", &cfg, "--out", "re"]);
    let rows = lines(dir.path().join("re/renewal.csv"));
    assert_eq!(rows[0], "t,x");
    assert_eq!(rows.len(), 1 + 51);
    for row in &rows[2..] {
        let x: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        approx::assert_abs_diff_eq!(x, 1.5, epsilon = 1e-12);
    }
    assert!(!dir.path().join("re/surrogate.csv").exists());

    let bad = write_config(dir.path(), "bad.toml", "[renewal]\nsigma = 1.0\nhorizon = 5.0\ndt = 0.1\nhistory = 1.0\n[renewal.terms]\n\"wat\" = 1.5\n");
    assert_eq!(code(&ddsindy(dir.path(), &["simulate", "--config", &bad])), 2);
}

/// Hourly ISD-lite lines covering `months` months from January 2011.
fn isd_text(months: usize) -> String {
    let mut text = String::new();
    for m in 0..months {
        let (year, month) = (2011 + (m / 12) as i32, (m % 12) as u32 + 1);
        let days = [31, if year % 4 == 0 { 29 } else { 28 }, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31][month as usize - 1];
        for day in 1..=days {
            for hour in 0..24 {
                let tenths = if (day + hour) % 17 == 0 { -9999 } else { 100 + 5 * m as i32 + hour as i32 - day as i32 };
                text.push_str(&format!(
                    "{year:4} {month:02} {day:02} {hour:02} {tenths:5} -9999 10150   270    30     4     0 -9999\n"
                ));
            }
        }
    }
    text
}

fn cases_text(start: (i32, u32), months: usize) -> String {
    let mut text = String::from("date,cases\n");
    for k in 0..months {
        let index = start.0 as usize * 12 + start.1 as usize - 1 + k;
        text.push_str(&format!("{}-{:02},{}\n", index / 12, index % 12 + 1, k % 7));
    }
    text
}

#[test]
fn ingest_aligns_plain_and_gzip_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let isd = isd_text(30);
    fs::write(dir.path().join("station.txt"), &isd).unwrap();
    let mut gz = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
    gz.write_all(isd.as_bytes()).unwrap();
    fs::write(dir.path().join("station.txt.gz"), gz.finish().unwrap()).unwrap();
    fs::write(dir.path().join("cases.csv"), cases_text((2011, 1), 36)).unwrap();
    fs::write(dir.path().join("late.csv"), cases_text((2012, 7), 24)).unwrap();

    ok(dir.path(), &["ingest", "--temperature", "station.txt", "--cases", "cases.csv", "--out", "plain"]);
    ok(dir.path(), &["ingest", "--temperature", "station.txt.gz", "--cases", "cases.csv", "--out", "gz"]);
    let plain = fs::read(dir.path().join("plain/table.csv")).unwrap();
    assert_eq!(plain, fs::read(dir.path().join("gz/table.csv")).unwrap());
    let rows = lines(dir.path().join("plain/table.csv"));
    assert_eq!(rows[0], "t,C,T");
    assert_eq!(rows.len(), 1 + 30);
    assert!(rows[1].starts_with("2011-01,0,"));

    // only 2012-07..2013-06 overlap
    let out = ddsindy(dir.path(), &["ingest", "--temperature", "station.txt", "--cases", "late.csv", "--out", "late"]);
    assert_eq!(code(&out), 3);
    assert_eq!(code(&ddsindy(dir.path(), &["ingest", "--cases", "cases.csv"])), 2);
}

#[test]
fn manifest_replays_bit_identically() {
    let dir = with_surrogate();
    let cfg = write_config(
        dir.path(),
        "run.toml",
        "seed = 5\n[model]\npreset = \"dd_exp_tina\"\n[pso]\nswarm_size = 12\nmax_iter = 40\n[sweep]\nomega_points = 6\nsigma_grid = [0.5, 1.0, 1.5]\n",
    );
    for command in ["optimize", "sweep"] {
        let first = format!("{command}-1");
        let second = format!("{command}-2");
        ok(dir.path(), &[command, "--config", &cfg, "--data", "sim/surrogate.csv", "--out", &first]);
        let manifest = format!("{first}/manifest.json");
        ok(dir.path(), &[command, "--config", &manifest, "--out", &second]);
        assert_eq!(snapshot(&dir.path().join(&first)), snapshot(&dir.path().join(&second)), "{command}");
    }
    let manifest = json(dir.path().join("optimize-1/manifest.json"));
    assert_eq!(manifest["config"]["model"]["nodes"], 100);
    assert_eq!(manifest["config"]["pso"]["swarm_size"], 12);
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let dir = with_surrogate();
    let cfg = write_config(
        dir.path(),
        "run.toml",
        "[model]\npreset = \"dd_exp_tina\"\n[pso]\nmax_iter = 40\n[sweep]\nomega_points = 15\n",
    );
    for workers in ["1", "3", "8"] {
        let out = format!("w{workers}");
        ok(dir.path(), &["sweep", "--config", &cfg, "--data", "sim/surrogate.csv", "--workers", workers, "--out", &out]);
    }
    let reference = snapshot(&dir.path().join("w1"));
    assert!(reference.iter().any(|(name, _)| name == "sweep_omega.csv"));
    assert_eq!(reference, snapshot(&dir.path().join("w3")));
    assert_eq!(reference, snapshot(&dir.path().join("w8")));
}
