use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use spdmbi_core::lineshapes::pdd_lineshape;
use spdmbi_core::spectrum::{antisymmetry_residual, Spectrum};

fn spdmbi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spdmbi")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn analyze_json(file: &Path) -> Value {
    let out = spdmbi(&["analyze", "--json", path_str(file)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_str(&stdout(&out)).unwrap()
}

#[test]
fn ramsey_symmetric_input_round_trips_through_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("fig2.csv");
    let out = spdmbi(&["ramsey", "--n", "20", "--chi", "0.02", "--input", "x-polarized", "--out", path_str(&file)]);
    assert_eq!(code(&out), 0);
    let report = analyze_json(&file);
    assert!(report["antisymmetry_residual"].as_f64().unwrap() < 1e-7);
    assert!(report["zero_crossing"].as_f64().unwrap().abs() < 1e-9);
    let s = Spectrum::read(&file).unwrap();
    assert_eq!(s.points().len(), 201);
    assert_eq!(s.meta()["config"]["chi"][0], 0.02);
    assert_eq!(s.meta()["config"]["input"], "x-polarized");
}

#[test]
fn ramsey_conventional_input_is_even_and_shifts_with_twisting() {
    let dir = tempfile::tempdir().unwrap();
    let flat = dir.path().join("flat.csv");
    let twisted = dir.path().join("twisted.csv");
    assert_eq!(code(&spdmbi(&["ramsey", "--input", "dicke:+J", "--chi", "0", "--out", path_str(&flat)])), 0);
    let s = Spectrum::read(&flat).unwrap();
    let ys = s.ys();
    let n = ys.len();
    for i in 0..n {
        assert!((ys[i] - ys[n - 1 - i]).abs() < 1e-8);
    }
    assert!(analyze_json(&flat)["peak"].as_f64().unwrap().abs() < 1e-9);
    assert_eq!(code(&spdmbi(&["ramsey", "--input", "dicke:+J", "--chi", "0.02", "--out", path_str(&twisted)])), 0);
    let peak = analyze_json(&twisted)["peak"].as_f64().unwrap();
    assert!(peak.abs() > 1e-3, "peak {peak}");
}

#[test]
fn minimum_grid_writes_three_rows_to_stdout() {
    let out = spdmbi(&["ramsey", "--n", "4", "--grid-points", "3"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 4, "{text}");
    assert_eq!(rows[0], "x,y");
}

#[test]
fn json_output_matches_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("a.csv");
    let json = dir.path().join("a.json");
    assert_eq!(code(&spdmbi(&["ramsey", "--n", "6", "--grid-points", "21", "--out", path_str(&csv)])), 0);
    assert_eq!(code(&spdmbi(&["ramsey", "--n", "6", "--grid-points", "21", "--out", path_str(&json)])), 0);
    let a = Spectrum::read(&csv).unwrap();
    let b = Spectrum::read(&json).unwrap();
    assert_eq!(a.points(), b.points());
    assert!(std::fs::read_to_string(&json).unwrap().trim_start().starts_with('{'));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[common]\nthreads = 2\n\n[ramsey]\nn = 6\nchi = [0.01]\ngrid_points = 11\n").unwrap();
    let out = spdmbi(&["ramsey", "--config", path_str(&cfg), "--grid-points", "7"]);
    assert_eq!(code(&out), 0);
    let s = Spectrum::parse(&stdout(&out)).unwrap();
    assert_eq!(s.points().len(), 7);
    assert_eq!(s.meta()["n_particles"], 6);
    assert_eq!(s.meta()["config"]["chi"][0], 0.01);
    assert_eq!(s.meta()["config"]["threads"], 2);

    std::fs::write(&cfg, "[ramsey]\nparticles = 6\n").unwrap();
    assert_eq!(code(&spdmbi(&["ramsey", "--config", path_str(&cfg)])), 2);
    let missing = dir.path().join("missing.toml");
    assert_eq!(code(&spdmbi(&["ramsey", "--config", path_str(&missing)])), 4);
}

#[test]
fn several_spectra_need_out_and_produce_overlay() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&spdmbi(&["ramsey", "--n", "4", "--grid-points", "5", "--chi", "0,0.01"])), 2);
    let out = dir.path().join("s.csv");
    let svg = dir.path().join("s.svg");
    let run = spdmbi(&[
        "ramsey", "--n", "4", "--grid-points", "5", "--chi", "0,0.01", "--gamma", "0,0.05", "--out", path_str(&out),
        "--svg", path_str(&svg),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    for i in 0..4 {
        assert!(dir.path().join(format!("s_{i}.csv")).exists());
    }
    let picture = std::fs::read_to_string(&svg).unwrap();
    assert_eq!(picture.matches("<polyline").count(), 4);
    assert!(picture.contains("chi=0.01 gamma=0.05"));
}

#[test]
fn bad_inputs_exit_with_config_code() {
    assert_eq!(code(&spdmbi(&["ramsey", "--input", "spiral"])), 2);
    assert_eq!(code(&spdmbi(&["ramsey", "--grid-points", "4"])), 2);
    assert_eq!(code(&spdmbi(&["ramsey", "--threads", "0"])), 2);
    assert_eq!(code(&spdmbi(&["ramsey", "--gamma", "-0.1"])), 2);
    assert_eq!(code(&spdmbi(&["lockin", "--axis", "z"])), 2);
}

#[test]
fn custom_input_file() {
    let dir = tempfile::tempdir().unwrap();
    let psi = dir.path().join("psi.json");
    // N = 2: (|1,1> + |1,-1>)/sqrt(2)
    std::fs::write(&psi, "[[0.7071067811865476,0],[0,0],[0.7071067811865476,0]]").unwrap();
    let selector = format!("custom:{}", psi.display());
    let out = spdmbi(&["ramsey", "--n", "2", "--chi", "0.05", "--grid-points", "21", "--input", &selector]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let s = Spectrum::parse(&stdout(&out)).unwrap();
    assert!(antisymmetry_residual(&s).unwrap() < 1e-7);
    let missing = format!("custom:{}", dir.path().join("nope.json").display());
    assert_eq!(code(&spdmbi(&["ramsey", "--n", "2", "--input", &missing])), 4);
}

#[test]
fn lockin_rejects_zero_length_pulses() {
    let out = spdmbi(&["lockin", "--t-pulse", "0"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("t_pulse"));
    let ideal = spdmbi(&["lockin", "--t-pulse", "0", "--ideal-pulses", "--n", "2", "--pulses", "4", "--grid-points", "5"]);
    assert_eq!(code(&ideal), 0);
}

#[test]
fn effective_pdd_follows_lineshape() {
    let pulses = 99u32;
    let out = spdmbi(&[
        "lockin", "--engine", "effective", "--variant", "pdd_ideal", "--chi", "0", "--lambda", "0", "--pulses", "99",
        "--grid-points", "41",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let s = Spectrum::parse(&stdout(&out)).unwrap();
    let omega_s = 200.0 * PI;
    let tau_s = PI / omega_s;
    // N = 20: J = 10; <Jz> = J sin(rotation angle)
    for p in s.points() {
        let rate = 2.0 / (f64::from(pulses) * PI) * pdd_lineshape(p.x, omega_s, pulses);
        let expected = 10.0 * (rate * f64::from(pulses) * tau_s).sin();
        assert!((p.y - expected).abs() < 1e-10, "{} vs {expected}", p.y);
    }
}

#[test]
fn lockin_finite_y_pulses_beat_finite_x_pulses() {
    let dir = tempfile::tempdir().unwrap();
    let y = dir.path().join("cp_y.csv");
    let x = dir.path().join("cp_x.csv");
    let base = ["lockin", "--lambda", "0.5", "--pulses", "100", "--chi", "0.6283185307179586", "--grid-points", "21"];
    let run_y = spdmbi(&[&base[..], &["--axis", "y", "--out", path_str(&y)]].concat());
    assert_eq!(code(&run_y), 0, "{}", String::from_utf8_lossy(&run_y.stderr));
    let run_x = spdmbi(&[&base[..], &["--axis", "x", "--out", path_str(&x)]].concat());
    assert_eq!(code(&run_x), 0, "{}", String::from_utf8_lossy(&run_x.stderr));
    let res_y = analyze_json(&y)["antisymmetry_residual"].as_f64().unwrap();
    let res_x = analyze_json(&x)["antisymmetry_residual"].as_f64().unwrap();
    assert!(res_x > 10.0 * res_y, "x {res_x} y {res_y}");
    let meta = Spectrum::read(&y).unwrap().meta().clone();
    assert_eq!(meta["config"]["axis"], "y");
    assert_eq!(meta["config"]["pulses"], 100);
    assert_eq!(meta["engine"], serde_json::json!({ "engine": "exact" }));
}

#[test]
fn noisy_lockin_is_thread_count_independent() {
    let run = |threads: &str, seed: &str| {
        let out = spdmbi(&[
            "lockin", "--n", "4", "--pulses", "8", "--grid-points", "9", "--noise", "0.02", "--seed", seed, "--threads",
            threads,
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        stdout(&out)
    };
    // the meta header echoes the thread count; the rows must not depend on it
    let body = |s: String| s.lines().skip(1).collect::<Vec<_>>().join("\n");
    let one = body(run("1", "7"));
    assert_eq!(one, body(run("4", "7")));
    assert_ne!(one, body(run("1", "8")));
}

#[test]
fn coarse_step_trips_accuracy_gate() {
    let out = spdmbi(&["lockin", "--n", "4", "--pulses", "4", "--grid-points", "5", "--chi", "0.6", "--step", "5e-4"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn dump_schedule_goes_to_stderr() {
    let out = spdmbi(&["lockin", "--n", "2", "--pulses", "2", "--grid-points", "3", "--dump-schedule"]);
    assert_eq!(code(&out), 0);
    let err = String::from_utf8_lossy(&out.stderr);
    let summary: Value = serde_json::from_str(&err).unwrap();
    let labels: Vec<&str> = summary["segments"].as_array().unwrap().iter().map(|s| s["label"].as_str().unwrap()).collect();
    assert_eq!(labels.iter().filter(|l| l.starts_with("pi_")).count(), 2);
    assert_eq!(*labels.last().unwrap(), "readout");
    assert!(Spectrum::parse(&stdout(&out)).is_ok());
}

#[test]
fn verify_passes_and_catches_injected_fault() {
    let ok = spdmbi(&["verify", "--json"]);
    assert_eq!(code(&ok), 0);
    let report: Value = serde_json::from_str(&stdout(&ok)).unwrap();
    let records = report["records"].as_array().unwrap();
    assert!(records.len() > 20);
    assert!(records.iter().all(|r| r["passed"] == true));
    assert_eq!(code(&spdmbi(&["verify", "--inject-fault", "parity"])), 5);
}

#[test]
fn analyze_rejects_short_and_malformed_files() {
    let dir = tempfile::tempdir().unwrap();
    let short = dir.path().join("short.csv");
    std::fs::write(&short, "# meta: {\"sweep_variable\":\"delta\"}\nx,y\n-1,0.5\n1,-0.5\n").unwrap();
    assert_eq!(code(&spdmbi(&["analyze", path_str(&short)])), 2);
    let junk = dir.path().join("junk.csv");
    std::fs::write(&junk, "hello\n").unwrap();
    assert_eq!(code(&spdmbi(&["analyze", path_str(&junk)])), 2);
    assert_eq!(code(&spdmbi(&["analyze", path_str(&dir.path().join("absent.csv"))])), 4);
    let out = spdmbi(&["analyze", path_str(&short)]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}
