mod common;

use std::path::Path;
use std::process::Command;

use nvsim::cli::{run, EXIT_CONFIG, EXIT_USAGE};
use nvsim::io::parse_density_matrix;

fn invoke(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["nvsim"];
    argv.extend_from_slice(args);
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn noiseless_config() -> String {
    common::config_dir().join("noiseless.toml").display().to_string()
}

fn shipped_config() -> String {
    common::config_dir().join("default.toml").display().to_string()
}

#[test]
fn levels_reports_transition_c() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, text, _) = invoke(&["--config", &shipped_config(), "--out", out, "levels"]);
    assert_eq!(code, 0);
    let c_line = text.lines().find(|l| l.starts_with("C ")).expect("C row");
    let freq: f64 = c_line.split_whitespace().last().unwrap().parse().unwrap();
    assert!((freq - 127.0).abs() < 0.5, "{freq}");
    let split = text
        .lines()
        .find_map(|l| l.strip_prefix("splitting_3_4_MHz "))
        .unwrap();
    assert!((split.trim().parse::<f64>().unwrap().abs() - 3.0).abs() < 0.03);
    assert!(dir.path().join("levels.csv").exists());
    let manifest = std::fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
    assert!(manifest.contains("config_sha256"));
}

#[test]
fn noiseless_crot_prints_unit_fidelity() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for input in ["1", "2", "3", "4"] {
        let (code, text, err) = invoke(&["--config", &noiseless_config(), "--out", out, "crot", "--input", input]);
        assert_eq!(code, 0, "{err}");
        let lines: Vec<&str> = text.lines().collect();
        let k = lines.iter().position(|l| l.trim() == "fidelity").expect("fidelity header");
        assert_eq!(lines[k + 1].trim(), "1.000000");
        let rho = std::fs::read_to_string(dir.path().join(format!("crot_input{input}.rho"))).unwrap();
        assert!(parse_density_matrix(&rho).is_ok());
    }
}

#[test]
fn tomography_csv_and_reproducibility() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = |out: &Path| {
        vec![
            "--config".to_string(),
            shipped_config(),
            "--out".to_string(),
            out.display().to_string(),
            "--format".to_string(),
            "csv".to_string(),
            "tomography".to_string(),
        ]
    };
    let run_in = |out: &Path| {
        let v = args(out);
        let refs: Vec<&str> = v.iter().map(String::as_str).collect();
        invoke(&refs)
    };
    let (code, text, err) = run_in(a.path());
    assert_eq!(code, 0, "{err}");
    let (_, text_b, _) = run_in(b.path());
    assert_eq!(text, text_b);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("input,fidelity"));
    let fid: Vec<f64> = lines
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(fid.len(), 4);
    for (f, w) in fid.iter().zip([0.89, 0.89, 0.88, 1.0]) {
        assert!((f - w).abs() <= 0.05, "{f}");
    }
    for k in 1..=4 {
        let name = format!("tomography_input{k}.rho");
        let x = std::fs::read(a.path().join(&name)).unwrap();
        let y = std::fs::read(b.path().join(&name)).unwrap();
        assert_eq!(x, y);
        assert!(parse_density_matrix(std::str::from_utf8(&x).unwrap()).is_ok());
    }
}

#[test]
fn run_executes_sequence_files() {
    let dir = tempfile::tempdir().unwrap();
    let seq = common::config_dir().join("../sequences/crot_input1.seq");
    let (code, text, err) = invoke(&[
        "--config",
        &noiseless_config(),
        "--out",
        dir.path().to_str().unwrap(),
        "--seed",
        "3",
        "run",
        seq.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(text.contains("readout count"));
    let rho = parse_density_matrix(&std::fs::read_to_string(dir.path().join("state.rho")).unwrap()).unwrap();
    assert!(rho.check().is_ok());
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(invoke(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(invoke(&["crot", "--input", "9"]).0, EXIT_USAGE);
    assert_eq!(invoke(&["rabi", "--transition", "B"]).0, EXIT_USAGE);

    let bad_toml = dir.path().join("bad.toml");
    std::fs::write(&bad_toml, "[noise]\nt2_electrn = 1.0\n").unwrap();
    let (code, _, err) = invoke(&["--config", bad_toml.to_str().unwrap(), "--out", out, "levels"]);
    assert_eq!(code, EXIT_CONFIG);
    assert!(err.contains("line 2"), "{err}");

    let bad_seq = dir.path().join("bad.seq");
    std::fs::write(&bad_seq, "init 3us\nmw pi @Z\n").unwrap();
    let (code, _, err) = invoke(&["--out", out, "run", bad_seq.to_str().unwrap()]);
    assert_eq!(code, EXIT_CONFIG);
    assert!(err.contains("bad.seq:2:"), "{err}");

    let (code, _, _) = invoke(&["--config", "/nonexistent/x.toml", "levels"]);
    assert_eq!(code, EXIT_CONFIG);
}

#[test]
fn binary_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_nvsim");
    let status = Command::new(bin)
        .args(["--out", dir.path().to_str().unwrap(), "levels"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&status.stdout).contains("transition"));
    let status = Command::new(bin).arg("nope").output().unwrap();
    assert_eq!(status.status.code(), Some(EXIT_USAGE));
}
