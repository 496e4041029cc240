use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn polarlink(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polarlink"))
        .args(args)
        .output()
        .unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn state_tomo_on_noiseless_diagonal_counts() {
    let f = fixture("noiseless_D.csv");
    let v = json(&polarlink(&[
        "state-tomo",
        f.to_str().unwrap(),
        "--state",
        "D",
    ]));
    let s = &v["summary"];
    assert!((s["bloch_x"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!((s["purity"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!((s["fidelity"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    let rho = &v["density_matrix"];
    for r in 0..2 {
        for c in 0..2 {
            assert!((rho["re"][r][c].as_f64().unwrap() - 0.5).abs() < 1e-9);
            assert!(rho["im"][r][c].as_f64().unwrap().abs() < 1e-9);
        }
    }
}

#[test]
fn process_tomo_on_identity_fixture() {
    let dir = fixture("identity");
    let v = json(&polarlink(&[
        "process-tomo",
        "--dir",
        dir.to_str().unwrap(),
    ]));
    assert!((v["fidelity"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!((v["chi"]["re"][0][0].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(v["bars"].as_array().unwrap().len(), 16);
}

#[test]
fn process_tomo_needs_spanning_inputs() {
    let dir = fixture("identity");
    let arg = |l: &str| format!("{l}={}", dir.join(format!("counts_{l}.csv")).display());
    let out = polarlink(&[
        "process-tomo",
        "--input",
        &arg("H"),
        "--input",
        &arg("V"),
        "--input",
        &arg("D"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("span"));
}

#[test]
fn fit_visibility_csv_output() {
    let f = fixture("malus_v1.csv");
    let out = polarlink(&["--format", "csv", "fit-visibility", f.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let vis: f64 = row[header.iter().position(|h| *h == "visibility").unwrap()]
        .parse()
        .unwrap();
    assert!((vis - 1.0).abs() < 1e-10);
}

#[test]
fn link_budget_of_preset() {
    let v = json(&polarlink(&["link-budget"]));
    assert!((v["channel_db"].as_f64().unwrap() - 38.2).abs() < 0.1);
    assert!((v["total_db"].as_f64().unwrap() - 40.0).abs() < 0.5);
}

#[test]
fn run_twice_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = polarlink(&["--seed", "42", "--out", d.path().to_str().unwrap(), "run"]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let mut names: Vec<_> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.iter().any(|n| n == "report.json"));
    for n in &names {
        assert_eq!(
            fs::read(a.path().join(n)).unwrap(),
            fs::read(b.path().join(n)).unwrap(),
            "{n:?}"
        );
    }
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(a.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["provenance"]["seed"], 42);
}

#[test]
fn simulate_then_reconstruct() {
    let d = tempfile::tempdir().unwrap();
    let out = polarlink(&[
        "--format",
        "csv",
        "--out",
        d.path().to_str().unwrap(),
        "simulate",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(d.path().join("scan_H.csv").exists());
    let v = json(&polarlink(&[
        "process-tomo",
        "--dir",
        d.path().to_str().unwrap(),
    ]));
    let f = v["fidelity"].as_f64().unwrap();
    assert!(f > 0.9 && f < 1.0, "{f}");
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let bad = d.path().join("bad.toml");
    fs::write(
        &bad,
        "schema_version = 1\nstates = [\"H\"]\n[link]\nalpha_per_m = 0.1\n",
    )
    .unwrap();
    let out = polarlink(&["--config", bad.to_str().unwrap(), "link-budget"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("length_m"));

    let out = polarlink(&["--config", "nosuchpreset", "link-budget"]);
    assert_eq!(out.status.code(), Some(2));

    let missing = d.path().join("missing.csv");
    let out = polarlink(&["state-tomo", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}
