use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn nsdfm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsdfm")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Simulated panel plus a transforms file marking every series as levels.
fn simulated(dir: &TempDir) -> (PathBuf, PathBuf) {
    let sim = dir.path().join("sim");
    let out = nsdfm(&["simulate", "--n", "30", "--t", "120", "--m", "10", "--seed", "3", "--out", s(&sim)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let data = sim.join("panel.csv");
    let header = fs::read_to_string(&data).unwrap().lines().next().unwrap().to_string();
    let mut tf = String::from("series,code\n");
    for name in header.split(',') {
        tf.push_str(&format!("{name},1\n"));
    }
    let transforms = dir.path().join("transforms.csv");
    fs::write(&transforms, tf).unwrap();
    (data, transforms)
}

#[test]
fn simulate_then_select_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (data, tf) = simulated(&dir);
    let out_dir = dir.path().join("sel");
    let out = nsdfm(&["select", "--data", s(&data), "--transforms", s(&tf), "--r-max", "6", "--out", s(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("selection.json")).unwrap()).unwrap();
    for key in ["r_hat", "q_hat", "tau_hat"] {
        assert!(json[key].as_u64().is_some(), "missing {key} in {json}");
    }
    for file in ["criteria.csv", "stability.csv", "spectral_eigenvalues.csv"] {
        assert!(out_dir.join(file).exists(), "{file}");
    }
}

#[test]
fn recursive_order_gives_impact_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let (data, tf) = simulated(&dir);
    let out_dir = dir.path().join("irf");
    let out = nsdfm(&[
        "irf", "--data", s(&data), "--transforms", s(&tf), "--r", "4", "--q", "3", "--tau", "1", "--order", "x1,x2,x3",
        "--out", s(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(out_dir.join("irf.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap_or_else(|| panic!("no {name} in {headers:?}"));
    let (var, shock, hor, val) = (col("variable"), col("shock"), col("horizon"), col("value"));
    let mut checked = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        if &rec[hor] != "0" {
            continue;
        }
        let i = ["x1", "x2", "x3"].iter().position(|v| *v == &rec[var]);
        let j: usize = rec[shock].parse().unwrap();
        if let Some(i) = i {
            if j > i + 1 {
                assert!(rec[val].parse::<f64>().unwrap().abs() < 1e-10, "{rec:?}");
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 3);
}

#[test]
fn var_permanent_warns() {
    let dir = tempfile::tempdir().unwrap();
    let (data, tf) = simulated(&dir);
    let out = nsdfm(&[
        "irf", "--data", s(&data), "--transforms", s(&tf), "--r", "4", "--q", "3", "--tau", "1", "--dynamics", "var",
        "--identify", "permanent", "--out", s(&dir.path().join("o")),
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not consistent"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (data, tf) = simulated(&dir);
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let out = nsdfm(&[
            "irf", "--data", s(&data), "--transforms", s(&tf), "--r", "4", "--q", "3", "--tau", "1", "--boot", "50",
            "--seed", "5", "--out", s(&out_dir),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push((fs::read(out_dir.join("irf.csv")).unwrap(), fs::read(out_dir.join("irf.json")).unwrap()));
    }
    assert!(outputs[0] == outputs[1]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (data, tf) = simulated(&dir);
    let bad_r = nsdfm(&["estimate", "--data", s(&data), "--transforms", s(&tf), "--r", "many"]);
    assert_eq!(bad_r.status.code(), Some(2));
    let missing = nsdfm(&["estimate", "--data", s(&dir.path().join("nope.csv")), "--transforms", s(&tf)]);
    assert_eq!(missing.status.code(), Some(3));

    let cfg = dir.path().join("empty.toml");
    fs::write(&cfg, "name = \"empty\"\nreplications = 1\nseed = 1\npipelines = [\"vecm\"]\nhorizons = [0]\ncells = []\n").unwrap();
    let empty = nsdfm(&["experiment", "--config", s(&cfg)]);
    assert_eq!(empty.status.code(), Some(2), "{}", String::from_utf8_lossy(&empty.stderr));
}
