use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fqw(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fqw"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn with_config(cmd: &str, text: &str) -> (Output, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    fs::write(&path, text).unwrap();
    let out = fqw(&[cmd, "--config", path.to_str().unwrap()], &dir.path().join("out"));
    (out, dir)
}

fn column(csv_text: &str, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    let idx = r.headers().unwrap().iter().position(|h| h == name).expect("column");
    r.records().map(|rec| rec.unwrap()[idx].to_string()).collect()
}

#[test]
fn invalid_configuration_exits_with_2() {
    let (out, _d) = with_config("propagate", "d = 3\nbogus = true\n");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(fqw(&["spectral"], dir.path()).status.code(), Some(2));
    assert_eq!(fqw(&["spectral", "--preset", "missing"], dir.path()).status.code(), Some(2));
}

#[test]
fn non_diagonal_kernel_in_resolved_mode_exits_with_2() {
    let (out, _d) = with_config("propagate", "preset = \"thermal-cosine\"\n[propagate]\nmode = \"ris\"\n");
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn path_budget_exits_with_3() {
    let (out, _d) = with_config("propagate", "preset = \"hop\"\n[propagate]\ntimes = [6]\nbudget = 1000.0\n");
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));
}

#[test]
fn coherent_vacuum_top_state_is_refused_with_4() {
    let (out, _d) = with_config("converge", "preset = \"hop\"\n[converge.rho0]\nkind = \"vacuum-top\"\n");
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn zero_coupling_matches_free_walk() {
    let dir = tempfile::tempdir().unwrap();
    let out = fqw(&["propagate", "--preset", "free"], dir.path());
    assert!(out.status.success());
    let text = fs::read_to_string(dir.path().join("propagate.csv")).unwrap();
    let free = column(&text, "deviation_from_free");
    assert!(!free.is_empty());
    for v in free {
        assert!(v.parse::<f64>().unwrap() < 1e-12, "{v}");
    }
    for h in column(&text, "config_hash") {
        assert_eq!(h.len(), 64);
    }
}

#[test]
fn seed_flag_changes_the_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(fqw(&["spectral", "--preset", "hop"], a.path()).status.success());
    assert!(fqw(&["spectral", "--preset", "hop", "--seed", "9"], b.path()).status.success());
    let sa = fs::read(a.path().join("spectrum.csv")).unwrap();
    let sb = fs::read(b.path().join("spectrum.csv")).unwrap();
    assert_ne!(sa, sb);
}

#[test]
fn outputs_carry_provenance() {
    let dir = tempfile::tempdir().unwrap();
    assert!(fqw(&["converge", "--preset", "diagonal-ris"], dir.path()).status.success());
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("converge.json")).unwrap()).unwrap();
    assert_eq!(json["provenance"]["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(json["config"]["preset"], "diagonal-ris");
    assert!(json["steady_state"]["agreement"].as_f64().unwrap() < 1e-8);
}
