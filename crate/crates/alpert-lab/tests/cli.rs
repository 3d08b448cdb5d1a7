use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use alpert_lab::cli::run_config;
use alpert_lab::config::{load_config, parse_config};

fn smoke_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/smoke.cfg")
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_alpert-lab"));
    for (k, _) in std::env::vars() {
        if k.starts_with("ALPERT_LAB_") {
            c.env_remove(k);
        }
    }
    c
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn smoke_config_is_fast_clean_and_byte_identical() {
    let cfg = load_config(&smoke_path()).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let start = Instant::now();
    let m = run_config(&cfg, a.path(), 1).unwrap();
    assert!(start.elapsed() < Duration::from_secs(60), "smoke run took {:?}", start.elapsed());
    assert_eq!(m.failures(), 0, "{:?}", m.experiments);
    run_config(&cfg, b.path(), 4).unwrap();
    let (fa, fb) = (read_dir_sorted(a.path()), read_dir_sorted(b.path()));
    assert_eq!(fa.len(), 8, "seven tables and the manifest");
    assert_eq!(fa, fb);

    let mut rdr = csv::Reader::from_path(a.path().join("basis_checks.csv")).unwrap();
    let col = rdr.headers().unwrap().iter().position(|h| h == "pass").unwrap();
    for row in rdr.records() {
        assert_eq!(&row.unwrap()[col], "true");
    }
}

#[test]
fn binary_runs_the_empty_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.cfg");
    std::fs::write(&cfg, "seed = 3\n").unwrap();
    let out = dir.path().join("out");
    let st = bin().arg("--config").arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert!(st.success());
    let names: Vec<String> = read_dir_sorted(&out).into_iter().map(|(n, _)| n).collect();
    assert_eq!(names, ["manifest.json"]);
}

#[test]
fn unknown_family_names_the_field_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(
        &cfg,
        "seed = 1\n\n[[experiment]]\nkind = \"t1\"\ndepth = 4\nsigma = { kind = \"lebesgue\" }\nomega = { kind = \"lebesgue\" }\nfamily = \"hilbert\"\nalpha = 0.0\ns = 0.0\n",
    )
    .unwrap();
    let o = bin().arg("--config").arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 8"), "{err}");
    assert!(err.contains("`family`"), "{err}");
    assert!(!dir.path().join("o").join("manifest.json").exists());
}

#[test]
fn env_overrides_and_depth_cap_failure_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    std::fs::write(
        &cfg,
        "[[experiment]]\nkind = \"goodbad\"\neps = [0.5]\nr = [2, 3]\ntrials = 1000\n\n\
         [[experiment]]\nkind = \"basis_checks\"\nn = 1\ndepth = 30\nkappa = [1]\nmeasures = [{ kind = \"lebesgue\" }]\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = bin()
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .env("ALPERT_LAB_SEED", "77")
        .env("ALPERT_LAB_DEPTH_CAP", "24")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 77);
    assert_eq!(manifest["depth_cap"], 24);
    assert_eq!(manifest["experiments"][0]["status"], "ok");
    assert_eq!(manifest["experiments"][1]["status"], "failed");
    let basis = std::fs::read_to_string(out.join("basis_checks.csv")).unwrap();
    assert!(basis.lines().nth(1).unwrap().starts_with("1,failed,"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("failed"));
}

#[test]
fn seed_changes_monte_carlo_output() {
    let text = "seed = 1\n[[experiment]]\nkind = \"goodbad\"\neps = [0.5]\nr = [2, 3, 4]\ntrials = 1000\n";
    let mut cfg = parse_config(text).unwrap();
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_config(&cfg, a.path(), 1).unwrap();
    run_config(&cfg, b.path(), 1).unwrap();
    cfg.seed = 2;
    run_config(&cfg, c.path(), 1).unwrap();
    let read = |d: &Path| std::fs::read(d.join("goodbad.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    assert_ne!(read(a.path()), read(c.path()));
}

#[test]
fn config_errors_are_line_numbered() {
    let e = parse_config("[[experiment]]\nkind = \"goodbad\"\neps = [0.5]\nr = [2]\ntrails = 10\n").unwrap_err().to_string();
    assert!(e.contains(": line 5:"), "{e}");
    let e = parse_config("[[experiment]]\nkind = \"spectra\"\n").unwrap_err().to_string();
    assert!(e.contains("line 2") && e.contains("spectra"), "{e}");
    let e = parse_config("seed = \"x\"\n").unwrap_err().to_string();
    assert!(e.contains(": line 1:"), "{e}");
}
