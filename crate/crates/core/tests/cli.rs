//! End-to-end runs of the `soficrank` binary on the shipped jobs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SHIPPED: [(&str, &str); 9] = [
    ("z_vr", "vr"),
    ("f2_trivial", "vr"),
    ("z2_vnd", "vnd"),
    ("z2_spectrum", "spectrum"),
    ("z_folner_spectrum", "spectrum"),
    ("z_moments", "moments"),
    ("z_mdim", "mdim"),
    ("z2_tile", "tile"),
    ("f2_additivity", "demo-additivity"),
];

fn job(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../jobs")
        .join(format!("{name}.toml"))
}

fn soficrank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_soficrank"))
        .args(args)
        .env_remove("SOFICRANK_BUDGET_MB")
        .output()
        .unwrap()
}

fn run(cmd: &str, job: &Path, out: &Path) -> Output {
    soficrank(&[cmd, "--job", job.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn json_in(dir: &Path) -> (String, String) {
    let path = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|x| x == "json"))
        .expect("a JSON report");
    (
        path.file_name().unwrap().to_string_lossy().into_owned(),
        fs::read_to_string(path).unwrap(),
    )
}

#[test]
fn shipped_jobs_are_deterministic() {
    for (name, cmd) in SHIPPED {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        for dir in [&a, &b] {
            let out = run(cmd, &job(name), dir.path());
            assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        }
        let (fa, ja) = json_in(a.path());
        let (fb, jb) = json_in(b.path());
        assert_eq!(fa, fb);
        assert_eq!(ja, jb, "{name}");
        let report: serde_json::Value = serde_json::from_str(&ja).unwrap();
        assert_eq!(report["schema"], "1", "{name}");
    }
}

#[test]
fn reports_name_every_written_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("spectrum", &job("z2_spectrum"), dir.path());
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    for line in stdout.lines() {
        let path = line.strip_prefix("wrote ").expect("one line per file");
        assert!(Path::new(path).exists(), "{path}");
    }
    assert!(stdout.contains("_sandwich.csv"));
}

#[test]
fn verify_predicts_sizes_without_running() {
    let dir = tempfile::tempdir().unwrap();
    let out = soficrank(&[
        "verify",
        "--job",
        job("z_vr").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(
        stdout.starts_with("ok: 6 level(s), predicted max dense matrix 256x256"),
        "{stdout}"
    );
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(
        &bad,
        "seed = 1\n[group]\nkind = \"free-abelian\"\nrank = 1\nwidth = 3\n",
    )
    .unwrap();
    let out = run("vr", &bad, dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("width") && stderr.contains("line"), "{stderr}");

    let out = run("vr", &dir.path().join("missing.toml"), dir.path());
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn budget_overruns_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.toml");
    let text = fs::read_to_string(job("z_vr"))
        .unwrap()
        .replace("tail = 3", "tail = 3\nmethod = \"dense\"");
    fs::write(&path, text).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_soficrank"))
        .args([
            "vr",
            "--job",
            path.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .env("SOFICRANK_BUDGET_MB", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn threads_flag_does_not_change_output() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let j = job("z2_vnd");
    let j = j.to_str().unwrap();
    assert!(
        soficrank(&["vnd", "--job", j, "--threads", "1", "--out", a.path().to_str().unwrap()])
            .status
            .success()
    );
    assert!(soficrank(&["vnd", "--job", j, "--out", b.path().to_str().unwrap()])
        .status
        .success());
    assert_eq!(json_in(a.path()).1, json_in(b.path()).1);
}
