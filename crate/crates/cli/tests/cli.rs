use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mwtomo(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mwtomo"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn records(path: &Path) -> usize {
    let text = std::fs::read_to_string(path).unwrap();
    let line = text.lines().find(|l| l.starts_with("records ")).unwrap();
    line["records ".len()..].parse().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const SMALL: &str = "[geometry]\ntransmitters_per_side = 1\nreceivers_per_side = 3\n";

#[test]
fn forward_writes_the_default_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out = mwtomo(dir.path(), &["forward", "--out", "clean.txt"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("records 288"));
    assert_eq!(records(&dir.path().join("clean.txt")), 288);
}

#[test]
fn geometry_comes_from_the_config() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "small.toml", SMALL);
    let out = mwtomo(dir.path(), &["--config", "small.toml", "forward", "--out", "clean.txt"]);
    assert!(out.status.success(), "{}", stderr(&out));
    // 4 transmitters, each heard on the 3 other sides
    assert_eq!(records(&dir.path().join("clean.txt")), 36);
}

#[test]
fn misspelled_keys_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.toml", "freqency = 2.0\n");
    let out = mwtomo(dir.path(), &["--config", "bad.toml", "forward"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("freqency"), "{}", stderr(&out));
    assert!(!dir.path().join("data_clean.txt").exists());
}

#[test]
fn contamination_is_seeded_and_one_shot() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "small.toml", SMALL);
    assert!(mwtomo(d, &["--config", "small.toml", "forward", "--out", "clean.txt"]).status.success());
    for name in ["a.txt", "b.txt"] {
        let out = mwtomo(d, &["contaminate", "clean.txt", "--percent", "5", "--seed", "7", "--out", name]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    assert_eq!(std::fs::read(d.join("a.txt")).unwrap(), std::fs::read(d.join("b.txt")).unwrap());

    let out = mwtomo(d, &["contaminate", "clean.txt", "--percent", "5", "--seed", "8", "--out", "c.txt"]);
    assert!(out.status.success());
    assert_ne!(std::fs::read(d.join("a.txt")).unwrap(), std::fs::read(d.join("c.txt")).unwrap());

    let out = mwtomo(d, &["contaminate", "clean.txt", "--percent", "0", "--out", "zero.txt"]);
    assert!(out.status.success());
    let data_lines = |p: &str| -> Vec<String> {
        std::fs::read_to_string(d.join(p))
            .unwrap()
            .lines()
            .filter(|l| l.split_whitespace().count() == 6)
            .map(String::from)
            .collect()
    };
    assert_eq!(data_lines("zero.txt"), data_lines("clean.txt"));

    let out = mwtomo(d, &["contaminate", "a.txt", "--percent", "5", "--out", "twice.txt"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("already"), "{}", stderr(&out));
}

#[test]
fn invert_and_enhance() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "small.toml", &format!("{SMALL}[inverse]\nmax_iterations = 2\n"));
    assert!(mwtomo(d, &["--config", "small.toml", "forward", "--out", "clean.txt"]).status.success());

    let out = mwtomo(d, &["--config", "small.toml", "invert", "clean.txt", "--out", "inv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    for f in ["reconstruction.txt", "meta.json", "iterations.log"] {
        assert!(d.join("inv").join(f).exists(), "{f}");
    }
    let log = std::fs::read_to_string(d.join("inv/iterations.log")).unwrap();
    assert!(log.starts_with("# config "));

    let out = mwtomo(d, &["--config", "small.toml", "enhance", "inv/reconstruction.txt", "--out", "img"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let mut names: Vec<String> = std::fs::read_dir(d.join("img"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, ["imag_enhanced.pgm", "imag_raw.pgm", "real_enhanced.pgm", "real_raw.pgm"]);
    assert!(std::fs::read(d.join("img/real_raw.pgm")).unwrap().starts_with(b"P5\n"));
}

#[test]
fn zero_iterations_reports_the_cap() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "small.toml", &format!("{SMALL}[inverse]\nmax_iterations = 0\n"));
    assert!(mwtomo(d, &["--config", "small.toml", "forward", "--out", "clean.txt"]).status.success());
    let out = mwtomo(d, &["--config", "small.toml", "invert", "clean.txt", "--out", "inv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("status max_iterations iterations 0"), "{}", stdout(&out));
}

#[test]
fn invert_refuses_data_from_another_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "small.toml", SMALL);
    assert!(mwtomo(d, &["--config", "small.toml", "forward", "--out", "clean.txt"]).status.success());
    let out = mwtomo(d, &["invert", "clean.txt", "--out", "inv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("geometry digest mismatch"), "{}", stderr(&out));
    assert!(!d.join("inv/reconstruction.txt").exists());
}

#[test]
fn pipeline_without_noise_levels_only_runs_forward() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "none.toml", &format!("{SMALL}[noise]\npercents = []\n"));
    let out = mwtomo(d, &["--config", "none.toml", "pipeline", "--out", "runs"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("no noise levels requested"));
    let runs: Vec<_> = std::fs::read_dir(d.join("runs")).unwrap().collect();
    assert_eq!(runs.len(), 1);
    let run = runs[0].as_ref().unwrap().path();
    assert!(run.file_name().unwrap().to_string_lossy().starts_with("run-"));
    for f in ["config.toml", "data_clean.txt", "report.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
}

#[test]
fn pipeline_flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "small.toml", &format!("{SMALL}[inverse]\nmax_iterations = 1\n"));
    let out = mwtomo(d, &["--config", "small.toml", "pipeline", "--out", "runs", "--percent", "1,3", "--seed", "5"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let run = std::fs::read_dir(d.join("runs")).unwrap().next().unwrap().unwrap().path();
    assert!(run.join("noise-1pct/data.txt").exists());
    assert!(run.join("noise-3pct/real_enhanced.pgm").exists());
    let data = std::fs::read_to_string(run.join("noise-3pct/data.txt")).unwrap();
    assert!(data.contains("\nrng_seed 5\n"));
}

#[test]
fn validate_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = mwtomo(dir.path(), &["validate"]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert_eq!(stdout(&out).lines().filter(|l| l.starts_with("PASS")).count(), 3);
}
