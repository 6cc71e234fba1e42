use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn rdsw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdsw"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

/// Every result file except the manifest, by name.
fn result_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn run_into(config: &Path, command: &str, out: &Path, threads: &str) {
    let o = rdsw(&[
        command,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--threads",
        threads,
    ]);
    assert!(o.status.success(), "{command}: {}", String::from_utf8_lossy(&o.stderr));
}

const SMALL_CONFIGS: &[(&str, &str)] = &[
    ("stationary", "system = \"binary_affine\"\nseed = 4\n[params]\nsamples = 5000\n"),
    (
        "sync",
        "system = \"anton\"\nseed = 9\n[params]\nx = 0.3\ny = 0.8\nn = 80\nreplicas = 100\nalpha = 1.0\n",
    ),
    (
        "limits",
        "system = \"binary_affine\"\n[params]\nn = 256\nreplicas = 64\nlil_n_max = 10000\nlil_replicas = 8\n",
    ),
    ("lyapunov", "system = \"moebius_pair\"\n[params]\nx0 = 0.1\ny = 0.3\nn = 200\nreplicas = 30\n"),
    ("ld", "system = \"slope_pair\"\n[params]\nx0 = 0.3\nhorizons = [4, 8, 24]\nreplicas = 2000\n"),
    ("cocycle", "cocycle = \"diag_rot\"\n[params]\nn = 1000\nreplicas = 8\n"),
    ("ulam", "system = \"anton\"\n[params]\nk_cells = 64\nwrite_matrix = true\n"),
];

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    for (command, body) in SMALL_CONFIGS {
        let cfg = write_config(tmp.path(), &format!("{command}.toml"), body);
        let a = tmp.path().join(format!("{command}-a"));
        let b = tmp.path().join(format!("{command}-b"));
        let c = tmp.path().join(format!("{command}-c"));
        run_into(&cfg, command, &a, "1");
        run_into(&cfg, command, &b, "1");
        run_into(&cfg, command, &c, "8");
        let first = result_files(&a);
        assert!(!first.is_empty());
        assert_eq!(first, result_files(&b), "{command}: rerun differs");
        assert_eq!(first, result_files(&c), "{command}: thread count changes output");
    }
}

#[test]
fn manifest_lists_files_and_seed() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "s.toml", SMALL_CONFIGS[0].1);
    let out = tmp.path().join("out");
    let o = rdsw(&["stationary", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "77"]);
    assert!(o.status.success());
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 77);
    assert_eq!(m["command"], "stationary");
    assert_eq!(m["files"], serde_json::json!(["stationary.csv", "summary.json"]));
    assert_eq!(m["config"]["system"], "binary_affine");
    assert!(m["wall_time_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn csv_reals_round_trip() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "s.toml", SMALL_CONFIGS[0].1);
    let out = tmp.path().join("out");
    run_into(&cfg, "stationary", &out, "1");
    let text = fs::read_to_string(out.join("stationary.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("coordinate,weight"));
    for line in lines.take(50) {
        let field = line.split(',').next().unwrap();
        let x: f64 = field.parse().unwrap();
        assert_eq!(format!("{x:.16e}"), field);
        assert!((0.0..=1.0).contains(&x));
    }
}

#[test]
fn json_format_writes_json_tables() {
    let tmp = TempDir::new().unwrap();
    let body = format!("format = \"json\"\n{}", SMALL_CONFIGS[5].1);
    let cfg = write_config(tmp.path(), "c.toml", &body);
    let out = tmp.path().join("out");
    run_into(&cfg, "cocycle", &out, "1");
    let text = fs::read_to_string(out.join("spectrum.json")).unwrap();
    assert!(text.trim_start().starts_with('['));
    assert_eq!(text.matches("\"chi\"").count(), 2);
}

#[test]
fn unnormalized_probs_exit_with_code_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.toml",
        "[system]\nprobs = [0.5, 0.4]\nmaps = [{ family = \"affine_interval\", a = 0.5, b = 0.0 }, \
         { family = \"affine_interval\", a = 0.5, b = 0.5 }]\n",
    );
    let o = rdsw(&["stationary", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("probs must sum to 1"));
}

#[test]
fn unknown_keys_report_line_and_field() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "typo.toml", "system = \"anton\"\n[params]\nreplicaz = 3\n");
    let o = rdsw(&["sync", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("unknown field `replicaz`"), "{err}");
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn command_mismatch_and_missing_entries_are_config_errors() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "m.toml", "command = \"ulam\"\nsystem = \"anton\"\n");
    assert_eq!(rdsw(&["sync", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    let cfg = write_config(tmp.path(), "n.toml", "system = \"anton\"\n");
    let o = rdsw(&["cocycle", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cocycle"));
}

#[test]
fn inner_guards_surface_as_errors() {
    let tmp = TempDir::new().unwrap();
    // averaged sums need at least 100 replicas
    let cfg = write_config(
        tmp.path(),
        "g.toml",
        "system = \"two_rotations\"\n[params]\nx = 0.1\ny = 0.2\nn = 10\nreplicas = 10\nalpha = 1.0\n",
    );
    let o = rdsw(&["sync", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("replicas"));
}

#[test]
fn verify_single_case_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for (dir, threads) in [(&a, "1"), (&b, "8")] {
        let o = rdsw(&["verify", "--case", "10", "--out", dir.to_str().unwrap(), "--threads", threads]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let stdout = String::from_utf8_lossy(&o.stdout);
        assert!(stdout.starts_with("PASS  10"), "{stdout}");
    }
    assert_eq!(result_files(&a), result_files(&b));
    assert!(a.join("case_10.txt").exists());
}

#[test]
fn gallery_lists_documented_facts() {
    let o = rdsw(&["gallery"]);
    assert!(o.status.success());
    let s = String::from_utf8_lossy(&o.stdout);
    assert!(s.contains("binary_affine"));
    assert!(s.contains("gamma = -log 2"));
    assert!(s.contains("non-proximal; (LC) holds"));
    assert!(s.contains("diag_rot"));
}
