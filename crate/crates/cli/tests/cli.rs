//! End-to-end runs of the `veritas` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"{
  "seed": 5,
  "world": {"claims": 6, "realms": [
    {"name": "a", "truth_marginal": 0.5, "evidence_mean": 0.4, "evidence_spread": 0.3},
    {"name": "b", "truth_marginal": 0.5, "evidence_mean": 0.1, "evidence_spread": 0.3}
  ]},
  "sources": [
    {"id": "plain", "fidelity": 1.0, "augmentation": 0.0, "bias": 0.0, "completeness": 1.0, "stance_noise": 0.0, "perception_jitter": 0.1},
    {"id": "noisy", "fidelity": 0.8, "augmentation": 0.3, "bias": 0.1, "completeness": 0.6, "stance_noise": 0.4, "perception_jitter": 0.2}
  ],
  "verifiers": {"size": 30, "acuity": {"min": 2.0, "max": 6.0}, "bias": {"min": -0.1, "max": 0.1}},
  "estimation": {"panel_size": 11, "replicates": 200, "checkpoints": 3, "rule": {"kind": "majority"}}
}"#;

fn veritas(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_veritas"));
    cmd.args(args).env_remove("VERITAS_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn minimal() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/minimal.json")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Simulates `config` into `dir/<name>.trail.jsonl`.
fn simulate(dir: &TempDir, config: &str, name: &str, envs: &[(&str, &str)]) -> PathBuf {
    let cfg = dir.path().join(format!("{name}.json"));
    fs::write(&cfg, config).unwrap();
    let trail = dir.path().join(format!("{name}.trail.jsonl"));
    let out = veritas(&["simulate", "--config", p(&cfg), "--out", p(&trail)], envs);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    trail
}

#[test]
fn minimal_scenario_end_to_end() {
    let dir = TempDir::new().unwrap();
    let trail = dir.path().join("min.trail.jsonl");
    let out = veritas(&["simulate", "--config", p(&minimal()), "--out", p(&trail)], &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let lines = fs::read_to_string(&trail).unwrap().lines().count();
    assert!(lines >= 5, "{lines} events");
    assert!(dir.path().join("min.metrics.csv").exists());
    assert!(dir.path().join("min.reputation.csv").exists());

    let out = veritas(&["replay", "--trail", p(&trail), "--verify"], &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains(&format!("verified {lines} events")));
    let table = stdout(&out);
    assert!(table.starts_with("source_id,realm,count,reputation\n"), "{table}");
    assert!(table.contains("solo,general,1,"), "{table}");
}

#[test]
fn trails_identical_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let one = simulate(&dir, SMALL, "one", &[("VERITAS_THREADS", "1")]);
    let four = simulate(&dir, SMALL, "four", &[("VERITAS_THREADS", "4")]);
    let default = simulate(&dir, SMALL, "default", &[]);
    let bytes = fs::read(&one).unwrap();
    assert_eq!(bytes, fs::read(&four).unwrap());
    assert_eq!(bytes, fs::read(&default).unwrap());
    assert_eq!(
        fs::read(dir.path().join("one.metrics.csv")).unwrap(),
        fs::read(dir.path().join("four.metrics.csv")).unwrap()
    );

    let cfg = dir.path().join("one.json");
    let reseeded = dir.path().join("reseeded.trail.jsonl");
    let out = veritas(&["simulate", "--config", p(&cfg), "--seed", "6", "--out", p(&reseeded)], &[]);
    assert_eq!(code(&out), 0);
    assert_ne!(bytes, fs::read(&reseeded).unwrap());
}

#[test]
fn tampered_trail_exits_three_with_seq() {
    let dir = TempDir::new().unwrap();
    let trail = simulate(&dir, SMALL, "run", &[]);
    let text = fs::read_to_string(&trail).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let victim = lines[4].replacen("\"seq\":4", "\"seq\":40", 1);
    lines[4] = &victim;
    fs::write(&trail, lines.join("\n") + "\n").unwrap();
    for args in [vec!["replay", "--trail", p(&trail)], vec!["replay", "--trail", p(&trail), "--verify"]] {
        let out = veritas(&args, &[]);
        assert_eq!(code(&out), 3, "{}", stderr(&out));
        assert!(stderr(&out).contains("seq 4"), "{}", stderr(&out));
    }
    let out = veritas(&["report", "--trail", p(&trail), "--format", "csv"], &[]);
    assert_eq!(code(&out), 3);
}

#[test]
fn empty_and_missing_trails() {
    let dir = TempDir::new().unwrap();
    let empty = dir.path().join("empty.trail.jsonl");
    fs::write(&empty, "").unwrap();
    let out = veritas(&["replay", "--trail", p(&empty), "--verify"], &[]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "source_id,realm,count,reputation\n");

    let out = veritas(&["replay", "--trail", p(&dir.path().join("absent.trail.jsonl"))], &[]);
    assert_eq!(code(&out), 1);
}

#[test]
fn configuration_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let trail = dir.path().join("x.trail.jsonl");
    let bad = dir.path().join("bad.json");
    fs::write(&bad, SMALL.replace("\"stance_noise\": 0.4", "\"stance_noise\": 0.9")).unwrap();
    let out = veritas(&["simulate", "--config", p(&bad), "--out", p(&trail)], &[]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("stance_noise"), "{}", stderr(&out));

    fs::write(&bad, "{ not json").unwrap();
    assert_eq!(code(&veritas(&["simulate", "--config", p(&bad), "--out", p(&trail)], &[])), 2);

    let out = veritas(
        &["simulate", "--config", p(&minimal()), "--out", p(&trail)],
        &[("VERITAS_THREADS", "many")],
    );
    assert_eq!(code(&out), 2);

    let out = veritas(&["classify", "--prior", "1.5", "--posterior", "0.5"], &[]);
    assert_eq!(code(&out), 2);
}

#[test]
fn classify_witnesses() {
    for (prior, posterior, label) in [
        ("0.9", "0.95", "obvious"),
        ("0.1", "0.9", "incredible"),
        ("0.5", "0.85", "non-intuitive"),
        ("0.4", "0.5", "sensible"),
        ("0.9", "0.1", "incredible"),
    ] {
        let out = veritas(&["classify", "--prior", prior, "--posterior", posterior], &[]);
        assert_eq!(code(&out), 0);
        assert_eq!(stdout(&out).trim(), label, "({prior}, {posterior})");
    }
}

#[test]
fn report_files_counts_and_sweep() {
    let dir = TempDir::new().unwrap();
    let trail = simulate(&dir, SMALL, "run", &[]);
    let args = ["report", "--trail", p(&trail), "--format", "csv", "--sweep-figure3"];
    let out = veritas(&args, &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for part in ["reputation", "claims", "regimes", "figure3"] {
        assert!(dir.path().join(format!("run.report.{part}.csv")).exists(), "{part}");
    }

    let mut regimes = csv::Reader::from_path(dir.path().join("run.report.regimes.csv")).unwrap();
    let counts: Vec<usize> = regimes
        .records()
        .map(|r| r.unwrap().get(4).unwrap().parse().unwrap())
        .collect();
    assert_eq!(counts.len(), 12);
    assert_eq!(counts.iter().sum::<usize>(), 6 * 2);

    let mut sweep = csv::Reader::from_path(dir.path().join("run.report.figure3.csv")).unwrap();
    let cells: Vec<(f64, f64, String)> = sweep
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[1].parse().unwrap(), r[2].to_owned())
        })
        .collect();
    assert_eq!(cells.len(), 201 * 201);
    let at = |x: f64, y: f64| cells.iter().find(|c| c.0 == x && c.1 == y).unwrap().2.as_str();
    assert_eq!(at(0.0, 1.0), "incredible");
    assert_eq!(at(1.0, 0.0), "incredible");
    assert_eq!(at(1.0, 1.0), "obvious");
    // The diagonal rule is symmetric, so (0, 0) mirrors (1, 1).
    assert_eq!(at(0.0, 0.0), "obvious");

    let out = veritas(&args, &[]);
    assert_eq!(code(&out), 1, "existing outputs must not be overwritten");
    assert!(stderr(&out).contains("--force"));
    let forced: Vec<&str> = args.iter().copied().chain(["--force"]).collect();
    assert_eq!(code(&veritas(&forced, &[])), 0);

    let out = veritas(&["report", "--trail", p(&trail), "--format", "json"], &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let claims: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("run.report.claims.json")).unwrap()).unwrap();
    assert_eq!(claims.as_array().unwrap().len(), 12);
}
