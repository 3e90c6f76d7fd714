use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::Duration;

use mmore_cli::{AppConfig, EXIT_CONFIG, EXIT_RUNTIME, EXIT_USAGE};
use serde_json::Value;

fn mmore() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mmore"));
    c.env("RUST_LOG", "warn").env_remove("MMORE_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    mmore().args(args).output().unwrap()
}

fn stderr_error(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).unwrap_or_else(|| panic!("no JSON error in {text}"));
    serde_json::from_str(line).unwrap()
}

fn txt_corpus(dir: &Path, n: usize) {
    fs::create_dir_all(dir).unwrap();
    for i in 0..n {
        fs::write(dir.join(format!("doc{i}.txt")), format!("Document number {i} talks about lighthouse {i}.\n")).unwrap();
    }
}

#[test]
fn process_three_text_files() {
    let dir = tempfile::tempdir().unwrap();
    txt_corpus(&dir.path().join("docs"), 3);
    let out = dir.path().join("out");
    let o = run(&["process", "--mode", "fast", "--in", dir.path().join("docs").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let samples = fs::read_to_string(out.join("samples.jsonl")).unwrap();
    assert_eq!(samples.lines().count(), 3);
    for line in samples.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["metadata"]["mode"], "fast");
    }
    let summary: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["ok"], 3);
}

#[test]
fn output_dir_falls_back_to_env() {
    let dir = tempfile::tempdir().unwrap();
    txt_corpus(&dir.path().join("docs"), 1);
    let out = dir.path().join("env-out");
    let o = mmore()
        .args(["process", "--in", dir.path().join("docs").to_str().unwrap()])
        .env("MMORE_OUT", &out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(out.join("samples.jsonl").exists());

    let o = run(&["process", "--in", dir.path().join("docs").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    assert_eq!(stderr_error(&o)["error"]["kind"], "config");
}

#[test]
fn eval_identical_pair() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.txt"), "the same words here").unwrap();
    fs::write(dir.path().join("b.txt"), "the same words here").unwrap();
    fs::write(dir.path().join("pairs.tsv"), "a.txt\tb.txt\n").unwrap();
    let o = run(&["eval", "--pairs", dir.path().join("pairs.tsv").to_str().unwrap()]);
    assert!(o.status.success());
    let table = String::from_utf8_lossy(&o.stdout);
    let row = table.lines().nth(1).unwrap();
    assert!(row.contains("1.0000") && row.ends_with("0.0000"), "{table}");

    let o = run(&["eval", "--json", "--pairs", dir.path().join("pairs.tsv").to_str().unwrap()]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["scored"]["cer"]["cer"], 0.0);
}

#[test]
fn usage_errors_exit_64() {
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(EXIT_USAGE));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(run(&[]).status.code(), Some(EXIT_USAGE));
    assert_eq!(run(&["process", "--mode", "slow"]).status.code(), Some(EXIT_USAGE));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"output-dir": "x", "no-such-key": 1}"#).unwrap();
    let o = run(&["--config", cfg.to_str().unwrap(), "postprocess"]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    let err = stderr_error(&o);
    assert_eq!(err["v"], 1);
    assert!(err["error"]["message"].as_str().unwrap().contains("no-such-key"));

    fs::write(&cfg, r#"{"dispatcher": {"role": "distributed"}}"#).unwrap();
    assert_eq!(run(&["--config", cfg.to_str().unwrap(), "index"]).status.code(), Some(EXIT_CONFIG));

    let o = run(&["process", "--in", dir.path().join("missing").to_str().unwrap(), "--out", "x"]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("samples.jsonl"), "{broken\n").unwrap();
    let o = run(&["postprocess", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_RUNTIME));
    assert_eq!(stderr_error(&o)["error"]["kind"], "runtime");
}

#[test]
fn dump_config_round_trips_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"mode": "default", "output-dir": "from-config", "service": {"k": 5}}"#).unwrap();
    let o = run(&["--config", cfg.to_str().unwrap(), "--dump-config", "process", "--mode", "fast", "--in", "x"]);
    assert!(o.status.success());
    let dumped = String::from_utf8(o.stdout).unwrap();
    let parsed = AppConfig::from_json(&dumped).unwrap();
    assert_eq!(parsed.mode, mmore_core::ExtractionMode::Fast);
    assert_eq!(parsed.output_dir.as_deref(), Some(Path::new("from-config")));
    assert_eq!(parsed.service.k, 5);

    let again = dir.path().join("dumped.json");
    fs::write(&again, &dumped).unwrap();
    let o = run(&["--config", again.to_str().unwrap(), "--dump-config", "postprocess"]);
    assert_eq!(AppConfig::from_json(&String::from_utf8(o.stdout).unwrap()).unwrap(), parsed);
}

#[test]
fn coordinator_and_workers_as_processes() {
    let dir = tempfile::tempdir().unwrap();
    txt_corpus(&dir.path().join("docs"), 6);
    let out = dir.path().join("out");
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"dispatcher": {"heartbeat-ms": 50}}"#).unwrap();
    let mut coord = mmore()
        .args(["--config", cfg.to_str().unwrap(), "coordinator", "--bind", "127.0.0.1:0"])
        .args(["--in", dir.path().join("docs").to_str().unwrap(), "--out", out.to_str().unwrap()])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(coord.stdout.take().unwrap()).lines();
    let first: Value = serde_json::from_str(&lines.next().unwrap().unwrap()).unwrap();
    let addr = first["listening"].as_str().unwrap().to_string();

    let workers: Vec<_> = (0..2)
        .map(|i| {
            mmore()
                .args(["--config", cfg.to_str().unwrap(), "worker", "--coordinator", &addr])
                .args(["--id", &format!("w{i}"), "--out", out.to_str().unwrap()])
                .stdout(Stdio::piped())
                .spawn()
                .unwrap()
        })
        .collect();
    let summary: Value = serde_json::from_str(&lines.next().unwrap().unwrap()).unwrap();
    assert_eq!(summary["ok"], 6);
    assert!(coord.wait().unwrap().success());
    for w in workers {
        let o = w.wait_with_output().unwrap();
        assert!(o.status.success());
    }
    assert_eq!(fs::read_to_string(out.join("samples.jsonl")).unwrap().lines().count(), 6);
}

#[test]
fn serve_reports_health() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = mmore()
        .args(["serve", "--out", dir.path().to_str().unwrap(), "--bind", "127.0.0.1:0"])
        .stderr(Stdio::null())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = serde_json::from_str::<Value>(&line).unwrap()["listening"].as_str().unwrap().to_string();
    let agent: ureq::Agent =
        ureq::Agent::config_builder().timeout_global(Some(Duration::from_secs(5))).build().into();
    let health: Value = agent.get(format!("http://{addr}/health")).call().unwrap().body_mut().read_json().unwrap();
    assert_eq!(health["status"], "no_index");
    child.kill().unwrap();
    child.wait().unwrap();
}
