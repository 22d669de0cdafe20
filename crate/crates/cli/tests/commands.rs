use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::Duration;

use copilot_core::fixtures;
use serde_json::Value;

fn copilot() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_copilot"));
    for var in [
        "COPILOT_FIXTURES",
        "COPILOT_REGISTRY",
        "COPILOT_BACKEND",
        "COPILOT_MAX_STEPS",
        "COPILOT_ADDR",
    ] {
        cmd.env_remove(var);
    }
    cmd
}

fn init() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let out = copilot()
        .args(["fixtures", "init"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    dir
}

fn run(dir: &Path, extra: &[&str], instruction: &str) -> Output {
    copilot()
        .arg("run")
        .arg("--fixtures")
        .arg(dir)
        .args(extra)
        .arg(instruction)
        .stdin(Stdio::null())
        .output()
        .unwrap()
}

fn task(label: &str) -> String {
    fixtures::demo_tasks()
        .into_iter()
        .find(|t| t.label == label)
        .unwrap()
        .instruction
}

#[test]
fn task_a_prints_page_view() {
    let dir = init();
    let out = run(dir.path(), &["--no-interactive"], &task("A"));
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["kind"], "page_view");
    assert_eq!(json["payload"]["url"], "http://adma.local/files/1");
}

#[test]
fn trace_flag_prints_trace_on_stderr() {
    let dir = init();
    let out = run(
        dir.path(),
        &["--trace", "--credential", "adma=very-secret"],
        &task("D"),
    );
    assert_eq!(out.status.code(), Some(0));
    let trace: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(trace["events"].as_array().unwrap().len(), 5);
    assert!(!String::from_utf8_lossy(&out.stderr).contains("very-secret"));
}

#[test]
fn exit_codes_distinguish_outcomes() {
    let dir = init();
    let out = run(
        dir.path(),
        &["--no-interactive"],
        "plot temperature, humidity and wind speed",
    );
    assert_eq!(out.status.code(), Some(3));
    let out = run(
        dir.path(),
        &["--no-interactive"],
        "list my google drive root folder",
    );
    assert_eq!(out.status.code(), Some(4));
    let out = run(&dir.path().join("missing"), &[], &task("A"));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));
    let out = run(
        dir.path(),
        &["--no-interactive", "--demo-credentials"],
        "list my google drive root folder",
    );
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn interactive_credentials_come_from_stdin() {
    let dir = init();
    let mut child = copilot()
        .args(["run", "--fixtures"])
        .arg(dir.path())
        .arg("list my google drive root folder")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"google-token\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Token for google:"));
    let json: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["kind"], "table");
}

fn csv_rows(stdout: &[u8]) -> Vec<Vec<String>> {
    String::from_utf8_lossy(stdout)
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn bench_reports_each_task() {
    let dir = init();
    let out = copilot()
        .args(["bench", "--repetitions", "3", "--fixtures"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = csv_rows(&out.stdout);
    assert_eq!(
        rows[0],
        [
            "task",
            "steps",
            "mean_ms",
            "stddev_ms",
            "mean_engine_overhead_ms"
        ]
    );
    let steps: Vec<(&str, &str)> = rows[1..]
        .iter()
        .map(|r| (r[0].as_str(), r[1].as_str()))
        .collect();
    assert_eq!(
        steps,
        [("A", "3"), ("B", "4"), ("C", "4"), ("D", "5"), ("E", "5")]
    );
}

#[test]
fn bench_edge_cases() {
    let dir = init();
    let empty = dir.path().join("empty.tsv");
    std::fs::write(&empty, "").unwrap();
    let out = copilot()
        .args(["bench", "--fixtures"])
        .arg(dir.path())
        .arg("--tasks")
        .arg(&empty)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        String::from_utf8_lossy(&out.stdout),
        "task,steps,mean_ms,stddev_ms,mean_engine_overhead_ms\n"
    );

    let one = dir.path().join("one.tsv");
    std::fs::write(
        &one,
        "A\tGo to directory 1 under root folder of ADMA\nX\tplot temperature\n",
    )
    .unwrap();
    let out = copilot()
        .args(["bench", "--repetitions", "1", "--fixtures"])
        .arg(dir.path())
        .arg("--tasks")
        .arg(&one)
        .output()
        .unwrap();
    // The second task stops to ask for a date, so the report is partial.
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("task X"));
    let rows = csv_rows(&out.stdout);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1][3], "0.0");
}

#[test]
fn serve_answers_health_checks() {
    let dir = init();
    let mut child = copilot()
        .args(["serve", "--addr", "127.0.0.1:0", "--fixtures"])
        .arg(dir.path())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let url = line
        .trim()
        .strip_prefix("listening on ")
        .unwrap()
        .to_string();
    let addr = url.strip_prefix("http://").unwrap();
    let mut stream = std::net::TcpStream::connect(addr).unwrap();
    stream
        .set_read_timeout(Some(Duration::from_secs(5)))
        .unwrap();
    write!(
        stream,
        "GET /healthz HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n"
    )
    .unwrap();
    let mut response = String::new();
    std::io::Read::read_to_string(&mut stream, &mut response).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.contains(r#"{"status":"ok"}"#));
}
