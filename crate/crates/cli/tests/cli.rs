use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

use fhirlens_core::corpus::{generate, CorpusSpec, Manifest};
use fhirlens_core::normalize::TableKind;
use fhirlens_core::{load_local, ErrorCategory};
use fhirlens_testkit::{read_xlsx, stub, ReadCell, SAMPLE_BUNDLE};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fhirlens"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fhirlens-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn run(cmd: &mut Command) -> (i32, String, String) {
    let Output { status, stdout, stderr } = cmd.output().unwrap();
    (
        status.code().unwrap(),
        String::from_utf8(stdout).unwrap(),
        String::from_utf8(stderr).unwrap(),
    )
}

fn sample_file() -> PathBuf {
    let path = scratch("bundle.json");
    std::fs::write(&path, SAMPLE_BUNDLE).unwrap();
    path
}

#[test]
fn convert_sample_to_xlsx() {
    let out = scratch("r.xlsx");
    let (code, stdout, _) = run(bin().arg("convert").arg(sample_file()).args(["--format", "xlsx", "--out"]).arg(&out));
    assert_eq!(code, 0);
    let patient_line = stdout.lines().find(|l| l.starts_with("Patient")).unwrap();
    let fields: Vec<&str> = patient_line.split_whitespace().collect();
    assert_eq!(fields, ["Patient", "1", "1", "1.0000"]);
    let sheets = read_xlsx(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(sheets[0].rows[1][0], ReadCell::Text("32298144".into()));
}

#[test]
fn partial_success_exits_2() {
    let spec = CorpusSpec::new(7)
        .with_count(TableKind::Observation, 20)
        .with_rate(ErrorCategory::IncompleteCoding, 0.1);
    let input = scratch("partial.json");
    std::fs::write(&input, generate(&spec).unwrap().bundle).unwrap();
    let (code, stdout, _) = run(bin().arg("convert").arg(&input).arg("--out").arg(scratch("partial.pdf")));
    assert_eq!(code, 2);
    let fields: Vec<&str> = stdout.lines().nth(1).unwrap().split_whitespace().collect();
    assert_eq!(fields, ["Observation", "20", "18", "0.9000"]);
    assert!(stdout.contains("failures: IncompleteCoding 2"));
}

#[test]
fn fatal_errors_exit_1() {
    let (code, _, stderr) = run(bin().args(["convert", "/definitely/missing.json", "--out"]).arg(scratch("m.pdf")));
    assert_eq!(code, 1);
    assert!(stderr.starts_with("error: "));

    let bad = scratch("bad.json");
    std::fs::write(&bad, "{\"resourceType\":").unwrap();
    let (code, _, stderr) = run(bin().arg("convert").arg(&bad).arg("--out").arg(scratch("b.csv")));
    assert_eq!(code, 1);
    assert!(stderr.contains("byte"), "{stderr}");

    let (code, _, stderr) = run(bin().arg("convert").arg(sample_file()).arg("--out").arg(scratch("r.txt")));
    assert_eq!(code, 1);
    assert!(stderr.contains("--format"));
}

#[test]
fn csv_kind_selection() {
    let out = scratch("docs.csv");
    let (code, _, _) = run(bin()
        .arg("convert")
        .arg(sample_file())
        .args(["--format", "csv", "--kind", "DocumentReference", "--out"])
        .arg(&out));
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().nth(1).unwrap().contains("Progress Note"));
}

#[test]
fn fetch_saves_merged_bundle() {
    let base = stub::spawn_blocking();
    let out = scratch("fetched.json");
    let (code, stdout, _) = run(bin().args(["fetch", "--base-url", &base, "--type", "Patient", "--query", "_count=5", "--out"]).arg(&out));
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("10 resource(s) in 2 page(s)"));
    let batch = load_local(&std::fs::read(&out).unwrap(), "fetched.json").unwrap();
    assert_eq!(batch.resources.len(), 10);

    let (code, stdout, _) = run(bin().args(["fetch", "--base-url", &base, "--type", "Patient", "--query", "_id=32298144", "--out"]).arg(&out));
    assert_eq!(code, 0);
    assert!(stdout.contains("1 resource(s) in 1 page(s)"));

    let (code, stdout, _) = run(bin()
        .args(["fetch", "--base-url", &base, "--type", "Patient", "--id", "32298144", "--format", "csv", "--out"])
        .arg(&out));
    assert_eq!(code, 0);
    assert!(stdout.contains("Patient"));
    assert!(std::fs::read_to_string(&out).unwrap().contains("F_Name L_Name"));

    let (code, stdout, _) = run(bin().args(["fetch", "--base-url", &base, "--type", "Endless", "--max-pages", "3", "--out"]).arg(&out));
    assert_eq!(code, 0);
    assert!(stdout.contains("3 page(s), stopped at the page limit"));
}

#[test]
fn fetch_errors_exit_1() {
    let base = stub::spawn_blocking();
    let out = scratch("never.json");
    let (code, _, stderr) = run(bin().args(["fetch", "--base-url", "not a url", "--type", "Patient", "--out"]).arg(&out));
    assert_eq!(code, 1);
    assert!(stderr.contains("invalid endpoint URL"));
    let (code, _, stderr) = run(bin().args(["fetch", "--base-url", &base, "--type", "Missing", "--out"]).arg(&out));
    assert_eq!(code, 1);
    assert!(stderr.contains("HTTP 404"));
    let (code, _, stderr) =
        run(bin().args(["fetch", "--base-url", &base, "--type", "Slow", "--timeout-ms", "200", "--out"]).arg(&out));
    assert_eq!(code, 1);
    assert!(stderr.contains("timed out"));
    assert!(!out.exists());
}

fn bench_rows(stdout: &str) -> Vec<(String, String)> {
    stdout
        .lines()
        .skip(1)
        .take_while(|l| !l.is_empty())
        .map(|l| {
            let fields: Vec<&str> = l.split_whitespace().collect();
            let label = fields[..fields.len() - 5].join(" ");
            (label, fields[fields.len() - 1].to_owned())
        })
        .collect()
}

#[test]
fn bench_prints_reference_rows() {
    let (code, first, _) = run(bin().args(["bench", "--iterations", "2", "--warmup", "0"]));
    assert_eq!(code, 0);
    let rows = bench_rows(&first);
    let labels: Vec<&str> = rows.iter().map(|(l, _)| l.as_str()).collect();
    assert_eq!(
        labels,
        ["FHIR JSON Parsing", "PDF Report Generation", "Excel Export Generation", "Visualization Rendering"]
    );
    assert!(rows.iter().all(|(_, n)| n == "2"));
    assert!(first.contains("Normalization: p50"));
    let (_, second, _) = run(bin().args(["bench", "--iterations", "2", "--warmup", "0"]));
    assert_eq!(bench_rows(&second), rows);

    let (code, _, stderr) = run(bin().args(["bench", "--iterations", "0"]));
    assert_eq!(code, 1);
    assert!(stderr.contains("at least 1"));
}

#[test]
fn corpus_writes_bundle_and_manifest() {
    let spec = scratch("spec.json");
    std::fs::write(&spec, r#"{"seed": 9, "counts": {"Observation": 100}, "malformation_rates": {"IncompleteCoding": 0.04}}"#).unwrap();
    let (out, manifest) = (scratch("corpus.json"), scratch("manifest.json"));
    let (code, stdout, stderr) =
        run(bin().arg("corpus").arg("--spec").arg(&spec).arg("--out").arg(&out).arg("--manifest").arg(&manifest));
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("100 resource(s), 4 injected"));
    let m: Manifest = serde_json::from_slice(&std::fs::read(&manifest).unwrap()).unwrap();
    assert_eq!(m.fatal_indices().len(), 4);
    let first = std::fs::read(&out).unwrap();
    run(bin().arg("corpus").arg("--spec").arg(&spec).arg("--out").arg(&out));
    assert_eq!(std::fs::read(&out).unwrap(), first);
}

fn http_get(addr: &str, path: &str) -> String {
    let mut stream = TcpStream::connect(addr).unwrap();
    write!(stream, "GET {path} HTTP/1.0\r\nHost: {addr}\r\n\r\n").unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    response
}

#[test]
fn serve_prints_url_and_answers() {
    let mut child = bin()
        .args(["serve", "--port", "0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("http://127.0.0.1:").map(|p| format!("127.0.0.1:{p}"));
    let response = addr.as_deref().map(|a| http_get(a, "/api/health"));
    child.kill().unwrap();
    child.wait().unwrap();
    let addr = addr.unwrap_or_else(|| panic!("unexpected first line {line:?}"));
    assert_ne!(addr, "127.0.0.1:0");
    let response = response.unwrap();
    assert!(response.starts_with("HTTP/1.0 200") || response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.contains("\"ok\""));
}

#[test]
fn serve_on_a_busy_port_exits_1() {
    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let (code, _, stderr) = run(bin().args(["serve", "--port", &port]));
    assert_eq!(code, 1);
    assert!(stderr.contains("AddrInUse"), "{stderr}");
}
