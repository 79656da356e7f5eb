//! End-to-end acceptance checks. Runs without the libtest harness so that
//! every check prints exactly one PASS or FAIL line.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use fhirlens::bench::{run_bench, Operation};
use fhirlens_core::corpus::{generate, CorpusSpec};
use fhirlens_core::export::{build_workbook, export_dataset, ExportFormat, RenderOptions};
use fhirlens_core::normalize::TableKind;
use fhirlens_core::table::Cell;
use fhirlens_core::{extract_series, load_local, normalize_batch, Dataset, ErrorCategory, ResourceKind};
use fhirlens_service::{bind, run, ServiceConfig};
use fhirlens_testkit::{check_pdf_tables, parse_pdf, read_xlsx, ReadCell, SAMPLE_BUNDLE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

const SAMPLED_DATASETS: u64 = 100;
const FUZZ_INPUTS: usize = 10_000;
const BENCH_ITERATIONS: usize = 50;
const RELAXATION: f64 = 3.0;

fn dataset(bytes: &[u8], name: &str) -> Result<Dataset, String> {
    let batch = load_local(bytes, name).map_err(|e| e.to_string())?;
    normalize_batch(&batch).map_err(|e| e.to_string())
}

fn sample_golden() -> Check {
    let start = Instant::now();
    let ds = dataset(SAMPLE_BUNDLE.as_bytes(), "sample_bundle.json")?;
    for format in [ExportFormat::Pdf, ExportFormat::Xlsx, ExportFormat::Csv] {
        export_dataset(&ds, format, None, &RenderOptions::fixed()).map_err(|e| e.to_string())?;
    }
    let elapsed = start.elapsed();

    ensure!(ds.tables.patients.len() == 1, "{} patient rows", ds.tables.patients.len());
    let p = &ds.tables.patients[0];
    let birth = p.birth_date.as_ref().map(|t| t.iso_text());
    let got = (p.resource_id.as_str(), p.name.as_str(), p.gender.as_str(), birth);
    ensure!(
        got == ("32298144", "F_Name L_Name", "Female", Some("1810-03-21")),
        "patient row {got:?}"
    );
    ensure!(ds.tables.documents.len() == 1, "{} document rows", ds.tables.documents.len());
    let d = &ds.tables.documents[0];
    let date = d.date.as_ref().map(|t| t.iso_text());
    let got = (d.doc_type.as_str(), d.status_combined.as_str(), date);
    ensure!(got == ("Progress Note", "Current / Final", Some("2024-01-09")), "document row {got:?}");
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!("patient and document rows exact, ingest to export in {:.1} ms", elapsed.as_secs_f64() * 1e3))
}

fn conformant_totality() -> Check {
    let mut spec = CorpusSpec::new(2024);
    for kind in TableKind::ALL {
        spec = spec.with_count(kind, 50);
    }
    let corpus = generate(&spec).map_err(|e| e.to_string())?;
    let ds = dataset(&corpus.bundle, "conformant.json")?;
    for kind in TableKind::ALL {
        let r = ds.report.kind(&kind.resource_kind()).ok_or(format!("{kind:?} missing"))?;
        ensure!(r.attempted == 50 && r.success_rate() == 1.0, "{kind:?}: {}/{}", r.succeeded, r.attempted);
    }
    Ok("200 resources, success rate 1.0 for all four kinds".into())
}

fn injection_accounting() -> Check {
    let spec = CorpusSpec::new(96)
        .with_count(TableKind::Observation, 100)
        .with_rate(ErrorCategory::MalformedExtension, 0.02)
        .with_rate(ErrorCategory::IncompleteCoding, 0.02);
    let corpus = generate(&spec).map_err(|e| e.to_string())?;
    ensure!(corpus.manifest.fatal_indices().len() == 4, "manifest has {:?}", corpus.manifest.fatal_indices());
    let ds = dataset(&corpus.bundle, "injected.json")?;
    let r = ds.report.kind(&ResourceKind::Observation).ok_or("no Observation report")?;
    ensure!((r.attempted, r.succeeded) == (100, 96), "{}/{}", r.succeeded, r.attempted);
    ensure!(
        r.failures
            .iter()
            .all(|f| matches!(f.category, ErrorCategory::MalformedExtension | ErrorCategory::IncompleteCoding)),
        "unexpected categories {:?}",
        r.failures.iter().map(|f| f.category.name()).collect::<Vec<_>>()
    );
    let expected: BTreeSet<(usize, String)> = corpus.manifest.fatal_indices().into_iter().collect();
    let actual: BTreeSet<(usize, String)> =
        r.failures.iter().map(|f| (f.resource_index, f.category.name().to_owned())).collect();
    ensure!(actual == expected, "failures {actual:?} vs manifest {expected:?}");
    Ok("96/100 Observations, failures match the manifest".into())
}

fn latency_budget() -> Check {
    let fixture = generate(&CorpusSpec::bench_default(1)).map_err(|e| e.to_string())?;
    let result = run_bench(&fixture.bundle, "bench.json", BENCH_ITERATIONS, 3).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    let mut over = Vec::new();
    for op in Operation::REFERENCED {
        let stats = result.get(op).ok_or("missing operation")?;
        let (_, limit) = op.reference().ok_or("no reference")?;
        ensure!(stats.iterations >= BENCH_ITERATIONS, "{} iterations", stats.iterations);
        let strict = if stats.p95_ms <= limit { "met" } else { "missed" };
        parts.push(format!("{} p95 {:.1} ms (strict {limit} ms {strict})", op.label(), stats.p95_ms));
        if stats.p95_ms > RELAXATION * limit {
            over.push(op.label());
        }
    }
    ensure!(over.is_empty(), "over {RELAXATION}x budget: {over:?}; {}", parts.join("; "));
    let profile = if cfg!(debug_assertions) { "debug" } else { "release" };
    Ok(format!("{profile} build, {BENCH_ITERATIONS} iterations: {}", parts.join("; ")))
}

fn sampled(seed: u64) -> Result<Dataset, String> {
    let corpus = generate(&CorpusSpec::sampled(seed)).map_err(|e| e.to_string())?;
    dataset(&corpus.bundle, "sampled.json")
}

fn pdf_validity() -> Check {
    let mut pages = 0;
    for seed in 0..SAMPLED_DATASETS {
        let ds = sampled(seed)?;
        let pdf = export_dataset(&ds, ExportFormat::Pdf, None, &RenderOptions::fixed()).map_err(|e| e.to_string())?;
        let parsed = parse_pdf(&pdf).map_err(|e| format!("seed {seed}: {e}"))?;
        let tables: Vec<Vec<Vec<String>>> = TableKind::ALL
            .iter()
            .map(|k| {
                let t = ds.tables.table(*k);
                t.rows.iter().map(|r| r.iter().map(|c| c.as_str().to_owned()).collect()).collect()
            })
            .collect();
        check_pdf_tables(&parsed, &tables).map_err(|e| format!("seed {seed}: {e}"))?;
        pages += parsed.pages.len();
    }
    Ok(format!("{SAMPLED_DATASETS} datasets, {pages} pages, xref offsets and table rows verified"))
}

fn xlsx_round_trip() -> Check {
    let mut cells = 0;
    for seed in 0..SAMPLED_DATASETS {
        let ds = sampled(seed)?;
        let bytes = export_dataset(&ds, ExportFormat::Xlsx, None, &RenderOptions::fixed()).map_err(|e| e.to_string())?;
        let model = build_workbook(&ds);
        let read = read_xlsx(&bytes).map_err(|e| format!("seed {seed}: {e}"))?;
        ensure!(read.len() == model.sheets.len(), "seed {seed}: {} sheets", read.len());
        for (sheet, back) in model.sheets.iter().zip(&read) {
            ensure!(back.name == sheet.name, "seed {seed}: sheet {} read as {}", sheet.name, back.name);
            ensure!(back.rows.len() == sheet.rows.len() + 1, "seed {seed}: {} row count", sheet.name);
            for (c, name) in sheet.columns.iter().enumerate() {
                ensure!(back.rows[0].get(c) == Some(&ReadCell::Text(name.clone())), "seed {seed}: header {name}");
            }
            for (r, row) in sheet.rows.iter().enumerate() {
                for (c, cell) in row.iter().enumerate() {
                    let got = back.rows[r + 1].get(c).unwrap_or(&ReadCell::Empty);
                    let kind = match cell {
                        Cell::Number(_) => "number",
                        Cell::Text(_) => "text",
                        Cell::Empty => "empty",
                    };
                    ensure!(
                        got.matches(kind, cell.as_str()),
                        "seed {seed}: {}!R{}C{} wrote {cell:?}, read {got:?}",
                        sheet.name,
                        r + 2,
                        c + 1
                    );
                    cells += 1;
                }
            }
        }
    }
    Ok(format!("{SAMPLED_DATASETS} workbooks, {cells} cells reproduced"))
}

fn scratch_dir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fhirlens-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("temp dir");
    dir
}

async fn service_export(client: &reqwest::Client, base: &str, input: &[u8], name: &str, query: &str) -> Result<Vec<u8>, String> {
    let resp = client
        .post(format!("{base}/api/ingest?name={name}"))
        .body(input.to_vec())
        .send()
        .await
        .map_err(|e| e.to_string())?;
    ensure!(resp.status().as_u16() == 200, "ingest answered {}", resp.status());
    let summary: Value = serde_json::from_slice(&resp.bytes().await.map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let id = summary["dataset_id"].as_str().ok_or("no dataset id")?;
    let resp = client
        .get(format!("{base}/api/datasets/{id}/export?{query}&fixed_timestamp=true"))
        .send()
        .await
        .map_err(|e| e.to_string())?;
    ensure!(resp.status().is_success(), "export answered {}", resp.status());
    Ok(resp.bytes().await.map_err(|e| e.to_string())?.to_vec())
}

fn determinism() -> Check {
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let base = rt.block_on(async {
        let listener = bind(0).await.map_err(|e| e.to_string())?;
        let addr = listener.local_addr().map_err(|e| e.to_string())?;
        tokio::spawn(run(listener, ServiceConfig::default(), std::future::pending()));
        Ok::<_, String>(format!("http://{addr}"))
    })?;
    let client = reqwest::Client::new();
    let dir = scratch_dir();

    let mut inputs = vec![("sample_bundle.json".to_owned(), SAMPLE_BUNDLE.as_bytes().to_vec())];
    for seed in 0..4 {
        let corpus = generate(&CorpusSpec::sampled(seed)).map_err(|e| e.to_string())?;
        inputs.push((format!("sampled_{seed}.json"), corpus.bundle));
    }
    let mut compared = 0;
    for (name, bytes) in &inputs {
        let input_path = dir.join(name);
        std::fs::write(&input_path, bytes).map_err(|e| e.to_string())?;
        let ds = dataset(bytes, name)?;
        let mut jobs: Vec<(ExportFormat, &str, Option<TableKind>)> =
            vec![(ExportFormat::Pdf, "pdf", None), (ExportFormat::Xlsx, "xlsx", None)];
        for kind in TableKind::ALL.into_iter().filter(|k| ds.tables.row_count(*k) > 0) {
            jobs.push((ExportFormat::Csv, "csv", Some(kind)));
        }
        for (format, flag, kind) in jobs {
            let label = format!("{name} {flag} {}", kind.map_or("", |k| k.name()));
            let first = export_dataset(&ds, format, kind, &RenderOptions::fixed()).map_err(|e| e.to_string())?;
            let again = dataset(bytes, name)?;
            let second = export_dataset(&again, format, kind, &RenderOptions::fixed()).map_err(|e| e.to_string())?;
            ensure!(first == second, "{label}: two runs differ");

            let out = dir.join(format!("{name}.{flag}"));
            let mut cmd = Command::new(env!("CARGO_BIN_EXE_fhirlens"));
            cmd.arg("convert").arg(&input_path).args(["--format", flag, "--fixed-timestamp", "--out"]).arg(&out);
            let mut query = format!("format={flag}");
            if let Some(k) = kind {
                cmd.args(["--kind", k.name()]);
                query.push_str(&format!("&kind={}", k.name()));
            }
            let status = cmd.output().map_err(|e| e.to_string())?.status;
            ensure!(matches!(status.code(), Some(0 | 2)), "{label}: CLI exited {status}");
            let cli = std::fs::read(&out).map_err(|e| e.to_string())?;
            ensure!(cli == first, "{label}: CLI bytes differ from library bytes");

            let served = rt.block_on(service_export(&client, &base, bytes, name, &query))?;
            ensure!(served == cli, "{label}: service bytes differ from CLI bytes");
            compared += 1;
        }
    }
    std::fs::remove_dir_all(&dir).ok();
    Ok(format!("{compared} exports identical across runs, CLI and service"))
}

fn mutate_bytes(rng: &mut ChaCha8Rng, input: &[u8]) -> Vec<u8> {
    let mut out = input.to_vec();
    for _ in 0..rng.random_range(1..=4) {
        if out.is_empty() {
            out.push(rng.random());
            continue;
        }
        let at = rng.random_range(0..out.len());
        match rng.random_range(0..6) {
            0 => out[at] = rng.random(),
            1 => out[at] ^= 1 << rng.random_range(0..8),
            2 => {
                let end = (at + rng.random_range(1..16)).min(out.len());
                out.drain(at..end);
            }
            3 => {
                let tokens: [&[u8]; 10] =
                    [b"{", b"}", b"[", b"]", b",", b":", b"\"", b"null", b"1e999", b"\\u0000"];
                let t = tokens[rng.random_range(0..tokens.len())];
                out.splice(at..at, t.iter().copied());
            }
            4 => out.truncate(at),
            _ => {
                let end = (at + rng.random_range(1..64)).min(out.len());
                let chunk = out[at..end].to_vec();
                out.splice(at..at, chunk);
            }
        }
    }
    out
}

fn random_value(rng: &mut ChaCha8Rng) -> Value {
    match rng.random_range(0..10) {
        0 => Value::Null,
        1 => Value::Bool(rng.random()),
        2 => serde_json::json!(rng.random::<i64>()),
        3 => serde_json::from_str("123456789012345678901234567890.000100").expect("number"),
        4 => serde_json::json!(""),
        5 => serde_json::json!("2024-13-45T99:99:99Z"),
        6 => serde_json::json!("\u{fffd}\u{1F600}\u{7}\u{202E}"),
        7 => serde_json::json!([]),
        8 => serde_json::json!({}),
        _ => serde_json::json!([{ "url": 5, "valueCoding": { "system": null } }]),
    }
}

/// Replaces, deletes or retypes one node picked at random.
fn mutate_tree(rng: &mut ChaCha8Rng, value: &mut Value) {
    let mut node = value;
    loop {
        let descend = rng.random_bool(0.75);
        let next = match node {
            Value::Object(map) if !map.is_empty() && descend => {
                let key = map.keys().nth(rng.random_range(0..map.len())).cloned();
                key.map(|k| ("obj", k, 0))
            }
            Value::Array(items) if !items.is_empty() && descend => Some(("arr", String::new(), rng.random_range(0..items.len()))),
            _ => None,
        };
        match next {
            Some(("obj", key, _)) => {
                let map = node.as_object_mut().expect("object");
                if rng.random_bool(0.2) {
                    map.remove(&key);
                    return;
                }
                node = map.get_mut(&key).expect("key exists");
            }
            Some((_, _, i)) => node = &mut node.as_array_mut().expect("array")[i],
            None => {
                *node = random_value(rng);
                return;
            }
        }
    }
}

fn fuzz_no_crash() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF022);
    let mut small = CorpusSpec::new(5);
    for kind in TableKind::ALL {
        small = small.with_count(kind, 4);
    }
    let seeds: Vec<Vec<u8>> = vec![
        SAMPLE_BUNDLE.as_bytes().to_vec(),
        generate(&small).map_err(|e| e.to_string())?.bundle,
        generate(&CorpusSpec::sampled(11)).map_err(|e| e.to_string())?.bundle,
        br#"{"resourceType":"Patient","id":"p1"}"#.to_vec(),
    ];
    let trees: Vec<Value> = seeds.iter().map(|s| serde_json::from_slice(s).expect("seed is JSON")).collect();

    let previous_hook = panic::take_hook();
    panic::set_hook(Box::new(|_| {}));
    let (mut datasets, mut panics) = (0, Vec::new());
    let mut rejected: BTreeMap<String, usize> = BTreeMap::new();
    for i in 0..FUZZ_INPUTS {
        let pick = i % seeds.len();
        let input = if rng.random_bool(0.5) {
            mutate_bytes(&mut rng, &seeds[pick])
        } else {
            let mut tree = trees[pick].clone();
            for _ in 0..rng.random_range(1..=3) {
                mutate_tree(&mut rng, &mut tree);
            }
            serde_json::to_vec(&tree).expect("serializable")
        };
        // Full exports only for small inputs, to keep the run short.
        let export_all = input.len() < 64 * 1024;
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| -> Result<bool, String> {
            let batch = load_local(&input, "fuzz.json").map_err(|e| e.code().to_owned())?;
            let ds = normalize_batch(&batch).map_err(|_| "EmptyBatch".to_owned())?;
            extract_series(&ds).to_json();
            if export_all {
                for format in [ExportFormat::Pdf, ExportFormat::Xlsx, ExportFormat::Csv] {
                    export_dataset(&ds, format, None, &RenderOptions::fixed()).map_err(|e| format!("export: {e}"))?;
                }
            }
            Ok(true)
        }));
        match outcome {
            Ok(Ok(_)) => datasets += 1,
            Ok(Err(code)) => *rejected.entry(code).or_default() += 1,
            Err(payload) => {
                let msg = payload
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| payload.downcast_ref::<&str>().map(|s| (*s).to_owned()))
                    .unwrap_or_default();
                panics.push((i, msg));
            }
        }
    }
    panic::set_hook(previous_hook);
    ensure!(panics.is_empty(), "{} panics, first: {:?}", panics.len(), panics[0]);
    let tally: Vec<String> = rejected.iter().map(|(code, n)| format!("{code} {n}")).collect();
    Ok(format!("{FUZZ_INPUTS} inputs: {datasets} datasets, errors {}, 0 panics", tally.join(", ")))
}

fn main() -> ExitCode {
    let checks: [Criterion; 8] = [
        ("sample bundle golden rows", sample_golden),
        ("conformant totality", conformant_totality),
        ("injection accounting", injection_accounting),
        ("latency budget", latency_budget),
        ("pdf validity", pdf_validity),
        ("xlsx round trip", xlsx_round_trip),
        ("determinism", determinism),
        ("fuzz no-crash", fuzz_no_crash),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let outcome = panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
