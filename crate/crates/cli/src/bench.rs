//! Latency benchmark over the parse, normalize, export and series stages.

use std::fmt::Write as _;
use std::time::Instant;

use fhirlens_core::export::{export_dataset, ExportError, ExportFormat, RenderOptions};
use fhirlens_core::normalize::NormalizeError;
use fhirlens_core::{extract_series, load_local, normalize_batch, IngestError};

pub const DEFAULT_ITERATIONS: usize = 50;
pub const DEFAULT_WARMUP: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Operation {
    Parse,
    Normalize,
    Pdf,
    Xlsx,
    Series,
}

impl Operation {
    pub const ALL: [Operation; 5] = [
        Operation::Parse,
        Operation::Normalize,
        Operation::Pdf,
        Operation::Xlsx,
        Operation::Series,
    ];

    /// Operations with a published reference latency, in table order.
    pub const REFERENCED: [Operation; 4] = [
        Operation::Parse,
        Operation::Pdf,
        Operation::Xlsx,
        Operation::Series,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Operation::Parse => "FHIR JSON Parsing",
            Operation::Normalize => "Normalization",
            Operation::Pdf => "PDF Report Generation",
            Operation::Xlsx => "Excel Export Generation",
            Operation::Series => "Visualization Rendering",
        }
    }

    /// Reference range as printed, and its upper bound in milliseconds.
    pub fn reference(self) -> Option<(&'static str, f64)> {
        match self {
            Operation::Parse => Some(("40-60", 60.0)),
            Operation::Normalize => None,
            Operation::Pdf => Some(("120-180", 180.0)),
            Operation::Xlsx => Some(("80-140", 140.0)),
            Operation::Series => Some(("<50", 50.0)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpStats {
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub mean_ms: f64,
    pub iterations: usize,
}

impl OpStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            p50_ms: percentile(&sorted, 0.50),
            p95_ms: percentile(&sorted, 0.95),
            mean_ms: sorted.iter().sum::<f64>() / sorted.len().max(1) as f64,
            iterations: sorted.len(),
        }
    }
}

/// Nearest-rank percentile of an ascending slice; 0 when empty.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub stats: Vec<(Operation, OpStats)>,
    pub warmup: usize,
}

impl BenchResult {
    pub fn get(&self, op: Operation) -> Option<&OpStats> {
        self.stats.iter().find(|(o, _)| *o == op).map(|(_, s)| s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("iterations must be at least 1")]
    ZeroIterations,
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Normalize(#[from] NormalizeError),
    #[error(transparent)]
    Export(#[from] ExportError),
}

fn timed<T>(samples: &mut Vec<f64>, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    samples.push(start.elapsed().as_secs_f64() * 1e3);
    out
}

/// Runs the pipeline `warmup + iterations` times in sequence and keeps the
/// timings of the last `iterations` runs.
pub fn run_bench(input: &[u8], name: &str, iterations: usize, warmup: usize) -> Result<BenchResult, BenchError> {
    if iterations == 0 {
        return Err(BenchError::ZeroIterations);
    }
    let opts = RenderOptions::fixed();
    let mut samples: Vec<Vec<f64>> = vec![Vec::with_capacity(iterations); Operation::ALL.len()];
    let mut scratch: Vec<Vec<f64>> = vec![Vec::new(); Operation::ALL.len()];
    for i in 0..warmup + iterations {
        let s = if i < warmup { &mut scratch } else { &mut samples };
        let batch = timed(&mut s[0], || load_local(input, name))?;
        let dataset = timed(&mut s[1], || normalize_batch(&batch))?;
        timed(&mut s[2], || export_dataset(&dataset, ExportFormat::Pdf, None, &opts))?;
        timed(&mut s[3], || export_dataset(&dataset, ExportFormat::Xlsx, None, &opts))?;
        // The chart payload the UI receives is the series JSON.
        timed(&mut s[4], || extract_series(&dataset).to_json().to_string());
    }
    Ok(BenchResult {
        stats: Operation::ALL
            .into_iter()
            .zip(&samples)
            .map(|(op, s)| (op, OpStats::from_samples(s)))
            .collect(),
        warmup,
    })
}

/// The reference operations as a fixed-width table, then the
/// normalization stage on its own line.
pub fn render_table(result: &BenchResult) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<26} {:>10} {:>10} {:>10} {:>11} {:>10}",
        "operation", "p50 ms", "p95 ms", "mean ms", "reference", "iterations"
    );
    for op in Operation::REFERENCED {
        let Some(s) = result.get(op) else { continue };
        let reference = op.reference().map_or("-", |(r, _)| r);
        let _ = writeln!(
            out,
            "{:<26} {:>10.2} {:>10.2} {:>10.2} {:>11} {:>10}",
            op.label(),
            s.p50_ms,
            s.p95_ms,
            s.mean_ms,
            reference,
            s.iterations
        );
    }
    if let Some(s) = result.get(Operation::Normalize) {
        let _ = writeln!(
            out,
            "\n{}: p50 {:.2} ms, p95 {:.2} ms, mean {:.2} ms",
            Operation::Normalize.label(),
            s.p50_ms,
            s.p95_ms,
            s.mean_ms
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.95), 19.0);
        assert_eq!(percentile(&v, 0.50), 10.0);
        assert_eq!(percentile(&[3.0], 0.95), 3.0);
        assert_eq!(percentile(&[], 0.5), 0.0);
    }

    #[test]
    fn zero_iterations_is_an_error() {
        assert!(matches!(run_bench(b"{}", "x", 0, 0), Err(BenchError::ZeroIterations)));
    }
}
