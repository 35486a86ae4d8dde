//! Reports and their table, CSV and JSON-lines renderings.
//!
//! The report body is everything that is a function of the configuration
//! and seed; wall-clock timings are kept beside it so that bodies of
//! repeated runs compare byte for byte.

use std::io::{self, Write};

use colht::exponent::ExponentReport;
use colht::protocol::{ErrorEstimate, ExactErrors};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Format};

/// Stable CSV columns.
pub const CSV_COLUMNS: [&str; 11] = [
    "mode", "n", "R", "K", "value", "alpha", "beta", "slope", "ci_lo", "ci_hi", "seed_path",
];

/// One long-format result line. `ci_lo`/`ci_hi` bound `beta` for simulated
/// rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub mode: String,
    pub n: Option<usize>,
    pub rate: Option<f64>,
    pub k: Option<usize>,
    pub value: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub slope: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    /// Derivation path of the random stream that produced the row.
    pub seed_path: String,
}

impl Row {
    pub fn new(mode: &str, seed_path: String) -> Self {
        Self {
            mode: mode.into(),
            n: None,
            rate: None,
            k: None,
            value: None,
            alpha: None,
            beta: None,
            slope: None,
            ci_lo: None,
            ci_hi: None,
            seed_path,
        }
    }
}

/// Kind of a task failure; decides the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    InvalidInput,
    NotConverged,
    SizeGuard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub kind: FailureKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationDetail {
    pub n: usize,
    pub book_sizes: Vec<usize>,
    pub message_rates: Vec<f64>,
    pub deltas: colht::protocol::Deltas,
    pub estimate: Option<ErrorEstimate>,
    pub exact: Option<ExactErrors>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Detail {
    Exponent(Box<ExponentReport>),
    Simulation(Box<SimulationDetail>),
    /// Exact one-bit scheme at one blocklength.
    OneBit {
        n: usize,
        delta: f64,
        log2_beta: Option<f64>,
        joint_types: u64,
    },
    Audit {
        cases: usize,
        passed: usize,
        skipped: usize,
        worst: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task: String,
    pub rows: Vec<Row>,
    pub detail: Option<Detail>,
    pub warnings: Vec<String>,
    pub failure: Option<Failure>,
}

impl TaskResult {
    pub fn new(task: impl Into<String>) -> Self {
        Self {
            task: task.into(),
            rows: Vec::new(),
            detail: None,
            warnings: Vec::new(),
            failure: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Versions {
    pub colht: String,
    pub report_format: u32,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            colht: env!("CARGO_PKG_VERSION").into(),
            report_format: 1,
        }
    }
}

/// Deterministic part of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBody {
    pub config: ExperimentConfig,
    pub versions: Versions,
    pub tasks: Vec<TaskResult>,
}

impl ReportBody {
    pub fn rows(&self) -> impl Iterator<Item = &Row> {
        self.tasks.iter().flat_map(|t| t.rows.iter())
    }

    /// Most severe failure, if any task failed.
    pub fn worst_failure(&self) -> Option<FailureKind> {
        self.tasks.iter().filter_map(|t| t.failure.as_ref().map(|f| f.kind)).max()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskTiming {
    pub task: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub body: ReportBody,
    pub timings: Vec<TaskTiming>,
}

/// `%.12g`-style formatting: 12 significant digits, trailing zeros dropped.
pub fn sig12(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-5..12).contains(&exp) {
        trim(&format!("{v:.*}", (11 - exp) as usize))
    } else {
        format!("{}e{exp}", trim(mantissa))
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(sig12).unwrap_or_default()
}

fn cells(r: &Row) -> [String; 11] {
    [
        r.mode.clone(),
        r.n.map(|n| n.to_string()).unwrap_or_default(),
        opt(r.rate),
        r.k.map(|k| k.to_string()).unwrap_or_default(),
        opt(r.value),
        opt(r.alpha),
        opt(r.beta),
        opt(r.slope),
        opt(r.ci_lo),
        opt(r.ci_hi),
        r.seed_path.clone(),
    ]
}

pub fn write_csv<W: Write>(body: &ReportBody, out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in body.rows() {
        w.write_record(cells(r))?;
    }
    w.flush()
}

pub fn write_table<W: Write>(body: &ReportBody, mut out: W) -> io::Result<()> {
    let mut grid: Vec<[String; 11]> = vec![CSV_COLUMNS.map(String::from)];
    grid.extend(body.rows().map(cells));
    let mut widths = [0usize; 11];
    for line in &grid {
        for (w, c) in widths.iter_mut().zip(line) {
            *w = (*w).max(c.len());
        }
    }
    for line in &grid {
        let text: Vec<String> = line.iter().zip(widths).map(|(c, w)| format!("{c:<w$}")).collect();
        writeln!(out, "{}", text.join("  ").trim_end())?;
    }
    for t in &body.tasks {
        for w in &t.warnings {
            writeln!(out, "warning [{}]: {w}", t.task)?;
        }
        if let Some(f) = &t.failure {
            writeln!(out, "FAILED [{}]: {}", t.task, f.message)?;
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line {
    Header {
        config: ExperimentConfig,
        versions: Versions,
    },
    Task(TaskResult),
}

/// One header line, then one line per task.
pub fn write_jsonl<W: Write>(body: &ReportBody, mut out: W) -> io::Result<()> {
    let header = Line::Header {
        config: body.config.clone(),
        versions: body.versions.clone(),
    };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    for t in &body.tasks {
        writeln!(out, "{}", serde_json::to_string(&Line::Task(t.clone()))?)?;
    }
    Ok(())
}

/// Inverse of [`write_jsonl`].
pub fn read_jsonl(text: &str) -> Result<ReportBody, serde_json::Error> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let first = lines.next().unwrap_or("");
    let Line::Header { config, versions } = serde_json::from_str(first)? else {
        return Err(serde::de::Error::custom("first line must be the report header"));
    };
    let mut tasks = Vec::new();
    for l in lines {
        match serde_json::from_str(l)? {
            Line::Task(t) => tasks.push(t),
            Line::Header { .. } => return Err(serde::de::Error::custom("repeated header")),
        }
    }
    Ok(ReportBody { config, versions, tasks })
}

/// Render the body in `format`.
pub fn emit_report<W: Write>(body: &ReportBody, format: Format, out: W) -> io::Result<()> {
    match format {
        Format::Table => write_table(body, out),
        Format::Csv => write_csv(body, out),
        Format::Jsonl => write_jsonl(body, out),
    }
}

pub fn file_name(format: Format) -> &'static str {
    match format {
        Format::Table => "report.txt",
        Format::Csv => "report.csv",
        Format::Jsonl => "report.jsonl",
    }
}

/// Write `report.<ext>` and `timings.json` into `dir`.
pub fn emit_to_dir(report: &Report, format: Format, dir: &std::path::Path) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let f = std::fs::File::create(dir.join(file_name(format)))?;
    emit_report(&report.body, format, io::BufWriter::new(f))?;
    let t = std::fs::File::create(dir.join("timings.json"))?;
    serde_json::to_writer_pretty(io::BufWriter::new(t), &report.timings)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(sig12(0.0), "0");
        assert_eq!(sig12(1.0), "1");
        assert_eq!(sig12(0.531004406410719), "0.531004406411");
        assert_eq!(sig12(-2.5e-7), "-2.5e-7");
        assert_eq!(sig12(123456.0), "123456");
        assert_eq!(sig12(1.0 / 3.0), "0.333333333333");
        assert_eq!(sig12(6.02214076e23), "6.02214076e23");
        assert_eq!(sig12(999999999999.9), "1e12");
    }
}
