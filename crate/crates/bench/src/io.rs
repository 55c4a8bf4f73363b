//! Trace CSV, plot data and summary files.
//!
//! Trace CSV layout:
//!
//! ```text
//! k,mode,alpha,omega_norm,merit,z_0,z_1
//! 0,GN,1.0000000000000000e0,...
//! # status: converged,7,HALT,0.0000000000000000e0,...
//! ```
//!
//! Reals are written with 17 significant digits so they parse back exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nashdyn::dynamics::{IterateTrace, Mode, Status, StepRecord};

use crate::config::Method;
use crate::error::{BenchError, Result};
use crate::sweep::SweepSummary;

/// 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn row(s: &StepRecord) -> String {
    let mut line = format!(
        "{},{},{},{},{}",
        s.k,
        s.mode,
        fmt_real(s.alpha),
        fmt_real(s.omega_norm),
        fmt_real(s.merit)
    );
    for v in s.z.iter() {
        line.push(',');
        line.push_str(&fmt_real(*v));
    }
    line
}

pub fn trace_csv_string(trace: &IterateTrace) -> String {
    let dim = trace.final_point.values().len();
    let mut out = String::from("k,mode,alpha,omega_norm,merit");
    for i in 0..dim {
        let _ = write!(out, ",z_{i}");
    }
    out.push('\n');
    for s in &trace.steps {
        out.push_str(&row(s));
        out.push('\n');
    }
    if let Some(last) = trace.steps.last() {
        let _ = writeln!(out, "# status: {},{}", trace.status, row(last));
    }
    out
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| BenchError::io(path, e))
}

pub fn write_trace_csv(trace: &IterateTrace, path: &Path) -> Result<()> {
    write_file(path, &trace_csv_string(trace))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub mode: Mode,
    pub alpha: f64,
    pub omega_norm: f64,
    pub merit: f64,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub rows: Vec<TraceRow>,
    pub status: Option<Status>,
}

fn parse_row(line: &str, lineno: usize) -> Result<TraceRow> {
    let bad = |what: &str| BenchError::Config(format!("trace line {lineno}: {what}"));
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() < 6 {
        return Err(bad(
            "expected k,mode,alpha,omega_norm,merit and at least one coordinate",
        ));
    }
    let real = |i: usize, name: &str| {
        fields[i]
            .parse::<f64>()
            .map_err(|_| bad(&format!("bad {name} {:?}", fields[i])))
    };
    Ok(TraceRow {
        k: fields[0]
            .parse()
            .map_err(|_| bad(&format!("bad k {:?}", fields[0])))?,
        mode: fields[1]
            .parse()
            .map_err(|_| bad(&format!("bad mode {:?}", fields[1])))?,
        alpha: real(2, "alpha")?,
        omega_norm: real(3, "omega_norm")?,
        merit: real(4, "merit")?,
        z: (5..fields.len())
            .map(|i| real(i, "coordinate"))
            .collect::<Result<_>>()?,
    })
}

pub fn parse_trace_csv(text: &str) -> Result<TraceTable> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.starts_with("k,mode,alpha,omega_norm,merit") => {}
        _ => return Err(BenchError::Config("trace CSV is missing its header".into())),
    }
    let mut rows = Vec::new();
    let mut status = None;
    for (i, line) in lines {
        if let Some(rest) = line.strip_prefix("# status:") {
            let word = rest.trim().split(',').next().unwrap_or("");
            status =
                Some(word.parse().map_err(|_| {
                    BenchError::Config(format!("trace line {}: bad status", i + 1))
                })?);
        } else if !line.trim().is_empty() && !line.starts_with('#') {
            rows.push(parse_row(line, i + 1)?);
        }
    }
    Ok(TraceTable { rows, status })
}

pub fn read_trace_csv(path: &Path) -> Result<TraceTable> {
    let text = fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    parse_trace_csv(&text)
}

/// Iterate coordinates for two-dimensional problems, `‖ω‖` against `k`
/// otherwise.
pub fn solve_plot_data(traces: &[(Method, IterateTrace)]) -> String {
    let two_d = traces
        .first()
        .is_some_and(|(_, t)| t.final_point.values().len() == 2);
    let mut out = String::from(if two_d {
        "algorithm,k,mode,z_0,z_1\n"
    } else {
        "algorithm,k,mode,omega_norm\n"
    });
    for (m, t) in traces {
        for s in &t.steps {
            if two_d {
                let _ = writeln!(
                    out,
                    "{m},{},{},{},{}",
                    s.k,
                    s.mode,
                    fmt_real(s.z[0]),
                    fmt_real(s.z[1])
                );
            } else {
                let _ = writeln!(out, "{m},{},{},{}", s.k, s.mode, fmt_real(s.omega_norm));
            }
        }
    }
    out
}

/// One row per run: start point, outcome and the paired difference.
pub fn sweep_plot_data(summary: &SweepSummary) -> String {
    let dim = summary
        .algorithms
        .first()
        .and_then(|a| a.runs.first())
        .map_or(0, |r| r.z0.len());
    let mut out = String::from("algorithm,run,status,iterations,difference");
    for i in 0..dim {
        let _ = write!(out, ",z0_{i}");
    }
    out.push('\n');
    for a in &summary.algorithms {
        for (i, r) in a.runs.iter().enumerate() {
            let diff = a
                .paired
                .as_ref()
                .and_then(|p| p.differences.get(i))
                .map_or(String::new(), |d| d.to_string());
            let _ = write!(
                out,
                "{},{},{},{},{}",
                a.algorithm, r.run, r.status, r.iterations, diff
            );
            for v in &r.z0 {
                let _ = write!(out, ",{}", fmt_real(*v));
            }
            out.push('\n');
        }
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_file(path, text)
}

pub fn write_summary_json(summary: &SweepSummary, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(summary)
        .map_err(|e| BenchError::Numeric(format!("summary JSON: {e}")))?;
    write_file(path, &text)
}
