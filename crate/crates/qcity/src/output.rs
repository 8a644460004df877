//! Result rows and their CSV / JSON-lines rendering.

use qcity_core::protocols::ProtocolStats;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

pub const CSV_HEADER: &str = "protocol,participants,rate_per_s,throughput,qber_percent,runs,ci_halfwidth";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    JsonLines,
}

/// One aggregated protocol result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRow {
    pub protocol: String,
    /// Participant names joined by `>` in run order.
    pub participants: String,
    pub rate_per_s: f64,
    pub throughput: Option<f64>,
    /// Empty for protocols without a key error rate.
    pub qber_percent: Option<f64>,
    pub runs: usize,
    pub ci_halfwidth: f64,
    /// Swept parameter and its value, when sweeping.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<(String, f64)>,
}

/// `x` rounded to six significant digits.
pub fn six_digits(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

impl OutputRow {
    pub fn from_stats(stats: &ProtocolStats) -> Self {
        let qber = if stats.protocol.has_qber() {
            stats.error_rate().map(|e| six_digits(100.0 * e))
        } else {
            None
        };
        OutputRow {
            protocol: stats.protocol.to_string(),
            participants: stats.participants.join(">"),
            rate_per_s: six_digits(stats.rate()),
            throughput: stats.throughput().map(six_digits),
            qber_percent: qber,
            runs: stats.runs.len(),
            ci_halfwidth: six_digits(stats.rate_ci_halfwidth()),
            sweep: None,
        }
    }

    pub fn with_sweep(mut self, key: &str, value: f64) -> Self {
        self.sweep = Some((key.to_string(), six_digits(value)));
        self
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| six_digits(x).to_string()).unwrap_or_default()
}

/// Renders rows in the given order. In CSV, a sweep adds a trailing column
/// named after the swept key.
pub fn emit(rows: &[OutputRow], format: Format) -> String {
    let mut out = String::new();
    match format {
        Format::Csv => {
            out.push_str(CSV_HEADER);
            let sweep_key = rows.iter().find_map(|r| r.sweep.as_ref().map(|s| s.0.clone()));
            if let Some(k) = &sweep_key {
                let _ = write!(out, ",{k}");
            }
            out.push('\n');
            for r in rows {
                let _ = write!(
                    out,
                    "{},{},{},{},{},{},{}",
                    r.protocol,
                    r.participants,
                    cell(Some(r.rate_per_s)),
                    cell(r.throughput),
                    cell(r.qber_percent),
                    r.runs,
                    cell(Some(r.ci_halfwidth)),
                );
                if sweep_key.is_some() {
                    let _ = write!(out, ",{}", cell(r.sweep.as_ref().map(|s| s.1)));
                }
                out.push('\n');
            }
        }
        Format::JsonLines => {
            for r in rows {
                out.push_str(&serde_json::to_string(r).expect("rows serialize"));
                out.push('\n');
            }
        }
    }
    out
}

/// Mean cumulative curve over runs as `time_s,cumulative_bits` lines.
pub fn emit_series(stats: &ProtocolStats) -> String {
    let mut out = String::from("time_s,cumulative_bits\n");
    let n = stats.runs.len().max(1) as f64;
    let Some(first) = stats.runs.first() else {
        return out;
    };
    for (i, &(t, _)) in first.curve.iter().enumerate() {
        let total: u64 = stats.runs.iter().map(|r| r.curve[i].1).sum();
        let _ = writeln!(out, "{},{}", six_digits(t), six_digits(total as f64 / n));
    }
    out
}
