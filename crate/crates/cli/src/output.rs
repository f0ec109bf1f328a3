//! Bit-stable text emission of observable series and jump logs.

use std::fmt::Write;

use rotmaster::lindblad::{ObservableErrors, ObservableRecord, ObservableSeries};
use rotmaster::trajectories::JumpEvent;

/// Schema version of the series and jump-log files.
pub const SCHEMA_VERSION: u32 = 1;

pub const COLUMNS: [&str; 11] = ["t", "Jx", "Jy", "Jz", "varJx", "varJy", "varJz", "J2", "purity", "trace", "leakage"];
pub const ERROR_COLUMNS: [&str; 9] =
    ["seJx", "seJy", "seJz", "sevarJx", "sevarJy", "sevarJz", "seJ2", "sepurity", "seleakage"];

/// Run metadata written as `#` comment lines ahead of every table.
#[derive(Clone, Debug)]
pub struct Metadata {
    pub version: String,
    pub scenario_sha256: String,
    pub master_seed: u64,
    pub backend: String,
}

impl Metadata {
    fn header(&self) -> String {
        format!(
            "# rotmaster {}\n# schema {SCHEMA_VERSION}\n# scenario_sha256 {}\n# master_seed {}\n# backend {}\n",
            self.version, self.scenario_sha256, self.master_seed, self.backend
        )
    }
}

/// 17 significant digits, scientific notation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn record_values(r: &ObservableRecord) -> [f64; 11] {
    [
        r.t, r.mean_j[0], r.mean_j[1], r.mean_j[2], r.var_j[0], r.var_j[1], r.var_j[2], r.j2, r.purity, r.trace,
        r.leakage,
    ]
}

pub fn error_values(e: &ObservableErrors) -> [f64; 9] {
    [e.mean_j[0], e.mean_j[1], e.mean_j[2], e.var_j[0], e.var_j[1], e.var_j[2], e.j2, e.purity, e.leakage]
}

pub fn series_csv(series: &ObservableSeries, meta: &Metadata) -> String {
    let mut out = meta.header();
    let mut header: Vec<&str> = COLUMNS.to_vec();
    if series.errors.is_some() {
        header.extend(ERROR_COLUMNS);
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for (k, r) in series.records.iter().enumerate() {
        let mut row: Vec<String> = record_values(r).iter().map(|v| fmt_f64(*v)).collect();
        if let Some(errors) = &series.errors {
            row.extend(error_values(&errors[k]).iter().map(|v| fmt_f64(*v)));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn jump_log_csv(jumps: &[Vec<JumpEvent>], meta: &Metadata) -> String {
    let mut out = meta.header();
    out.push_str("trajectory,t,channel\n");
    for (index, events) in jumps.iter().enumerate() {
        for e in events {
            writeln!(out, "{index},{},{}", fmt_f64(e.t), e.channel).expect("string write");
        }
    }
    out
}

/// Parses a series file back into rows (comment lines skipped).
pub fn read_series_csv(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().map(|h| h.split(',').map(str::to_string).collect()).unwrap_or_default();
    let rows = lines.map(|l| l.split(',').map(|v| v.parse().expect("numeric field")).collect()).collect();
    (header, rows)
}
