//! Baseline-relative reporting: absolute values per configuration plus
//! percent-of-baseline columns, in the shapes used throughout the
//! evaluation (false positives, latencies, message load, and the
//! alpha/beta tuning grid).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::false_positives::FalsePositiveCounts;
use crate::latency::LatencyStats;
use crate::load::MessageLoad;

pub const BASELINE_CONFIG: &str = "SWIM";

/// Everything measured for one configuration over one sweep.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct ConfigSummary {
    pub config: String,
    pub runs: u64,
    pub fp_events: u64,
    pub fp_minus_events: u64,
    pub suspect_events: u64,
    pub suspect_minus_events: u64,
    pub messages: u64,
    pub bytes: u64,
    pub detections: u64,
    pub median_first_s: Option<f64>,
    pub p99_first_s: Option<f64>,
    pub p999_first_s: Option<f64>,
    pub median_full_s: Option<f64>,
    pub p99_full_s: Option<f64>,
    pub p999_full_s: Option<f64>,
}

impl ConfigSummary {
    pub fn set_false_positives(&mut self, fp: &FalsePositiveCounts) {
        self.fp_events = fp.fp;
        self.fp_minus_events = fp.fp_minus;
        self.suspect_events = fp.suspect_fp;
        self.suspect_minus_events = fp.suspect_fp_minus;
    }

    pub fn set_load(&mut self, load: &MessageLoad) {
        self.messages = load.messages;
        self.bytes = load.bytes;
    }

    pub fn set_latency(&mut self, stats: &LatencyStats) {
        self.detections = stats.detections as u64;
        self.median_first_s = stats.median_first;
        self.p99_first_s = stats.p99_first;
        self.p999_first_s = stats.p999_first;
        self.median_full_s = stats.median_full;
        self.p99_full_s = stats.p99_full;
        self.p999_full_s = stats.p999_full;
    }
}

/// Machine-readable summary of a whole sweep, one entry per configuration
/// (or per alpha/beta variant, keyed "Lifeguard a2 b6").
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SweepSummary {
    pub plan: String,
    pub seed: u64,
    pub configs: Vec<ConfigSummary>,
}

impl SweepSummary {
    pub fn get(&self, config: &str) -> Option<&ConfigSummary> {
        self.configs.iter().find(|c| c.config == config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable summary")
    }

    pub fn from_json(text: &str) -> Result<SweepSummary, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Percent of baseline; the baseline of itself is exactly 100.
pub fn percent_of(candidate: u64, baseline: u64) -> Option<f64> {
    if baseline == 0 {
        return None;
    }
    Some(candidate as f64 * 100.0 / baseline as f64)
}

fn fmt_pct(p: Option<f64>) -> String {
    match p {
        Some(v) => format!("{v:.2}"),
        None => "-".to_string(),
    }
}

fn fmt_secs(s: Option<f64>) -> String {
    match s {
        Some(v) => format!("{v:.2}"),
        None => "-".to_string(),
    }
}

/// False-positive table: absolute event counts plus percent of the
/// baseline configuration.
pub fn false_positive_table(summary: &SweepSummary) -> String {
    let base = summary.get(BASELINE_CONFIG);
    let mut out = String::from("configuration,fp_events,fp_minus_events,fp_pct_swim,fp_minus_pct_swim\n");
    for c in &summary.configs {
        let fp_pct = base.and_then(|b| percent_of(c.fp_events, b.fp_events));
        let fpm_pct = base.and_then(|b| percent_of(c.fp_minus_events, b.fp_minus_events));
        writeln!(
            out,
            "{},{},{},{},{}",
            c.config,
            c.fp_events,
            c.fp_minus_events,
            fmt_pct(fp_pct),
            fmt_pct(fpm_pct)
        )
        .unwrap();
    }
    out
}

/// Latency table in seconds: medians and tail percentiles for first
/// detection and full dissemination.
pub fn latency_table(summary: &SweepSummary) -> String {
    let mut out = String::from(
        "configuration,median_first,p99_first,p999_first,median_full,p99_full,p999_full\n",
    );
    for c in &summary.configs {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.config,
            fmt_secs(c.median_first_s),
            fmt_secs(c.p99_first_s),
            fmt_secs(c.p999_first_s),
            fmt_secs(c.median_full_s),
            fmt_secs(c.p99_full_s),
            fmt_secs(c.p999_full_s),
        )
        .unwrap();
    }
    out
}

/// Message-load table: counts plus percent of baseline.
pub fn load_table(summary: &SweepSummary) -> String {
    let base = summary.get(BASELINE_CONFIG);
    let mut out = String::from("configuration,messages,bytes,msgs_pct_swim,bytes_pct_swim\n");
    for c in &summary.configs {
        let m_pct = base.and_then(|b| percent_of(c.messages, b.messages));
        let b_pct = base.and_then(|b| percent_of(c.bytes, b.bytes));
        writeln!(
            out,
            "{},{},{},{},{}",
            c.config,
            c.messages,
            c.bytes,
            fmt_pct(m_pct),
            fmt_pct(b_pct)
        )
        .unwrap();
    }
    out
}

/// Tuning grid: rows are metrics as percent of the baseline, columns are
/// (alpha, beta) variants of the full configuration.
pub fn alpha_beta_table(
    baseline: &ConfigSummary,
    variants: &BTreeMap<(String, String), ConfigSummary>,
) -> String {
    let mut out = String::from("metric");
    for (a, b) in variants.keys() {
        write!(out, ",a{a}_b{b}").unwrap();
    }
    out.push('\n');

    let ratio = |c: Option<f64>, b: Option<f64>| -> Option<f64> {
        match (c, b) {
            (Some(c), Some(b)) if b > 0.0 => Some(c * 100.0 / b),
            _ => None,
        }
    };

    type Field = fn(&ConfigSummary) -> Option<f64>;
    let rows: [(&str, Field); 8] = [
        ("med_first", |c| c.median_first_s),
        ("med_full", |c| c.median_full_s),
        ("p99_first", |c| c.p99_first_s),
        ("p99_full", |c| c.p99_full_s),
        ("p999_first", |c| c.p999_first_s),
        ("p999_full", |c| c.p999_full_s),
        ("fp", |c| Some(c.fp_events as f64)),
        ("fp_minus", |c| Some(c.fp_minus_events as f64)),
    ];
    for (name, field) in rows {
        write!(out, "{name}").unwrap();
        for summary in variants.values() {
            let pct = ratio(field(summary), field(baseline));
            write!(out, ",{}", fmt_pct(pct)).unwrap();
        }
        out.push('\n');
    }
    out
}
