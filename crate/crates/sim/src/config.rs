//! Run descriptions and experiment plan files.

use serde::Deserialize;
use shoal_core::{Preset, ProtocolConfig};
use thiserror::Error;

/// Anomaly concurrency values used in the evaluation (0 is the healthy
/// control).
pub const C_VALUES: [usize; 10] = [0, 1, 4, 8, 12, 16, 20, 24, 28, 32];
/// Anomaly durations (ms).
pub const D_VALUES: [u64; 6] = [128, 512, 2_048, 8_192, 16_384, 32_768];
/// Normal intervals between anomalies (ms).
pub const I_VALUES: [u64; 8] = [1, 4, 16, 64, 256, 1_024, 4_096, 16_384];

pub const DEFAULT_NODE_COUNT: usize = 128;
pub const DEFAULT_QUIESCE_MS: u64 = 15_000;
pub const DEFAULT_MAX_RUN_MS: u64 = 120_000;
pub const DEFAULT_LATENCY_MIN_US: u64 = 500;
pub const DEFAULT_LATENCY_MAX_US: u64 = 2_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    /// One burst of concurrent anomalies; measures detection latency.
    Threshold,
    /// Anomalies cycling with normal operation; measures false positives
    /// and message load.
    Interval,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Threshold => "threshold",
            ExperimentKind::Interval => "interval",
        }
    }
}

/// Everything needed to execute one deterministic run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub kind: ExperimentKind,
    pub preset: Preset,
    pub alpha: f64,
    pub beta: f64,
    /// C: how many nodes go anomalous, in lock-step.
    pub concurrency: usize,
    /// D: anomaly duration in ms.
    pub duration_ms: u64,
    /// I: normal interval between anomalies in ms (interval runs only).
    pub interval_ms: u64,
    pub seed: u64,
    pub node_count: usize,
    pub loss_probability: f64,
    pub latency_min_us: u64,
    pub latency_max_us: u64,
    pub quiesce_ms: u64,
    /// Hard cap for threshold runs / 120-second mark for interval runs.
    pub max_run_ms: u64,
}

impl RunSpec {
    pub fn new(kind: ExperimentKind, preset: Preset) -> RunSpec {
        RunSpec {
            kind,
            preset,
            alpha: 5.0,
            beta: 6.0,
            concurrency: 1,
            duration_ms: 8_192,
            interval_ms: 64,
            seed: 1,
            node_count: DEFAULT_NODE_COUNT,
            loss_probability: 0.0,
            latency_min_us: DEFAULT_LATENCY_MIN_US,
            latency_max_us: DEFAULT_LATENCY_MAX_US,
            quiesce_ms: DEFAULT_QUIESCE_MS,
            max_run_ms: DEFAULT_MAX_RUN_MS,
        }
    }

    pub fn protocol_config(&self) -> ProtocolConfig {
        ProtocolConfig {
            alpha: self.alpha,
            beta: self.beta,
            ..ProtocolConfig::default()
        }
        .with_preset(self.preset)
    }

    /// Stable identifier used for output file names and resume checks.
    pub fn key(&self) -> String {
        let mut key = format!(
            "{}_{}_c{}_d{}",
            self.kind.name(),
            self.preset.name().replace(' ', "-"),
            self.concurrency,
            self.duration_ms,
        );
        if self.kind == ExperimentKind::Interval {
            key.push_str(&format!("_i{}", self.interval_ms));
        }
        key.push_str(&format!("_a{}_b{}_s{}", self.alpha, self.beta, self.seed));
        key
    }
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("plan parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown configuration name {0:?}")]
    UnknownConfig(String),
    #[error("unknown experiment kind {0:?} (expected \"threshold\" or \"interval\")")]
    UnknownKind(String),
    #[error("{field} value {value} is not one of the supported sweep values")]
    BadSweepValue { field: &'static str, value: u64 },
    #[error("interval plans need at least one `i` value")]
    MissingIntervals,
}

/// One experiment grid, as read from a plan file.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PlanFile {
    pub kind: String,
    pub configs: Vec<String>,
    pub c: Vec<usize>,
    pub d: Vec<u64>,
    #[serde(default)]
    pub i: Vec<u64>,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_betas")]
    pub betas: Vec<f64>,
    #[serde(default = "default_reps")]
    pub reps: u64,
    pub seed: u64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default)]
    pub loss: f64,
    #[serde(default = "default_quiesce")]
    pub quiesce_ms: u64,
    #[serde(default = "default_max_run")]
    pub max_run_ms: u64,
}

fn default_alphas() -> Vec<f64> {
    vec![5.0]
}
fn default_betas() -> Vec<f64> {
    vec![6.0]
}
fn default_reps() -> u64 {
    1
}
fn default_nodes() -> usize {
    DEFAULT_NODE_COUNT
}
fn default_quiesce() -> u64 {
    DEFAULT_QUIESCE_MS
}
fn default_max_run() -> u64 {
    DEFAULT_MAX_RUN_MS
}

impl PlanFile {
    pub fn parse(text: &str) -> Result<PlanFile, PlanError> {
        let plan: PlanFile = toml::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }

    fn kind(&self) -> Result<ExperimentKind, PlanError> {
        match self.kind.as_str() {
            "threshold" => Ok(ExperimentKind::Threshold),
            "interval" => Ok(ExperimentKind::Interval),
            other => Err(PlanError::UnknownKind(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let kind = self.kind()?;
        for name in &self.configs {
            if Preset::parse(name).is_none() {
                return Err(PlanError::UnknownConfig(name.clone()));
            }
        }
        for &c in &self.c {
            if !C_VALUES.contains(&c) {
                return Err(PlanError::BadSweepValue {
                    field: "c",
                    value: c as u64,
                });
            }
        }
        for &d in &self.d {
            if !D_VALUES.contains(&d) {
                return Err(PlanError::BadSweepValue { field: "d", value: d });
            }
        }
        if kind == ExperimentKind::Interval {
            if self.i.is_empty() {
                return Err(PlanError::MissingIntervals);
            }
            for &i in &self.i {
                if !I_VALUES.contains(&i) {
                    return Err(PlanError::BadSweepValue { field: "i", value: i });
                }
            }
        }
        Ok(())
    }

    /// Expands the grid into individual runs: every combination of config,
    /// C, D, (I,) alpha, beta, and repetition. Repetition r uses seed
    /// `seed + r`, identical across configs so comparisons share anomaly
    /// placement and timing.
    pub fn expand(&self) -> Result<Vec<RunSpec>, PlanError> {
        let kind = self.kind()?;
        let intervals: &[u64] = match kind {
            ExperimentKind::Threshold => &[0],
            ExperimentKind::Interval => &self.i,
        };
        let mut runs = Vec::new();
        for name in &self.configs {
            let preset = Preset::parse(name).ok_or_else(|| PlanError::UnknownConfig(name.clone()))?;
            for &alpha in &self.alphas {
                for &beta in &self.betas {
                    for &c in &self.c {
                        for &d in &self.d {
                            for &i in intervals {
                                for rep in 0..self.reps {
                                    runs.push(RunSpec {
                                        kind,
                                        preset,
                                        alpha,
                                        beta,
                                        concurrency: c,
                                        duration_ms: d,
                                        interval_ms: i,
                                        seed: self.seed + rep,
                                        node_count: self.nodes,
                                        loss_probability: self.loss,
                                        latency_min_us: DEFAULT_LATENCY_MIN_US,
                                        latency_max_us: DEFAULT_LATENCY_MAX_US,
                                        quiesce_ms: self.quiesce_ms,
                                        max_run_ms: self.max_run_ms,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(runs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PLAN: &str = r#"
kind = "interval"
configs = ["SWIM", "Lifeguard"]
c = [4, 16]
d = [512, 8192]
i = [64, 1024]
alphas = [5.0]
betas = [6.0]
reps = 2
seed = 100
"#;

    #[test]
    fn plan_expands_full_grid() {
        let plan = PlanFile::parse(PLAN).unwrap();
        let runs = plan.expand().unwrap();
        // 2 configs * 2 C * 2 D * 2 I * 2 reps
        assert_eq!(runs.len(), 32);
        assert!(runs.iter().any(|r| r.seed == 101));
        let keys: std::collections::BTreeSet<_> = runs.iter().map(|r| r.key()).collect();
        assert_eq!(keys.len(), runs.len(), "run keys are unique");
    }

    #[test]
    fn plan_rejects_off_grid_values() {
        let bad = PLAN.replace("d = [512, 8192]", "d = [500, 8192]");
        assert!(matches!(
            PlanFile::parse(&bad),
            Err(PlanError::BadSweepValue { field: "d", .. })
        ));
        let bad = PLAN.replace("configs = [\"SWIM\", \"Lifeguard\"]", "configs = [\"Nope\"]");
        assert!(matches!(PlanFile::parse(&bad), Err(PlanError::UnknownConfig(_))));
    }

    #[test]
    fn threshold_plan_ignores_intervals() {
        let plan = PlanFile::parse(
            r#"
kind = "threshold"
configs = ["SWIM"]
c = [1]
d = [16384]
seed = 5
"#,
        )
        .unwrap();
        let runs = plan.expand().unwrap();
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].kind, ExperimentKind::Threshold);
    }
}
