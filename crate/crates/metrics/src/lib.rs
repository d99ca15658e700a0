//! Turns simulation event logs into evaluation quantities: false-positive
//! counts (overall and at healthy observers), detection and dissemination
//! latency percentiles, and message/byte loads, with baseline-relative
//! reporting. All functions are pure over immutable logs.

pub mod false_positives;
pub mod latency;
pub mod load;
pub mod percentile;
pub mod report;

pub use false_positives::{anomaly_set, count_false_positives, FalsePositiveCounts};
pub use latency::{detection_latencies, LatencySamples, LatencyStats};
pub use load::{message_load, MessageLoad};
pub use percentile::nearest_rank;
pub use report::{
    alpha_beta_table, false_positive_table, latency_table, load_table, percent_of,
    ConfigSummary, SweepSummary, BASELINE_CONFIG,
};
