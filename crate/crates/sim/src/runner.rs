//! Experiment runners: boot a cluster, inject the anomaly schedule, run to
//! the experiment's stop condition, and hand back the log.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shoal_core::Preset;

use crate::config::{ExperimentKind, RunSpec};
use crate::kernel::{derive_seed, Counters, EarlyStop, Kernel};
use crate::log::SimEventLog;

/// Complete outcome of one run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub spec: RunSpec,
    pub log: SimEventLog,
    pub counters: Counters,
    /// Names of the nodes that were given anomalies (empty for controls).
    pub anomaly_nodes: Vec<String>,
    /// End of the quiesce window; metrics exclude everything before it.
    pub quiesce_us: u64,
    /// Virtual time when the run stopped.
    pub end_us: u64,
}

/// Seeded sample of `c` distinct node indices, fixed per run.
fn pick_anomalous(seed: u64, node_count: usize, c: usize) -> Vec<u16> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "anomaly-set"));
    let mut pool: Vec<u16> = (0..node_count as u16).collect();
    let c = c.min(node_count);
    for i in 0..c {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(c);
    pool
}

/// Executes one run of either experiment type.
pub fn run_spec(spec: &RunSpec) -> RunResult {
    match spec.kind {
        ExperimentKind::Threshold => run_threshold(spec),
        ExperimentKind::Interval => run_interval(spec),
    }
}

/// One burst of `C` lock-step anomalies of duration `D`, starting after
/// the quiesce window. The run ends when every node sees every other node
/// healthy again, or at the cap.
pub fn run_threshold(spec: &RunSpec) -> RunResult {
    assert_eq!(spec.kind, ExperimentKind::Threshold);
    let mut kernel = Kernel::new(spec);
    let quiesce_us = spec.quiesce_ms * 1_000;
    let cap_us = spec.max_run_ms * 1_000;
    let picked = pick_anomalous(spec.seed, spec.node_count, spec.concurrency);

    let early = if picked.is_empty() {
        EarlyStop::Never
    } else {
        let end_us = quiesce_us + spec.duration_ms * 1_000;
        for &node in &picked {
            kernel.schedule_anomaly(node, quiesce_us, end_us);
        }
        EarlyStop::AllHealthyAfter(end_us)
    };
    kernel.run(cap_us, early);
    finish(spec, kernel, picked, quiesce_us)
}

/// Anomalies cycling `D` blocked / `I` normal from the end of the quiesce
/// window; the run stops at the end of the first anomalous period that
/// closes at or after the 120-second mark.
pub fn run_interval(spec: &RunSpec) -> RunResult {
    assert_eq!(spec.kind, ExperimentKind::Interval);
    let mut kernel = Kernel::new(spec);
    let quiesce_us = spec.quiesce_ms * 1_000;
    let d_us = spec.duration_ms * 1_000;
    let i_us = spec.interval_ms * 1_000;
    let mark_us = spec.max_run_ms * 1_000;
    let cycle_us = d_us + i_us;

    // Smallest m with quiesce + m*cycle + D >= the mark.
    let first_end = quiesce_us + d_us;
    let cycles = if first_end >= mark_us {
        0
    } else {
        (mark_us - first_end).div_ceil(cycle_us)
    };
    let end_us = quiesce_us + cycles * cycle_us + d_us;

    let picked = pick_anomalous(spec.seed, spec.node_count, spec.concurrency);
    for &node in &picked {
        for m in 0..=cycles {
            let start = quiesce_us + m * cycle_us;
            kernel.schedule_anomaly(node, start, start + d_us);
        }
    }
    kernel.run(end_us, EarlyStop::Never);
    finish(spec, kernel, picked, quiesce_us)
}

/// Healthy-cluster control: no anomalies, fixed duration.
pub fn run_control(preset: Preset, duration_ms: u64, seed: u64, node_count: usize) -> RunResult {
    let spec = RunSpec {
        concurrency: 0,
        max_run_ms: duration_ms,
        seed,
        node_count,
        ..RunSpec::new(ExperimentKind::Threshold, preset)
    };
    run_threshold(&spec)
}

fn finish(spec: &RunSpec, kernel: Kernel, picked: Vec<u16>, quiesce_us: u64) -> RunResult {
    let end_us = kernel.now();
    let counters = kernel.counters;
    let log = kernel.into_log();
    let anomaly_nodes = picked
        .iter()
        .map(|&i| log.names[i as usize].clone())
        .collect();
    RunResult {
        spec: spec.clone(),
        log,
        counters,
        anomaly_nodes,
        quiesce_us,
        end_us,
    }
}
