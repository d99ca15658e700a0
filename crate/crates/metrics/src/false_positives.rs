use std::collections::BTreeSet;

use shoal_core::MemberState;
use shoal_sim::{EventRecord, SimEventLog};

/// False-positive failure events in one run.
///
/// A false positive is a dead declaration about a member that was never
/// given an anomaly, counted wherever it occurs (`fp`) and, separately,
/// only where the observing node is itself healthy (`fp_minus`). Suspect
/// transitions are tallied alongside for inspection but are not failure
/// events.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FalsePositiveCounts {
    pub fp: u64,
    pub fp_minus: u64,
    pub suspect_fp: u64,
    pub suspect_fp_minus: u64,
}

impl FalsePositiveCounts {
    pub fn add(&mut self, other: &FalsePositiveCounts) {
        self.fp += other.fp;
        self.fp_minus += other.fp_minus;
        self.suspect_fp += other.suspect_fp;
        self.suspect_fp_minus += other.suspect_fp_minus;
    }
}

/// Counts false positives in `log`. `anomaly_set` holds the indices of the
/// nodes that were ever given anomalies in the run; events before
/// `quiesce_end_us` are startup noise and excluded.
pub fn count_false_positives(
    log: &SimEventLog,
    anomaly_set: &BTreeSet<u16>,
    quiesce_end_us: u64,
) -> FalsePositiveCounts {
    let mut counts = FalsePositiveCounts::default();
    for rec in &log.records {
        let EventRecord::State {
            t,
            node,
            subject,
            new,
            ..
        } = rec
        else {
            continue;
        };
        if *t < quiesce_end_us || anomaly_set.contains(subject) {
            continue;
        }
        let healthy_observer = !anomaly_set.contains(node);
        match new {
            MemberState::Dead => {
                counts.fp += 1;
                if healthy_observer {
                    counts.fp_minus += 1;
                }
            }
            MemberState::Suspect => {
                counts.suspect_fp += 1;
                if healthy_observer {
                    counts.suspect_fp_minus += 1;
                }
            }
            MemberState::Alive => {}
        }
    }
    counts
}

/// Node indices that ever had an anomaly, straight from the log.
pub fn anomaly_set(log: &SimEventLog) -> BTreeSet<u16> {
    log.records
        .iter()
        .filter_map(|r| match r {
            EventRecord::AnomalyStart { node, .. } => Some(*node),
            _ => None,
        })
        .collect()
}
