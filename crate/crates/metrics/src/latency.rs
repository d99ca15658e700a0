use std::collections::{BTreeMap, BTreeSet};

use shoal_core::MemberState;
use shoal_sim::{EventRecord, SimEventLog};

use crate::percentile::nearest_rank;

/// Detection/dissemination latency samples, in seconds from anomaly start.
#[derive(Debug, Clone, Default)]
pub struct LatencySamples {
    /// Time until the first dead declaration about the anomalous node at
    /// any other agent.
    pub first_detect: Vec<f64>,
    /// Time until every healthy agent has declared the anomalous node
    /// dead.
    pub full_dissemination: Vec<f64>,
}

impl LatencySamples {
    pub fn extend(&mut self, other: &LatencySamples) {
        self.first_detect.extend_from_slice(&other.first_detect);
        self.full_dissemination
            .extend_from_slice(&other.full_dissemination);
    }

    pub fn stats(&self) -> LatencyStats {
        let mut first = self.first_detect.clone();
        let mut full = self.full_dissemination.clone();
        first.sort_by(f64::total_cmp);
        full.sort_by(f64::total_cmp);
        LatencyStats {
            detections: first.len(),
            median_first: nearest_rank(&first, 0.5),
            p99_first: nearest_rank(&first, 0.99),
            p999_first: nearest_rank(&first, 0.999),
            median_full: nearest_rank(&full, 0.5),
            p99_full: nearest_rank(&full, 0.99),
            p999_full: nearest_rank(&full, 0.999),
        }
    }
}

/// Nearest-rank percentile summary of one configuration's samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyStats {
    pub detections: usize,
    pub median_first: Option<f64>,
    pub p99_first: Option<f64>,
    pub p999_first: Option<f64>,
    pub median_full: Option<f64>,
    pub p99_full: Option<f64>,
    pub p999_full: Option<f64>,
}

/// Extracts per-anomaly latency samples from a threshold-experiment log.
///
/// For every anomaly window, first detection is the earliest dead
/// declaration about the anomalous node by any other agent at or after the
/// window start; full dissemination is when the last healthy agent has
/// one. Anomalies never detected contribute no samples, and a window only
/// yields a dissemination sample once every healthy agent saw the failure.
pub fn detection_latencies(log: &SimEventLog) -> LatencySamples {
    let mut anomaly_nodes: BTreeSet<u16> = BTreeSet::new();
    let mut windows: BTreeMap<u16, Vec<u64>> = BTreeMap::new();
    let mut node_count = 0u16;
    for rec in &log.records {
        match rec {
            EventRecord::AnomalyStart { t, node } => {
                anomaly_nodes.insert(*node);
                windows.entry(*node).or_default().push(*t);
            }
            EventRecord::State { node, subject, .. } => {
                node_count = node_count.max(*node + 1).max(*subject + 1);
            }
            EventRecord::Send { from, to, .. } => {
                node_count = node_count.max(*from + 1).max(*to + 1);
            }
            _ => {}
        }
    }

    let healthy: Vec<u16> = (0..node_count)
        .filter(|n| !anomaly_nodes.contains(n))
        .collect();

    let mut samples = LatencySamples::default();
    for (&victim, starts) in &windows {
        for (i, &start) in starts.iter().enumerate() {
            let window_end = starts.get(i + 1).copied().unwrap_or(u64::MAX);
            // First dead declaration per observer within this window.
            let mut per_observer: BTreeMap<u16, u64> = BTreeMap::new();
            for rec in &log.records {
                let EventRecord::State {
                    t,
                    node,
                    subject,
                    new: MemberState::Dead,
                    ..
                } = rec
                else {
                    continue;
                };
                if *subject != victim || *node == victim || *t < start || *t >= window_end {
                    continue;
                }
                per_observer.entry(*node).or_insert(*t);
            }
            let Some(&first) = per_observer.values().min() else {
                continue; // never detected: excluded from aggregation
            };
            samples
                .first_detect
                .push((first - start) as f64 / 1_000_000.0);
            if healthy.iter().all(|h| per_observer.contains_key(h)) {
                let last = healthy
                    .iter()
                    .map(|h| per_observer[h])
                    .max()
                    .expect("healthy set non-empty");
                samples
                    .full_dissemination
                    .push((last - start) as f64 / 1_000_000.0);
            }
        }
    }
    samples
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dead(t: u64, node: u16, subject: u16) -> EventRecord {
        EventRecord::State {
            t,
            node,
            subject,
            old: Some(MemberState::Suspect),
            new: MemberState::Dead,
            incarnation: 0,
        }
    }

    #[test]
    fn single_anomaly_first_and_full() {
        // Nodes: 0 (anomalous), 1, 2 (healthy).
        let log = SimEventLog {
            names: vec!["n0".into(), "n1".into(), "n2".into()],
            records: vec![
                EventRecord::AnomalyStart { t: 1_000_000, node: 0 },
                dead(13_000_000, 1, 0),
                dead(13_500_000, 2, 0),
            ],
        };
        let samples = detection_latencies(&log);
        assert_eq!(samples.first_detect, vec![12.0]);
        assert_eq!(samples.full_dissemination, vec![12.5]);
    }

    #[test]
    fn undetected_anomalies_are_excluded() {
        let log = SimEventLog {
            names: vec!["n0".into(), "n1".into()],
            records: vec![EventRecord::AnomalyStart { t: 1_000_000, node: 0 }],
        };
        let samples = detection_latencies(&log);
        assert!(samples.first_detect.is_empty());
        assert!(samples.full_dissemination.is_empty());
    }

    #[test]
    fn partial_dissemination_yields_no_full_sample() {
        let log = SimEventLog {
            names: vec!["n0".into(), "n1".into(), "n2".into()],
            records: vec![
                EventRecord::AnomalyStart { t: 0, node: 0 },
                dead(2_000_000, 1, 0),
                // Node 2 never sees it.
                EventRecord::Send {
                    t: 1,
                    mid: 1,
                    from: 2,
                    to: 1,
                    channel: shoal_core::Channel::Unreliable,
                    kind: shoal_sim::MsgKind::Ping,
                    bytes: 10,
                    updates: vec![],
                },
            ],
        };
        let samples = detection_latencies(&log);
        assert_eq!(samples.first_detect, vec![2.0]);
        assert!(samples.full_dissemination.is_empty());
    }

    #[test]
    fn stats_order_and_invariants() {
        let mut samples = LatencySamples::default();
        samples.first_detect = vec![12.0, 10.0, 11.0, 13.0];
        samples.full_dissemination = vec![12.5, 13.5];
        let stats = samples.stats();
        assert_eq!(stats.median_first, Some(11.0));
        assert!(stats.median_first <= stats.p99_first);
        assert!(stats.p99_first <= stats.p999_first);
        assert_eq!(stats.detections, 4);
    }

    #[test]
    fn sample_order_does_not_matter() {
        let mut a = LatencySamples::default();
        a.first_detect = vec![3.0, 1.0, 2.0];
        let mut b = LatencySamples::default();
        b.first_detect = vec![2.0, 3.0, 1.0];
        assert_eq!(a.stats(), b.stats());
    }
}
