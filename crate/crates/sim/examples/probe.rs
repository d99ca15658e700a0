// Scratch harness for eyeballing full-scale experiment dynamics.
use shoal_core::Preset;
use shoal_sim::{run_spec, ExperimentKind, RunSpec};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(String::as_str).unwrap_or("threshold");

    match mode {
        "threshold" => {
            for preset in [Preset::Swim, Preset::Lifeguard] {
                for c in [1usize, 8] {
                    let spec = RunSpec {
                        concurrency: c,
                        duration_ms: 32_768,
                        seed: 1,
                        ..RunSpec::new(ExperimentKind::Threshold, preset)
                    };
                    let t0 = std::time::Instant::now();
                    let result = run_spec(&spec);
                    let samples = shoal_metrics_probe::latency(&result);
                    println!(
                        "{:<12} C={c:<2} wall={:?} end={:.1}s sends={} first={:?} full={:?}",
                        preset.name(),
                        t0.elapsed(),
                        result.end_us as f64 / 1e6,
                        result.counters.sends(),
                        samples.0,
                        samples.1,
                    );
                }
            }
        }
        "interval" => {
            for preset in [
                Preset::Swim,
                Preset::LhaProbe,
                Preset::LhaSuspicion,
                Preset::BuddySystem,
                Preset::Lifeguard,
            ] {
                let mut fp_total = 0u64;
                let mut fpm_total = 0u64;
                let mut msgs = 0u64;
                let mut bytes = 0u64;
                let mut wall = std::time::Duration::ZERO;
                for (c, d, i) in [(16usize, 8_192u64, 64u64), (32, 8_192, 64), (16, 8_192, 1_024)]
                {
                    let spec = RunSpec {
                        concurrency: c,
                        duration_ms: d,
                        interval_ms: i,
                        seed: 1,
                        ..RunSpec::new(ExperimentKind::Interval, preset)
                    };
                    let t0 = std::time::Instant::now();
                    let result = run_spec(&spec);
                    wall += t0.elapsed();
                    let (fp, fpm, m, b) = shoal_metrics_probe::fp(&result);
                    fp_total += fp;
                    fpm_total += fpm;
                    msgs += m;
                    bytes += b;
                }
                println!(
                    "{:<14} FP={fp_total:<6} FP-={fpm_total:<4} msgs={msgs} bytes={bytes} wall={wall:?}",
                    preset.name()
                );
            }
        }
        other => eprintln!("unknown mode {other}"),
    }
}

mod shoal_metrics_probe {
    use shoal_core::MemberState;
    use shoal_sim::{EventRecord, RunResult};
    use std::collections::BTreeSet;

    pub fn latency(result: &RunResult) -> (Option<f64>, Option<f64>) {
        let anomalies: BTreeSet<u16> = result
            .anomaly_nodes
            .iter()
            .filter_map(|n| result.log.index_of(n))
            .collect();
        let mut firsts = Vec::new();
        let mut fulls = Vec::new();
        for &victim in &anomalies {
            let start = result
                .log
                .records
                .iter()
                .find_map(|r| match r {
                    EventRecord::AnomalyStart { t, node } if *node == victim => Some(*t),
                    _ => None,
                })
                .unwrap();
            let mut per: std::collections::BTreeMap<u16, u64> = Default::default();
            for rec in &result.log.records {
                if let EventRecord::State {
                    t,
                    node,
                    subject,
                    new: MemberState::Dead,
                    ..
                } = rec
                {
                    if *subject == victim && *node != victim && *t >= start {
                        per.entry(*node).or_insert(*t);
                    }
                }
            }
            if let Some(&f) = per.values().min() {
                firsts.push((f - start) as f64 / 1e6);
            }
            let healthy: Vec<u16> = (0..result.log.names.len() as u16)
                .filter(|n| !anomalies.contains(n))
                .collect();
            if healthy.iter().all(|h| per.contains_key(h)) {
                fulls.push(
                    (healthy.iter().map(|h| per[h]).max().unwrap() - start) as f64 / 1e6,
                );
            }
        }
        firsts.sort_by(f64::total_cmp);
        fulls.sort_by(f64::total_cmp);
        let med = |v: &Vec<f64>| v.get(v.len().saturating_sub(1) / 2).copied();
        (med(&firsts), med(&fulls))
    }

    pub fn fp(result: &RunResult) -> (u64, u64, u64, u64) {
        let anomalies: BTreeSet<u16> = result
            .anomaly_nodes
            .iter()
            .filter_map(|n| result.log.index_of(n))
            .collect();
        let mut fp = 0;
        let mut fpm = 0;
        let mut msgs = 0;
        let mut bytes = 0u64;
        for rec in &result.log.records {
            match rec {
                EventRecord::State {
                    t,
                    node,
                    subject,
                    new: MemberState::Dead,
                    ..
                } => {
                    if *t >= result.quiesce_us && !anomalies.contains(subject) {
                        fp += 1;
                        if !anomalies.contains(node) {
                            fpm += 1;
                        }
                    }
                }
                EventRecord::Send { bytes: b, .. } => {
                    msgs += 1;
                    bytes += *b as u64;
                }
                _ => {}
            }
        }
        (fp, fpm, msgs, bytes)
    }
}
