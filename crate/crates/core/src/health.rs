/// Feedback events that move the local health multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HealthEvent {
    /// Probe round ended with an ack (direct, forwarded, or reliable): -1.
    ProbeSuccess,
    /// Probe round ended without any ack: +1.
    ProbeFailed,
    /// Had to refute a suspect (or dead) message about self: +1.
    RefutedSelf,
    /// Indirect probe came back with fewer nack-or-ack responses than
    /// helpers enlisted; at most one per round: +1.
    MissedNack,
}

/// Saturating counter in [0, S] estimating how slowly the local failure
/// detector is running. Scales the probe interval and timeout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalHealth {
    lhm: u32,
    saturation: u32,
}

impl LocalHealth {
    pub fn new(saturation: u32) -> Self {
        LocalHealth { lhm: 0, saturation }
    }

    pub fn get(&self) -> u32 {
        self.lhm
    }

    pub fn apply(&mut self, event: HealthEvent) {
        self.lhm = match event {
            HealthEvent::ProbeSuccess => self.lhm.saturating_sub(1),
            HealthEvent::ProbeFailed | HealthEvent::RefutedSelf | HealthEvent::MissedNack => {
                (self.lhm + 1).min(self.saturation)
            }
        };
    }

    /// Scaled probe interval: base * (lhm + 1), in the unit of `base`.
    pub fn probe_interval(&self, base: u64) -> u64 {
        base * (self.lhm as u64 + 1)
    }

    /// Scaled probe timeout: base * (lhm + 1), in the unit of `base`.
    pub fn probe_timeout(&self, base: u64) -> u64 {
        base * (self.lhm as u64 + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stays_within_bounds() {
        let mut h = LocalHealth::new(8);
        h.apply(HealthEvent::ProbeSuccess);
        assert_eq!(h.get(), 0);
        for _ in 0..20 {
            h.apply(HealthEvent::ProbeFailed);
        }
        assert_eq!(h.get(), 8);
        for _ in 0..20 {
            h.apply(HealthEvent::ProbeSuccess);
        }
        assert_eq!(h.get(), 0);
    }

    #[test]
    fn scales_interval_and_timeout() {
        let mut h = LocalHealth::new(8);
        assert_eq!(h.probe_interval(1_000), 1_000);
        assert_eq!(h.probe_timeout(500), 500);

        for _ in 0..3 {
            h.apply(HealthEvent::ProbeFailed);
        }
        assert_eq!(h.probe_interval(1_000), 4_000);
        assert_eq!(h.probe_timeout(500), 2_000);

        for _ in 0..10 {
            h.apply(HealthEvent::MissedNack);
        }
        // Saturated: the longest the detector ever backs off.
        assert_eq!(h.probe_interval(1_000), 9_000);
        assert_eq!(h.probe_timeout(500), 4_500);
    }
}
