use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Virtual or wall-clock time in microseconds since an arbitrary epoch.
pub type Micros = u64;

pub const MS: u64 = 1_000;

/// Named feature combinations used throughout the evaluation harness.
///
/// `Swim` is the baseline with every extension disabled; the three single
/// extensions isolate one mechanism each; `Lifeguard` enables all of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Swim,
    LhaProbe,
    LhaSuspicion,
    BuddySystem,
    Lifeguard,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Swim,
        Preset::LhaProbe,
        Preset::LhaSuspicion,
        Preset::BuddySystem,
        Preset::Lifeguard,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Swim => "SWIM",
            Preset::LhaProbe => "LHA-Probe",
            Preset::LhaSuspicion => "LHA-Suspicion",
            Preset::BuddySystem => "Buddy System",
            Preset::Lifeguard => "Lifeguard",
        }
    }

    pub fn parse(name: &str) -> Option<Preset> {
        Preset::ALL.iter().copied().find(|p| p.name() == name)
    }

    /// (lha_probe, lha_suspicion, buddy)
    pub fn toggles(self) -> (bool, bool, bool) {
        match self {
            Preset::Swim => (false, false, false),
            Preset::LhaProbe => (true, false, false),
            Preset::LhaSuspicion => (false, true, false),
            Preset::BuddySystem => (false, false, true),
            Preset::Lifeguard => (true, true, true),
        }
    }
}

/// Protocol configuration. All durations are in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct ProtocolConfig {
    /// Base length of one protocol period, before local-health scaling.
    pub base_probe_interval: u64,
    /// Base wait for an `ack` to a direct probe, before scaling.
    pub base_probe_timeout: u64,
    /// Number of helpers enlisted for an indirect probe.
    pub fanout_k: usize,
    /// Saturation limit S of the local health multiplier.
    pub s: u32,
    /// Independent suspicions needed to drive the suspicion timeout to Min.
    pub k: u32,
    /// Suspicion minimum multiplier: Min = alpha * log10(n) * probe interval.
    pub alpha: f64,
    /// Suspicion maximum multiplier: Max = beta * Min.
    pub beta: f64,
    /// Gossip retransmission multiplier; per-update budget is
    /// ceil(lambda * log10(n + 1)).
    pub lambda: f64,
    /// Cadence of the dedicated gossip layer.
    pub gossip_interval: u64,
    /// Peers contacted per dedicated gossip tick.
    pub gossip_fanout: usize,
    /// Cadence of push-pull anti-entropy syncs.
    pub push_pull_interval: u64,
    /// How long dead members stay in the table (and in snapshots).
    pub dead_retention: u64,
    /// Fraction of the probe timeout after which a helper answers a
    /// `ping-req` with a `nack` if the target has not acked.
    pub nack_fraction: f64,
    /// Local-health-aware probing (dynamic probe interval/timeout + nack).
    pub lha_probe: bool,
    /// Local-health-aware suspicion (dynamic suspicion timeouts + re-gossip).
    pub lha_suspicion: bool,
    /// Buddy piggyback rule (pings to a suspect always carry the suspicion).
    pub buddy: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            base_probe_interval: 1_000,
            base_probe_timeout: 500,
            fanout_k: 3,
            s: 8,
            k: 3,
            alpha: 5.0,
            beta: 6.0,
            lambda: 4.0,
            gossip_interval: 200,
            gossip_fanout: 3,
            push_pull_interval: 30_000,
            dead_retention: 86_400_000,
            nack_fraction: 0.8,
            lha_probe: false,
            lha_suspicion: false,
            buddy: false,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("base-probe-timeout ({timeout} ms) must be smaller than base-probe-interval ({interval} ms)")]
    TimeoutNotBelowInterval { timeout: u64, interval: u64 },
    #[error("nack-fraction must be strictly between 0 and 1, got {0}")]
    NackFraction(f64),
    #[error("alpha must be positive, got {0}")]
    Alpha(f64),
    #[error("beta must be at least 1, got {0}")]
    Beta(f64),
    #[error("k must be at least 1")]
    SuspicionK,
    #[error("lambda must be at least 1, got {0}")]
    Lambda(f64),
    #[error("{0} must be non-zero")]
    Zero(&'static str),
}

impl ProtocolConfig {
    pub fn with_preset(mut self, preset: Preset) -> Self {
        let (lha_probe, lha_suspicion, buddy) = preset.toggles();
        self.lha_probe = lha_probe;
        self.lha_suspicion = lha_suspicion;
        self.buddy = buddy;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.base_probe_timeout >= self.base_probe_interval {
            return Err(ConfigError::TimeoutNotBelowInterval {
                timeout: self.base_probe_timeout,
                interval: self.base_probe_interval,
            });
        }
        if !(self.nack_fraction > 0.0 && self.nack_fraction < 1.0) {
            return Err(ConfigError::NackFraction(self.nack_fraction));
        }
        if !(self.alpha > 0.0) {
            return Err(ConfigError::Alpha(self.alpha));
        }
        if self.beta < 1.0 {
            return Err(ConfigError::Beta(self.beta));
        }
        if self.k < 1 {
            return Err(ConfigError::SuspicionK);
        }
        if self.lambda < 1.0 {
            return Err(ConfigError::Lambda(self.lambda));
        }
        for (name, v) in [
            ("base-probe-interval", self.base_probe_interval),
            ("base-probe-timeout", self.base_probe_timeout),
            ("gossip-interval", self.gossip_interval),
            ("push-pull-interval", self.push_pull_interval),
        ] {
            if v == 0 {
                return Err(ConfigError::Zero(name));
            }
        }
        Ok(())
    }

    /// Suspicion multipliers actually in effect. Without local-health-aware
    /// suspicion the timeout is fixed, which is equivalent to alpha=5, beta=1.
    pub fn effective_alpha_beta(&self) -> (f64, f64) {
        if self.lha_suspicion {
            (self.alpha, self.beta)
        } else {
            (5.0, 1.0)
        }
    }
}
