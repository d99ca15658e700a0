use std::collections::BTreeSet;

use crate::config::Micros;
use crate::member::{Incarnation, MemberId};

/// Suspicion timeout in milliseconds for a suspicion that has seen `c`
/// independent confirmations, out of the `k` needed to reach `min_ms`.
///
/// Logarithmic decay from `max_ms` at c=0 down to `min_ms` at c>=k; the
/// base of the logarithm cancels in the ratio.
pub fn suspicion_timeout(min_ms: u64, max_ms: u64, k: u32, c: u32) -> u64 {
    debug_assert!(min_ms <= max_ms, "min must not exceed max");
    if c == 0 {
        return max_ms;
    }
    if c >= k {
        return min_ms;
    }
    let frac = ((c as f64) + 1.0).ln() / ((k as f64) + 1.0).ln();
    let raw = max_ms as f64 - (max_ms as f64 - min_ms as f64) * frac;
    let timeout = raw.round() as u64;
    timeout.max(min_ms)
}

/// (Min, Max) suspicion bounds in milliseconds for a group of `n` live
/// members: Min = alpha * log10(n) * probe_interval, floored at one probe
/// interval so tiny groups never get a zero timeout; Max = beta * Min.
pub fn suspicion_bounds(n: usize, alpha: f64, beta: f64, probe_interval_ms: u64) -> (u64, u64) {
    let log_n = if n <= 1 { 0.0 } else { (n as f64).log10() };
    let raw_min = alpha * log_n * probe_interval_ms as f64;
    let min = (raw_min.round() as u64).max(probe_interval_ms);
    let max = ((beta * min as f64).round() as u64).max(min);
    (min, max)
}

/// Retransmission budget for one gossip update in a group with `n` known
/// non-dead members: ceil(lambda * log10(n + 1)).
pub fn gossip_budget(n: usize, lambda: f64) -> u32 {
    let b = (lambda * ((n as f64) + 1.0).log10()).ceil();
    (b as u32).max(1)
}

/// Open suspicion against one member at one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuspicionRecord {
    pub suspect: MemberId,
    pub incarnation: Incarnation,
    /// Accusers seen so far, including the origin that opened the record.
    /// Only origins beyond the first count toward the timeout decay.
    origins: BTreeSet<MemberId>,
    /// Gossip enqueues charged against this suspicion (creation included).
    /// Capped at K+1 so the total suspect traffic for one (member,
    /// incarnation) stays within (K+1) budgets.
    enqueues: u32,
    pub started_at: Micros,
    pub min_ms: u64,
    pub max_ms: u64,
    pub deadline: Micros,
}

/// Outcome of feeding one more suspicion origin into an open record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfirmOutcome {
    /// Origin already counted (or is the local node): nothing changed.
    Duplicate,
    /// New independent origin; deadline recomputed (only ever moves earlier).
    Registered { deadline: Micros, regossip: bool },
    /// The reduced timeout had already elapsed; the suspect must be
    /// declared failed now.
    Expired,
}

impl SuspicionRecord {
    /// Opens a suspicion raised by `origin` (the local node when raised by a
    /// failed probe). The timer starts at Max; the opening origin does not
    /// count toward the decay.
    pub fn new(
        suspect: MemberId,
        incarnation: Incarnation,
        origin: MemberId,
        now: Micros,
        min_ms: u64,
        max_ms: u64,
    ) -> Self {
        let mut origins = BTreeSet::new();
        origins.insert(origin);
        SuspicionRecord {
            suspect,
            incarnation,
            origins,
            enqueues: 1,
            started_at: now,
            min_ms,
            max_ms,
            deadline: now + max_ms * 1_000,
        }
    }

    /// Claims one of the K+1 gossip slots for this suspicion; refuses once
    /// they are spent.
    pub fn take_gossip_slot(&mut self, k: u32) -> bool {
        if self.enqueues > k {
            return false;
        }
        self.enqueues += 1;
        true
    }

    /// Independent confirmations received since the record was opened.
    pub fn confirmations(&self) -> u32 {
        (self.origins.len() as u32).saturating_sub(1)
    }

    pub fn has_origin(&self, origin: &MemberId) -> bool {
        self.origins.contains(origin)
    }

    /// Registers one more accuser. `k` is the confirmation target and
    /// `self_id` the local node, which never counts toward the decay.
    pub fn register(
        &mut self,
        origin: MemberId,
        self_id: &MemberId,
        k: u32,
        now: Micros,
    ) -> ConfirmOutcome {
        if &origin == self_id || self.origins.contains(&origin) {
            return ConfirmOutcome::Duplicate;
        }
        self.origins.insert(origin);
        let c = self.confirmations();
        let timeout = suspicion_timeout(self.min_ms, self.max_ms, k, c);
        let new_deadline = self.started_at + timeout * 1_000;
        // Deadlines only move earlier.
        if new_deadline < self.deadline {
            self.deadline = new_deadline;
        }
        if self.deadline <= now {
            return ConfirmOutcome::Expired;
        }
        // The first k independent suspicions are re-gossiped.
        ConfirmOutcome::Registered {
            deadline: self.deadline,
            regossip: c <= k,
        }
    }
}
