//! The protocol state machine.
//!
//! A [`Node`] is pure and single-threaded: it consumes timer and message
//! events one at a time, with the clock passed into every call and all
//! randomness drawn from a seeded generator injected at construction. It
//! never performs I/O; every externally visible effect is returned as an
//! [`Output`] for the host (real transport or simulator) to execute.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::{self, Body, Channel, Envelope, SnapshotEntry, MAX_DATAGRAM};
use crate::config::{Micros, ProtocolConfig, MS};
use crate::gossip::{GossipQueue, GossipUpdate};
use crate::health::{HealthEvent, LocalHealth};
use crate::member::{Incarnation, MemberId, MemberState};
use crate::suspicion::{gossip_budget, suspicion_bounds, ConfirmOutcome, SuspicionRecord};
use crate::table::{update_wins, MembershipTable};

/// Timers a node asks its host to schedule. Timers are never cancelled;
/// stale ones are recognized and ignored when they fire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TimerKind {
    /// End of the current protocol period; also starts the next one.
    PeriodEnd { seq: u64 },
    /// Direct probe timed out; launch the indirect probe.
    ProbeTimeout { seq: u64 },
    /// A suspicion deadline. Re-armed earlier whenever the deadline drops.
    SuspicionExpiry { member: MemberId, incarnation: Incarnation },
    /// Helper-side: answer a ping-req with a nack unless the target acked.
    NackDeadline { relay_seq: u64 },
    /// Helper-side: forget a pending ping-req relay.
    RelayExpire { relay_seq: u64 },
    GossipTick,
    PushPullTick,
}

/// A membership state transition observed by this node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateChange {
    pub member: MemberId,
    /// `None` when the member was previously unknown.
    pub old: Option<MemberState>,
    pub new: MemberState,
    pub incarnation: Incarnation,
}

/// Externally visible effects of one event.
#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Send {
        to: MemberId,
        envelope: Envelope,
        channel: Channel,
    },
    SetTimer {
        kind: TimerKind,
        at: Micros,
    },
    StateChange(StateChange),
}

#[derive(Debug, Clone)]
struct ProbeRound {
    seq: u64,
    target: MemberId,
    end_at: Micros,
    acked: bool,
    /// Set once the indirect probe is launched: (helpers enlisted,
    /// helpers that answered with a nack or a forwarded ack).
    indirect: Option<(usize, BTreeSet<MemberId>)>,
}

#[derive(Debug, Clone)]
struct Relay {
    requester: MemberId,
    origin_seq: u64,
    target: MemberId,
    acked: bool,
    nacked: bool,
}

/// One SWIM agent with the local-health, adaptive-suspicion and buddy
/// extensions, as a deterministic event-driven state machine.
#[derive(Debug)]
pub struct Node {
    id: MemberId,
    config: ProtocolConfig,
    incarnation: Incarnation,
    table: MembershipTable,
    health: LocalHealth,
    gossip: GossipQueue,
    suspicions: BTreeMap<MemberId, SuspicionRecord>,
    round: Option<ProbeRound>,
    relays: BTreeMap<u64, Relay>,
    next_seq: u64,
    rng: ChaCha8Rng,
}

impl Node {
    pub fn new(id: MemberId, config: ProtocolConfig, seed: u64) -> Self {
        let table = MembershipTable::new(id.clone(), 0);
        let health = LocalHealth::new(config.s);
        Node {
            id,
            config,
            incarnation: 0,
            table,
            health,
            gossip: GossipQueue::new(),
            suspicions: BTreeMap::new(),
            round: None,
            relays: BTreeMap::new(),
            next_seq: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Preloads the table with peers known to be alive, as when a whole
    /// group is started together. Probe positions are randomized.
    pub fn bootstrap(&mut self, peers: impl IntoIterator<Item = MemberId>) {
        for peer in peers {
            if peer != self.id && self.table.get(&peer).is_none() {
                self.table
                    .insert(peer, MemberState::Alive, 0, 0, &mut self.rng);
            }
        }
    }

    /// Begins the protocol: first probe period plus the gossip and
    /// anti-entropy tick chains.
    pub fn start(&mut self, now: Micros) -> Vec<Output> {
        let mut out = Vec::new();
        self.begin_period(now, &mut out);
        out.push(Output::SetTimer {
            kind: TimerKind::GossipTick,
            at: now + self.config.gossip_interval * MS,
        });
        out.push(Output::SetTimer {
            kind: TimerKind::PushPullTick,
            at: now + self.config.push_pull_interval * MS,
        });
        out
    }

    /// Requests a full state sync from `peer` (typically a join seed that
    /// is not yet in the table).
    pub fn join(&mut self, peer: MemberId, now: Micros) -> Vec<Output> {
        let _ = now;
        vec![Output::Send {
            to: peer,
            envelope: Envelope {
                sender: self.id.clone(),
                seq: self.fresh_seq(),
                body: Body::PushPull {
                    reply: false,
                    entries: self.snapshot(),
                },
            },
            channel: Channel::Reliable,
        }]
    }

    pub fn id(&self) -> &MemberId {
        &self.id
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn incarnation(&self) -> Incarnation {
        self.incarnation
    }

    pub fn lhm(&self) -> u32 {
        self.health.get()
    }

    pub fn member_state(&self, id: &MemberId) -> Option<(MemberState, Incarnation)> {
        self.table.get(id).map(|r| (r.state, r.incarnation))
    }

    pub fn members(&self) -> impl Iterator<Item = (&MemberId, MemberState, Incarnation)> {
        self.table.records().map(|r| (&r.id, r.state, r.incarnation))
    }

    pub fn suspicion_deadline(&self, member: &MemberId) -> Option<Micros> {
        self.suspicions.get(member).map(|s| s.deadline)
    }

    /// Full-state snapshot for anti-entropy, retained dead members included.
    pub fn snapshot(&self) -> Vec<SnapshotEntry> {
        self.table
            .records()
            .map(|r| SnapshotEntry {
                member: r.id.clone(),
                state: r.state,
                incarnation: r.incarnation,
            })
            .collect()
    }

    #[cfg(test)]
    pub(crate) fn force_lhm(&mut self, value: u32) {
        self.health = LocalHealth::new(self.config.s);
        for _ in 0..value {
            self.health.apply(HealthEvent::ProbeFailed);
        }
        assert_eq!(self.health.get(), value);
    }

    // ------------------------------------------------------------------
    // Event entry points
    // ------------------------------------------------------------------

    pub fn on_timer(&mut self, kind: TimerKind, now: Micros) -> Vec<Output> {
        let mut out = Vec::new();
        match kind {
            TimerKind::PeriodEnd { seq } => self.on_period_end(seq, now, &mut out),
            TimerKind::ProbeTimeout { seq } => self.on_probe_timeout(seq, now, &mut out),
            TimerKind::SuspicionExpiry {
                member,
                incarnation,
            } => {
                let expired = self
                    .suspicions
                    .get(&member)
                    .map(|rec| rec.incarnation == incarnation && now >= rec.deadline)
                    .unwrap_or(false);
                if expired {
                    self.confirm_failure(&member, now, &mut out);
                }
            }
            TimerKind::NackDeadline { relay_seq } => {
                let (requester, origin_seq) = match self.relays.get_mut(&relay_seq) {
                    Some(relay) if !relay.acked && !relay.nacked => {
                        relay.nacked = true;
                        (relay.requester.clone(), relay.origin_seq)
                    }
                    _ => return out,
                };
                let updates = self.piggyback(&requester, false, None);
                out.push(self.send_unreliable(
                    requester,
                    origin_seq,
                    |updates| Body::Nack { updates },
                    updates,
                ));
            }
            TimerKind::RelayExpire { relay_seq } => {
                self.relays.remove(&relay_seq);
            }
            TimerKind::GossipTick => self.on_gossip_tick(now, &mut out),
            TimerKind::PushPullTick => self.on_push_pull_tick(now, &mut out),
        }
        out
    }

    pub fn on_envelope(&mut self, envelope: Envelope, channel: Channel, now: Micros) -> Vec<Output> {
        let mut out = Vec::new();
        let Envelope { sender, seq, body } = envelope;

        // Piggybacked updates are processed before the message itself so
        // that, e.g., a refutation triggered by a suspicion carried on a
        // ping already rides on the ack going back.
        for update in body.updates() {
            self.apply_update(update.clone(), now, &mut out);
        }

        match body {
            Body::Ping { .. } => {
                let updates = self.piggyback(&sender, false, None);
                out.push(Output::Send {
                    to: sender.clone(),
                    envelope: Envelope {
                        sender: self.id.clone(),
                        seq,
                        body: Body::Ack { updates },
                    },
                    channel,
                });
            }
            Body::PingReq { target, .. } => {
                self.on_ping_req(sender, seq, target, now, &mut out)
            }
            Body::Ack { .. } => self.on_ack(sender, seq, now, &mut out),
            Body::Nack { .. } => {
                if let Some(round) = &mut self.round {
                    if round.seq == seq && now <= round.end_at && sender != round.target {
                        if let Some((_, responders)) = &mut round.indirect {
                            responders.insert(sender);
                        }
                    }
                }
            }
            Body::Gossip { .. } => {}
            Body::PushPull { reply, entries } => {
                if !reply {
                    let snapshot = self.snapshot();
                    out.push(Output::Send {
                        to: sender.clone(),
                        envelope: Envelope {
                            sender: self.id.clone(),
                            seq,
                            body: Body::PushPull {
                                reply: true,
                                entries: snapshot,
                            },
                        },
                        channel: Channel::Reliable,
                    });
                }
                for entry in entries {
                    // A snapshot is the peer's own view, not independent
                    // evidence: treat suspect entries as locally originated.
                    let update = GossipUpdate {
                        kind: entry.state,
                        about: entry.member,
                        incarnation: entry.incarnation,
                        origin: self.id.clone(),
                    };
                    self.apply_update(update, now, &mut out);
                }
            }
        }
        out
    }

    // ------------------------------------------------------------------
    // Probe rounds
    // ------------------------------------------------------------------

    fn begin_period(&mut self, now: Micros, out: &mut Vec<Output>) {
        // Local health scales both durations; changes apply from the next
        // period, never to timers already in flight.
        let interval = self.health.probe_interval(self.config.base_probe_interval) * MS;
        let timeout = self.health.probe_timeout(self.config.base_probe_timeout) * MS;
        let seq = self.fresh_seq();
        let end_at = now + interval;

        match self.table.next_probe_target(&mut self.rng) {
            Some(target) => {
                let updates = self.piggyback(&target, true, None);
                out.push(self.send_unreliable(
                    target.clone(),
                    seq,
                    |updates| Body::Ping { updates },
                    updates,
                ));
                out.push(Output::SetTimer {
                    kind: TimerKind::ProbeTimeout { seq },
                    at: now + timeout,
                });
                self.round = Some(ProbeRound {
                    seq,
                    target,
                    end_at,
                    acked: false,
                    indirect: None,
                });
            }
            None => {
                // No peers to probe: idle round, keep the chain alive.
                self.round = None;
            }
        }
        out.push(Output::SetTimer {
            kind: TimerKind::PeriodEnd { seq },
            at: end_at,
        });
    }

    fn on_probe_timeout(&mut self, seq: u64, now: Micros, out: &mut Vec<Output>) {
        let (target, already_acked, already_indirect) = match &self.round {
            Some(r) if r.seq == seq => (r.target.clone(), r.acked, r.indirect.is_some()),
            _ => return,
        };
        if already_acked || already_indirect {
            return; // ack beat the timer; stale wakeup
        }

        let pool = self.table.eligible_peers(Some(&target));
        let helpers = self.sample(pool, self.config.fanout_k);
        for helper in &helpers {
            let updates = self.piggyback(helper, false, Some(&target));
            let target = target.clone();
            out.push(self.send_unreliable(
                helper.clone(),
                seq,
                move |updates| Body::PingReq { target, updates },
                updates,
            ));
        }

        // In parallel, one direct probe over the reliable channel.
        let updates = self.piggyback(&target, true, None);
        out.push(Output::Send {
            to: target.clone(),
            envelope: Envelope {
                sender: self.id.clone(),
                seq,
                body: Body::Ping { updates },
            },
            channel: Channel::Reliable,
        });

        if let Some(round) = &mut self.round {
            round.indirect = Some((helpers.len(), BTreeSet::new()));
        }
        let _ = now;
    }

    fn on_period_end(&mut self, seq: u64, now: Micros, out: &mut Vec<Output>) {
        if let Some(round) = self.round.take() {
            if round.seq == seq {
                self.settle_round(round, now, out);
            } else {
                self.round = Some(round);
            }
        }
        self.begin_period(now, out);
    }

    fn settle_round(&mut self, round: ProbeRound, now: Micros, out: &mut Vec<Output>) {
        // Target gone or already declared dead through gossip mid-round:
        // nothing to judge.
        match self.table.get(&round.target) {
            Some(rec) if rec.state != MemberState::Dead => {}
            _ => return,
        }

        if round.acked {
            if self.config.lha_probe {
                self.health.apply(HealthEvent::ProbeSuccess);
            }
            return;
        }

        if self.config.lha_probe {
            self.health.apply(HealthEvent::ProbeFailed);
            // A silent helper is a second, separate signal; one penalty per
            // round no matter how many stayed silent.
            if let Some((expected, responders)) = &round.indirect {
                if responders.len() < *expected {
                    self.health.apply(HealthEvent::MissedNack);
                }
            }
        }

        self.suspect_member(round.target, now, out);
    }

    fn on_ack(&mut self, sender: MemberId, seq: u64, now: Micros, out: &mut Vec<Output>) {
        if let Some(round) = &mut self.round {
            if round.seq == seq {
                // An ack processed after the period end no longer changes
                // the verdict; its piggyback was still applied.
                if now <= round.end_at {
                    round.acked = true;
                    if sender != round.target {
                        if let Some((_, responders)) = &mut round.indirect {
                            responders.insert(sender.clone());
                        }
                    }
                }
                return;
            }
        }
        // Not ours: maybe a target answering a ping we relayed for someone.
        let relay_seq = self
            .relays
            .iter()
            .find(|(_, r)| !r.acked && r.target == sender)
            .map(|(k, _)| *k);
        if let Some(relay_seq) = relay_seq {
            let relay = self.relays.get_mut(&relay_seq).expect("relay just found");
            relay.acked = true;
            let requester = relay.requester.clone();
            let origin_seq = relay.origin_seq;
            let updates = self.piggyback(&requester, false, None);
            out.push(self.send_unreliable(
                requester,
                origin_seq,
                |updates| Body::Ack { updates },
                updates,
            ));
        }
        let _ = now;
    }

    fn on_ping_req(
        &mut self,
        requester: MemberId,
        seq: u64,
        target: MemberId,
        now: Micros,
        out: &mut Vec<Output>,
    ) {
        if target == self.id {
            // Asked to probe ourselves: answer for ourselves.
            let updates = self.piggyback(&requester, false, None);
            out.push(self.send_unreliable(
                requester,
                seq,
                |updates| Body::Ack { updates },
                updates,
            ));
            return;
        }

        let relay_seq = self.fresh_seq();
        let updates = self.piggyback(&target, true, None);
        out.push(self.send_unreliable(
            target.clone(),
            relay_seq,
            |updates| Body::Ping { updates },
            updates,
        ));
        self.relays.insert(
            relay_seq,
            Relay {
                requester,
                origin_seq: seq,
                target,
                acked: false,
                nacked: false,
            },
        );
        let timeout_us = self.health.probe_timeout(self.config.base_probe_timeout) * MS;
        if self.config.lha_probe {
            let nack_at = now + (timeout_us as f64 * self.config.nack_fraction) as u64;
            out.push(Output::SetTimer {
                kind: TimerKind::NackDeadline { relay_seq },
                at: nack_at,
            });
        }
        out.push(Output::SetTimer {
            kind: TimerKind::RelayExpire { relay_seq },
            at: now + 2 * timeout_us,
        });
    }

    // ------------------------------------------------------------------
    // Suspicion lifecycle
    // ------------------------------------------------------------------

    fn suspicion_bounds_now(&self) -> (u64, u64) {
        let (alpha, beta) = self.config.effective_alpha_beta();
        suspicion_bounds(
            self.table.non_dead_count(),
            alpha,
            beta,
            self.config.base_probe_interval,
        )
    }

    /// Failed probe: move the target to suspect with a fresh suspicion
    /// opened by this node.
    fn suspect_member(&mut self, target: MemberId, now: Micros, out: &mut Vec<Output>) {
        let (state, incarnation) = match self.table.get(&target) {
            Some(rec) => (rec.state, rec.incarnation),
            None => return,
        };
        match state {
            MemberState::Dead => {}
            MemberState::Suspect => {
                // Already suspected: our own failure still gets voiced, so
                // other members hear one more independent accuser, but it
                // never shortens our own deadline.
                let slot = self
                    .suspicions
                    .get_mut(&target)
                    .filter(|rec| rec.incarnation == incarnation)
                    .map_or(false, |rec| rec.take_gossip_slot(self.config.k));
                if slot {
                    self.enqueue_update(GossipUpdate {
                        kind: MemberState::Suspect,
                        about: target,
                        incarnation,
                        origin: self.id.clone(),
                    });
                }
            }
            MemberState::Alive => {
                self.open_suspicion(target, incarnation, self.id.clone(), now, out);
            }
        }
    }

    fn open_suspicion(
        &mut self,
        member: MemberId,
        incarnation: Incarnation,
        origin: MemberId,
        now: Micros,
        out: &mut Vec<Output>,
    ) {
        let old = self.table.get(&member).map(|r| r.state);
        self.table
            .set_state(&member, MemberState::Suspect, incarnation, now, &mut self.rng);
        let (min_ms, max_ms) = self.suspicion_bounds_now();
        let record = SuspicionRecord::new(
            member.clone(),
            incarnation,
            origin.clone(),
            now,
            min_ms,
            max_ms,
        );
        out.push(Output::SetTimer {
            kind: TimerKind::SuspicionExpiry {
                member: member.clone(),
                incarnation,
            },
            at: record.deadline,
        });
        self.suspicions.insert(member.clone(), record);
        self.enqueue_update(GossipUpdate {
            kind: MemberState::Suspect,
            about: member.clone(),
            incarnation,
            origin,
        });
        if old != Some(MemberState::Suspect) {
            out.push(Output::StateChange(StateChange {
                member,
                old,
                new: MemberState::Suspect,
                incarnation,
            }));
        }
    }

    /// An independent suspicion about an already-suspected member.
    fn register_independent(
        &mut self,
        member: &MemberId,
        origin: MemberId,
        now: Micros,
        out: &mut Vec<Output>,
    ) {
        let k = self.config.k;
        let self_id = self.id.clone();
        let rec = match self.suspicions.get_mut(member) {
            Some(rec) => rec,
            None => return,
        };
        let incarnation = rec.incarnation;
        let before = rec.deadline;
        match rec.register(origin.clone(), &self_id, k, now) {
            ConfirmOutcome::Duplicate => {}
            ConfirmOutcome::Registered { deadline, regossip } => {
                if deadline < before {
                    out.push(Output::SetTimer {
                        kind: TimerKind::SuspicionExpiry {
                            member: member.clone(),
                            incarnation,
                        },
                        at: deadline,
                    });
                }
                // Re-gossiping received suspicions is part of the adaptive
                // suspicion extension only.
                if regossip && self.config.lha_suspicion {
                    self.enqueue_update(GossipUpdate {
                        kind: MemberState::Suspect,
                        about: member.clone(),
                        incarnation,
                        origin,
                    });
                }
            }
            ConfirmOutcome::Expired => self.confirm_failure(&member.clone(), now, out),
        }
    }

    fn confirm_failure(&mut self, member: &MemberId, now: Micros, out: &mut Vec<Output>) {
        let incarnation = match self.suspicions.remove(member) {
            Some(rec) => rec.incarnation,
            None => return,
        };
        let old = match self.table.get(member) {
            Some(rec) if rec.state == MemberState::Suspect => rec.state,
            _ => return,
        };
        self.table
            .set_state(member, MemberState::Dead, incarnation, now, &mut self.rng);
        self.enqueue_update(GossipUpdate {
            kind: MemberState::Dead,
            about: member.clone(),
            incarnation,
            origin: self.id.clone(),
        });
        out.push(Output::StateChange(StateChange {
            member: member.clone(),
            old: Some(old),
            new: MemberState::Dead,
            incarnation,
        }));
    }

    // ------------------------------------------------------------------
    // Update precedence
    // ------------------------------------------------------------------

    /// Applies one membership update through the precedence rules, emitting
    /// any resulting state change and re-gossip.
    pub fn apply_update(&mut self, update: GossipUpdate, now: Micros, out: &mut Vec<Output>) {
        if update.about == self.id {
            self.apply_update_about_self(update, out);
            return;
        }

        let current = self.table.get(&update.about).map(|r| (r.state, r.incarnation));
        match current {
            None => {
                // Unknown member: anything beats an absent record.
                self.table.insert(
                    update.about.clone(),
                    update.kind,
                    update.incarnation,
                    now,
                    &mut self.rng,
                );
                if update.kind == MemberState::Suspect {
                    let (min_ms, max_ms) = self.suspicion_bounds_now();
                    let record = SuspicionRecord::new(
                        update.about.clone(),
                        update.incarnation,
                        update.origin.clone(),
                        now,
                        min_ms,
                        max_ms,
                    );
                    out.push(Output::SetTimer {
                        kind: TimerKind::SuspicionExpiry {
                            member: update.about.clone(),
                            incarnation: update.incarnation,
                        },
                        at: record.deadline,
                    });
                    self.suspicions.insert(update.about.clone(), record);
                }
                out.push(Output::StateChange(StateChange {
                    member: update.about.clone(),
                    old: None,
                    new: update.kind,
                    incarnation: update.incarnation,
                }));
                self.enqueue_update(update);
            }
            Some((state, incarnation)) => {
                if update_wins(update.kind, update.incarnation, state, incarnation) {
                    match update.kind {
                        MemberState::Alive => {
                            self.suspicions.remove(&update.about);
                            self.table.set_state(
                                &update.about,
                                MemberState::Alive,
                                update.incarnation,
                                now,
                                &mut self.rng,
                            );
                            if state != MemberState::Alive {
                                out.push(Output::StateChange(StateChange {
                                    member: update.about.clone(),
                                    old: Some(state),
                                    new: MemberState::Alive,
                                    incarnation: update.incarnation,
                                }));
                            }
                            self.enqueue_update(update);
                        }
                        MemberState::Suspect => {
                            // Covers both suspect-over-alive and a fresher
                            // suspicion replacing an older one.
                            self.suspicions.remove(&update.about);
                            self.open_suspicion(
                                update.about.clone(),
                                update.incarnation,
                                update.origin.clone(),
                                now,
                                out,
                            );
                        }
                        MemberState::Dead => {
                            self.suspicions.remove(&update.about);
                            self.table.set_state(
                                &update.about,
                                MemberState::Dead,
                                update.incarnation,
                                now,
                                &mut self.rng,
                            );
                            if state != MemberState::Dead {
                                out.push(Output::StateChange(StateChange {
                                    member: update.about.clone(),
                                    old: Some(state),
                                    new: MemberState::Dead,
                                    incarnation: update.incarnation,
                                }));
                            }
                            self.enqueue_update(update);
                        }
                    }
                } else if update.kind == MemberState::Suspect
                    && state == MemberState::Suspect
                    && update.incarnation == incarnation
                {
                    // Same suspicion from a (possibly) new accuser.
                    self.register_independent(&update.about.clone(), update.origin, now, out);
                }
            }
        }
    }

    fn apply_update_about_self(&mut self, update: GossipUpdate, out: &mut Vec<Output>) {
        match update.kind {
            MemberState::Alive => {} // our own echo
            MemberState::Suspect | MemberState::Dead => {
                if update.incarnation < self.incarnation {
                    return; // stale accusation, already refuted
                }
                self.incarnation = update.incarnation + 1;
                self.table.set_self_incarnation(self.incarnation);
                self.enqueue_update(GossipUpdate {
                    kind: MemberState::Alive,
                    about: self.id.clone(),
                    incarnation: self.incarnation,
                    origin: self.id.clone(),
                });
                if self.config.lha_probe {
                    self.health.apply(HealthEvent::RefutedSelf);
                }
            }
        }
        let _ = out;
    }

    // ------------------------------------------------------------------
    // Dissemination
    // ------------------------------------------------------------------

    fn enqueue_update(&mut self, update: GossipUpdate) {
        let budget = gossip_budget(self.table.non_dead_count(), self.config.lambda);
        self.gossip.enqueue(update, budget);
    }

    fn on_gossip_tick(&mut self, now: Micros, out: &mut Vec<Output>) {
        if !self.gossip.is_empty() {
            let pool = self.table.eligible_peers(None);
            let peers = self.sample(pool, self.config.gossip_fanout);
            for peer in peers {
                let updates = self.piggyback(&peer, false, None);
                if updates.is_empty() {
                    continue;
                }
                out.push(self.send_unreliable(peer, 0, |updates| Body::Gossip { updates }, updates));
            }
        }
        out.push(Output::SetTimer {
            kind: TimerKind::GossipTick,
            at: now + self.config.gossip_interval * MS,
        });
    }

    fn on_push_pull_tick(&mut self, now: Micros, out: &mut Vec<Output>) {
        self.table
            .purge_expired_dead(now, self.config.dead_retention * MS);
        let pool = self.table.eligible_peers(None);
        let peers = self.sample(pool, 1);
        if let Some(peer) = peers.into_iter().next() {
            out.push(Output::Send {
                to: peer,
                envelope: Envelope {
                    sender: self.id.clone(),
                    seq: self.fresh_seq(),
                    body: Body::PushPull {
                        reply: false,
                        entries: self.snapshot(),
                    },
                },
                channel: Channel::Reliable,
            });
        }
        out.push(Output::SetTimer {
            kind: TimerKind::PushPullTick,
            at: now + self.config.push_pull_interval * MS,
        });
    }

    /// Fills the piggyback for one outgoing message. `is_ping` applies the
    /// buddy rule: a ping toward a locally suspected member always leads
    /// with the suspicion about it, budget-free.
    fn piggyback(
        &mut self,
        dest: &MemberId,
        is_ping: bool,
        ping_req_target: Option<&MemberId>,
    ) -> Vec<GossipUpdate> {
        let header = codec::header_len(&self.id, ping_req_target);
        let forced = if is_ping && self.config.buddy {
            match self.table.get(dest) {
                Some(rec) if rec.state == MemberState::Suspect => {
                    let incarnation = rec.incarnation;
                    let queued = self.gossip.get(dest).filter(|u| {
                        u.kind == MemberState::Suspect && u.incarnation == incarnation
                    });
                    Some(queued.cloned().unwrap_or_else(|| GossipUpdate {
                        kind: MemberState::Suspect,
                        about: dest.clone(),
                        incarnation,
                        origin: self.id.clone(),
                    }))
                }
                _ => None,
            }
        } else {
            None
        };

        let selected = self.gossip.select(forced, |chosen, candidate| {
            let used: usize = chosen.iter().map(|s| codec::update_len(&s.update)).sum();
            header + used + codec::update_len(candidate) <= MAX_DATAGRAM
        });
        selected.into_iter().map(|s| s.update).collect()
    }

    // ------------------------------------------------------------------
    // Helpers
    // ------------------------------------------------------------------

    fn fresh_seq(&mut self) -> u64 {
        self.next_seq += 1;
        self.next_seq
    }

    fn send_unreliable(
        &self,
        to: MemberId,
        seq: u64,
        body: impl FnOnce(Vec<GossipUpdate>) -> Body,
        updates: Vec<GossipUpdate>,
    ) -> Output {
        Output::Send {
            to,
            envelope: Envelope {
                sender: self.id.clone(),
                seq,
                body: body(updates),
            },
            channel: Channel::Unreliable,
        }
    }

    /// Uniform sample without replacement, deterministic under the node's
    /// seeded generator.
    fn sample(&mut self, mut pool: Vec<MemberId>, k: usize) -> Vec<MemberId> {
        let n = pool.len();
        let k = k.min(n);
        for i in 0..k {
            let j = self.rng.random_range(i..n);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}
