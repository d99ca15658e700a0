//! Discrete-event kernel hosting N protocol instances under a virtual
//! clock with a configurable link model and anomaly injection.
//!
//! Anomalies model a process whose protocol message I/O is blocked while
//! the process itself keeps running: timers still fire on schedule (so
//! probe rounds keep turning over and suspicion deadlines keep expiring),
//! but inbound messages queue unprocessed until the window ends, and every
//! message the node produces during the window is emitted on the network
//! only at the window end. Deferred inbound messages are processed at the
//! window end in arrival order.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shoal_core::{codec, Channel, MemberId, Node, Output, TimerKind};

use crate::config::RunSpec;
use crate::log::{EventRecord, MsgKind, SimEventLog, UpdateNote};

/// Stable seed derivation: one master seed fans out to independent streams
/// keyed by label, so adding a consumer never perturbs the others.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    // FNV-1a over the label, folded into the master through splitmix64.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = master ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug)]
enum Event {
    Start,
    Timer(TimerKind),
    Deliver {
        mid: u64,
        from: u16,
        bytes: Vec<u8>,
        channel: Channel,
    },
    AnomalyStart,
    AnomalyEnd,
}

struct Entry {
    at: u64,
    node: u16,
    seq: u64,
    event: Event,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.node, self.seq) == (other.at, other.node, other.seq)
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert for earliest-first, ties broken
        // by node id then insertion order.
        (other.at, other.node, other.seq).cmp(&(self.at, self.node, self.seq))
    }
}

struct Buffered {
    to: u16,
    bytes: Vec<u8>,
    channel: Channel,
    kind: MsgKind,
    updates: Vec<UpdateNote>,
}

struct Agent {
    node: Node,
    suspended: bool,
    /// Inbound messages that arrived during the anomaly window, in
    /// arrival order: (mid, from, bytes, channel).
    deferred: Vec<(u64, u16, Vec<u8>, Channel)>,
    /// Messages produced during the window, emitted at its end.
    outbox: Vec<Buffered>,
}

/// Message accounting for conservation checks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub sends_unreliable: u64,
    pub sends_reliable: u64,
    pub recvs_unreliable: u64,
    pub recvs_reliable: u64,
    pub drops: u64,
    pub decode_errors: u64,
    /// Messages still in flight when the run ended.
    pub undelivered: u64,
    /// Messages parked at suspended nodes when the run ended.
    pub deferred_unprocessed: u64,
}

impl Counters {
    pub fn sends(&self) -> u64 {
        self.sends_unreliable + self.sends_reliable
    }
    pub fn recvs(&self) -> u64 {
        self.recvs_unreliable + self.recvs_reliable
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EarlyStop {
    Never,
    /// Stop once every node sees every other node alive, checked only
    /// from the given virtual time onward.
    AllHealthyAfter(u64),
}

pub struct Kernel {
    now: u64,
    queue: BinaryHeap<Entry>,
    next_seq: u64,
    next_mid: u64,
    agents: Vec<Agent>,
    index: BTreeMap<MemberId, u16>,
    net_rng: ChaCha8Rng,
    latency_min_us: u64,
    latency_max_us: u64,
    loss_probability: f64,
    log: SimEventLog,
    pub counters: Counters,
    /// (observer, subject) pairs currently not seen as alive.
    unhealthy_pairs: i64,
}

impl Kernel {
    pub fn new(spec: &RunSpec) -> Kernel {
        let protocol = spec.protocol_config();
        protocol.validate().expect("valid protocol config");
        let names: Vec<MemberId> = (0..spec.node_count)
            .map(|i| MemberId::new(format!("n{i:03}")))
            .collect();
        let mut index = BTreeMap::new();
        for (i, name) in names.iter().enumerate() {
            index.insert(name.clone(), i as u16);
        }

        let mut agents = Vec::with_capacity(spec.node_count);
        for name in &names {
            let seed = derive_seed(spec.seed, name.as_str());
            let mut node = Node::new(name.clone(), protocol.clone(), seed);
            node.bootstrap(names.iter().cloned());
            agents.push(Agent {
                node,
                suspended: false,
                deferred: Vec::new(),
                outbox: Vec::new(),
            });
        }

        let mut kernel = Kernel {
            now: 0,
            queue: BinaryHeap::new(),
            next_seq: 0,
            next_mid: 0,
            agents,
            index,
            net_rng: ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "network")),
            latency_min_us: spec.latency_min_us,
            latency_max_us: spec.latency_max_us,
            loss_probability: spec.loss_probability,
            log: SimEventLog {
                names: names.iter().map(|n| n.as_str().to_string()).collect(),
                records: Vec::new(),
            },
            counters: Counters::default(),
            unhealthy_pairs: 0,
        };

        // Protocol periods start staggered across the first base interval
        // so probes are out of phase, as with real process start times.
        let mut stagger = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "stagger"));
        let window = protocol.base_probe_interval * 1_000;
        for i in 0..spec.node_count {
            let at = stagger.random_range(0..window);
            kernel.schedule(at, i as u16, Event::Start);
        }
        kernel
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    fn schedule(&mut self, at: u64, node: u16, event: Event) {
        self.next_seq += 1;
        self.queue.push(Entry {
            at,
            node,
            seq: self.next_seq,
            event,
        });
    }

    /// Suspends `node` during `[start_us, end_us)`. Windows for one node
    /// must not overlap; the runner merges before scheduling.
    pub fn schedule_anomaly(&mut self, node: u16, start_us: u64, end_us: u64) {
        assert!(start_us < end_us);
        self.schedule(start_us, node, Event::AnomalyStart);
        self.schedule(end_us, node, Event::AnomalyEnd);
    }

    /// Processes events until the queue drains, an event would pass
    /// `cap_us`, or the early-stop condition holds.
    pub fn run(&mut self, cap_us: u64, early: EarlyStop) {
        while let Some(head) = self.queue.peek() {
            if head.at > cap_us {
                break;
            }
            let entry = self.queue.pop().expect("peeked");
            debug_assert!(entry.at >= self.now, "time goes forward");
            self.now = entry.at;
            self.dispatch(entry);
            if let EarlyStop::AllHealthyAfter(t) = early {
                if self.now >= t && self.unhealthy_pairs == 0 {
                    break;
                }
            }
        }
        self.counters.undelivered = self
            .queue
            .iter()
            .filter(|e| matches!(e.event, Event::Deliver { .. }))
            .count() as u64;
        self.counters.deferred_unprocessed = self
            .agents
            .iter()
            .map(|a| a.deferred.len() as u64)
            .sum();
    }

    pub fn into_log(self) -> SimEventLog {
        self.log
    }

    fn dispatch(&mut self, entry: Entry) {
        let idx = entry.node as usize;
        match entry.event {
            Event::Start => {
                let outputs = self.agents[idx].node.start(self.now);
                self.handle_outputs(idx, outputs);
            }
            Event::Timer(kind) => {
                // Timers fire on schedule even while suspended; only the
                // node's message I/O is blocked.
                let outputs = self.agents[idx].node.on_timer(kind, self.now);
                self.handle_outputs(idx, outputs);
            }
            Event::Deliver {
                mid,
                from,
                bytes,
                channel,
            } => {
                if self.agents[idx].suspended {
                    self.agents[idx].deferred.push((mid, from, bytes, channel));
                } else {
                    self.process_delivery(idx, mid, from, bytes, channel);
                }
            }
            Event::AnomalyStart => {
                let t = self.now;
                self.log
                    .records
                    .push(EventRecord::AnomalyStart { t, node: entry.node });
                self.agents[idx].suspended = true;
            }
            Event::AnomalyEnd => {
                let t = self.now;
                self.log
                    .records
                    .push(EventRecord::AnomalyEnd { t, node: entry.node });
                self.agents[idx].suspended = false;
                // Blocked sends leave first, in the order they were
                // produced; then the inbound backlog is worked through in
                // arrival order.
                let outbox = std::mem::take(&mut self.agents[idx].outbox);
                for msg in outbox {
                    self.emit_send(entry.node, msg);
                }
                let deferred = std::mem::take(&mut self.agents[idx].deferred);
                for (mid, from, bytes, channel) in deferred {
                    self.process_delivery(idx, mid, from, bytes, channel);
                }
            }
        }
    }

    fn process_delivery(&mut self, idx: usize, mid: u64, from: u16, bytes: Vec<u8>, channel: Channel) {
        let envelope = match codec::decode(&bytes) {
            Ok(env) => env,
            Err(_) => {
                self.counters.decode_errors += 1;
                return;
            }
        };
        let kind = MsgKind::from(&envelope.body);
        self.log.records.push(EventRecord::Recv {
            t: self.now,
            mid,
            node: idx as u16,
            from,
            channel,
            kind,
            bytes: bytes.len() as u32,
        });
        match channel {
            Channel::Unreliable => self.counters.recvs_unreliable += 1,
            Channel::Reliable => self.counters.recvs_reliable += 1,
        }
        let outputs = self.agents[idx].node.on_envelope(envelope, channel, self.now);
        self.handle_outputs(idx, outputs);
    }

    fn handle_outputs(&mut self, idx: usize, outputs: Vec<Output>) {
        for output in outputs {
            match output {
                Output::Send {
                    to,
                    envelope,
                    channel,
                } => {
                    let Some(&to_idx) = self.index.get(&to) else {
                        continue;
                    };
                    let updates = envelope
                        .body
                        .updates()
                        .iter()
                        .map(|u| UpdateNote {
                            kind: u.kind,
                            about: self.intern(&u.about),
                            incarnation: u.incarnation,
                        })
                        .collect();
                    let kind = MsgKind::from(&envelope.body);
                    let bytes = match channel {
                        Channel::Unreliable => codec::encode_datagram(&envelope)
                            .expect("protocol keeps datagrams within the size limit"),
                        Channel::Reliable => {
                            codec::encode(&envelope).expect("encodable envelope")
                        }
                    };
                    let msg = Buffered {
                        to: to_idx,
                        bytes,
                        channel,
                        kind,
                        updates,
                    };
                    if self.agents[idx].suspended {
                        self.agents[idx].outbox.push(msg);
                    } else {
                        self.emit_send(idx as u16, msg);
                    }
                }
                Output::SetTimer { kind, at } => {
                    self.schedule(at.max(self.now), idx as u16, Event::Timer(kind));
                }
                Output::StateChange(sc) => {
                    let subject = self.intern(&sc.member);
                    let healthy_before = sc.old.map_or(true, |s| s == shoal_core::MemberState::Alive);
                    let healthy_after = sc.new == shoal_core::MemberState::Alive;
                    self.unhealthy_pairs += match (healthy_before, healthy_after) {
                        (true, false) => 1,
                        (false, true) => -1,
                        _ => 0,
                    };
                    self.log.records.push(EventRecord::State {
                        t: self.now,
                        node: idx as u16,
                        subject,
                        old: sc.old,
                        new: sc.new,
                        incarnation: sc.incarnation,
                    });
                }
            }
        }
    }

    fn emit_send(&mut self, from: u16, msg: Buffered) {
        self.next_mid += 1;
        let mid = self.next_mid;
        self.log.records.push(EventRecord::Send {
            t: self.now,
            mid,
            from,
            to: msg.to,
            channel: msg.channel,
            kind: msg.kind,
            bytes: msg.bytes.len() as u32,
            updates: msg.updates,
        });
        match msg.channel {
            Channel::Unreliable => self.counters.sends_unreliable += 1,
            Channel::Reliable => self.counters.sends_reliable += 1,
        }
        if msg.channel == Channel::Unreliable && self.loss_probability > 0.0 {
            if self.net_rng.random::<f64>() < self.loss_probability {
                self.log.records.push(EventRecord::Drop {
                    t: self.now,
                    mid,
                    from,
                    to: msg.to,
                    channel: msg.channel,
                    kind: msg.kind,
                    bytes: msg.bytes.len() as u32,
                });
                self.counters.drops += 1;
                return;
            }
        }
        let latency = self
            .net_rng
            .random_range(self.latency_min_us..=self.latency_max_us);
        self.schedule(
            self.now + latency,
            msg.to,
            Event::Deliver {
                mid,
                from,
                bytes: msg.bytes,
                channel: msg.channel,
            },
        );
    }

    fn intern(&mut self, id: &MemberId) -> u16 {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.log.names.len() as u16;
        self.log.names.push(id.as_str().to_string());
        self.index.insert(id.clone(), i);
        i
    }
}
