//! Event log produced by simulation runs.
//!
//! Newline-delimited text with a stable field order, one record per line;
//! node names must not contain whitespace, `:` or `,`. Timestamps are
//! virtual microseconds. Two runs of the same plan and seed produce
//! byte-identical logs.
//!
//! ```text
//! send <t> <mid> <from> <to> <u|r> <kind> <bytes> <updates|->
//! recv <t> <mid> <node> <from> <u|r> <kind> <bytes>
//! drop <t> <mid> <from> <to> <u|r> <kind> <bytes>
//! state <t> <node> <subject> <old|-> <new> <incarnation>
//! astart <t> <node>
//! aend <t> <node>
//! ```
//!
//! `mid` is a per-run message id pairing each receive or drop with its
//! send.
//!
//! `updates` lists the piggybacked membership updates of a sent message as
//! comma-separated `<a|s|d>:<about>:<incarnation>` triples.

use std::fmt::Write as _;

use shoal_core::{Body, Channel, MemberState};
use thiserror::Error;

/// Message kind tag in log records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsgKind {
    Ping,
    PingReq,
    Ack,
    Nack,
    Gossip,
    PushPull,
}

impl MsgKind {
    pub fn name(self) -> &'static str {
        match self {
            MsgKind::Ping => "ping",
            MsgKind::PingReq => "ping-req",
            MsgKind::Ack => "ack",
            MsgKind::Nack => "nack",
            MsgKind::Gossip => "gossip",
            MsgKind::PushPull => "push-pull",
        }
    }

    fn parse(s: &str) -> Option<MsgKind> {
        Some(match s {
            "ping" => MsgKind::Ping,
            "ping-req" => MsgKind::PingReq,
            "ack" => MsgKind::Ack,
            "nack" => MsgKind::Nack,
            "gossip" => MsgKind::Gossip,
            "push-pull" => MsgKind::PushPull,
            _ => return None,
        })
    }
}

impl From<&Body> for MsgKind {
    fn from(body: &Body) -> Self {
        match body {
            Body::Ping { .. } => MsgKind::Ping,
            Body::PingReq { .. } => MsgKind::PingReq,
            Body::Ack { .. } => MsgKind::Ack,
            Body::Nack { .. } => MsgKind::Nack,
            Body::Gossip { .. } => MsgKind::Gossip,
            Body::PushPull { .. } => MsgKind::PushPull,
        }
    }
}

/// One piggybacked update, as visible in a send record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateNote {
    pub kind: MemberState,
    pub about: u16,
    pub incarnation: u64,
}

/// One log record. Nodes are indices into [`SimEventLog::names`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventRecord {
    Send {
        t: u64,
        mid: u64,
        from: u16,
        to: u16,
        channel: Channel,
        kind: MsgKind,
        bytes: u32,
        updates: Vec<UpdateNote>,
    },
    Recv {
        t: u64,
        mid: u64,
        node: u16,
        from: u16,
        channel: Channel,
        kind: MsgKind,
        bytes: u32,
    },
    Drop {
        t: u64,
        mid: u64,
        from: u16,
        to: u16,
        channel: Channel,
        kind: MsgKind,
        bytes: u32,
    },
    State {
        t: u64,
        node: u16,
        subject: u16,
        old: Option<MemberState>,
        new: MemberState,
        incarnation: u64,
    },
    AnomalyStart {
        t: u64,
        node: u16,
    },
    AnomalyEnd {
        t: u64,
        node: u16,
    },
}

impl EventRecord {
    pub fn time(&self) -> u64 {
        match self {
            EventRecord::Send { t, .. }
            | EventRecord::Recv { t, .. }
            | EventRecord::Drop { t, .. }
            | EventRecord::State { t, .. }
            | EventRecord::AnomalyStart { t, .. }
            | EventRecord::AnomalyEnd { t, .. } => *t,
        }
    }
}

/// Full record of one run: node name table plus time-ordered records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimEventLog {
    pub names: Vec<String>,
    pub records: Vec<EventRecord>,
}

#[derive(Debug, Error, PartialEq)]
pub enum LogParseError {
    #[error("line {0}: malformed record")]
    Malformed(usize),
    #[error("line {0}: unknown record type {1:?}")]
    UnknownType(usize, String),
}

fn state_letter(s: MemberState) -> &'static str {
    match s {
        MemberState::Alive => "a",
        MemberState::Suspect => "s",
        MemberState::Dead => "d",
    }
}

fn parse_state(s: &str) -> Option<MemberState> {
    Some(match s {
        "a" | "alive" => MemberState::Alive,
        "s" | "suspect" => MemberState::Suspect,
        "d" | "dead" => MemberState::Dead,
        _ => return None,
    })
}

impl SimEventLog {
    pub fn name(&self, idx: u16) -> &str {
        &self.names[idx as usize]
    }

    pub fn index_of(&self, name: &str) -> Option<u16> {
        self.names.iter().position(|n| n == name).map(|i| i as u16)
    }

    /// Serializes the whole log; the output is stable and byte-exact for a
    /// given log.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 48);
        for rec in &self.records {
            self.write_record(&mut out, rec);
            out.push('\n');
        }
        out
    }

    fn write_record(&self, out: &mut String, rec: &EventRecord) {
        match rec {
            EventRecord::Send {
                t,
                mid,
                from,
                to,
                channel,
                kind,
                bytes,
                updates,
            } => {
                write!(
                    out,
                    "send {t} {mid} {} {} {} {} {bytes} ",
                    self.name(*from),
                    self.name(*to),
                    channel.letter(),
                    kind.name()
                )
                .unwrap();
                if updates.is_empty() {
                    out.push('-');
                } else {
                    for (i, u) in updates.iter().enumerate() {
                        if i > 0 {
                            out.push(',');
                        }
                        write!(
                            out,
                            "{}:{}:{}",
                            state_letter(u.kind),
                            self.name(u.about),
                            u.incarnation
                        )
                        .unwrap();
                    }
                }
            }
            EventRecord::Recv {
                t,
                mid,
                node,
                from,
                channel,
                kind,
                bytes,
            } => {
                write!(
                    out,
                    "recv {t} {mid} {} {} {} {} {bytes}",
                    self.name(*node),
                    self.name(*from),
                    channel.letter(),
                    kind.name()
                )
                .unwrap();
            }
            EventRecord::Drop {
                t,
                mid,
                from,
                to,
                channel,
                kind,
                bytes,
            } => {
                write!(
                    out,
                    "drop {t} {mid} {} {} {} {} {bytes}",
                    self.name(*from),
                    self.name(*to),
                    channel.letter(),
                    kind.name()
                )
                .unwrap();
            }
            EventRecord::State {
                t,
                node,
                subject,
                old,
                new,
                incarnation,
            } => {
                write!(
                    out,
                    "state {t} {} {} {} {} {incarnation}",
                    self.name(*node),
                    self.name(*subject),
                    old.map(state_letter).unwrap_or("-"),
                    state_letter(*new)
                )
                .unwrap();
            }
            EventRecord::AnomalyStart { t, node } => {
                write!(out, "astart {t} {}", self.name(*node)).unwrap();
            }
            EventRecord::AnomalyEnd { t, node } => {
                write!(out, "aend {t} {}", self.name(*node)).unwrap();
            }
        }
    }

    /// Parses a log previously produced by [`to_text`].
    pub fn parse(text: &str) -> Result<SimEventLog, LogParseError> {
        let mut log = SimEventLog::default();
        let mut lookup = std::collections::HashMap::new();
        let mut intern = |log: &mut SimEventLog,
                          lookup: &mut std::collections::HashMap<String, u16>,
                          name: &str| {
            if let Some(&i) = lookup.get(name) {
                return i;
            }
            let i = log.names.len() as u16;
            log.names.push(name.to_string());
            lookup.insert(name.to_string(), i);
            i
        };

        for (lineno, line) in text.lines().enumerate() {
            let lineno = lineno + 1;
            if line.is_empty() {
                continue;
            }
            let mut f = line.split(' ');
            let malformed = || LogParseError::Malformed(lineno);
            let tag = f.next().ok_or_else(malformed)?;
            let mut next = || f.next().ok_or(LogParseError::Malformed(lineno));
            let rec = match tag {
                "send" | "recv" | "drop" => {
                    let t: u64 = next()?.parse().map_err(|_| malformed())?;
                    let mid: u64 = next()?.parse().map_err(|_| malformed())?;
                    let a = intern(&mut log, &mut lookup, next()?);
                    let b = intern(&mut log, &mut lookup, next()?);
                    let channel = match next()? {
                        "u" => Channel::Unreliable,
                        "r" => Channel::Reliable,
                        _ => return Err(malformed()),
                    };
                    let kind = MsgKind::parse(next()?).ok_or_else(malformed)?;
                    let bytes: u32 = next()?.parse().map_err(|_| malformed())?;
                    match tag {
                        "send" => {
                            let field = next()?;
                            let mut updates = Vec::new();
                            if field != "-" {
                                for part in field.split(',') {
                                    let mut bits = part.split(':');
                                    let kind = bits
                                        .next()
                                        .and_then(parse_state)
                                        .ok_or_else(malformed)?;
                                    let about = bits.next().ok_or_else(malformed)?;
                                    let about = intern(&mut log, &mut lookup, about);
                                    let incarnation: u64 = bits
                                        .next()
                                        .ok_or_else(malformed)?
                                        .parse()
                                        .map_err(|_| malformed())?;
                                    updates.push(UpdateNote {
                                        kind,
                                        about,
                                        incarnation,
                                    });
                                }
                            }
                            EventRecord::Send {
                                t,
                                mid,
                                from: a,
                                to: b,
                                channel,
                                kind,
                                bytes,
                                updates,
                            }
                        }
                        "recv" => EventRecord::Recv {
                            t,
                            mid,
                            node: a,
                            from: b,
                            channel,
                            kind,
                            bytes,
                        },
                        _ => EventRecord::Drop {
                            t,
                            mid,
                            from: a,
                            to: b,
                            channel,
                            kind,
                            bytes,
                        },
                    }
                }
                "state" => {
                    let t: u64 = next()?.parse().map_err(|_| malformed())?;
                    let node = intern(&mut log, &mut lookup, next()?);
                    let subject = intern(&mut log, &mut lookup, next()?);
                    let old = match next()? {
                        "-" => None,
                        s => Some(parse_state(s).ok_or_else(malformed)?),
                    };
                    let new = parse_state(next()?).ok_or_else(malformed)?;
                    let incarnation: u64 = next()?.parse().map_err(|_| malformed())?;
                    EventRecord::State {
                        t,
                        node,
                        subject,
                        old,
                        new,
                        incarnation,
                    }
                }
                "astart" | "aend" => {
                    let t: u64 = next()?.parse().map_err(|_| malformed())?;
                    let node = intern(&mut log, &mut lookup, next()?);
                    if tag == "astart" {
                        EventRecord::AnomalyStart { t, node }
                    } else {
                        EventRecord::AnomalyEnd { t, node }
                    }
                }
                other => return Err(LogParseError::UnknownType(lineno, other.to_string())),
            };
            log.records.push(rec);
        }
        Ok(log)
    }
}
