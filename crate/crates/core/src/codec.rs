//! Wire format for protocol envelopes.
//!
//! Layout (all integers little-endian, strings length-prefixed):
//!
//! ```text
//! u8   version (currently 1)
//! u8   kind    (0 ping, 1 ping-req, 2 ack, 3 nack, 4 gossip, 5 push-pull)
//! u64  sequence number
//! str  sender            (u16 length + UTF-8 bytes)
//! -- ping-req only --
//! str  target
//! -- ping / ping-req / ack / nack / gossip --
//! u16  update count, then per update:
//!      u8 kind (0 alive, 1 suspect, 2 dead), str about, u64 incarnation,
//!      str origin
//! -- push-pull only --
//! u8   reply flag (0 request, 1 response)
//! u32  entry count, then per entry:
//!      u8 state, str member, u64 incarnation
//! ```
//!
//! A compound (piggybacked) message is a single envelope and counts as one
//! message for load accounting; byte counters use exactly the encoded
//! length.

use thiserror::Error;

use crate::gossip::GossipUpdate;
use crate::member::{Incarnation, MemberId, MemberState};

pub const WIRE_VERSION: u8 = 1;

/// Largest envelope accepted on the unreliable channel: a safe payload for
/// an Ethernet-MTU sized datagram.
pub const MAX_DATAGRAM: usize = 1_400;

/// Delivery channel for an envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    /// Best-effort datagram; may be lost or reordered, never duplicated.
    Unreliable,
    /// Ordered, lossless request/response stream.
    Reliable,
}

impl Channel {
    pub fn letter(self) -> &'static str {
        match self {
            Channel::Unreliable => "u",
            Channel::Reliable => "r",
        }
    }
}

/// Entry of a full-state snapshot exchanged by push-pull anti-entropy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnapshotEntry {
    pub member: MemberId,
    pub state: MemberState,
    pub incarnation: Incarnation,
}

/// Message-kind specific contents of an envelope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Body {
    Ping { updates: Vec<GossipUpdate> },
    PingReq { target: MemberId, updates: Vec<GossipUpdate> },
    Ack { updates: Vec<GossipUpdate> },
    Nack { updates: Vec<GossipUpdate> },
    Gossip { updates: Vec<GossipUpdate> },
    PushPull { reply: bool, entries: Vec<SnapshotEntry> },
}

/// One protocol message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub sender: MemberId,
    pub seq: u64,
    pub body: Body,
}

impl Body {
    pub fn kind_byte(&self) -> u8 {
        match self {
            Body::Ping { .. } => 0,
            Body::PingReq { .. } => 1,
            Body::Ack { .. } => 2,
            Body::Nack { .. } => 3,
            Body::Gossip { .. } => 4,
            Body::PushPull { .. } => 5,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Body::Ping { .. } => "ping",
            Body::PingReq { .. } => "ping-req",
            Body::Ack { .. } => "ack",
            Body::Nack { .. } => "nack",
            Body::Gossip { .. } => "gossip",
            Body::PushPull { .. } => "push-pull",
        }
    }

    pub fn updates(&self) -> &[GossipUpdate] {
        match self {
            Body::Ping { updates }
            | Body::PingReq { updates, .. }
            | Body::Ack { updates }
            | Body::Nack { updates }
            | Body::Gossip { updates } => updates,
            Body::PushPull { .. } => &[],
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EncodeError {
    #[error("envelope of {len} bytes exceeds the {max}-byte datagram limit")]
    Oversize { len: usize, max: usize },
    #[error("string field of {0} bytes exceeds the u16 length prefix")]
    StringTooLong(usize),
}

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("message truncated")]
    Truncated,
    #[error("unsupported wire version {0}")]
    Version(u8),
    #[error("unknown message kind {0}")]
    Kind(u8),
    #[error("unknown member state {0}")]
    State(u8),
    #[error("invalid UTF-8 in identifier")]
    Utf8,
    #[error("{0} trailing bytes after envelope")]
    TrailingBytes(usize),
}

fn put_str(buf: &mut Vec<u8>, s: &str) -> Result<(), EncodeError> {
    let bytes = s.as_bytes();
    if bytes.len() > u16::MAX as usize {
        return Err(EncodeError::StringTooLong(bytes.len()));
    }
    buf.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
    buf.extend_from_slice(bytes);
    Ok(())
}

fn put_update(buf: &mut Vec<u8>, u: &GossipUpdate) -> Result<(), EncodeError> {
    buf.push(u.kind.rank());
    put_str(buf, u.about.as_str())?;
    buf.extend_from_slice(&u.incarnation.to_le_bytes());
    put_str(buf, u.origin.as_str())
}

/// Encodes an envelope without any size limit (reliable channel).
pub fn encode(envelope: &Envelope) -> Result<Vec<u8>, EncodeError> {
    let mut buf = Vec::with_capacity(64);
    buf.push(WIRE_VERSION);
    buf.push(envelope.body.kind_byte());
    buf.extend_from_slice(&envelope.seq.to_le_bytes());
    put_str(&mut buf, envelope.sender.as_str())?;
    match &envelope.body {
        Body::PingReq { target, updates } => {
            put_str(&mut buf, target.as_str())?;
            buf.extend_from_slice(&(updates.len() as u16).to_le_bytes());
            for u in updates {
                put_update(&mut buf, u)?;
            }
        }
        Body::Ping { updates }
        | Body::Ack { updates }
        | Body::Nack { updates }
        | Body::Gossip { updates } => {
            buf.extend_from_slice(&(updates.len() as u16).to_le_bytes());
            for u in updates {
                put_update(&mut buf, u)?;
            }
        }
        Body::PushPull { reply, entries } => {
            buf.push(u8::from(*reply));
            buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
            for e in entries {
                buf.push(e.state.rank());
                put_str(&mut buf, e.member.as_str())?;
                buf.extend_from_slice(&e.incarnation.to_le_bytes());
            }
        }
    }
    Ok(buf)
}

/// Encodes for the unreliable channel, refusing envelopes that do not fit
/// a datagram; the caller must shrink the piggyback instead.
pub fn encode_datagram(envelope: &Envelope) -> Result<Vec<u8>, EncodeError> {
    let buf = encode(envelope)?;
    if buf.len() > MAX_DATAGRAM {
        return Err(EncodeError::Oversize {
            len: buf.len(),
            max: MAX_DATAGRAM,
        });
    }
    Ok(buf)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.pos + n > self.buf.len() {
            return Err(DecodeError::Truncated);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn str(&mut self) -> Result<MemberId, DecodeError> {
        let len = self.u16()? as usize;
        let bytes = self.take(len)?;
        let s = std::str::from_utf8(bytes).map_err(|_| DecodeError::Utf8)?;
        Ok(MemberId::new(s))
    }

    fn state(&mut self) -> Result<MemberState, DecodeError> {
        match self.u8()? {
            0 => Ok(MemberState::Alive),
            1 => Ok(MemberState::Suspect),
            2 => Ok(MemberState::Dead),
            other => Err(DecodeError::State(other)),
        }
    }

    fn updates(&mut self) -> Result<Vec<GossipUpdate>, DecodeError> {
        let count = self.u16()? as usize;
        let mut updates = Vec::with_capacity(count.min(256));
        for _ in 0..count {
            let kind = self.state()?;
            let about = self.str()?;
            let incarnation = self.u64()?;
            let origin = self.str()?;
            updates.push(GossipUpdate {
                kind,
                about,
                incarnation,
                origin,
            });
        }
        Ok(updates)
    }
}

pub fn decode(bytes: &[u8]) -> Result<Envelope, DecodeError> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    let version = c.u8()?;
    if version != WIRE_VERSION {
        return Err(DecodeError::Version(version));
    }
    let kind = c.u8()?;
    let seq = c.u64()?;
    let sender = c.str()?;
    let body = match kind {
        0 => Body::Ping { updates: c.updates()? },
        1 => {
            let target = c.str()?;
            Body::PingReq {
                target,
                updates: c.updates()?,
            }
        }
        2 => Body::Ack { updates: c.updates()? },
        3 => Body::Nack { updates: c.updates()? },
        4 => Body::Gossip { updates: c.updates()? },
        5 => {
            let reply = c.u8()? != 0;
            let count = c.u32()? as usize;
            let mut entries = Vec::with_capacity(count.min(4096));
            for _ in 0..count {
                let state = c.state()?;
                let member = c.str()?;
                let incarnation = c.u64()?;
                entries.push(SnapshotEntry {
                    member,
                    state,
                    incarnation,
                });
            }
            Body::PushPull { reply, entries }
        }
        other => return Err(DecodeError::Kind(other)),
    };
    if c.pos != bytes.len() {
        return Err(DecodeError::TrailingBytes(bytes.len() - c.pos));
    }
    Ok(Envelope { sender, seq, body })
}

/// Encoded size of the fixed part of an envelope, before any updates.
pub fn header_len(sender: &MemberId, target: Option<&MemberId>) -> usize {
    // version + kind + seq + sender prefix (+ target, + update count u16).
    let mut len = 1 + 1 + 8 + 2 + sender.as_str().len() + 2;
    if let Some(t) = target {
        len += 2 + t.as_str().len();
    }
    len
}

/// Encoded size of one piggybacked update.
pub fn update_len(update: &GossipUpdate) -> usize {
    1 + 2 + update.about.as_str().len() + 8 + 2 + update.origin.as_str().len()
}

/// Largest number of fixed-size updates that fit in `byte_budget` after the
/// header. Piggyback selection uses exact per-update sizes on top of this.
pub fn max_updates_fitting(header: usize, update_size: usize, byte_budget: usize) -> usize {
    if byte_budget < header || update_size == 0 {
        return 0;
    }
    (byte_budget - header) / update_size
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ids(rng: &mut ChaCha8Rng) -> MemberId {
        let len = rng.random_range(1..=24);
        let s: String = (0..len)
            .map(|_| char::from(rng.random_range(b'a'..=b'z')))
            .collect();
        MemberId::new(s)
    }

    fn random_update(rng: &mut ChaCha8Rng) -> GossipUpdate {
        let kind = match rng.random_range(0..3) {
            0 => MemberState::Alive,
            1 => MemberState::Suspect,
            _ => MemberState::Dead,
        };
        GossipUpdate {
            kind,
            about: ids(rng),
            incarnation: rng.random(),
            origin: ids(rng),
        }
    }

    fn random_envelope(rng: &mut ChaCha8Rng) -> Envelope {
        let updates: Vec<GossipUpdate> = (0..rng.random_range(0..8))
            .map(|_| random_update(rng))
            .collect();
        let body = match rng.random_range(0..6) {
            0 => Body::Ping { updates },
            1 => Body::PingReq {
                target: ids(rng),
                updates,
            },
            2 => Body::Ack { updates },
            3 => Body::Nack { updates },
            4 => Body::Gossip { updates },
            _ => Body::PushPull {
                reply: rng.random(),
                entries: (0..rng.random_range(0..40))
                    .map(|_| SnapshotEntry {
                        member: ids(rng),
                        state: if rng.random() {
                            MemberState::Alive
                        } else {
                            MemberState::Dead
                        },
                        incarnation: rng.random(),
                    })
                    .collect(),
            },
        };
        Envelope {
            sender: ids(rng),
            seq: rng.random(),
            body,
        }
    }

    #[test]
    fn empty_ping_round_trips() {
        let e = Envelope {
            sender: MemberId::new("n1"),
            seq: 42,
            body: Body::Ping { updates: vec![] },
        };
        let bytes = encode(&e).unwrap();
        assert_eq!(decode(&bytes).unwrap(), e);
        assert_eq!(bytes.len(), header_len(&e.sender, None));
    }

    #[test]
    fn updates_keep_order() {
        let updates: Vec<GossipUpdate> = (0..3)
            .map(|i| GossipUpdate {
                kind: MemberState::Suspect,
                about: MemberId::new(format!("m{i}")),
                incarnation: i,
                origin: MemberId::new("o"),
            })
            .collect();
        let e = Envelope {
            sender: MemberId::new("n1"),
            seq: 7,
            body: Body::Ack {
                updates: updates.clone(),
            },
        };
        let decoded = decode(&encode(&e).unwrap()).unwrap();
        assert_eq!(decoded.body.updates(), &updates[..]);
    }

    #[test]
    fn ten_thousand_random_envelopes_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5ea1);
        for _ in 0..10_000 {
            let e = random_envelope(&mut rng);
            let bytes = encode(&e).unwrap();
            assert_eq!(decode(&bytes).unwrap(), e);
        }
    }

    #[test]
    fn encoded_size_monotone_in_update_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let update = random_update(&mut rng);
        let mut last = 0;
        for n in 0..20 {
            let e = Envelope {
                sender: MemberId::new("n"),
                seq: 0,
                body: Body::Gossip {
                    updates: vec![update.clone(); n],
                },
            };
            let len = encode(&e).unwrap().len();
            assert!(len > last || n == 0);
            last = len;
        }
    }

    #[test]
    fn datagram_limit_enforced() {
        let updates = vec![
            GossipUpdate {
                kind: MemberState::Alive,
                about: MemberId::new("m".repeat(100)),
                incarnation: 1,
                origin: MemberId::new("o".repeat(100)),
            };
            10
        ];
        let e = Envelope {
            sender: MemberId::new("n"),
            seq: 0,
            body: Body::Gossip { updates },
        };
        assert!(matches!(
            encode_datagram(&e),
            Err(EncodeError::Oversize { .. })
        ));
        assert!(encode(&e).is_ok());
    }

    #[test]
    fn max_updates_fitting_matches_measurement() {
        let sender = MemberId::new("node-007");
        let update = GossipUpdate {
            kind: MemberState::Suspect,
            about: MemberId::new("node-123"),
            incarnation: 5,
            origin: MemberId::new("node-042"),
        };
        let header = header_len(&sender, None);
        let per = update_len(&update);
        assert_eq!(max_updates_fitting(header, per, header), 0);
        assert_eq!(max_updates_fitting(header, per, header + per * 5 / 2), 2);

        let n = max_updates_fitting(header, per, MAX_DATAGRAM);
        let e = Envelope {
            sender: sender.clone(),
            seq: 0,
            body: Body::Ping {
                updates: vec![update.clone(); n],
            },
        };
        let len = encode(&e).unwrap().len();
        assert!(len <= MAX_DATAGRAM);
        // One more would overflow.
        let e_plus = Envelope {
            sender,
            seq: 0,
            body: Body::Ping {
                updates: vec![update; n + 1],
            },
        };
        assert!(encode(&e_plus).unwrap().len() > MAX_DATAGRAM);
    }

    #[test]
    fn decode_rejects_garbage() {
        assert_eq!(decode(&[]), Err(DecodeError::Truncated));
        assert_eq!(decode(&[9, 0]), Err(DecodeError::Version(9)));
        let mut bytes = encode(&Envelope {
            sender: MemberId::new("n"),
            seq: 1,
            body: Body::Ping { updates: vec![] },
        })
        .unwrap();
        bytes[1] = 77;
        assert_eq!(decode(&bytes), Err(DecodeError::Kind(77)));
        let mut bytes = encode(&Envelope {
            sender: MemberId::new("n"),
            seq: 1,
            body: Body::Ping { updates: vec![] },
        })
        .unwrap();
        bytes.push(0);
        assert_eq!(decode(&bytes), Err(DecodeError::TrailingBytes(1)));
    }
}
