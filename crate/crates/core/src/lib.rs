//! Group membership with gossip-based dissemination and an adaptive,
//! local-health-aware failure detector (SWIM with the Lifeguard
//! extensions).
//!
//! The protocol lives in [`node::Node`], a deterministic state machine
//! driven entirely by injected events; [`codec`] defines the wire format
//! shared by the real transport and the simulator.

pub mod codec;
pub mod config;
pub mod gossip;
pub mod health;
pub mod member;
pub mod node;
pub mod suspicion;
pub mod table;

pub use codec::{Body, Channel, Envelope, SnapshotEntry, MAX_DATAGRAM};
pub use config::{Micros, Preset, ProtocolConfig, MS};
pub use gossip::GossipUpdate;
pub use member::{Incarnation, MemberId, MemberRecord, MemberState};
pub use node::{Node, Output, StateChange, TimerKind};
