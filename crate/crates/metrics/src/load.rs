use shoal_sim::{EventRecord, SimEventLog};

/// Total message and byte counts of one run. A compound piggybacked
/// message is one message; bytes are the encoded lengths on the wire.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MessageLoad {
    pub messages: u64,
    pub bytes: u64,
}

impl MessageLoad {
    pub fn add(&mut self, other: &MessageLoad) {
        self.messages += other.messages;
        self.bytes += other.bytes;
    }
}

/// Counts every sent envelope once, on both channels.
pub fn message_load(log: &SimEventLog) -> MessageLoad {
    let mut load = MessageLoad::default();
    for rec in &log.records {
        if let EventRecord::Send { bytes, .. } = rec {
            load.messages += 1;
            load.bytes += *bytes as u64;
        }
    }
    load
}
