use crate::member::{Incarnation, MemberId, MemberState};

/// A membership update as it travels on the wire, piggybacked on failure
/// detector messages or carried by dedicated gossip messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GossipUpdate {
    pub kind: MemberState,
    pub about: MemberId,
    pub incarnation: Incarnation,
    /// Accuser identity; meaningful for suspect updates, where distinct
    /// origins count as independent suspicions.
    pub origin: MemberId,
}

#[derive(Debug, Clone)]
struct QueuedUpdate {
    update: GossipUpdate,
    transmits: u32,
    budget: u32,
}

/// Outgoing gossip queue: at most one update per subject member, each with
/// a retransmission budget. Selection prefers updates shared fewer times.
#[derive(Debug, Clone, Default)]
pub struct GossipQueue {
    entries: Vec<QueuedUpdate>,
}

/// One update chosen for a message, plus whether it was the buddy-forced
/// suspicion (which does not consume budget).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selected {
    pub update: GossipUpdate,
    pub forced: bool,
}

impl GossipQueue {
    pub fn new() -> Self {
        GossipQueue::default()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Enqueues an update with a fresh budget, replacing any queued update
    /// about the same member: newer knowledge invalidates older gossip.
    pub fn enqueue(&mut self, update: GossipUpdate, budget: u32) {
        self.entries.retain(|e| e.update.about != update.about);
        self.entries.push(QueuedUpdate {
            update,
            transmits: 0,
            budget,
        });
    }

    pub fn get(&self, about: &MemberId) -> Option<&GossipUpdate> {
        self.entries
            .iter()
            .find(|e| &e.update.about == about)
            .map(|e| &e.update)
    }

    /// Selects updates for one outgoing message, sized with `fits` (which
    /// sees the running tally of already-selected updates and must say
    /// whether one more of the given update still fits the byte budget).
    ///
    /// When `force_first` is set (buddy rule: a ping toward a locally
    /// suspected member), that suspicion leads the message and its budget is
    /// left untouched — the guarantee must survive budget exhaustion.
    /// Everything else pays: lowest transmit count first, ties broken by
    /// subject id, and entries that hit their budget are dropped.
    pub fn select(
        &mut self,
        force_first: Option<GossipUpdate>,
        mut fits: impl FnMut(&[Selected], &GossipUpdate) -> bool,
    ) -> Vec<Selected> {
        let mut out = Vec::new();
        if let Some(update) = force_first {
            if fits(&out, &update) {
                out.push(Selected {
                    update,
                    forced: true,
                });
            }
        }

        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        order.sort_by(|&a, &b| {
            let ea = &self.entries[a];
            let eb = &self.entries[b];
            ea.transmits
                .cmp(&eb.transmits)
                .then_with(|| ea.update.about.cmp(&eb.update.about))
        });

        let mut spent: Vec<usize> = Vec::new();
        for idx in order {
            let entry = &self.entries[idx];
            if out.iter().any(|s| s.update.about == entry.update.about) {
                continue;
            }
            if !fits(&out, &entry.update) {
                continue;
            }
            out.push(Selected {
                update: entry.update.clone(),
                forced: false,
            });
            spent.push(idx);
        }

        for &idx in &spent {
            self.entries[idx].transmits += 1;
        }
        self.entries.retain(|e| e.transmits < e.budget);
        out
    }

    #[cfg(test)]
    fn transmits(&self, about: &MemberId) -> Option<u32> {
        self.entries
            .iter()
            .find(|e| &e.update.about == about)
            .map(|e| e.transmits)
    }
}
