use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::config::Micros;
use crate::member::{Incarnation, MemberId, MemberRecord, MemberState};

/// Does an update (state, incarnation) override the current record?
///
/// Precedence is lexicographic on (incarnation, state rank) with
/// Dead > Suspect > Alive at equal incarnations, except that alive only
/// wins with a strictly higher incarnation. Spelled out:
///   alive{i}   beats alive{j}/suspect{j}/dead{j}  iff i > j
///   suspect{i} beats alive{j}                     iff i >= j
///   suspect{i} beats suspect{j}                   iff i > j
///   dead{i}    beats alive{j}/suspect{j}          iff i >= j
pub fn update_wins(
    new_state: MemberState,
    new_inc: Incarnation,
    cur_state: MemberState,
    cur_inc: Incarnation,
) -> bool {
    (new_inc, new_state.rank()) > (cur_inc, cur_state.rank())
}

/// Per-node membership table: one record per known member (self included)
/// plus the round-robin probe order over non-dead peers.
#[derive(Debug, Clone)]
pub struct MembershipTable {
    self_id: MemberId,
    records: BTreeMap<MemberId, MemberRecord>,
    probe_order: Vec<MemberId>,
    cursor: usize,
}

impl MembershipTable {
    pub fn new(self_id: MemberId, self_incarnation: Incarnation) -> Self {
        let mut records = BTreeMap::new();
        records.insert(
            self_id.clone(),
            MemberRecord {
                id: self_id.clone(),
                state: MemberState::Alive,
                incarnation: self_incarnation,
                state_change_us: 0,
            },
        );
        MembershipTable {
            self_id,
            records,
            probe_order: Vec::new(),
            cursor: 0,
        }
    }

    pub fn get(&self, id: &MemberId) -> Option<&MemberRecord> {
        self.records.get(id)
    }

    pub fn set_self_incarnation(&mut self, incarnation: Incarnation) {
        let rec = self.records.get_mut(&self.self_id).expect("self record");
        rec.incarnation = incarnation;
    }

    /// All records in id order (deterministic), self included.
    pub fn records(&self) -> impl Iterator<Item = &MemberRecord> {
        self.records.values()
    }

    /// Known members that are not dead, self included.
    pub fn non_dead_count(&self) -> usize {
        self.records
            .values()
            .filter(|r| r.state != MemberState::Dead)
            .count()
    }

    /// Non-dead peers, excluding self and (optionally) one more member.
    pub fn eligible_peers(&self, exclude: Option<&MemberId>) -> Vec<MemberId> {
        self.records
            .values()
            .filter(|r| {
                r.state != MemberState::Dead
                    && r.id != self.self_id
                    && Some(&r.id) != exclude
            })
            .map(|r| r.id.clone())
            .collect()
    }

    /// Inserts a previously unknown member. Non-dead members enter the probe
    /// order at a uniformly random position.
    pub fn insert(
        &mut self,
        id: MemberId,
        state: MemberState,
        incarnation: Incarnation,
        now: Micros,
        rng: &mut impl Rng,
    ) {
        debug_assert!(!self.records.contains_key(&id));
        self.records.insert(
            id.clone(),
            MemberRecord {
                id: id.clone(),
                state,
                incarnation,
                state_change_us: now,
            },
        );
        if state != MemberState::Dead {
            let pos = rng.random_range(0..=self.probe_order.len());
            self.probe_order.insert(pos, id);
            if pos < self.cursor {
                self.cursor += 1;
            }
        }
    }

    /// Overwrites state and incarnation of an existing record, maintaining
    /// the probe order across dead/non-dead transitions.
    pub fn set_state(
        &mut self,
        id: &MemberId,
        state: MemberState,
        incarnation: Incarnation,
        now: Micros,
        rng: &mut impl Rng,
    ) {
        let rec = self.records.get_mut(id).expect("set_state on known member");
        let was_dead = rec.state == MemberState::Dead;
        rec.state = state;
        rec.incarnation = incarnation;
        rec.state_change_us = now;
        let is_dead = state == MemberState::Dead;
        if !was_dead && is_dead {
            if let Some(pos) = self.probe_order.iter().position(|m| m == id) {
                self.probe_order.remove(pos);
                if pos < self.cursor {
                    self.cursor -= 1;
                }
            }
        } else if was_dead && !is_dead && *id != self.self_id {
            let pos = rng.random_range(0..=self.probe_order.len());
            self.probe_order.insert(pos, id.clone());
            if pos < self.cursor {
                self.cursor += 1;
            }
        }
    }

    /// Next round-robin probe target. Each traversal visits every live peer
    /// exactly once; completing a traversal reshuffles the order.
    pub fn next_probe_target(&mut self, rng: &mut impl Rng) -> Option<MemberId> {
        if self.probe_order.is_empty() {
            return None;
        }
        if self.cursor >= self.probe_order.len() {
            self.probe_order.shuffle(rng);
            self.cursor = 0;
        }
        let target = self.probe_order[self.cursor].clone();
        self.cursor += 1;
        Some(target)
    }

    /// Drops dead records older than the retention window.
    pub fn purge_expired_dead(&mut self, now: Micros, retention_us: u64) {
        self.records.retain(|_, r| {
            r.state != MemberState::Dead || now.saturating_sub(r.state_change_us) < retention_us
        });
    }

    #[cfg(test)]
    pub fn probe_order(&self) -> &[MemberId] {
        &self.probe_order
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table_with(peers: &[&str]) -> (MembershipTable, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut t = MembershipTable::new(MemberId::new("self"), 0);
        for p in peers {
            t.insert(MemberId::new(*p), MemberState::Alive, 0, 0, &mut rng);
        }
        (t, rng)
    }

    #[test]
    fn precedence_rules() {
        use MemberState::*;
        // alive needs strictly higher incarnation
        assert!(!update_wins(Alive, 5, Alive, 5));
        assert!(update_wins(Alive, 6, Suspect, 5));
        assert!(update_wins(Alive, 6, Dead, 5));
        assert!(!update_wins(Alive, 5, Suspect, 5));
        // suspect beats alive at the same incarnation
        assert!(update_wins(Suspect, 5, Alive, 5));
        assert!(!update_wins(Suspect, 5, Suspect, 5));
        assert!(update_wins(Suspect, 6, Suspect, 5));
        assert!(!update_wins(Suspect, 5, Dead, 5));
        // dead beats both at the same incarnation
        assert!(update_wins(Dead, 5, Alive, 5));
        assert!(update_wins(Dead, 5, Suspect, 5));
    }

    #[test]
    fn round_robin_visits_everyone_once_per_traversal() {
        let (mut t, mut rng) = table_with(&["a", "b", "c", "d"]);
        for _ in 0..3 {
            let mut seen: Vec<MemberId> = (0..4)
                .map(|_| t.next_probe_target(&mut rng).unwrap())
                .collect();
            seen.sort();
            seen.dedup();
            assert_eq!(seen.len(), 4);
        }
    }

    #[test]
    fn new_member_lands_at_random_position_once() {
        let (mut t, mut rng) = table_with(&["a", "b", "c"]);
        t.next_probe_target(&mut rng);
        t.insert(MemberId::new("d"), MemberState::Alive, 0, 0, &mut rng);
        assert_eq!(t.probe_order().len(), 4);
        assert_eq!(
            t.probe_order()
                .iter()
                .filter(|m| m.as_str() == "d")
                .count(),
            1
        );
    }

    #[test]
    fn dead_members_leave_probe_order() {
        let (mut t, mut rng) = table_with(&["a", "b", "c"]);
        t.set_state(&MemberId::new("b"), MemberState::Dead, 1, 10, &mut rng);
        assert_eq!(t.probe_order().len(), 2);
        for _ in 0..6 {
            assert_ne!(t.next_probe_target(&mut rng).unwrap().as_str(), "b");
        }
        assert_eq!(t.non_dead_count(), 3); // self + a + c
    }

    #[test]
    fn dead_records_retained_then_purged() {
        let (mut t, mut rng) = table_with(&["a", "b"]);
        t.set_state(&MemberId::new("a"), MemberState::Dead, 1, 1_000_000, &mut rng);
        t.purge_expired_dead(2_000_000, 5_000_000);
        assert!(t.get(&MemberId::new("a")).is_some());
        t.purge_expired_dead(7_000_000, 5_000_000);
        assert!(t.get(&MemberId::new("a")).is_none());
    }

    #[test]
    fn eligible_peers_excludes_self_target_and_dead() {
        let (mut t, mut rng) = table_with(&["a", "b", "c"]);
        t.set_state(&MemberId::new("c"), MemberState::Dead, 1, 0, &mut rng);
        let peers = t.eligible_peers(Some(&MemberId::new("a")));
        assert_eq!(peers, vec![MemberId::new("b")]);
    }
}
