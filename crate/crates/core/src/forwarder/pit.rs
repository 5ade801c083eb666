use std::collections::HashMap;

use crate::names::{Name, ServiceLevel};

use super::{Face, SimTime};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PitEntry {
    pub name: Name,
    pub level: ServiceLevel,
    pub downstream: Vec<Face>,
    pub created_at: SimTime,
    pub expires_at: SimTime,
    seq: u64,
}

impl PitEntry {
    pub fn new(name: Name, level: ServiceLevel, face: Face, now: SimTime, lifetime: SimTime) -> Self {
        assert!(lifetime > 0, "PIT lifetime must be positive");
        PitEntry {
            name,
            level,
            downstream: vec![face],
            created_at: now,
            expires_at: now + lifetime,
            seq: 0,
        }
    }

    pub fn has_face(&self, face: Face) -> bool {
        self.downstream.contains(&face)
    }

    /// Adds a downstream face; returns false if it was already present.
    pub fn add_face(&mut self, face: Face) -> bool {
        if self.has_face(face) {
            false
        } else {
            self.downstream.push(face);
            true
        }
    }

    fn victim_key(&self) -> (u8, SimTime, u64) {
        (self.level.pit_priority(), self.created_at, self.seq)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PitInsert {
    Inserted,
    InsertedAfterEvicting(Name),
    Dropped,
}

/// Capacity-bounded Pending Interest Table with priority-aware admission.
#[derive(Debug, Clone)]
pub struct PitTable {
    entries: HashMap<Name, PitEntry>,
    capacity: usize,
    next_seq: u64,
}

impl PitTable {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "PIT capacity must be positive");
        PitTable {
            entries: HashMap::new(),
            capacity,
            next_seq: 0,
        }
    }

    pub fn unbounded() -> Self {
        Self::new(usize::MAX)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PitEntry> {
        self.entries.values()
    }

    pub fn purge_expired(&mut self, now: SimTime) {
        self.entries.retain(|_, e| e.expires_at > now);
    }

    /// Live entry for `name`; an expired entry is purged and reported absent.
    pub fn get_mut(&mut self, name: &Name, now: SimTime) -> Option<&mut PitEntry> {
        if self.entries.get(name).is_some_and(|e| e.expires_at <= now) {
            self.entries.remove(name);
        }
        self.entries.get_mut(name)
    }

    pub fn contains(&self, name: &Name, now: SimTime) -> bool {
        self.entries.get(name).is_some_and(|e| e.expires_at > now)
    }

    /// Admits `entry`, evicting the lowest-ranked (then oldest) entry when full
    /// and only if that entry ranks strictly below the newcomer.
    ///
    /// An entry already present under the same name is merged instead.
    pub fn insert(&mut self, mut entry: PitEntry, now: SimTime) -> PitInsert {
        if let Some(existing) = self.get_mut(&entry.name, now) {
            for face in entry.downstream {
                existing.add_face(face);
            }
            existing.expires_at = existing.expires_at.max(entry.expires_at);
            return PitInsert::Inserted;
        }
        if self.entries.len() >= self.capacity {
            self.purge_expired(now);
        }
        entry.seq = self.next_seq;
        self.next_seq += 1;
        if self.entries.len() < self.capacity {
            self.entries.insert(entry.name.clone(), entry);
            return PitInsert::Inserted;
        }
        let victim = self
            .entries
            .values()
            .min_by_key(|e| e.victim_key())
            .map(|e| (e.name.clone(), e.level.pit_priority()))
            .expect("full table is nonempty");
        if victim.1 < entry.level.pit_priority() {
            self.entries.remove(&victim.0);
            self.entries.insert(entry.name.clone(), entry);
            PitInsert::InsertedAfterEvicting(victim.0)
        } else {
            PitInsert::Dropped
        }
    }

    /// Removes the live entry for `name` and returns its downstream faces.
    pub fn lookup_consume(&mut self, name: &Name, now: SimTime) -> Option<Vec<Face>> {
        let entry = self.entries.remove(name)?;
        if entry.expires_at <= now {
            return None;
        }
        Some(entry.downstream)
    }

    pub fn remove(&mut self, name: &Name) -> Option<PitEntry> {
        self.entries.remove(name)
    }
}
