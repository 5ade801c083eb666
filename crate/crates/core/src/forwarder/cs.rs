use std::collections::HashMap;

use rand::Rng;

use crate::names::{Name, ServiceLevel};

use super::{Data, SimTime};

/// Caching decision strategy applied before replacement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CacheDecision {
    Always,
    Probabilistic { p_reg: f64, p_rel: f64 },
}

impl CacheDecision {
    pub fn probabilistic(p_reg: f64, p_rel: f64) -> Self {
        assert!(
            (0.0..=1.0).contains(&p_reg) && (0.0..=1.0).contains(&p_rel) && p_reg <= p_rel,
            "need 0 <= p_reg <= p_rel <= 1"
        );
        CacheDecision::Probabilistic { p_reg, p_rel }
    }

    /// Whether incoming Data of `level` should be offered to the store.
    ///
    /// Data without a PIT entry is only considered for prompt or reliable
    /// content. Probabilistic decisions draw exactly once.
    pub fn decide<R: Rng + ?Sized>(&self, level: ServiceLevel, has_pit: bool, rng: &mut R) -> bool {
        if !has_pit && !level.is_prioritized() {
            return false;
        }
        match *self {
            CacheDecision::Always => true,
            CacheDecision::Probabilistic { p_reg, p_rel } => {
                let p = if level.is_reliable() { p_rel } else { p_reg };
                rng.random::<f64>() < p
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            CacheDecision::Always => "always",
            CacheDecision::Probabilistic { .. } => "prob",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsEntry {
    pub name: Name,
    pub data: Data,
    pub level: ServiceLevel,
    /// Replacement rank, normally `level.cs_priority()`.
    pub rank: u8,
    pub last_used: SimTime,
    pub pitless: bool,
    touch: u64,
}

impl CsEntry {
    pub fn new(data: Data, level: ServiceLevel, now: SimTime, pitless: bool) -> Self {
        CsEntry {
            name: data.name.clone(),
            data,
            level,
            rank: level.cs_priority(),
            last_used: now,
            pitless,
            touch: 0,
        }
    }

    pub fn with_rank(mut self, rank: u8) -> Self {
        self.rank = rank;
        self
    }

    // lowest rank first, PIT-less before regular peers, then least recently used
    fn victim_key(&self) -> (u8, bool, u64) {
        (self.rank, !self.pitless, self.touch)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CsInsert {
    Stored,
    StoredAfterEvicting(Name),
    Rejected,
}

/// Capacity-bounded Content Store with priority-aware LRU replacement.
#[derive(Debug, Clone)]
pub struct CsTable {
    entries: HashMap<Name, CsEntry>,
    capacity: usize,
    decision: CacheDecision,
    clock: u64,
}

impl CsTable {
    pub fn new(capacity: usize, decision: CacheDecision) -> Self {
        assert!(capacity > 0, "CS capacity must be positive");
        CsTable {
            entries: HashMap::new(),
            capacity,
            decision,
            clock: 0,
        }
    }

    pub fn unbounded(decision: CacheDecision) -> Self {
        Self::new(usize::MAX, decision)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn decision(&self) -> CacheDecision {
        self.decision
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CsEntry> {
        self.entries.values()
    }

    pub fn get(&self, name: &Name) -> Option<&CsEntry> {
        self.entries.get(name)
    }

    pub fn decide<R: Rng + ?Sized>(&self, level: ServiceLevel, has_pit: bool, rng: &mut R) -> bool {
        self.decision.decide(level, has_pit, rng)
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    pub fn insert(&mut self, mut entry: CsEntry) -> CsInsert {
        entry.touch = self.tick();
        if let Some(existing) = self.entries.get_mut(&entry.name) {
            *existing = entry;
            return CsInsert::Stored;
        }
        if self.entries.len() < self.capacity {
            self.entries.insert(entry.name.clone(), entry);
            return CsInsert::Stored;
        }
        let victim = self
            .entries
            .values()
            .filter(|e| e.rank <= entry.rank)
            .min_by_key(|e| e.victim_key())
            .map(|e| e.name.clone());
        match victim {
            None => CsInsert::Rejected,
            Some(victim) => {
                self.entries.remove(&victim);
                self.entries.insert(entry.name.clone(), entry);
                CsInsert::StoredAfterEvicting(victim)
            }
        }
    }

    /// Exact-name lookup; a hit refreshes the entry's recency.
    pub fn lookup(&mut self, name: &Name, now: SimTime) -> Option<&Data> {
        let touch = self.clock + 1;
        let entry = self.entries.get_mut(name)?;
        self.clock = touch;
        entry.touch = touch;
        entry.last_used = entry.last_used.max(now);
        Some(&entry.data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::names::parse_name;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn data(name: &str) -> Data {
        Data::new(parse_name(name).unwrap(), vec![0; 32])
    }

    fn fill(cs: &mut CsTable, prefix: &str, level: ServiceLevel) {
        for i in 0..cs.capacity() {
            let d = data(&format!("{prefix}/{i}"));
            assert_eq!(cs.insert(CsEntry::new(d, level, i as SimTime, false)), CsInsert::Stored);
        }
    }

    #[test]
    fn always_decision_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = CacheDecision::Always;
        assert!(!d.decide(ServiceLevel::REGULAR, false, &mut rng));
        assert!(d.decide(ServiceLevel::RELIABLE, false, &mut rng));
        assert!(d.decide(ServiceLevel::PROMPT, false, &mut rng));
        assert!(d.decide(ServiceLevel::REGULAR, true, &mut rng));
    }

    #[test]
    fn reliable_displaces_lru_regular() {
        let mut cs = CsTable::new(2, CacheDecision::Always);
        fill(&mut cs, "/r", ServiceLevel::REGULAR);
        cs.lookup(&parse_name("/r/0").unwrap(), 50);
        let out = cs.insert(CsEntry::new(data("/x"), ServiceLevel::RELIABLE, 60, false));
        assert_eq!(out, CsInsert::StoredAfterEvicting(parse_name("/r/1").unwrap()));
    }

    #[test]
    fn higher_priority_content_is_protected() {
        let mut cs = CsTable::new(3, CacheDecision::Always);
        fill(&mut cs, "/pr", ServiceLevel::PROMPT_RELIABLE);
        let out = cs.insert(CsEntry::new(data("/x"), ServiceLevel::REGULAR, 9, false));
        assert_eq!(out, CsInsert::Rejected);
        assert_eq!(cs.len(), 3);
    }

    #[test]
    fn reliable_regular_replaces_prompt_regular() {
        let mut cs = CsTable::new(3, CacheDecision::Always);
        fill(&mut cs, "/p", ServiceLevel::PROMPT);
        let out = cs.insert(CsEntry::new(data("/x"), ServiceLevel::RELIABLE, 9, false));
        assert_eq!(out, CsInsert::StoredAfterEvicting(parse_name("/p/0").unwrap()));
    }

    #[test]
    fn pitless_entries_go_first_within_rank() {
        let mut cs = CsTable::new(2, CacheDecision::Always);
        cs.insert(CsEntry::new(data("/a"), ServiceLevel::RELIABLE, 0, false));
        cs.insert(CsEntry::new(data("/b"), ServiceLevel::RELIABLE, 1, true));
        let out = cs.insert(CsEntry::new(data("/c"), ServiceLevel::RELIABLE, 2, false));
        assert_eq!(out, CsInsert::StoredAfterEvicting(parse_name("/b").unwrap()));
    }

    #[test]
    fn overwrite_refreshes() {
        let mut cs = CsTable::new(2, CacheDecision::Always);
        cs.insert(CsEntry::new(data("/a"), ServiceLevel::REGULAR, 0, false));
        cs.insert(CsEntry::new(data("/b"), ServiceLevel::REGULAR, 1, false));
        assert_eq!(cs.insert(CsEntry::new(data("/a"), ServiceLevel::REGULAR, 2, false)), CsInsert::Stored);
        assert_eq!(cs.len(), 2);
        let out = cs.insert(CsEntry::new(data("/c"), ServiceLevel::REGULAR, 3, false));
        assert_eq!(out, CsInsert::StoredAfterEvicting(parse_name("/b").unwrap()));
    }

    #[test]
    fn lookup_is_exact_match() {
        let mut cs = CsTable::new(2, CacheDecision::Always);
        assert!(cs.lookup(&parse_name("/g/1").unwrap(), 0).is_none());
        cs.insert(CsEntry::new(data("/g/1"), ServiceLevel::REGULAR, 0, false));
        assert!(cs.lookup(&parse_name("/g/1").unwrap(), 7).is_some());
        assert_eq!(cs.get(&parse_name("/g/1").unwrap()).unwrap().last_used, 7);
        assert!(cs.lookup(&parse_name("/g").unwrap(), 8).is_none());
    }
}
