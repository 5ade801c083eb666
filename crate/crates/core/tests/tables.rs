use std::collections::{BTreeMap, HashSet, VecDeque};

use ndnqos::forwarder::{
    CacheDecision, CsEntry, CsInsert, CsTable, Data, EgressOutcome, EgressQueue, Face, NodeId, PitEntry, PitInsert,
    PitTable, SimTime,
};
use ndnqos::names::{parse_name, Name, ServiceLevel};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn name(i: usize) -> Name {
    parse_name(&format!("/n/{i}")).unwrap()
}

fn data(i: usize) -> Data {
    Data::new(name(i), vec![0; 32])
}

fn level(rng: &mut ChaCha8Rng) -> ServiceLevel {
    ServiceLevel::ALL[rng.random_range(0..4)]
}

// ---- PIT reference model -------------------------------------------------

#[derive(Debug, Clone)]
struct RefPit {
    cap: usize,
    lifetime: SimTime,
    // (name, rank, created, order, expires)
    rows: Vec<(usize, u8, SimTime, u64, SimTime)>,
    order: u64,
}

impl RefPit {
    fn insert(&mut self, n: usize, rank: u8, now: SimTime) -> PitInsert {
        if let Some(row) = self.rows.iter_mut().find(|r| r.0 == n && r.4 > now) {
            row.4 = row.4.max(now + self.lifetime);
            return PitInsert::Inserted;
        }
        self.rows.retain(|r| r.0 != n);
        if self.rows.len() >= self.cap {
            self.rows.retain(|r| r.4 > now);
        }
        self.order += 1;
        let row = (n, rank, now, self.order, now + self.lifetime);
        if self.rows.len() < self.cap {
            self.rows.push(row);
            return PitInsert::Inserted;
        }
        let (idx, victim) = self
            .rows
            .iter()
            .enumerate()
            .min_by_key(|(_, r)| (r.1, r.2, r.3))
            .map(|(i, r)| (i, *r))
            .unwrap();
        if victim.1 < rank {
            self.rows.remove(idx);
            self.rows.push(row);
            PitInsert::InsertedAfterEvicting(name(victim.0))
        } else {
            PitInsert::Dropped
        }
    }

    fn consume(&mut self, n: usize, now: SimTime) -> bool {
        let before = self.rows.len();
        let live = self.rows.iter().any(|r| r.0 == n && r.4 > now);
        self.rows.retain(|r| r.0 != n);
        live && before > 0
    }
}

fn pit_entry(n: usize, level: ServiceLevel, now: SimTime, lifetime: SimTime) -> PitEntry {
    PitEntry::new(name(n), level, Face::Node(NodeId(1)), now, lifetime)
}

#[test]
fn pit_matches_reference_model_on_random_traces() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trace in 0..200 {
        let cap = rng.random_range(1..=5);
        let lifetime = rng.random_range(50..400);
        let mut pit = PitTable::new(cap);
        let mut model = RefPit {
            cap,
            lifetime,
            rows: Vec::new(),
            order: 0,
        };
        let mut now = 0;
        for step in 0..500 {
            now += rng.random_range(0..20);
            let n = rng.random_range(0..12);
            if rng.random_bool(0.7) {
                let lvl = level(&mut rng);
                let got = pit.insert(pit_entry(n, lvl, now, lifetime), now);
                let want = model.insert(n, lvl.pit_priority(), now);
                assert_eq!(got, want, "trace {trace} step {step}");
            } else {
                let got = pit.lookup_consume(&name(n), now).is_some();
                assert_eq!(got, model.consume(n, now), "trace {trace} step {step}");
            }
        }
    }
}

#[test]
fn pit_admission_over_all_full_states() {
    // every assignment of ranks to a full table of up to five entries
    for cap in 1..=5usize {
        for code in 0..3usize.pow(cap as u32) {
            let ranks: Vec<usize> = (0..cap).map(|i| code / 3usize.pow(i as u32) % 3).collect();
            for incoming in ServiceLevel::ALL {
                let mut pit = PitTable::new(cap);
                let pick = |r: usize| ServiceLevel::ALL.into_iter().find(|l| l.pit_priority() as usize == r).unwrap();
                for (i, r) in ranks.iter().enumerate() {
                    pit.insert(pit_entry(i, pick(*r), i as SimTime, 10_000), i as SimTime);
                }
                let out = pit.insert(pit_entry(99, incoming, 50, 10_000), 50);
                let min = *ranks.iter().min().unwrap();
                let oldest_min = ranks.iter().position(|r| *r == min).unwrap();
                if (min as u8) < incoming.pit_priority() {
                    assert_eq!(out, PitInsert::InsertedAfterEvicting(name(oldest_min)), "{ranks:?}");
                } else {
                    assert_eq!(out, PitInsert::Dropped, "{ranks:?}");
                }
                assert_eq!(pit.len(), cap);
            }
        }
    }
}

#[test]
fn unbounded_regular_pit_never_evicts() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut pit = PitTable::unbounded();
    let mut now = 0;
    for _ in 0..10_000 {
        now += rng.random_range(0..5);
        let n = rng.random_range(0..500);
        if rng.random_bool(0.6) {
            let out = pit.insert(pit_entry(n, ServiceLevel::REGULAR, now, 12_000), now);
            assert_eq!(out, PitInsert::Inserted);
        } else {
            pit.lookup_consume(&name(n), now);
        }
    }
}

// ---- CS oracles ----------------------------------------------------------

/// Plain LRU cache over names.
struct Lru {
    cap: usize,
    order: VecDeque<usize>,
}

impl Lru {
    fn touch(&mut self, n: usize) {
        self.order.retain(|x| *x != n);
        self.order.push_back(n);
    }

    fn insert(&mut self, n: usize) -> CsInsert {
        if self.order.contains(&n) {
            self.touch(n);
            return CsInsert::Stored;
        }
        if self.order.len() < self.cap {
            self.order.push_back(n);
            return CsInsert::Stored;
        }
        let victim = self.order.pop_front().unwrap();
        self.order.push_back(n);
        CsInsert::StoredAfterEvicting(name(victim))
    }

    fn lookup(&mut self, n: usize) -> bool {
        let hit = self.order.contains(&n);
        if hit {
            self.touch(n);
        }
        hit
    }
}

fn lru_trace(cap: Option<usize>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cs = match cap {
        Some(c) => CsTable::new(c, CacheDecision::Always),
        None => CsTable::unbounded(CacheDecision::Always),
    };
    let mut lru = Lru {
        cap: cap.unwrap_or(usize::MAX),
        order: VecDeque::new(),
    };
    for step in 0..10_000u64 {
        let n = rng.random_range(0..40);
        if rng.random_bool(0.5) {
            let got = cs.insert(CsEntry::new(data(n), ServiceLevel::REGULAR, step, false));
            assert_eq!(got, lru.insert(n), "step {step}");
        } else {
            assert_eq!(cs.lookup(&name(n), step).is_some(), lru.lookup(n), "step {step}");
        }
    }
}

#[test]
fn regular_cs_reduces_to_lru() {
    lru_trace(None, 1);
    for (cap, seed) in [(1, 2), (5, 3), (17, 4)] {
        lru_trace(Some(cap), seed);
    }
}

#[test]
fn cs_replacement_over_all_two_entry_states() {
    // entries: (rank, pitless); order of insertion gives recency, optionally swapped by a lookup
    let ranks = 0u8..4;
    for r0 in ranks.clone() {
        for r1 in ranks.clone() {
            for p0 in [false, true] {
                for p1 in [false, true] {
                    for swap in [false, true] {
                        for incoming in 0u8..4 {
                            let mut cs = CsTable::new(2, CacheDecision::Always);
                            cs.insert(CsEntry::new(data(0), ServiceLevel::REGULAR, 0, p0).with_rank(r0));
                            cs.insert(CsEntry::new(data(1), ServiceLevel::REGULAR, 1, p1).with_rank(r1));
                            if swap {
                                cs.lookup(&name(0), 2);
                            }
                            let got = cs.insert(CsEntry::new(data(9), ServiceLevel::REGULAR, 3, false).with_rank(incoming));
                            // oldest first, unless the lookup refreshed entry 0
                            let by_age = if swap { [(1, r1, p1), (0, r0, p0)] } else { [(0, r0, p0), (1, r1, p1)] };
                            let want = by_age
                                .iter()
                                .filter(|(_, r, _)| *r <= incoming)
                                .min_by_key(|(i, r, p)| {
                                    let age = by_age.iter().position(|x| x.0 == *i).unwrap();
                                    (*r, !*p, age)
                                })
                                .map_or(CsInsert::Rejected, |(i, _, _)| CsInsert::StoredAfterEvicting(name(*i)));
                            assert_eq!(got, want, "r0={r0} r1={r1} p0={p0} p1={p1} swap={swap} in={incoming}");
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn full_cs_examples() {
    let mut cs = CsTable::new(2, CacheDecision::Always);
    cs.insert(CsEntry::new(data(0), ServiceLevel::PROMPT_RELIABLE, 0, false));
    cs.insert(CsEntry::new(data(1), ServiceLevel::PROMPT_RELIABLE, 1, false));
    assert_eq!(cs.insert(CsEntry::new(data(2), ServiceLevel::REGULAR, 2, false)), CsInsert::Rejected);

    let mut cs = CsTable::new(2, CacheDecision::Always);
    cs.insert(CsEntry::new(data(0), ServiceLevel::PROMPT, 0, false));
    cs.insert(CsEntry::new(data(1), ServiceLevel::PROMPT, 1, false));
    assert_eq!(
        cs.insert(CsEntry::new(data(2), ServiceLevel::RELIABLE, 2, false)),
        CsInsert::StoredAfterEvicting(name(0))
    );
    assert!(cs.lookup(&name(2), 3).is_some());
    assert!(cs.lookup(&parse_name("/n").unwrap(), 3).is_none());
}

// ---- randomized invariants -----------------------------------------------

#[test]
fn table_invariants_hold_over_100k_operations() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xfeed);
    let mut pit = PitTable::new(5);
    let mut cs = CsTable::new(5, CacheDecision::Always);
    let mut now: SimTime = 0;
    let mut violations = Vec::new();
    for step in 0..100_000 {
        now += rng.random_range(0..30);
        let n = rng.random_range(0..40);
        let lvl = level(&mut rng);
        match rng.random_range(0..4) {
            0 => {
                let before: BTreeMap<Name, u8> = pit.iter().map(|e| (e.name.clone(), e.level.pit_priority())).collect();
                if let PitInsert::InsertedAfterEvicting(victim) = pit.insert(pit_entry(n, lvl, now, 3_000), now) {
                    if before.get(&victim).is_none_or(|r| *r >= lvl.pit_priority()) {
                        violations.push(format!("step {step}: pit evicted {victim}"));
                    }
                }
            }
            1 => {
                pit.lookup_consume(&name(n), now);
            }
            2 => {
                let before: BTreeMap<Name, u8> = cs.iter().map(|e| (e.name.clone(), e.rank)).collect();
                let pitless = rng.random_bool(0.2);
                if let CsInsert::StoredAfterEvicting(victim) = cs.insert(CsEntry::new(data(n), lvl, now, pitless)) {
                    if before.get(&victim).is_none_or(|r| *r > lvl.cs_priority()) {
                        violations.push(format!("step {step}: cs evicted {victim}"));
                    }
                }
            }
            _ => {
                cs.lookup(&name(n), now);
            }
        }
        if pit.len() > 5 || cs.len() > 5 {
            violations.push(format!("step {step}: capacity exceeded"));
        }
        let pit_names: HashSet<&Name> = pit.iter().map(|e| &e.name).collect();
        let cs_names: HashSet<&Name> = cs.iter().map(|e| &e.name).collect();
        if pit_names.len() != pit.len() || cs_names.len() != cs.len() {
            violations.push(format!("step {step}: duplicate names"));
        }
    }
    assert!(violations.is_empty(), "{violations:?}");
}

proptest! {
    #[test]
    fn pit_capacity_and_admission(ops in prop::collection::vec((0usize..10, 0usize..4, 0u64..40, any::<bool>()), 1..300), cap in 1usize..6) {
        let mut pit = PitTable::new(cap);
        let mut now = 0;
        for (n, l, dt, consume) in ops {
            now += dt;
            if consume {
                pit.lookup_consume(&name(n), now);
                continue;
            }
            let lvl = ServiceLevel::ALL[l];
            let ranks: BTreeMap<Name, u8> = pit.iter().map(|e| (e.name.clone(), e.level.pit_priority())).collect();
            match pit.insert(pit_entry(n, lvl, now, 200), now) {
                PitInsert::InsertedAfterEvicting(v) => prop_assert!(ranks[&v] < lvl.pit_priority()),
                PitInsert::Dropped => prop_assert!(pit.iter().all(|e| e.level.pit_priority() >= lvl.pit_priority())),
                PitInsert::Inserted => {}
            }
            prop_assert!(pit.len() <= cap);
        }
    }

    #[test]
    fn cs_capacity_and_replacement(ops in prop::collection::vec((0usize..10, 0usize..4, any::<bool>()), 1..300), cap in 1usize..6) {
        let mut cs = CsTable::new(cap, CacheDecision::Always);
        for (t, (n, l, pitless)) in ops.into_iter().enumerate() {
            let lvl = ServiceLevel::ALL[l];
            let ranks: BTreeMap<Name, u8> = cs.iter().map(|e| (e.name.clone(), e.rank)).collect();
            match cs.insert(CsEntry::new(data(n), lvl, t as SimTime, pitless)) {
                CsInsert::StoredAfterEvicting(v) => prop_assert!(ranks[&v] <= lvl.cs_priority()),
                CsInsert::Rejected => prop_assert!(cs.iter().all(|e| e.rank > lvl.cs_priority())),
                CsInsert::Stored => {}
            }
            prop_assert!(cs.len() <= cap);
        }
    }

    #[test]
    fn egress_reordering_is_bounded(ops in prop::collection::vec((any::<bool>(), any::<bool>()), 1..200)) {
        let mut q: EgressQueue<usize> = EgressQueue::new(8);
        let mut arrivals: Vec<ServiceLevel> = Vec::new();
        let mut departed: Vec<usize> = Vec::new();
        let mut staged: Option<usize> = None;
        let mut jumped: BTreeMap<usize, usize> = BTreeMap::new();
        for (push, prompt) in ops {
            if push {
                let lvl = if prompt { ServiceLevel::PROMPT } else { ServiceLevel::REGULAR };
                let id = arrivals.len();
                match q.enqueue(id, lvl) {
                    EgressOutcome::Queued => {
                        arrivals.push(lvl);
                        staged = Some(id);
                    }
                    EgressOutcome::QueuedAheadOfStage => {
                        arrivals.push(lvl);
                        *jumped.entry(staged.unwrap()).or_default() += 1;
                    }
                    EgressOutcome::DroppedFull => {
                        prop_assert_eq!(q.len(), 8);
                    }
                }
            } else if let Some((id, _)) = q.pop() {
                if staged == Some(id) {
                    staged = None;
                }
                departed.push(id);
            }
        }
        while let Some((id, _)) = q.pop() {
            departed.push(id);
        }
        for (pos, p) in departed.iter().enumerate() {
            let overtakers: Vec<usize> = departed[..pos].iter().copied().filter(|q| q > p).collect();
            for q in &overtakers {
                prop_assert!(arrivals[*q].is_prompt() && !arrivals[*p].is_prompt());
            }
            prop_assert!(overtakers.len() <= jumped.get(p).copied().unwrap_or(0));
        }
    }

    #[test]
    fn regular_egress_is_fifo(n in 1usize..8) {
        let mut q: EgressQueue<usize> = EgressQueue::new(8);
        for i in 0..n {
            prop_assert_eq!(q.enqueue(i, ServiceLevel::REGULAR), EgressOutcome::Queued);
        }
        let order: Vec<usize> = std::iter::from_fn(|| q.pop().map(|(p, _)| p)).collect();
        prop_assert_eq!(order, (0..n).collect::<Vec<_>>());
    }
}

#[test]
fn probabilistic_caching_frequencies() {
    let decision = CacheDecision::probabilistic(0.3, 0.7);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let draws = 10_000;
    let rel = (0..draws).filter(|_| decision.decide(ServiceLevel::RELIABLE, true, &mut rng)).count();
    let reg = (0..draws).filter(|_| decision.decide(ServiceLevel::REGULAR, true, &mut rng)).count();
    let (rel, reg) = (rel as f64 / draws as f64, reg as f64 / draws as f64);
    assert!((rel - 0.70).abs() <= 0.02, "reliable fraction {rel}");
    assert!((reg - 0.30).abs() <= 0.02, "regular fraction {reg}");
}

#[test]
fn pitless_regular_data_is_never_cached() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for decision in [CacheDecision::Always, CacheDecision::probabilistic(1.0, 1.0)] {
        assert!(!decision.decide(ServiceLevel::REGULAR, false, &mut rng));
        assert!(decision.decide(ServiceLevel::RELIABLE, false, &mut rng));
    }
}
