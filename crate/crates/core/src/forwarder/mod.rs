//! Per-node NDN engine: FIB, PIT, Content Store, egress queue and the
//! Interest/Data processing pipeline with QoS-aware resource management.

mod cs;
mod egress;
mod limiter;
mod pit;

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;

pub use cs::{CacheDecision, CsEntry, CsInsert, CsTable};
pub use egress::{EgressOutcome, EgressQueue};
pub use limiter::{RateLimit, TokenBucket};
pub use pit::{PitEntry, PitInsert, PitTable};

use crate::metrics::NodeCounters;
use crate::names::{ClassTable, Name, ServiceLevel};

/// Simulation time in milliseconds.
pub type SimTime = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Face {
    Local,
    Node(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interest {
    pub name: Name,
    pub nonce: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Data {
    pub name: Name,
    pub payload: Vec<u8>,
}

impl Data {
    pub fn new(name: Name, payload: Vec<u8>) -> Self {
        Data { name, payload }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Packet {
    Interest(Interest),
    Data(Data),
}

impl Packet {
    pub fn name(&self) -> &Name {
        match self {
            Packet::Interest(i) => &i.name,
            Packet::Data(d) => &d.name,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Packet::Interest(_) => "interest",
            Packet::Data(_) => "data",
        }
    }
}

/// A packet waiting in the egress queue together with its next hop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outgoing {
    pub to: NodeId,
    pub packet: Packet,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FibEntry {
    pub prefix: Name,
    pub next_hop: NodeId,
}

/// Static per-node configuration.
#[derive(Debug, Clone)]
pub struct NodeConfig {
    pub id: NodeId,
    pub class_table: ClassTable,
    pub qos_enabled: bool,
    pub fib: Vec<FibEntry>,
    /// Prefixes this node answers as producer.
    pub produces: Vec<Name>,
    pub pit_capacity: usize,
    pub pit_lifetime: SimTime,
    pub cs_capacity: usize,
    pub cache: CacheDecision,
    pub egress_depth: usize,
    pub pitless_limit: RateLimit,
    pub payload_size: usize,
}

impl NodeConfig {
    pub const DEFAULT_PIT_LIFETIME: SimTime = 12_000;
    pub const DEFAULT_EGRESS_DEPTH: usize = 8;
    pub const DEFAULT_PAYLOAD: usize = 32;

    pub fn new(id: NodeId) -> Self {
        NodeConfig {
            id,
            class_table: ClassTable::new(),
            qos_enabled: false,
            fib: Vec::new(),
            produces: Vec::new(),
            pit_capacity: 5,
            pit_lifetime: Self::DEFAULT_PIT_LIFETIME,
            cs_capacity: 5,
            cache: CacheDecision::Always,
            egress_depth: Self::DEFAULT_EGRESS_DEPTH,
            pitless_limit: RateLimit::default(),
            payload_size: Self::DEFAULT_PAYLOAD,
        }
    }
}

/// What the pipeline did with a packet; used for tracing and tests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Note {
    CacheHit,
    DuplicateNonce,
    Produced,
    Aggregated,
    Retransmitted,
    PitDrop,
    PitEvicted(Name),
    Forwarded(NodeId),
    Reordered,
    NoRoute,
    QueueDrop,
    Cached,
    CachedAfterEvicting(Name),
    CacheRejected,
    CacheSkipped,
    PitlessCached,
    Unsolicited,
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Outcome {
    /// Data handed to the local application face.
    pub delivered: Vec<Data>,
    pub notes: Vec<Note>,
}

const NONCE_MEMORY: usize = 64;

pub struct NodeState {
    pub id: NodeId,
    class_table: ClassTable,
    qos_enabled: bool,
    fib: Vec<FibEntry>,
    produces: Vec<Name>,
    pit_lifetime: SimTime,
    payload_size: usize,
    pub pit: PitTable,
    pub cs: CsTable,
    pub egress: EgressQueue<Outgoing>,
    pitless_limiter: TokenBucket,
    recent_nonces: VecDeque<(Name, u32)>,
    pub counters: NodeCounters,
}

impl NodeState {
    pub fn new(config: NodeConfig) -> Self {
        NodeState {
            id: config.id,
            class_table: config.class_table,
            qos_enabled: config.qos_enabled,
            fib: config.fib,
            produces: config.produces,
            pit_lifetime: config.pit_lifetime,
            payload_size: config.payload_size,
            pit: PitTable::new(config.pit_capacity),
            cs: CsTable::new(config.cs_capacity, config.cache),
            egress: EgressQueue::new(config.egress_depth),
            pitless_limiter: TokenBucket::new(config.pitless_limit),
            recent_nonces: VecDeque::with_capacity(NONCE_MEMORY),
            counters: NodeCounters::default(),
        }
    }

    pub fn qos_enabled(&self) -> bool {
        self.qos_enabled
    }

    /// Service level used for `name` at this node.
    pub fn level_of(&self, name: &Name) -> ServiceLevel {
        if self.qos_enabled {
            self.class_table.classify(name)
        } else {
            ServiceLevel::REGULAR
        }
    }

    pub fn produces(&self, name: &Name) -> bool {
        self.produces.iter().any(|p| p.is_prefix_of(name))
    }

    /// Longest-prefix FIB match.
    pub fn next_hop(&self, name: &Name) -> Option<NodeId> {
        self.fib
            .iter()
            .filter(|e| e.prefix.is_prefix_of(name))
            .max_by_key(|e| e.prefix.len())
            .map(|e| e.next_hop)
    }

    fn seen_nonce(&mut self, name: &Name, nonce: u32) -> bool {
        if self
            .recent_nonces
            .iter()
            .any(|(n, x)| *x == nonce && n == name)
        {
            return true;
        }
        if self.recent_nonces.len() == NONCE_MEMORY {
            self.recent_nonces.pop_front();
        }
        self.recent_nonces.push_back((name.clone(), nonce));
        false
    }

    fn send(&mut self, to: Face, packet: Packet, level: ServiceLevel, out: &mut Outcome) -> EgressOutcome {
        match to {
            Face::Local => {
                if let Packet::Data(d) = packet {
                    out.delivered.push(d);
                }
                EgressOutcome::Queued
            }
            Face::Node(next) => {
                let res = self.egress.enqueue(Outgoing { to: next, packet }, level);
                match res {
                    EgressOutcome::DroppedFull => {
                        self.counters.queue_drops += 1;
                        out.notes.push(Note::QueueDrop);
                    }
                    EgressOutcome::QueuedAheadOfStage => out.notes.push(Note::Reordered),
                    EgressOutcome::Queued => {}
                }
                res
            }
        }
    }

    fn forward_interest(&mut self, interest: Interest, level: ServiceLevel, out: &mut Outcome) -> bool {
        match self.next_hop(&interest.name) {
            Some(next) => {
                out.notes.push(Note::Forwarded(next));
                self.send(Face::Node(next), Packet::Interest(interest), level, out);
                true
            }
            None => {
                self.counters.no_route += 1;
                out.notes.push(Note::NoRoute);
                false
            }
        }
    }

    /// Interest pipeline: CS, duplicate suppression, producer, PIT, FIB.
    ///
    /// A repeated Interest from a face already recorded in the PIT entry is a
    /// consumer retransmission and is forwarded upstream again; a new face is
    /// aggregated.
    pub fn on_interest(&mut self, from: Face, interest: Interest, now: SimTime) -> Outcome {
        let mut out = Outcome::default();
        let level = self.level_of(&interest.name);
        let remote = from != Face::Local;
        if remote {
            self.counters.interests_in += 1;
            self.counters.traffic_mut(&interest.name).interests_in += 1;
        }

        if let Some(data) = self.cs.lookup(&interest.name, now).cloned() {
            if remote {
                self.counters.cs_hits += 1;
                self.counters.traffic_mut(&interest.name).cs_hits += 1;
            } else {
                self.counters.local_cs_hits += 1;
            }
            out.notes.push(Note::CacheHit);
            self.send(from, Packet::Data(data), level, &mut out);
            return out;
        }

        if self.seen_nonce(&interest.name, interest.nonce) {
            self.counters.dup_drops += 1;
            out.notes.push(Note::DuplicateNonce);
            return out;
        }

        if self.produces(&interest.name) {
            let data = Data::new(interest.name.clone(), vec![0; self.payload_size]);
            out.notes.push(Note::Produced);
            self.counters.produced += 1;
            self.send(from, Packet::Data(data), level, &mut out);
            return out;
        }

        let lifetime = self.pit_lifetime;
        if let Some(entry) = self.pit.get_mut(&interest.name, now) {
            entry.expires_at = entry.expires_at.max(now + lifetime);
            if entry.add_face(from) {
                self.counters.aggregated += 1;
                out.notes.push(Note::Aggregated);
                return out;
            }
            self.counters.retransmitted += 1;
            out.notes.push(Note::Retransmitted);
            self.forward_interest(interest, level, &mut out);
            return out;
        }

        let entry = PitEntry::new(interest.name.clone(), level, from, now, lifetime);
        match self.pit.insert(entry, now) {
            PitInsert::Dropped => {
                self.counters.pit_drops += 1;
                out.notes.push(Note::PitDrop);
                return out;
            }
            PitInsert::InsertedAfterEvicting(victim) => {
                self.counters.pit_evictions += 1;
                out.notes.push(Note::PitEvicted(victim));
            }
            PitInsert::Inserted => {}
        }
        let name = interest.name.clone();
        if !self.forward_interest(interest, level, &mut out) {
            self.pit.remove(&name);
        }
        out
    }

    /// Data pipeline: consume PIT state, forward to every downstream face,
    /// then run the caching decision and replacement.
    pub fn on_data<R: Rng + ?Sized>(&mut self, from: Face, data: Data, now: SimTime, rng: &mut R) -> Outcome {
        let mut out = Outcome::default();
        let level = self.level_of(&data.name);
        if from != Face::Local {
            self.counters.data_in += 1;
        }

        let Some(faces) = self.pit.lookup_consume(&data.name, now) else {
            let admitted = self.qos_enabled
                && level.is_prioritized()
                && self.pitless_limiter.admit(now)
                && self.cs.decide(level, false, rng);
            if admitted {
                let entry = CsEntry::new(data, level, now, true);
                if self.store(entry, &mut out) {
                    self.counters.pitless_cached += 1;
                    out.notes.push(Note::PitlessCached);
                }
            } else {
                self.counters.unsolicited_drops += 1;
                out.notes.push(Note::Unsolicited);
            }
            return out;
        };

        let mut prompt_queue_exhausted = false;
        for face in faces {
            if face == from {
                continue;
            }
            let res = self.send(face, Packet::Data(data.clone()), level, &mut out);
            if res == EgressOutcome::DroppedFull && level.is_prompt() {
                prompt_queue_exhausted = true;
            }
        }

        if prompt_queue_exhausted {
            // prompt Data that could not be queued is kept at top rank
            let entry = CsEntry::new(data, level, now, false).with_rank(3);
            self.store(entry, &mut out);
        } else if self.cs.decide(level, true, rng) {
            self.store(CsEntry::new(data, level, now, false), &mut out);
        } else {
            out.notes.push(Note::CacheSkipped);
        }
        out
    }

    fn store(&mut self, entry: CsEntry, out: &mut Outcome) -> bool {
        match self.cs.insert(entry) {
            CsInsert::Stored => {
                out.notes.push(Note::Cached);
                true
            }
            CsInsert::StoredAfterEvicting(victim) => {
                self.counters.cs_evictions += 1;
                out.notes.push(Note::CachedAfterEvicting(victim));
                true
            }
            CsInsert::Rejected => {
                self.counters.cs_rejected += 1;
                out.notes.push(Note::CacheRejected);
                false
            }
        }
    }
}
