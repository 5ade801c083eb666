//! Deterministic discrete-event engine and the lossy half-duplex link model.
//!
//! Events execute in `(time, seq)` order on a single thread. Every random
//! draw comes from a stream derived from the run seed: one per node and one
//! per link.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::forwarder::{Data, Face, Interest, NodeConfig, NodeId, NodeState, Note, Outcome, Packet, SimTime};
use crate::metrics::{MetricsLog, MinuteLoad, NodeInfo, RequestOutcome, RequestRecord, RunLabel};
use crate::names::Name;
use crate::rng;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("event scheduled at {at} ms while the clock is at {now} ms")]
    Causality { at: SimTime, now: SimTime },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkModel {
    /// Medium occupancy per transmission.
    pub base_delay: SimTime,
    /// Delivery time varies uniformly by up to this many ms around `base_delay`.
    pub jitter: SimTime,
    pub loss_prob: f64,
    pub backoff_min: SimTime,
    pub backoff_max: SimTime,
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel {
            base_delay: 5,
            jitter: 2,
            loss_prob: 0.10,
            backoff_min: 1,
            backoff_max: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub a: NodeId,
    pub b: NodeId,
    pub model: LinkModel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppRequest {
    pub at: SimTime,
    pub node: NodeId,
    pub name: Name,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetxPolicy {
    pub interval: SimTime,
    pub max_retransmissions: u8,
}

impl Default for RetxPolicy {
    fn default() -> Self {
        RetxPolicy {
            interval: 2_000,
            max_retransmissions: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub seed: u64,
    pub duration: SimTime,
    pub gateway: NodeId,
    pub nodes: Vec<NodeConfig>,
    pub links: Vec<LinkSpec>,
    pub requests: Vec<AppRequest>,
    pub retx: RetxPolicy,
    pub trace: bool,
    pub label: RunLabel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Action {
    AppRequest { node: usize, request: usize },
    Retransmit { node: usize, request: usize, attempt: u8 },
    LinkDeliver { from: usize, to: usize, packet: Packet },
    MediaFree { node: usize },
}

impl Action {
    fn kind(&self) -> &'static str {
        match self {
            Action::AppRequest { .. } => "app_request",
            Action::Retransmit { .. } => "retransmit",
            Action::LinkDeliver { .. } => "deliver",
            Action::MediaFree { .. } => "media_free",
        }
    }
}

/// Min-ordered event queue with a monotone clock.
#[derive(Debug, Default)]
pub struct Scheduler<A> {
    now: SimTime,
    seq: u64,
    heap: BinaryHeap<Entry<A>>,
}

#[derive(Debug)]
struct Entry<A> {
    at: SimTime,
    seq: u64,
    item: A,
}

impl<A> PartialEq for Entry<A> {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}
impl<A> Eq for Entry<A> {}
impl<A> PartialOrd for Entry<A> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<A> Ord for Entry<A> {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

impl<A> Scheduler<A> {
    pub fn new() -> Self {
        Scheduler {
            now: 0,
            seq: 0,
            heap: BinaryHeap::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, at: SimTime, item: A) -> Result<(), SimError> {
        if at < self.now {
            return Err(SimError::Causality { at, now: self.now });
        }
        self.heap.push(Entry {
            at,
            seq: self.seq,
            item,
        });
        self.seq += 1;
        Ok(())
    }

    /// Pops the next item due no later than `until`, advancing the clock.
    pub fn pop_until(&mut self, until: SimTime) -> Option<(SimTime, A)> {
        if self.heap.peek()?.at > until {
            return None;
        }
        let e = self.heap.pop()?;
        self.now = e.at;
        Some((e.at, e.item))
    }
}

struct Link {
    model: LinkModel,
    rng: ChaCha8Rng,
}

struct OpenRequest {
    record: usize,
}

/// One simulation run; built from a [`SimConfig`] and consumed by [`Simulation::run`].
pub struct Simulation {
    sched: Scheduler<Action>,
    duration: SimTime,
    retx: RetxPolicy,
    ids: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    nodes: Vec<NodeState>,
    node_rngs: Vec<ChaCha8Rng>,
    links: HashMap<(usize, usize), Link>,
    busy_until: Vec<SimTime>,
    tx_armed: Vec<bool>,
    gateway: usize,
    app_requests: Vec<AppRequest>,
    request_record: Vec<Option<usize>>,
    waiting: Vec<HashMap<Name, Vec<OpenRequest>>>,
    log: MetricsLog,
    trace: bool,
}

fn link_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn hop_ranks(n: usize, gateway: usize, adjacency: &[Vec<usize>]) -> Vec<Option<u32>> {
    let mut rank = vec![None; n];
    rank[gateway] = Some(0);
    let mut queue = VecDeque::from([gateway]);
    while let Some(u) = queue.pop_front() {
        let r = rank[u].unwrap_or(0);
        for &v in &adjacency[u] {
            if rank[v].is_none() {
                rank[v] = Some(r + 1);
                queue.push_back(v);
            }
        }
    }
    rank
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        let SimConfig {
            seed,
            duration,
            gateway,
            nodes,
            links,
            mut requests,
            retx,
            trace,
            label,
        } = config;

        let mut index = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id, i).is_some() {
                return Err(SimError::Config(format!("duplicate node id {}", n.id)));
            }
        }
        let idx = |id: NodeId| {
            index
                .get(&id)
                .copied()
                .ok_or_else(|| SimError::Config(format!("unknown node {id}")))
        };
        let gw = idx(gateway)?;

        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut link_map = HashMap::new();
        for l in &links {
            let (a, b) = (idx(l.a)?, idx(l.b)?);
            if a == b {
                return Err(SimError::Config(format!("self link at node {}", l.a)));
            }
            if !(0.0..=1.0).contains(&l.model.loss_prob) || l.model.backoff_min > l.model.backoff_max {
                return Err(SimError::Config(format!("invalid link model on {}-{}", l.a, l.b)));
            }
            if l.model.jitter >= l.model.base_delay {
                return Err(SimError::Config(format!("jitter must be below base delay on {}-{}", l.a, l.b)));
            }
            let key = link_key(a, b);
            let stream = rng::stream(seed, "link", &[u64::from(l.a.0.min(l.b.0)), u64::from(l.a.0.max(l.b.0))]);
            if link_map.insert(key, Link { model: l.model, rng: stream }).is_some() {
                return Err(SimError::Config(format!("duplicate link {}-{}", l.a, l.b)));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        let ranks = hop_ranks(nodes.len(), gw, &adjacency);

        let states: Vec<NodeState> = nodes.into_iter().map(NodeState::new).collect();
        let ids: Vec<NodeId> = states.iter().map(|s| s.id).collect();

        // every request must reach a producer over existing links
        let mut checked: HashMap<(usize, Name), ()> = HashMap::new();
        for r in &requests {
            let start = idx(r.node)?;
            if ranks[start].is_none() {
                return Err(SimError::Config(format!("node {} with traffic is disconnected from the gateway", r.node)));
            }
            let route_key = r.name.component(0).zip(r.name.component(1)).map(|(a, b)| {
                Name::from_components([a, b]).expect("nonempty components")
            });
            let key = (start, route_key.unwrap_or_else(|| r.name.clone()));
            if checked.insert(key, ()).is_some() {
                continue;
            }
            let mut cur = start;
            let mut hops = 0;
            while !states[cur].produces(&r.name) {
                let next = states[cur].next_hop(&r.name).ok_or_else(|| {
                    SimError::Config(format!("node {} has no route for {}", ids[cur], r.name))
                })?;
                let next = idx(next)?;
                if !link_map.contains_key(&link_key(cur, next)) {
                    return Err(SimError::Config(format!("route {} -> {} has no link", ids[cur], ids[next])));
                }
                cur = next;
                hops += 1;
                if hops > states.len() {
                    return Err(SimError::Config(format!("routing loop for {}", r.name)));
                }
            }
        }

        requests.sort_by_key(|r| r.at);
        let request_nodes = requests.iter().map(|r| idx(r.node)).collect::<Result<Vec<_>, _>>()?;
        let node_rngs = ids.iter().map(|id| rng::stream(seed, "node", &[u64::from(id.0)])).collect();
        let n = states.len();
        let minutes = duration.div_ceil(60_000) as usize;
        let log = MetricsLog {
            label,
            duration,
            gateway: Some(gateway),
            nodes: ids
                .iter()
                .zip(&ranks)
                .map(|(id, r)| NodeInfo { id: *id, rank: r.unwrap_or(u32::MAX) })
                .collect(),
            requests: Vec::new(),
            counters: Vec::new(),
            gateway_load: vec![MinuteLoad::default(); minutes],
            trace: Vec::new(),
        };

        let mut sim = Simulation {
            sched: Scheduler::new(),
            duration,
            retx,
            ids,
            index,
            nodes: states,
            node_rngs,
            links: link_map,
            busy_until: vec![0; n],
            tx_armed: vec![false; n],
            gateway: gw,
            request_record: vec![None; requests.len()],
            app_requests: Vec::new(),
            waiting: (0..n).map(|_| HashMap::new()).collect(),
            log,
            trace,
        };
        for (i, (r, &node)) in requests.iter().zip(&request_nodes).enumerate() {
            if r.at <= duration {
                sim.sched.schedule(r.at, Action::AppRequest { node, request: i })?;
            }
        }
        sim.app_requests = requests;
        Ok(sim)
    }

    pub fn run(mut self) -> Result<MetricsLog, SimError> {
        while let Some((_, action)) = self.sched.pop_until(self.duration) {
            self.execute(action)?;
        }
        self.log.counters = self.nodes.into_iter().map(|n| n.counters).collect();
        Ok(self.log)
    }

    fn now(&self) -> SimTime {
        self.sched.now()
    }

    fn trace_line(&mut self, node: usize, kind: &str, name: Option<&Name>, detail: &str) {
        if self.trace {
            let mut line = String::new();
            let name = name.map(|n| n.to_string()).unwrap_or_else(|| "-".to_owned());
            let detail = if detail.is_empty() { "-" } else { detail };
            let _ = write!(line, "{} {} {} {} {}", self.now(), self.ids[node], kind, name, detail);
            self.log.trace.push(line);
        }
    }

    fn minute(&self) -> usize {
        ((self.now() / 60_000) as usize).min(self.log.gateway_load.len().saturating_sub(1))
    }

    fn execute(&mut self, action: Action) -> Result<(), SimError> {
        match action {
            Action::AppRequest { node, request } => self.app_request(node, request),
            Action::Retransmit { node, request, attempt } => self.retransmit(node, request, attempt),
            Action::LinkDeliver { from, to, packet } => self.deliver(from, to, packet),
            Action::MediaFree { node } => self.try_transmit(node),
        }
    }

    fn app_request(&mut self, node: usize, request: usize) -> Result<(), SimError> {
        let now = self.now();
        let name = self.app_requests[request].name.clone();
        let level = self.nodes[node].level_of(&name);
        let rank = self.log.nodes[node].rank;
        let record = self.log.requests.len();
        self.log.requests.push(RequestRecord {
            requester: self.ids[node],
            rank,
            name: name.clone(),
            level,
            first_sent: now,
            // open requests stay censored unless they complete or fail
            outcome: RequestOutcome::Censored,
            retransmissions: 0,
            bytes: 0,
        });
        self.request_record[request] = Some(record);
        self.waiting[node].entry(name.clone()).or_default().push(OpenRequest { record });
        self.issue_interest(node, name, Action::AppRequest { node, request }.kind(), 0)?;
        if self.is_open(record) {
            self.sched.schedule(
                now + self.retx.interval,
                Action::Retransmit { node, request, attempt: 1 },
            )?;
        }
        Ok(())
    }

    fn is_open(&self, record: usize) -> bool {
        self.log.requests[record].outcome == RequestOutcome::Censored
    }

    fn retransmit(&mut self, node: usize, request: usize, attempt: u8) -> Result<(), SimError> {
        let Some(record) = self.request_record[request] else {
            return Ok(());
        };
        if !self.is_open(record) {
            return Ok(());
        }
        let now = self.now();
        let name = self.log.requests[record].name.clone();
        if attempt > self.retx.max_retransmissions {
            self.log.requests[record].outcome = RequestOutcome::Failed(now);
            if let Some(list) = self.waiting[node].get_mut(&name) {
                list.retain(|o| o.record != record);
                if list.is_empty() {
                    self.waiting[node].remove(&name);
                }
            }
            self.trace_line(node, "request_failed", Some(&name), "");
            return Ok(());
        }
        self.log.requests[record].retransmissions = attempt;
        self.issue_interest(node, name, "retransmit", attempt)?;
        if self.is_open(record) {
            let first = self.log.requests[record].first_sent;
            self.sched.schedule(
                first + self.retx.interval * (u64::from(attempt) + 1),
                Action::Retransmit { node, request, attempt: attempt + 1 },
            )?;
        }
        Ok(())
    }

    fn issue_interest(&mut self, node: usize, name: Name, kind: &str, attempt: u8) -> Result<(), SimError> {
        let now = self.now();
        let nonce: u32 = self.node_rngs[node].random();
        if node == self.gateway {
            let m = self.minute();
            if let Some(slot) = self.log.gateway_load.get_mut(m) {
                slot.out_requests += 1;
            }
        }
        let outcome = self.nodes[node].on_interest(Face::Local, Interest { name: name.clone(), nonce }, now);
        if self.trace {
            let detail = format!("attempt={attempt};{}", notes_detail(&outcome));
            self.trace_line(node, kind, Some(&name), &detail);
        }
        self.handle_outcome(node, outcome)
    }

    fn handle_outcome(&mut self, node: usize, outcome: Outcome) -> Result<(), SimError> {
        for data in outcome.delivered {
            self.complete(node, data);
        }
        self.kick(node)
    }

    fn complete(&mut self, node: usize, data: Data) {
        let Some(list) = self.waiting[node].remove(&data.name) else {
            return;
        };
        let now = self.now();
        for open in list {
            let rec = &mut self.log.requests[open.record];
            rec.outcome = RequestOutcome::Completed(now);
            rec.bytes = data.payload.len();
        }
        if self.trace {
            self.trace_line(node, "request_done", Some(&data.name), "");
        }
    }

    fn kick(&mut self, node: usize) -> Result<(), SimError> {
        if !self.tx_armed[node] && !self.nodes[node].egress.is_empty() {
            self.tx_armed[node] = true;
            let now = self.now();
            self.sched.schedule(now, Action::MediaFree { node })?;
        }
        Ok(())
    }

    fn try_transmit(&mut self, node: usize) -> Result<(), SimError> {
        self.tx_armed[node] = false;
        let now = self.now();
        let Some((head, _)) = self.nodes[node].egress.peek() else {
            return Ok(());
        };
        let to = self.index.get(&head.to).copied().ok_or_else(|| {
            SimError::Config(format!("node {} forwards to unknown node {}", self.ids[node], head.to))
        })?;
        let key = link_key(node, to);
        let Some(model) = self.links.get(&key).map(|l| l.model) else {
            return Err(SimError::Config(format!("no link {} - {}", self.ids[node], self.ids[to])));
        };

        if self.busy_until[node] > now || self.busy_until[to] > now {
            let backoff = self.node_rngs[node].random_range(model.backoff_min..=model.backoff_max);
            self.nodes[node].counters.media_backoffs += 1;
            self.tx_armed[node] = true;
            self.sched.schedule(now + backoff, Action::MediaFree { node })?;
            return Ok(());
        }

        let (out, _) = self.nodes[node].egress.pop().expect("peeked");
        let end = now + model.base_delay;
        self.busy_until[node] = end;
        self.busy_until[to] = end;
        match out.packet {
            Packet::Interest(_) => self.nodes[node].counters.interests_out += 1,
            Packet::Data(_) => self.nodes[node].counters.data_out += 1,
        }

        let link = self.links.get_mut(&key).expect("link exists");
        let lost = link.rng.random::<f64>() < model.loss_prob;
        let jitter = model.jitter as i64;
        let offset = link.rng.random_range(-jitter..=jitter);
        if self.trace {
            let detail = format!("{}->{};until={};{}", out.packet.kind(), self.ids[to], end, if lost { "lost" } else { "ok" });
            self.trace_line(node, "tx", Some(out.packet.name()), &detail);
        }
        if lost {
            self.nodes[node].counters.link_losses += 1;
        } else {
            let at = (end as i64 + offset) as SimTime;
            self.sched.schedule(at, Action::LinkDeliver { from: node, to, packet: out.packet })?;
        }
        self.tx_armed[node] = true;
        self.sched.schedule(end, Action::MediaFree { node })
    }

    fn deliver(&mut self, from: usize, to: usize, packet: Packet) -> Result<(), SimError> {
        let now = self.now();
        let face = Face::Node(self.ids[from]);
        let name = packet.name().clone();
        let is_data = matches!(packet, Packet::Data(_));
        let outcome = match packet {
            Packet::Interest(i) => self.nodes[to].on_interest(face, i, now),
            Packet::Data(d) => {
                let rng = &mut self.node_rngs[to];
                self.nodes[to].on_data(face, d, now, rng)
            }
        };
        if is_data && to == self.gateway {
            let m = self.minute();
            if let Some(slot) = self.log.gateway_load.get_mut(m) {
                slot.in_responses += 1;
            }
        }
        if self.trace {
            let detail = format!("from={};{}", self.ids[from], notes_detail(&outcome));
            self.trace_line(to, if is_data { "rx_data" } else { "rx_interest" }, Some(&name), &detail);
        }
        self.handle_outcome(to, outcome)
    }
}

fn notes_detail(outcome: &Outcome) -> String {
    let parts: Vec<String> = outcome
        .notes
        .iter()
        .map(|n| match n {
            Note::CacheHit => "cache_hit".to_owned(),
            Note::DuplicateNonce => "dup_nonce".to_owned(),
            Note::Produced => "produced".to_owned(),
            Note::Aggregated => "aggregated".to_owned(),
            Note::Retransmitted => "retx".to_owned(),
            Note::PitDrop => "pit_drop".to_owned(),
            Note::PitEvicted(v) => format!("pit_evict:{v}"),
            Note::Forwarded(to) => format!("fwd:{to}"),
            Note::Reordered => "reordered".to_owned(),
            Note::NoRoute => "no_route".to_owned(),
            Note::QueueDrop => "queue_drop".to_owned(),
            Note::Cached => "cached".to_owned(),
            Note::CachedAfterEvicting(v) => format!("cached_evict:{v}"),
            Note::CacheRejected => "cache_reject".to_owned(),
            Note::CacheSkipped => "cache_skip".to_owned(),
            Note::PitlessCached => "pitless_cached".to_owned(),
            Note::Unsolicited => "unsolicited".to_owned(),
        })
        .collect();
    if parts.is_empty() {
        "-".to_owned()
    } else {
        parts.join(",")
    }
}

/// Executes one run to completion.
pub fn run(config: SimConfig) -> Result<MetricsLog, SimError> {
    Simulation::new(config)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forwarder::FibEntry;
    use crate::metrics::{success_by_rank, Traffic};
    use crate::names::parse_name;

    #[test]
    fn scheduler_orders_by_time_then_seq() {
        let mut s = Scheduler::new();
        s.schedule(5, "A").unwrap();
        s.schedule(5, "B").unwrap();
        s.schedule(1, "C").unwrap();
        let order: Vec<_> = std::iter::from_fn(|| s.pop_until(100).map(|(_, x)| x)).collect();
        assert_eq!(order, vec!["C", "A", "B"]);
    }

    #[test]
    fn scheduling_in_the_past_aborts() {
        let mut s = Scheduler::new();
        s.schedule(4, ()).unwrap();
        s.pop_until(10);
        assert_eq!(s.schedule(3, ()), Err(SimError::Causality { at: 3, now: 4 }));
    }

    #[test]
    fn pop_respects_horizon() {
        let mut s = Scheduler::new();
        s.schedule(11, ()).unwrap();
        assert!(s.pop_until(10).is_none());
        let mut empty: Scheduler<()> = Scheduler::new();
        assert!(empty.pop_until(10).is_none());
    }

    fn two_node(loss: f64, trace: bool) -> SimConfig {
        let mut gw = NodeConfig::new(NodeId(0));
        gw.produces = vec![parse_name("/a").unwrap()];
        let mut leaf = NodeConfig::new(NodeId(1));
        leaf.fib = vec![FibEntry {
            prefix: parse_name("/a").unwrap(),
            next_hop: NodeId(0),
        }];
        SimConfig {
            seed: 7,
            duration: 60_000,
            gateway: NodeId(0),
            nodes: vec![gw, leaf],
            links: vec![LinkSpec {
                a: NodeId(0),
                b: NodeId(1),
                model: LinkModel {
                    loss_prob: loss,
                    ..LinkModel::default()
                },
            }],
            requests: vec![AppRequest {
                at: 100,
                node: NodeId(1),
                name: parse_name("/a/1/0").unwrap(),
            }],
            retx: RetxPolicy::default(),
            trace,
            label: RunLabel::default(),
        }
    }

    #[test]
    fn single_round_trip() {
        let log = run(two_node(0.0, false)).unwrap();
        assert_eq!(log.requests.len(), 1);
        let ttc = log.requests[0].ttc().unwrap();
        // two transmissions of 5 ms each, +-2 ms jitter per hop
        assert!((6..=14).contains(&ttc), "ttc {ttc}");
        assert_eq!(success_by_rank(&log, Traffic::Actuator), vec![(1, 100.0)]);
    }

    #[test]
    fn total_loss_fails_after_retries() {
        let log = run(two_node(1.0, false)).unwrap();
        let r = &log.requests[0];
        assert_eq!(r.outcome, RequestOutcome::Failed(100 + 10_000));
        assert_eq!(r.retransmissions, 4);
    }

    #[test]
    fn open_request_at_cutoff_is_censored() {
        let mut cfg = two_node(1.0, false);
        cfg.duration = 5_000;
        let log = run(cfg).unwrap();
        assert_eq!(log.requests[0].outcome, RequestOutcome::Censored);
    }

    #[test]
    fn identical_configs_give_identical_logs() {
        let a = run(two_node(0.3, true)).unwrap();
        let b = run(two_node(0.3, true)).unwrap();
        assert_eq!(a, b);
        assert!(!a.trace.is_empty());
    }

    #[test]
    fn disconnected_requester_is_rejected() {
        let mut cfg = two_node(0.0, false);
        cfg.links.clear();
        assert!(matches!(run(cfg), Err(SimError::Config(_))));
    }

    #[test]
    fn missing_route_is_rejected() {
        let mut cfg = two_node(0.0, false);
        cfg.requests[0].name = parse_name("/zzz/1").unwrap();
        assert!(matches!(run(cfg), Err(SimError::Config(_))));
    }
}
