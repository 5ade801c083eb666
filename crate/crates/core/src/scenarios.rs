//! DODAG topology and the two traffic scenarios.
//!
//! Scenario 1 mixes per-device sensor polling by the gateway with per-device
//! actuator requests. Scenario 2 keeps the sensor polling but lets every
//! actuator request join one of five groups, whose state names are shared by
//! all members within one actuator period.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::engine::{AppRequest, LinkModel, LinkSpec, RetxPolicy, SimConfig};
use crate::forwarder::{CacheDecision, FibEntry, NodeConfig, NodeId, RateLimit, SimTime};
use crate::metrics::RunLabel;
use crate::names::{ClassTable, Name, ServiceLevel};
use crate::rng;

pub const ACTUATOR_PREFIX: &str = "a";
pub const SENSOR_PREFIX: &str = "s";

const BUILTIN_TOPOLOGY: &str = include_str!("../data/grenoble31.topo");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("no `gateway <id>` line")]
    MissingGateway,
    #[error("more than one gateway line")]
    DuplicateGateway,
    #[error("node {0} has more than one parent")]
    DuplicateParent(NodeId),
    #[error("gateway {0} cannot have a parent")]
    GatewayHasParent(NodeId),
    #[error("node {0} does not lead to the gateway")]
    Detached(NodeId),
}

/// Tree rooted at the gateway; every other node has exactly one parent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    gateway: NodeId,
    parent: BTreeMap<NodeId, NodeId>,
    rank: BTreeMap<NodeId, u32>,
}

impl Topology {
    /// The 31-node testbed tree: two wings, ranks up to 12.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_TOPOLOGY).expect("built-in topology is valid")
    }

    pub fn builtin_text() -> &'static str {
        BUILTIN_TOPOLOGY
    }

    /// Parses `child parent` lines plus one `gateway <id>` line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, TopologyError> {
        let mut gateway = None;
        let mut parent = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let id = |s: &str| {
                s.parse::<u32>().map(NodeId).map_err(|_| TopologyError::Syntax {
                    line: line_no,
                    msg: format!("bad node id `{s}`"),
                })
            };
            match fields.as_slice() {
                ["gateway", g] => {
                    if gateway.replace(id(g)?).is_some() {
                        return Err(TopologyError::DuplicateGateway);
                    }
                }
                [child, par] => {
                    let (c, p) = (id(child)?, id(par)?);
                    if c == p {
                        return Err(TopologyError::Syntax {
                            line: line_no,
                            msg: format!("node {c} is its own parent"),
                        });
                    }
                    if parent.insert(c, p).is_some() {
                        return Err(TopologyError::DuplicateParent(c));
                    }
                }
                _ => {
                    return Err(TopologyError::Syntax {
                        line: line_no,
                        msg: "expected `child parent` or `gateway <id>`".to_owned(),
                    })
                }
            }
        }
        let gateway = gateway.ok_or(TopologyError::MissingGateway)?;
        if parent.contains_key(&gateway) {
            return Err(TopologyError::GatewayHasParent(gateway));
        }

        let mut rank = BTreeMap::from([(gateway, 0u32)]);
        for &start in parent.keys() {
            let mut chain = Vec::new();
            let mut cur = start;
            let base = loop {
                if let Some(&r) = rank.get(&cur) {
                    break r;
                }
                if chain.len() > parent.len() {
                    return Err(TopologyError::Detached(start));
                }
                chain.push(cur);
                cur = *parent.get(&cur).ok_or(TopologyError::Detached(start))?;
            };
            for (k, node) in chain.iter().rev().enumerate() {
                rank.insert(*node, base + k as u32 + 1);
            }
        }
        Ok(Topology {
            gateway,
            parent,
            rank,
        })
    }

    pub fn gateway(&self) -> NodeId {
        self.gateway
    }

    /// All nodes, gateway first, then ascending id.
    pub fn nodes(&self) -> Vec<NodeId> {
        std::iter::once(self.gateway)
            .chain(self.rank.keys().copied().filter(|n| *n != self.gateway))
            .collect()
    }

    /// Every node except the gateway.
    pub fn devices(&self) -> Vec<NodeId> {
        self.parent.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.rank.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rank.is_empty()
    }

    pub fn parent(&self, node: NodeId) -> Option<NodeId> {
        self.parent.get(&node).copied()
    }

    pub fn rank(&self, node: NodeId) -> Option<u32> {
        self.rank.get(&node).copied()
    }

    pub fn max_rank(&self) -> u32 {
        self.rank.values().copied().max().unwrap_or(0)
    }

    pub fn children(&self, node: NodeId) -> Vec<NodeId> {
        self.parent
            .iter()
            .filter(|(_, p)| **p == node)
            .map(|(c, _)| *c)
            .collect()
    }

    /// Nodes from `node` up to and including the gateway.
    pub fn path_to_gateway(&self, node: NodeId) -> Vec<NodeId> {
        let mut path = vec![node];
        let mut cur = node;
        while let Some(p) = self.parent(cur) {
            path.push(p);
            cur = p;
        }
        path
    }

    /// Fraction of non-gateway nodes whose rank is at most `max`.
    pub fn fraction_within(&self, max: u32) -> f64 {
        let devices = self.parent.len();
        if devices == 0 {
            return 0.0;
        }
        let near = self.parent.keys().filter(|n| self.rank[n] <= max).count();
        near as f64 / devices as f64
    }

    /// Depth of each gateway subtree, keyed by the gateway child that roots it.
    pub fn wing_depths(&self) -> BTreeMap<NodeId, u32> {
        let mut depth = BTreeMap::new();
        for node in self.parent.keys() {
            let path = self.path_to_gateway(*node);
            let root = path[path.len() - 2];
            let d = depth.entry(root).or_insert(0);
            *d = (*d).max(self.rank[node]);
        }
        depth
    }

    pub fn links(&self, model: LinkModel) -> Vec<LinkSpec> {
        self.parent
            .iter()
            .map(|(c, p)| LinkSpec {
                a: *c,
                b: *p,
                model,
            })
            .collect()
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "gateway {}", self.gateway)?;
        for (c, p) in &self.parent {
            writeln!(f, "{c} {p}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    S1,
    S2,
}

impl Scenario {
    pub fn label(&self) -> &'static str {
        match self {
            Scenario::S1 => "s1",
            Scenario::S2 => "s2",
        }
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "s1" => Ok(Scenario::S1),
            "s2" => Ok(Scenario::S2),
            other => Err(format!("unknown scenario `{other}` (expected s1 or s2)")),
        }
    }
}

/// Which service level the actuator prefix is marked with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QosMode {
    Regular,
    PromptReliable,
    ReliableOnly,
    PromptOnly,
}

impl QosMode {
    pub const ALL: [QosMode; 4] = [
        QosMode::Regular,
        QosMode::PromptReliable,
        QosMode::ReliableOnly,
        QosMode::PromptOnly,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            QosMode::Regular => "regular",
            QosMode::PromptReliable => "prompt_reliable",
            QosMode::ReliableOnly => "reliable_only",
            QosMode::PromptOnly => "prompt_only",
        }
    }

    pub fn enabled(&self) -> bool {
        *self != QosMode::Regular
    }

    pub fn actuator_level(&self) -> ServiceLevel {
        match self {
            QosMode::Regular => ServiceLevel::REGULAR,
            QosMode::PromptReliable => ServiceLevel::PROMPT_RELIABLE,
            QosMode::ReliableOnly => ServiceLevel::RELIABLE,
            QosMode::PromptOnly => ServiceLevel::PROMPT,
        }
    }
}

impl FromStr for QosMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        QosMode::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| format!("unknown qos mode `{s}`"))
    }
}

fn prefix(component: &str) -> Name {
    Name::from_components([component]).expect("nonempty")
}

/// Class table installed at every node: the actuator prefix carries the
/// configured level, sensor traffic stays unmarked.
pub fn default_class_table(qos: QosMode) -> ClassTable {
    match qos {
        QosMode::Regular => ClassTable::new(),
        mode => ClassTable::from_entries([(prefix(ACTUATOR_PREFIX), mode.actuator_level())])
            .expect("single entry"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrafficSpec {
    pub scenario: Scenario,
    pub sensor_period: SimTime,
    pub sensor_jitter: SimTime,
    pub actuator_period: SimTime,
    pub actuator_jitter: SimTime,
    pub group_count: u32,
    /// Upper bound on requests per actuator.
    pub rounds: Option<u32>,
    pub actuator_start: SimTime,
}

impl TrafficSpec {
    pub fn new(scenario: Scenario) -> Self {
        TrafficSpec {
            scenario,
            sensor_period: 10_000,
            sensor_jitter: 2_000,
            actuator_period: 5_000,
            actuator_jitter: 1_000,
            group_count: 5,
            rounds: match scenario {
                Scenario::S1 => None,
                Scenario::S2 => Some(240),
            },
            actuator_start: 0,
        }
    }
}

fn periodic_times<R: Rng>(rng: &mut R, start: SimTime, period: SimTime, jitter: SimTime, until: SimTime, cap: Option<u32>) -> Vec<SimTime> {
    let mut times = Vec::new();
    let mut t = start + rng.random_range(0..period);
    while t < until && cap.is_none_or(|c| times.len() < c as usize) {
        times.push(t);
        let delta = period as i64 + rng.random_range(-(jitter as i64)..=jitter as i64);
        t += delta as SimTime;
    }
    times
}

/// Gateway polls every device for `/s/<id>/<seq>` on its jittered period.
pub fn schedule_sensor_polling(topology: &Topology, spec: &TrafficSpec, seed: u64, until: SimTime) -> Vec<AppRequest> {
    let mut out = Vec::new();
    for dev in topology.devices() {
        let mut rng = rng::stream(seed, "sensor", &[u64::from(dev.0)]);
        let base = prefix(SENSOR_PREFIX).child(dev.to_string());
        for (seq, at) in periodic_times(&mut rng, 0, spec.sensor_period, spec.sensor_jitter, until, None)
            .into_iter()
            .enumerate()
        {
            out.push(AppRequest {
                at,
                node: topology.gateway(),
                name: base.child(seq.to_string()),
            });
        }
    }
    out.sort_by_key(|r| (r.at, r.node));
    out
}

/// Every device requests its actuator state from the gateway.
///
/// Scenario 1 names are `/a/<id>/<seq>`. Scenario 2 names are
/// `/a/g<group>/<epoch>` with a uniformly drawn group per request and the
/// epoch counted on the actuator-period grid.
pub fn schedule_actuator_requests(topology: &Topology, spec: &TrafficSpec, seed: u64, until: SimTime) -> Vec<AppRequest> {
    let mut out = Vec::new();
    for dev in topology.devices() {
        let mut rng = rng::stream(seed, "actuator", &[u64::from(dev.0)]);
        let times = periodic_times(
            &mut rng,
            spec.actuator_start,
            spec.actuator_period,
            spec.actuator_jitter,
            until,
            spec.rounds,
        );
        for (seq, at) in times.into_iter().enumerate() {
            let name = match spec.scenario {
                Scenario::S1 => prefix(ACTUATOR_PREFIX).child(dev.to_string()).child(seq.to_string()),
                Scenario::S2 => {
                    let group = rng.random_range(1..=spec.group_count);
                    let epoch = at / spec.actuator_period;
                    prefix(ACTUATOR_PREFIX)
                        .child(format!("g{group}"))
                        .child(epoch.to_string())
                }
            };
            out.push(AppRequest { at, node: dev, name });
        }
    }
    out.sort_by_key(|r| (r.at, r.node));
    out
}

/// Full parameter set for one scenario run.
#[derive(Debug, Clone)]
pub struct ScenarioParams {
    pub topology: Topology,
    pub traffic: TrafficSpec,
    pub pit_size: usize,
    pub gateway_pit: usize,
    pub cs_size: usize,
    pub qos: QosMode,
    pub cache: CacheDecision,
    pub seed: u64,
    pub duration: SimTime,
    pub link: LinkModel,
    pub retx: RetxPolicy,
    pub pit_lifetime: SimTime,
    pub egress_depth: usize,
    pub pitless_limit: RateLimit,
    pub payload_size: usize,
    pub trace: bool,
}

impl ScenarioParams {
    pub fn new(scenario: Scenario) -> Self {
        ScenarioParams {
            topology: Topology::builtin(),
            traffic: TrafficSpec::new(scenario),
            pit_size: 5,
            gateway_pit: 50,
            cs_size: 5,
            qos: QosMode::Regular,
            cache: CacheDecision::Always,
            seed: 1,
            duration: 18 * 60_000,
            link: LinkModel::default(),
            retx: RetxPolicy::default(),
            pit_lifetime: NodeConfig::DEFAULT_PIT_LIFETIME,
            egress_depth: NodeConfig::DEFAULT_EGRESS_DEPTH,
            pitless_limit: RateLimit::default(),
            payload_size: NodeConfig::DEFAULT_PAYLOAD,
            trace: false,
        }
    }

    pub fn label(&self) -> RunLabel {
        RunLabel {
            scenario: self.traffic.scenario.label().to_owned(),
            pit_size: self.pit_size,
            gateway_pit: self.gateway_pit,
            cs_size: self.cs_size,
            qos: self.qos.label().to_owned(),
            cache: self.cache.label().to_owned(),
            seed: self.seed,
        }
    }
}

/// FIB entries per node: the actuator prefix points at the parent, and every
/// ancestor of a device routes that device's sensor prefix one hop down.
pub fn build_fibs(topology: &Topology) -> BTreeMap<NodeId, Vec<FibEntry>> {
    let mut fibs: BTreeMap<NodeId, Vec<FibEntry>> = topology.nodes().into_iter().map(|n| (n, Vec::new())).collect();
    for dev in topology.devices() {
        let parent = topology.parent(dev).expect("device has parent");
        fibs.entry(dev).or_default().push(FibEntry {
            prefix: prefix(ACTUATOR_PREFIX),
            next_hop: parent,
        });
        let sensor = prefix(SENSOR_PREFIX).child(dev.to_string());
        let path = topology.path_to_gateway(dev);
        for pair in path.windows(2) {
            fibs.entry(pair[1]).or_default().push(FibEntry {
                prefix: sensor.clone(),
                next_hop: pair[0],
            });
        }
    }
    fibs
}

pub fn build_config(params: &ScenarioParams) -> SimConfig {
    let topo = &params.topology;
    let gateway = topo.gateway();
    let table = default_class_table(params.qos);
    let mut fibs = build_fibs(topo);
    let nodes = topo
        .nodes()
        .into_iter()
        .map(|id| {
            let mut cfg = NodeConfig::new(id);
            cfg.class_table = table.clone();
            cfg.qos_enabled = params.qos.enabled();
            cfg.fib = fibs.remove(&id).unwrap_or_default();
            cfg.produces = if id == gateway {
                vec![prefix(ACTUATOR_PREFIX)]
            } else {
                vec![prefix(SENSOR_PREFIX).child(id.to_string())]
            };
            cfg.pit_capacity = if id == gateway { params.gateway_pit } else { params.pit_size };
            cfg.pit_lifetime = params.pit_lifetime;
            cfg.cs_capacity = params.cs_size;
            cfg.cache = params.cache;
            cfg.egress_depth = params.egress_depth;
            cfg.pitless_limit = params.pitless_limit;
            cfg.payload_size = params.payload_size;
            cfg
        })
        .collect();

    let mut requests = schedule_sensor_polling(topo, &params.traffic, params.seed, params.duration);
    requests.extend(schedule_actuator_requests(topo, &params.traffic, params.seed, params.duration));

    SimConfig {
        seed: params.seed,
        duration: params.duration,
        gateway,
        nodes,
        links: topo.links(params.link),
        requests,
        retx: params.retx,
        trace: params.trace,
        label: params.label(),
    }
}

/// Names routable from `node` end at a producer after following FIB entries.
pub fn route(topology: &Topology, fibs: &BTreeMap<NodeId, Vec<FibEntry>>, from: NodeId, name: &Name) -> Option<Vec<NodeId>> {
    let producer = match name.component(0)? {
        b"a" => topology.gateway(),
        b"s" => {
            let id: u32 = std::str::from_utf8(name.component(1)?).ok()?.parse().ok()?;
            NodeId(id)
        }
        _ => return None,
    };
    let mut path = vec![from];
    let mut seen = BTreeSet::from([from]);
    let mut cur = from;
    while cur != producer {
        let next = fibs
            .get(&cur)?
            .iter()
            .filter(|e| e.prefix.is_prefix_of(name))
            .max_by_key(|e| e.prefix.len())?
            .next_hop;
        if !seen.insert(next) {
            return None;
        }
        path.push(next);
        cur = next;
    }
    Some(path)
}
