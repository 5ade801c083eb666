//! Per-request and per-node records collected during a run, the derived
//! measurement families (success rate, goodput, time to completion, cache
//! hits) and their CSV export.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::forwarder::{NodeId, SimTime};
use crate::names::{Name, ServiceLevel};

/// Which application flow a request belongs to, derived from the name's
/// first component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Traffic {
    /// `/a/...`: device-initiated requests answered by the gateway.
    Actuator,
    /// `/s/...`: sensor readings polled by the gateway.
    Gateway,
}

impl Traffic {
    pub const ALL: [Traffic; 2] = [Traffic::Actuator, Traffic::Gateway];

    pub fn of(name: &Name) -> Option<Traffic> {
        match name.component(0)? {
            b"a" => Some(Traffic::Actuator),
            b"s" => Some(Traffic::Gateway),
            _ => None,
        }
    }

    pub fn prefix(&self) -> &'static str {
        match self {
            Traffic::Actuator => "a",
            Traffic::Gateway => "s",
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Traffic::Actuator => "actuator",
            Traffic::Gateway => "gateway",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestOutcome {
    Completed(SimTime),
    Failed(SimTime),
    /// Still open when the run ended.
    Censored,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestRecord {
    pub requester: NodeId,
    pub rank: u32,
    pub name: Name,
    pub level: ServiceLevel,
    pub first_sent: SimTime,
    pub outcome: RequestOutcome,
    pub retransmissions: u8,
    pub bytes: usize,
}

impl RequestRecord {
    pub fn traffic(&self) -> Option<Traffic> {
        Traffic::of(&self.name)
    }

    pub fn ttc(&self) -> Option<SimTime> {
        match self.outcome {
            RequestOutcome::Completed(at) => Some(at - self.first_sent),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrafficCounters {
    pub interests_in: u64,
    pub cs_hits: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeCounters {
    /// Interests received from neighbors (local application requests excluded).
    pub interests_in: u64,
    pub interests_out: u64,
    pub data_in: u64,
    pub data_out: u64,
    pub pit_drops: u64,
    pub pit_evictions: u64,
    /// Remote Interests answered from the CS.
    pub cs_hits: u64,
    pub local_cs_hits: u64,
    pub cs_evictions: u64,
    pub cs_rejected: u64,
    pub queue_drops: u64,
    pub pitless_cached: u64,
    pub unsolicited_drops: u64,
    pub aggregated: u64,
    pub retransmitted: u64,
    pub dup_drops: u64,
    pub no_route: u64,
    pub produced: u64,
    pub media_backoffs: u64,
    pub link_losses: u64,
    pub by_traffic: BTreeMap<String, TrafficCounters>,
}

impl NodeCounters {
    pub fn traffic_mut(&mut self, name: &Name) -> &mut TrafficCounters {
        let key = name
            .component(0)
            .map(|c| String::from_utf8_lossy(c).into_owned())
            .unwrap_or_default();
        self.by_traffic.entry(key).or_default()
    }

    pub fn traffic(&self, traffic: Traffic) -> TrafficCounters {
        self.by_traffic.get(traffic.prefix()).copied().unwrap_or_default()
    }

    /// Named counters in stable export order.
    pub fn named(&self) -> Vec<(String, u64)> {
        let mut out: Vec<(String, u64)> = [
            ("interests_in", self.interests_in),
            ("interests_out", self.interests_out),
            ("data_in", self.data_in),
            ("data_out", self.data_out),
            ("pit_drops", self.pit_drops),
            ("pit_evictions", self.pit_evictions),
            ("cs_hits", self.cs_hits),
            ("local_cs_hits", self.local_cs_hits),
            ("cs_evictions", self.cs_evictions),
            ("cs_rejected", self.cs_rejected),
            ("queue_drops", self.queue_drops),
            ("pitless_cached", self.pitless_cached),
            ("unsolicited_drops", self.unsolicited_drops),
            ("aggregated", self.aggregated),
            ("retransmitted", self.retransmitted),
            ("dup_drops", self.dup_drops),
            ("no_route", self.no_route),
            ("produced", self.produced),
            ("media_backoffs", self.media_backoffs),
            ("link_losses", self.link_losses),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v))
        .collect();
        for (prefix, c) in &self.by_traffic {
            out.push((format!("interests_in[{prefix}]"), c.interests_in));
            out.push((format!("cs_hits[{prefix}]"), c.cs_hits));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MinuteLoad {
    pub out_requests: u64,
    pub in_responses: u64,
}

/// Run parameters echoed into the log and the CSV files.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunLabel {
    pub scenario: String,
    pub pit_size: usize,
    pub gateway_pit: usize,
    pub cs_size: usize,
    pub qos: String,
    pub cache: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeInfo {
    pub id: NodeId,
    pub rank: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub label: RunLabel,
    pub duration: SimTime,
    pub gateway: Option<NodeId>,
    pub nodes: Vec<NodeInfo>,
    pub requests: Vec<RequestRecord>,
    /// Indexed like `nodes`.
    pub counters: Vec<NodeCounters>,
    pub gateway_load: Vec<MinuteLoad>,
    /// Event trace lines, empty unless tracing was enabled.
    pub trace: Vec<String>,
}

impl MetricsLog {
    pub fn duration_minutes(&self) -> f64 {
        self.duration as f64 / 60_000.0
    }

    pub fn rank_of(&self, id: NodeId) -> Option<u32> {
        self.nodes.iter().find(|n| n.id == id).map(|n| n.rank)
    }

    pub fn counters_of(&self, id: NodeId) -> Option<&NodeCounters> {
        let idx = self.nodes.iter().position(|n| n.id == id)?;
        self.counters.get(idx)
    }

    fn records(&self, traffic: Traffic) -> impl Iterator<Item = &RequestRecord> {
        self.requests
            .iter()
            .filter(move |r| r.traffic() == Some(traffic))
    }

    /// Rank used to bucket a request: the requester's rank for actuator
    /// traffic, the polled sensor's rank for gateway traffic.
    pub fn subject_rank(&self, record: &RequestRecord) -> u32 {
        match record.traffic() {
            Some(Traffic::Gateway) => record
                .name
                .component(1)
                .and_then(|c| std::str::from_utf8(c).ok())
                .and_then(|s| s.parse().ok())
                .and_then(|id| self.rank_of(NodeId(id)))
                .unwrap_or(record.rank),
            _ => record.rank,
        }
    }
}

/// Success percentage per rank; censored requests are excluded and empty
/// buckets omitted. Averages are request-weighted.
pub fn success_by_rank(log: &MetricsLog, traffic: Traffic) -> Vec<(u32, f64)> {
    let mut buckets: BTreeMap<u32, (u64, u64)> = BTreeMap::new();
    for r in log.records(traffic) {
        let slot = buckets.entry(log.subject_rank(r)).or_default();
        match r.outcome {
            RequestOutcome::Completed(_) => slot.0 += 1,
            RequestOutcome::Failed(_) => slot.1 += 1,
            RequestOutcome::Censored => {}
        }
    }
    buckets
        .into_iter()
        .filter(|(_, (ok, failed))| ok + failed > 0)
        .map(|(rank, (ok, failed))| (rank, 100.0 * ok as f64 / (ok + failed) as f64))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoodputScope {
    /// KiB completed per simulated minute.
    Minute,
    /// KiB/min over the whole run, per subject rank.
    Rank,
}

pub fn goodput_series(log: &MetricsLog, traffic: Traffic, scope: GoodputScope) -> Vec<(u64, f64)> {
    match scope {
        GoodputScope::Minute => {
            let minutes = log.duration.div_ceil(60_000) as usize;
            let mut bytes = vec![0usize; minutes];
            for r in log.records(traffic) {
                if let RequestOutcome::Completed(at) = r.outcome {
                    let m = ((at / 60_000) as usize).min(minutes.saturating_sub(1));
                    bytes[m] += r.bytes;
                }
            }
            bytes
                .into_iter()
                .enumerate()
                .map(|(m, b)| (m as u64, b as f64 / 1024.0))
                .collect()
        }
        GoodputScope::Rank => {
            let window = log.duration_minutes();
            let mut bytes: BTreeMap<u32, usize> = BTreeMap::new();
            for r in log.records(traffic) {
                let slot = bytes.entry(log.subject_rank(r)).or_default();
                if r.ttc().is_some() {
                    *slot += r.bytes;
                }
            }
            bytes
                .into_iter()
                .map(|(rank, b)| {
                    let kib = b as f64 / 1024.0;
                    (u64::from(rank), if window > 0.0 { kib / window } else { 0.0 })
                })
                .collect()
        }
    }
}

fn completion_times(
    log: &MetricsLog,
    traffic: Traffic,
    level: Option<ServiceLevel>,
    min_rank: u32,
) -> (Vec<SimTime>, usize) {
    let mut done = Vec::new();
    let mut total = 0;
    for r in log.records(traffic) {
        if level.is_some_and(|l| l != r.level) || log.subject_rank(r) < min_rank {
            continue;
        }
        match r.outcome {
            RequestOutcome::Completed(_) => {
                done.push(r.ttc().unwrap_or(0));
                total += 1;
            }
            RequestOutcome::Failed(_) => total += 1,
            RequestOutcome::Censored => {}
        }
    }
    done.sort_unstable();
    (done, total)
}

/// Empirical CDF of time to completion in seconds. Failed requests count in
/// the denominator, so the curve plateaus at the success fraction.
pub fn ttc_cdf(log: &MetricsLog, traffic: Traffic, level: Option<ServiceLevel>) -> Vec<(f64, f64)> {
    let (done, total) = completion_times(log, traffic, level, 0);
    done.iter()
        .enumerate()
        .map(|(i, t)| (*t as f64 / 1000.0, (i + 1) as f64 / total as f64))
        .collect()
}

/// Median time to completion (ms) of completed requests at `min_rank` or beyond.
pub fn median_ttc(log: &MetricsLog, traffic: Traffic, level: Option<ServiceLevel>, min_rank: u32) -> Option<f64> {
    let (done, _) = completion_times(log, traffic, level, min_rank);
    median(&done)
}

pub(crate) fn median(sorted: &[SimTime]) -> Option<f64> {
    match sorted.len() {
        0 => None,
        n if n % 2 == 1 => Some(sorted[n / 2] as f64),
        n => Some((sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0),
    }
}

/// Percentage of neighbor Interests for `traffic` answered from a Content Store.
pub fn cache_hit_ratio(log: &MetricsLog, traffic: Traffic) -> f64 {
    let (hits, interests) = log.counters.iter().fold((0u64, 0u64), |(h, i), c| {
        let t = c.traffic(traffic);
        (h + t.cs_hits, i + t.interests_in)
    });
    if interests == 0 {
        0.0
    } else {
        100.0 * hits as f64 / interests as f64
    }
}

#[derive(Debug, Error)]
#[error("writing {path}: {source}")]
pub struct ExportError {
    pub path: PathBuf,
    #[source]
    pub source: io::Error,
}

pub const SUCCESS_HEADER: [&str; 5] = ["rank", "pit_size", "cs_size", "traffic", "success_rate_pct"];
pub const GATEWAY_LOAD_HEADER: [&str; 3] = ["minute", "out_requests", "in_responses"];
pub const TTC_HEADER: [&str; 4] = ["traffic", "rank", "class", "ttc_ms"];
pub const CACHE_HITS_HEADER: [&str; 3] = ["cs_size", "strategy", "hit_ratio_pct"];
pub const COUNTERS_HEADER: [&str; 3] = ["node", "counter", "value"];

pub fn fmt_pct(v: f64) -> String {
    format!("{v:.3}")
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), ExportError> {
    let wrap = |source: io::Error| ExportError {
        path: path.to_owned(),
        source,
    };
    let file = File::create(path).map_err(wrap)?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    let to_io = |e: csv::Error| wrap(io::Error::other(e));
    w.write_record(header).map_err(to_io)?;
    for row in rows {
        w.write_record(row).map_err(to_io)?;
    }
    w.flush().map_err(wrap)
}

/// Writes the five per-run CSV files into `out_dir` and returns their paths.
pub fn export_csv(log: &MetricsLog, out_dir: &Path) -> Result<Vec<PathBuf>, ExportError> {
    std::fs::create_dir_all(out_dir).map_err(|source| ExportError {
        path: out_dir.to_owned(),
        source,
    })?;
    let label = &log.label;
    let mut written = Vec::new();

    let mut rows = Vec::new();
    for traffic in Traffic::ALL {
        for (rank, pct) in success_by_rank(log, traffic) {
            rows.push(vec![
                rank.to_string(),
                label.pit_size.to_string(),
                label.cs_size.to_string(),
                traffic.label().to_owned(),
                fmt_pct(pct),
            ]);
        }
    }
    let path = out_dir.join("success_by_rank.csv");
    write_csv(&path, &SUCCESS_HEADER, &rows)?;
    written.push(path);

    let rows: Vec<Vec<String>> = log
        .gateway_load
        .iter()
        .enumerate()
        .map(|(m, l)| vec![m.to_string(), l.out_requests.to_string(), l.in_responses.to_string()])
        .collect();
    let path = out_dir.join("gateway_load.csv");
    write_csv(&path, &GATEWAY_LOAD_HEADER, &rows)?;
    written.push(path);

    let rows: Vec<Vec<String>> = log
        .requests
        .iter()
        .filter_map(|r| {
            let ttc = r.ttc()?;
            Some(vec![
                r.traffic()?.label().to_owned(),
                log.subject_rank(r).to_string(),
                r.level.label().to_owned(),
                ttc.to_string(),
            ])
        })
        .collect();
    let path = out_dir.join("ttc.csv");
    write_csv(&path, &TTC_HEADER, &rows)?;
    written.push(path);

    let rows = if log.requests.is_empty() && log.counters.is_empty() {
        Vec::new()
    } else {
        vec![vec![
            label.cs_size.to_string(),
            label.cache.clone(),
            fmt_pct(cache_hit_ratio(log, Traffic::Actuator)),
        ]]
    };
    let path = out_dir.join("cache_hits.csv");
    write_csv(&path, &CACHE_HITS_HEADER, &rows)?;
    written.push(path);

    let mut rows = Vec::new();
    for (info, counters) in log.nodes.iter().zip(&log.counters) {
        for (name, value) in counters.named() {
            rows.push(vec![info.id.to_string(), name, value.to_string()]);
        }
    }
    let path = out_dir.join("counters.csv");
    write_csv(&path, &COUNTERS_HEADER, &rows)?;
    written.push(path);

    if !log.trace.is_empty() {
        let path = out_dir.join("trace.txt");
        let wrap = |source: io::Error| ExportError {
            path: path.clone(),
            source,
        };
        let mut f = io::BufWriter::new(File::create(&path).map_err(wrap)?);
        for line in &log.trace {
            writeln!(f, "{line}").map_err(wrap)?;
        }
        f.flush().map_err(wrap)?;
        written.push(path);
    }
    Ok(written)
}

/// Requests issued per requester, split by outcome: (completed, failed, censored).
pub fn outcome_totals(log: &MetricsLog) -> HashMap<NodeId, (u64, u64, u64)> {
    let mut out: HashMap<NodeId, (u64, u64, u64)> = HashMap::new();
    for r in &log.requests {
        let slot = out.entry(r.requester).or_default();
        match r.outcome {
            RequestOutcome::Completed(_) => slot.0 += 1,
            RequestOutcome::Failed(_) => slot.1 += 1,
            RequestOutcome::Censored => slot.2 += 1,
        }
    }
    out
}
