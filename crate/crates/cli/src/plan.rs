//! Experiment plans from command-line flags and an optional `key = value` file.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use clap::Parser;
use ndnqos::forwarder::CacheDecision;
use ndnqos::scenarios::{QosMode, Scenario, ScenarioParams, Topology, TopologyError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("{key}: {msg}")]
    Usage { key: String, msg: String },
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("topology {path}: {source}")]
    Topology {
        path: PathBuf,
        #[source]
        source: TopologyError,
    },
}

fn usage(key: &str, msg: impl Into<String>) -> PlanError {
    PlanError::Usage {
        key: key.to_owned(),
        msg: msg.into(),
    }
}

/// Run NDN QoS forwarding experiments on a simulated IoT tree.
#[derive(Debug, Default, Parser)]
#[command(name = "ndnqos", version)]
pub struct Args {
    /// Config file with `key = value` lines; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// s1 or s2.
    #[arg(long)]
    pub scenario: Option<String>,
    /// PIT capacity of non-gateway nodes (repeatable or comma-separated).
    #[arg(long = "pit-size", value_delimiter = ',')]
    pub pit_size: Vec<usize>,
    /// Content Store capacity (repeatable or comma-separated).
    #[arg(long = "cs-size", value_delimiter = ',')]
    pub cs_size: Vec<usize>,
    #[arg(long = "gateway-pit")]
    pub gateway_pit: Option<usize>,
    /// regular, prompt_reliable, reliable_only or prompt_only.
    #[arg(long)]
    pub qos: Option<String>,
    /// always or prob.
    #[arg(long)]
    pub cache: Option<String>,
    #[arg(long = "p-reg")]
    pub p_reg: Option<f64>,
    #[arg(long = "p-rel")]
    pub p_rel: Option<f64>,
    /// Master seed (repeatable or comma-separated).
    #[arg(long, value_delimiter = ',')]
    pub seed: Vec<u64>,
    #[arg(long = "duration-min")]
    pub duration_min: Option<u64>,
    /// Minute at which actuators start, or `none` to start all flows at once.
    #[arg(long)]
    pub warmup: Option<String>,
    /// Topology file of `child parent` lines plus `gateway <id>`.
    #[arg(long)]
    pub topology: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write an event trace per run.
    #[arg(long)]
    pub trace: bool,
    /// Parallel runs; defaults to the number of cores.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub scenario: Scenario,
    pub pit_sizes: Vec<usize>,
    pub cs_sizes: Vec<usize>,
    pub gateway_pit: usize,
    pub qos: QosMode,
    pub cache: CacheDecision,
    pub seeds: Vec<u64>,
    pub duration_min: u64,
    /// Actuator start minute; `None` starts every flow at time zero.
    pub warmup: Option<u64>,
    pub topology: Topology,
    pub topology_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub trace: bool,
    pub jobs: Option<usize>,
}

/// One point of the Cartesian product, with the directory it writes to.
#[derive(Debug, Clone)]
pub struct PlanPoint {
    pub slug: String,
    /// Slug without the seed; runs sharing it are aggregated together.
    pub config: String,
    pub params: ScenarioParams,
}

const KEYS: [&str; 15] = [
    "scenario",
    "pit-size",
    "cs-size",
    "gateway-pit",
    "qos",
    "cache",
    "p-reg",
    "p-rel",
    "seed",
    "duration-min",
    "warmup",
    "topology",
    "out",
    "trace",
    "jobs",
];

/// Parses `key = value` lines. Underscores in keys are accepted for hyphens.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>, PlanError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| usage(&format!("line {}", i + 1), "expected `key = value`"))?;
        let key = key.trim().replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            return Err(usage(&key, "unknown key"));
        }
        if out.insert(key.clone(), value.trim().to_owned()).is_some() {
            return Err(usage(&key, "given twice"));
        }
    }
    Ok(out)
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T, PlanError> {
    value
        .trim()
        .parse()
        .map_err(|_| usage(key, format!("invalid value `{value}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, PlanError> {
    value.split(',').map(|v| parse_one(key, v)).collect()
}

fn parse_warmup(value: &str) -> Result<Option<u64>, PlanError> {
    match value.trim() {
        "none" => Ok(None),
        v => parse_one("warmup", v).map(Some),
    }
}

impl ExperimentPlan {
    pub fn from_args(args: Args) -> Result<Self, PlanError> {
        let file = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|source| PlanError::Io {
                    path: path.clone(),
                    source,
                })?;
                parse_config_file(&text)?
            }
            None => BTreeMap::new(),
        };
        let get = |key: &str| file.get(key).map(String::as_str);

        let scenario = match args.scenario.as_deref().or(get("scenario")) {
            Some(v) => v.parse().map_err(|e: String| usage("scenario", e))?,
            None => Scenario::S1,
        };
        let pit_sizes = match (args.pit_size.is_empty(), get("pit-size")) {
            (false, _) => args.pit_size.clone(),
            (true, Some(v)) => parse_list("pit-size", v)?,
            (true, None) => vec![5],
        };
        let cs_sizes = match (args.cs_size.is_empty(), get("cs-size")) {
            (false, _) => args.cs_size.clone(),
            (true, Some(v)) => parse_list("cs-size", v)?,
            (true, None) => vec![5],
        };
        let gateway_pit = match args.gateway_pit {
            Some(v) => v,
            None => get("gateway-pit").map(|v| parse_one("gateway-pit", v)).transpose()?.unwrap_or(50),
        };
        let qos = match args.qos.as_deref().or(get("qos")) {
            Some(v) => v.parse().map_err(|e: String| usage("qos", e))?,
            None => QosMode::Regular,
        };
        let p_reg = match args.p_reg {
            Some(v) => v,
            None => get("p-reg").map(|v| parse_one("p-reg", v)).transpose()?.unwrap_or(0.3),
        };
        let p_rel = match args.p_rel {
            Some(v) => v,
            None => get("p-rel").map(|v| parse_one("p-rel", v)).transpose()?.unwrap_or(0.7),
        };
        let cache = match args.cache.as_deref().or(get("cache")).unwrap_or("always") {
            "always" => CacheDecision::Always,
            "prob" => CacheDecision::Probabilistic { p_reg, p_rel },
            other => return Err(usage("cache", format!("unknown strategy `{other}` (expected always or prob)"))),
        };
        let seeds = match (args.seed.is_empty(), get("seed")) {
            (false, _) => args.seed.clone(),
            (true, Some(v)) => parse_list("seed", v)?,
            (true, None) => vec![1],
        };
        let duration_min = match args.duration_min {
            Some(v) => v,
            None => get("duration-min").map(|v| parse_one("duration-min", v)).transpose()?.unwrap_or(18),
        };
        let warmup = match args.warmup.as_deref().or(get("warmup")) {
            Some(v) => parse_warmup(v)?,
            None => Some(8),
        };
        let topology_path = args.topology.clone().or_else(|| get("topology").map(PathBuf::from));
        let topology = match &topology_path {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|source| PlanError::Io {
                    path: path.clone(),
                    source,
                })?;
                Topology::parse(&text).map_err(|source| PlanError::Topology {
                    path: path.clone(),
                    source,
                })?
            }
            None => Topology::builtin(),
        };
        let out_dir = args
            .out
            .clone()
            .or_else(|| get("out").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("results"));
        let trace = args.trace || get("trace").map(|v| parse_one::<bool>("trace", v)).transpose()?.unwrap_or(false);
        let jobs = match args.jobs {
            Some(v) => Some(v),
            None => get("jobs").map(|v| parse_one("jobs", v)).transpose()?,
        };

        let plan = ExperimentPlan {
            scenario,
            pit_sizes,
            cs_sizes,
            gateway_pit,
            qos,
            cache,
            seeds,
            duration_min,
            warmup,
            topology,
            topology_path,
            out_dir,
            trace,
            jobs,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.pit_sizes.contains(&0) {
            return Err(usage("pit-size", "sizes must be positive"));
        }
        if self.cs_sizes.contains(&0) {
            return Err(usage("cs-size", "sizes must be positive"));
        }
        if self.gateway_pit == 0 {
            return Err(usage("gateway-pit", "size must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(usage("seed", "at least one seed is required"));
        }
        if self.duration_min == 0 {
            return Err(usage("duration-min", "duration must be positive"));
        }
        if self.jobs == Some(0) {
            return Err(usage("jobs", "must be positive"));
        }
        if let CacheDecision::Probabilistic { p_reg, p_rel } = self.cache {
            if !(0.0..=1.0).contains(&p_reg) {
                return Err(usage("p-reg", "probability must lie in [0, 1]"));
            }
            if !(0.0..=1.0).contains(&p_rel) {
                return Err(usage("p-rel", "probability must lie in [0, 1]"));
            }
            if p_reg > p_rel {
                return Err(usage("p-reg", format!("p-reg {p_reg} exceeds p-rel {p_rel}")));
            }
        }
        if let Some(w) = self.warmup {
            if w >= self.duration_min {
                return Err(usage("warmup", "actuators would never start"));
            }
        }
        Ok(())
    }

    fn dedup<T: Copy + PartialEq>(values: &[T]) -> Vec<T> {
        let mut out = Vec::new();
        for v in values {
            if !out.contains(v) {
                out.push(*v);
            }
        }
        out
    }

    /// Plan points in a fixed order: pit, cs, seed.
    pub fn points(&self) -> Vec<PlanPoint> {
        let mut out = Vec::new();
        for pit in Self::dedup(&self.pit_sizes) {
            for cs in Self::dedup(&self.cs_sizes) {
                let config = format!(
                    "{}-pit{pit}-gw{}-cs{cs}-{}-{}",
                    self.scenario.label(),
                    self.gateway_pit,
                    self.qos.label(),
                    self.cache.label()
                );
                for seed in Self::dedup(&self.seeds) {
                    let mut params = ScenarioParams::new(self.scenario);
                    params.topology = self.topology.clone();
                    params.pit_size = pit;
                    params.gateway_pit = self.gateway_pit;
                    params.cs_size = cs;
                    params.qos = self.qos;
                    params.cache = self.cache;
                    params.seed = seed;
                    params.duration = self.duration_min * 60_000;
                    params.traffic.actuator_start = self.warmup.unwrap_or(0) * 60_000;
                    params.trace = self.trace;
                    out.push(PlanPoint {
                        slug: format!("{config}-seed{seed}"),
                        config: config.clone(),
                        params,
                    });
                }
            }
        }
        out
    }
}

/// Parses flags (with the optional `--config` file) into a validated plan.
pub fn parse_plan<I, T>(args: I) -> Result<ExperimentPlan, ParseFailure>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = Args::try_parse_from(args).map_err(ParseFailure::Clap)?;
    ExperimentPlan::from_args(args).map_err(ParseFailure::Plan)
}

#[derive(Debug, Error)]
pub enum ParseFailure {
    #[error(transparent)]
    Clap(clap::Error),
    #[error(transparent)]
    Plan(PlanError),
}
