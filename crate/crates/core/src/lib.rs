//! Discrete-event simulator for NDN forwarding with per-prefix traffic
//! classes on a lossy multi-hop IoT tree.

pub mod engine;
pub mod forwarder;
pub mod metrics;
pub mod names;
pub mod rng;
pub mod scenarios;
pub mod sweep;

pub use engine::{run, SimConfig, SimError, Simulation};
pub use forwarder::{NodeId, SimTime};
pub use metrics::MetricsLog;
pub use names::{parse_name, ClassTable, Name, ServiceLevel};
pub use scenarios::{build_config, QosMode, Scenario, ScenarioParams, Topology};
