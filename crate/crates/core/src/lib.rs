//! Deterministic discrete-event simulator of an infrastructure-less vehicular
//! traffic-management protocol.
//!
//! Vehicles exchange one-hop beacons, rank themselves by egocentric
//! betweenness blended with a two-ray link-quality score, funnel road-speed
//! reports toward local rank maxima, classify congestion by level of service,
//! spread the resulting knowledge with zone-of-preference suppression, and
//! reroute altruistically by picking the minimum-entropy candidate route.
//!
//! The crate is organized bottom-up:
//!
//! - [`road_network`]: graph, routing, popularity weights and route entropy
//! - [`mobility`]: Krauss car following, route progress, CO₂ proxy
//! - [`radio`]: two-ray path loss, broadcast medium, CSMA, zone of preference
//! - [`ranking`]: ego networks, betweenness, link score, rank selection
//! - [`knowledge`]: beacons, report aggregation, classification, dissemination
//! - [`rerouting`]: entropy-based altruistic planning and baseline policies
//! - [`metrics`]: per-run metrics and CSV output
//! - [`sim`]: the event engine tying everything together
//! - [`harness`]: paired comparisons, sweeps and summary statistics

pub mod config;
pub mod demand;
pub mod error;
pub mod harness;
pub mod ids;
pub mod knowledge;
pub mod metrics;
pub mod mobility;
pub mod radio;
pub mod ranking;
pub mod rerouting;
pub mod road_network;
pub mod sim;
pub mod time;

pub use config::{DisseminationMode, ReroutingPolicy, ScenarioConfig};
pub use error::{Error, Result};
pub use metrics::MetricsReport;
pub use road_network::{EdgeId, NodeId, RoadGraph, Route};
pub use sim::{run_scenario, Simulation, VehicleId};
