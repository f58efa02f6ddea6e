//! Travel demand: `depart_time origin destination` lines, a corridor-biased
//! generator, and penetration-rate spawning.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::ids::{NodeId, VehicleId};
use crate::mobility::VehicleState;
use crate::road_network::{shortest_path, GridSpec, RoadGraph};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemandEntry {
    pub depart_time: f64,
    pub origin: NodeId,
    pub destination: NodeId,
}

pub fn parse_demand(text: &str, source_name: &str) -> Result<Vec<DemandEntry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: &str| Error::parse(source_name, i + 1, msg);
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(err("expected `depart_time origin destination`"));
        }
        let depart_time: f64 = f[0].parse().map_err(|_| err("invalid depart time"))?;
        if !depart_time.is_finite() || depart_time < 0.0 {
            return Err(err("depart time must be finite and non-negative"));
        }
        let origin = NodeId(f[1].parse().map_err(|_| err("invalid origin node"))?);
        let destination = NodeId(f[2].parse().map_err(|_| err("invalid destination node"))?);
        out.push(DemandEntry {
            depart_time,
            origin,
            destination,
        });
    }
    Ok(out)
}

pub fn load_demand(path: &Path) -> Result<Vec<DemandEntry>> {
    let text = std::fs::read_to_string(path)?;
    parse_demand(&text, &path.display().to_string())
}

pub fn demand_to_text(demand: &[DemandEntry]) -> String {
    let mut s = String::from("# depart_time origin destination\n");
    for d in demand {
        let _ = writeln!(s, "{} {} {}", d.depart_time, d.origin, d.destination);
    }
    s
}

/// Mix of through-traffic along one grid row and uniform background trips.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorridorDemand {
    pub vehicles: usize,
    /// Share of vehicles that drive the corridor end to end.
    pub corridor_fraction: f64,
    pub corridor_row: u32,
    /// Corridor trips start in the first and end in the last this many
    /// columns.
    pub end_columns: u32,
    pub depart_window_s: f64,
}

impl Default for CorridorDemand {
    fn default() -> Self {
        Self {
            vehicles: 600,
            corridor_fraction: 0.6,
            corridor_row: 5,
            end_columns: 3,
            depart_window_s: 600.0,
        }
    }
}

/// Generates demand on a grid built from `spec`. Entries are sorted by
/// departure time.
pub fn corridor_demand<R: Rng + ?Sized>(spec: &GridSpec, d: &CorridorDemand, rng: &mut R) -> Result<Vec<DemandEntry>> {
    if d.corridor_row >= spec.rows || spec.cols < 2 {
        return Err(Error::Config("corridor row outside the grid".into()));
    }
    let ends = d.end_columns.clamp(1, spec.cols / 2);
    let n_corridor = (d.vehicles as f64 * d.corridor_fraction.clamp(0.0, 1.0)).round() as usize;
    let n_nodes = spec.rows * spec.cols;
    let mut out = Vec::with_capacity(d.vehicles);
    for i in 0..d.vehicles {
        let depart_time = (rng.gen::<f64>() * d.depart_window_s * 10.0).round() / 10.0;
        let (origin, destination) = if i < n_corridor {
            let c0 = rng.gen_range(0..ends);
            let c1 = spec.cols - 1 - rng.gen_range(0..ends);
            (spec.node_at(d.corridor_row, c0), spec.node_at(d.corridor_row, c1))
        } else {
            let o = rng.gen_range(0..n_nodes);
            let mut t = rng.gen_range(0..n_nodes - 1);
            if t >= o {
                t += 1;
            }
            (NodeId(o), NodeId(t))
        };
        out.push(DemandEntry {
            depart_time,
            origin,
            destination,
        });
    }
    out.sort_by(|a, b| a.depart_time.total_cmp(&b.depart_time));
    Ok(out)
}

/// Vehicles selected for one run.
#[derive(Debug, Clone)]
pub struct Spawned {
    pub vehicles: Vec<VehicleState>,
    /// Selected entries whose origin equals their destination.
    pub skipped: usize,
}

/// Selects `floor(rate · N)` demand entries by seeded shuffle and routes each
/// along its free-flow shortest path. Vehicle ids are demand indices; the
/// result is in departure order.
pub fn spawn_vehicles<R: Rng + ?Sized>(
    demand: &[DemandEntry],
    rate: f64,
    g: &RoadGraph,
    rng: &mut R,
) -> Result<Spawned> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::Config("penetration rate must be in (0, 1]".into()));
    }
    let n = (rate * demand.len() as f64 + 1e-9).floor() as usize;
    let mut idx: Vec<usize> = (0..demand.len()).collect();
    idx.shuffle(rng);
    idx.truncate(n);
    idx.sort_by(|a, b| demand[*a].depart_time.total_cmp(&demand[*b].depart_time).then(a.cmp(b)));
    let mut vehicles = Vec::with_capacity(n);
    let mut skipped = 0;
    for i in idx {
        let d = demand[i];
        let id = VehicleId(i as u32);
        if d.origin == d.destination {
            skipped += 1;
            continue;
        }
        let route = shortest_path(g, d.origin, d.destination, |e| e.free_flow_time()).map_err(|e| Error::Scenario {
            vehicle: id,
            msg: e.to_string(),
        })?;
        vehicles.push(VehicleState::new(id, route, d.depart_time));
    }
    if skipped > 0 {
        log::warn!("{skipped} demand entries skipped: origin equals destination");
    }
    Ok(Spawned { vehicles, skipped })
}
