//! Microscopic vehicle movement: Krauss car following on a single queue per
//! edge, route progress across edge boundaries, and a CO₂ proxy.

use rand::Rng;

use crate::ids::EdgeId;
pub use crate::ids::VehicleId;
use crate::road_network::{RoadGraph, Route};

/// Krauss model parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KraussParams {
    pub accel: f64,
    pub decel: f64,
    pub tau: f64,
    /// Driver imperfection in `[0, 1]`.
    pub sigma: f64,
    pub length: f64,
    pub min_gap: f64,
}

impl Default for KraussParams {
    fn default() -> Self {
        Self {
            accel: 2.6,
            decel: 4.5,
            tau: 1.0,
            sigma: 0.5,
            length: 5.0,
            min_gap: 2.5,
        }
    }
}

/// The vehicle ahead as seen by the follower.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leader {
    /// Bumper-to-bumper distance minus the minimum standstill gap.
    pub gap_m: f64,
    pub speed_mps: f64,
}

/// Kinematic and route state of one vehicle.
#[derive(Debug, Clone)]
pub struct VehicleState {
    pub id: VehicleId,
    pub route: Route,
    pub edge_index: usize,
    pub offset_m: f64,
    /// Lane-aggregate position; every edge is a single queue.
    pub lane: u32,
    pub speed_mps: f64,
    pub accel_mps2: f64,
    pub depart_time: f64,
    pub position: (f64, f64),
    /// Replacement for the edges after the current one, applied at the next
    /// node.
    pub pending_tail: Option<Vec<EdgeId>>,
    /// Lengths of all edges left behind.
    pub completed_m: f64,
}

impl VehicleState {
    pub fn new(id: VehicleId, route: Route, depart_time: f64) -> Self {
        Self {
            id,
            route,
            edge_index: 0,
            offset_m: 0.0,
            lane: 0,
            speed_mps: 0.0,
            accel_mps2: 0.0,
            depart_time,
            position: (0.0, 0.0),
            pending_tail: None,
            completed_m: 0.0,
        }
    }

    pub fn current_edge(&self) -> Option<EdgeId> {
        self.route.edges.get(self.edge_index).copied()
    }

    /// Edges still to be driven after the current one, honoring a pending
    /// replacement.
    pub fn remaining_after_current(&self) -> &[EdgeId] {
        match &self.pending_tail {
            Some(tail) => tail,
            None => self
                .route
                .edges
                .get(self.edge_index + 1..)
                .unwrap_or(&[]),
        }
    }

    /// The next edge to be entered, if any.
    pub fn next_edge(&self) -> Option<EdgeId> {
        self.remaining_after_current().first().copied()
    }

    pub fn distance_travelled(&self) -> f64 {
        self.completed_m + self.offset_m
    }

    pub fn update_position(&mut self, g: &RoadGraph) {
        if let Some(e) = self.current_edge() {
            self.position = g.position_on(e, self.offset_m);
        }
    }
}

/// One Krauss update. Returns `(new_speed, new_offset)`.
///
/// `vmax` is the speed limit currently in force on the vehicle's edge. A
/// uniform draw is consumed on every call so the mobility stream stays
/// aligned whatever the imperfection setting.
pub fn krauss_step<R: Rng + ?Sized>(
    speed: f64,
    offset: f64,
    vmax: f64,
    leader: Option<Leader>,
    dt: f64,
    p: &KraussParams,
    rng: &mut R,
) -> (f64, f64) {
    let u: f64 = rng.gen();
    let v_safe = match leader {
        Some(l) => {
            let gap = l.gap_m.max(0.0);
            let vl = l.speed_mps;
            vl + (gap - vl * p.tau) / ((speed + vl) / (2.0 * p.decel) + p.tau)
        }
        None => f64::INFINITY,
    };
    let v_des = vmax.min(speed + p.accel * dt).min(v_safe);
    let mut v = (v_des - p.sigma * p.accel * dt * u).max(0.0);
    if let Some(l) = leader {
        // Never move further than the current gap in one step.
        v = v.min(l.gap_m.max(0.0) / dt);
    }
    (v, offset + v * dt)
}

/// Outcome of [`advance_route`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Progress {
    Moving,
    EdgeChanged,
    Arrived,
}

/// Carries any overshoot past the end of the current edge into the following
/// edges, applying a pending route replacement at the boundary.
pub fn advance_route(v: &mut VehicleState, g: &RoadGraph) -> Progress {
    let mut changed = false;
    loop {
        let Some(cur) = v.current_edge() else {
            return Progress::Arrived;
        };
        let len = g.edge(cur).length_m;
        if v.offset_m < len {
            return if changed { Progress::EdgeChanged } else { Progress::Moving };
        }
        if let Some(tail) = v.pending_tail.take() {
            v.route.edges.truncate(v.edge_index + 1);
            v.route.edges.extend(tail);
        }
        if v.edge_index + 1 >= v.route.edges.len() {
            v.offset_m = len;
            return Progress::Arrived;
        }
        v.offset_m -= len;
        v.completed_m += len;
        v.edge_index += 1;
        changed = true;
    }
}

/// Emission proxy coefficients: `c0 + c1·v + c2·v³ + c3·max(0,a)·v` g/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Co2Params {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Default for Co2Params {
    fn default() -> Self {
        Self {
            c0: 0.55,
            c1: 0.11,
            c2: 0.00036,
            c3: 0.65,
        }
    }
}

/// CO₂ emission rate in grams per second.
pub fn co2_rate(speed_mps: f64, accel_mps2: f64, c: &Co2Params) -> f64 {
    let v = speed_mps.max(0.0);
    (c.c0 + c.c1 * v + c.c2 * v.powi(3) + c.c3 * accel_mps2.max(0.0) * v).max(0.0)
}
