//! The discrete-event engine: clock, event queue, seeded RNG streams,
//! vehicle movement, radio delivery and protocol handlers.

mod queue;
mod trace;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use queue::{Event, EventKind, EventQueue, Timer};
pub use trace::{parse_trace, trace_to_text, TraceEntry};

use crate::config::ScenarioConfig;
use crate::demand::{load_demand, spawn_vehicles, DemandEntry};
use crate::error::Result;
pub use crate::ids::VehicleId;
use crate::ids::EdgeId;
use crate::knowledge::{
    build_beacon, forward_or_classify, AggregateForward, AggregationAction, Beacon, BeaconSource, CongestedSegment,
    DisseminationMode, DisseminationState, KnowledgeId, KnowledgeMessage, Reception, ReportStore,
};
use crate::metrics::{self, EpisodeLog, MetricsReport};
use crate::mobility::{advance_route, co2_rate, krauss_step, Co2Params, KraussParams, Leader, Progress, VehicleState};
use crate::radio::{
    airtime_ns, backoff_slots, Channel, Enqueued, Mac, Medium, Outcome, PayloadSizes, RadioConstants, Transmission,
    ZopParams, SLOT_NS,
};
use crate::ranking::{LinkScorer, NeighborEntry, RankingState};
use crate::rerouting::{collect_route_info, on_knowledge, plan_for_vehicle, KnowledgeAction, PlanningParams};
use crate::rerouting::{ReroutingState, RouteInfoMessage};
use crate::road_network::{free_flow_time, RoadGraph, Route};
use crate::time::SimTime;
use trace::TraceChecker;

const STREAM_SPAWN: u64 = 0;
const STREAM_MAC: u64 = 1;
const STREAM_MOBILITY: u64 = 2;
const STREAM_PHASE: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// Anything that goes on the air.
#[derive(Debug, Clone)]
pub enum Payload {
    Beacon(Arc<Beacon>),
    Knowledge(Arc<KnowledgeMessage>),
    RouteInfo(Arc<RouteInfoMessage>),
}

impl Payload {
    fn channel(&self) -> Channel {
        match self {
            Payload::Beacon(_) => Channel::Control,
            _ => Channel::Service,
        }
    }

    fn bits(&self, s: &PayloadSizes) -> u64 {
        match self {
            Payload::Beacon(b) => {
                let reports = b.piggyback.as_ref().map_or(0, |p| p.reports.len() as u64);
                s.beacon_base + s.beacon_per_neighbor * b.neighbor_ids.len() as u64 + s.beacon_per_report * reports
            }
            Payload::Knowledge(k) => s.knowledge_base + s.knowledge_per_segment * k.congested.len() as u64,
            Payload::RouteInfo(m) => s.route_info_base + s.route_info_per_edge * m.route_edges.len() as u64,
        }
    }
}

fn channel_index(c: Channel) -> usize {
    match c {
        Channel::Control => 0,
        Channel::Service => 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Waiting,
    Active,
    Arrived,
}

struct Vehicle {
    state: VehicleState,
    phase: Phase,
    spawn_route: Route,
    spawn_free_flow: f64,
    beacon_phase: f64,
    ranking: RankingState,
    store: ReportStore,
    diss: DisseminationState,
    rerouting: ReroutingState,
    known: BTreeMap<KnowledgeId, Arc<KnowledgeMessage>>,
    relay_pending: BTreeMap<KnowledgeId, Arc<KnowledgeMessage>>,
    macs: [Mac<Payload>; 2],
    active_since: f64,
    arrived_at: f64,
    busy_ratio: Option<f64>,
    time_loss: f64,
    co2: f64,
    reroutes: u32,
}

/// What went on the air, as seen by the transmission log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxKind {
    /// `origin` is the vehicle that built the beacon.
    Beacon { origin: VehicleId, piggyback: bool },
    Knowledge { id: KnowledgeId, origin: VehicleId },
    RouteInfo { episode: KnowledgeId },
}

/// One started transmission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TxRecord {
    pub time: f64,
    pub sender: VehicleId,
    pub channel: Channel,
    pub kind: TxKind,
}

/// Transmission and protocol counters for one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunStats {
    pub beacons: u64,
    pub knowledge_originated: u64,
    pub knowledge_relays: u64,
    pub route_infos: u64,
    pub aggregate_forwards: u64,
    pub mac_drops: u64,
    pub reroutes: u64,
}

/// One run of a scenario.
pub struct Simulation {
    cfg: ScenarioConfig,
    graph: RoadGraph,
    krauss: KraussParams,
    co2: Co2Params,
    radio: RadioConstants,
    scorer: LinkScorer,
    zop: ZopParams,
    sizes: PayloadSizes,
    planning: PlanningParams,
    dt_ns: u64,
    queue: EventQueue,
    rng_mac: ChaCha8Rng,
    rng_mobility: ChaCha8Rng,
    vehicles: BTreeMap<VehicleId, Vehicle>,
    waiting: VecDeque<VehicleId>,
    active: BTreeSet<VehicleId>,
    edge_queues: Vec<VecDeque<VehicleId>>,
    vmax_nominal: Vec<f64>,
    cells: HashMap<(i64, i64), Vec<VehicleId>>,
    medium: Medium<Payload>,
    episodes: Vec<EpisodeLog>,
    episode_index: HashMap<KnowledgeId, usize>,
    next_knowledge: u64,
    stats: RunStats,
    skipped: usize,
    trace: Option<Vec<TraceEntry>>,
    tx_log: Option<Vec<TxRecord>>,
    checker: Option<TraceChecker>,
    done: bool,
}

impl Simulation {
    /// Builds a run from an in-memory network and demand.
    pub fn new(cfg: ScenarioConfig, graph: RoadGraph, demand: &[DemandEntry]) -> Result<Self> {
        cfg.validate()?;
        if let Some(inc) = &cfg.incident {
            graph.try_edge(inc.edge).ok_or(crate::Error::UnknownEdge(inc.edge))?;
        }
        let mut rng_spawn = stream(cfg.seed, STREAM_SPAWN);
        let mut rng_phase = stream(cfg.seed, STREAM_PHASE);
        let spawned = spawn_vehicles(demand, cfg.penetration_rate, &graph, &mut rng_spawn)?;
        let mut vehicles = BTreeMap::new();
        let mut waiting = VecDeque::new();
        for state in spawned.vehicles {
            let phase = rng_phase.gen::<f64>() * cfg.beacon_interval;
            let ff = free_flow_time(&graph, &state.route);
            waiting.push_back(state.id);
            vehicles.insert(
                state.id,
                Vehicle {
                    spawn_route: state.route.clone(),
                    state,
                    phase: Phase::Waiting,
                    spawn_free_flow: ff,
                    beacon_phase: phase,
                    ranking: RankingState::new(),
                    store: ReportStore::new(),
                    diss: DisseminationState::new(),
                    rerouting: ReroutingState::new(),
                    known: BTreeMap::new(),
                    relay_pending: BTreeMap::new(),
                    macs: [Mac::default(), Mac::default()],
                    active_since: 0.0,
                    arrived_at: 0.0,
                    busy_ratio: None,
                    time_loss: 0.0,
                    co2: 0.0,
                    reroutes: 0,
                },
            );
        }
        let radio = cfg.radio_constants();
        let mut queue = EventQueue::new();
        queue.push(SimTime::ZERO, EventKind::MobilityTick);
        Ok(Self {
            krauss: KraussParams {
                sigma: cfg.driver_imperfection,
                ..KraussParams::default()
            },
            co2: Co2Params::default(),
            scorer: LinkScorer::new(&radio),
            radio,
            zop: cfg.zop_params(),
            sizes: cfg.payload_sizes(),
            planning: PlanningParams {
                k_candidates: cfg.k_candidates,
                congestion_penalty: cfg.congestion_penalty,
                wait_time_max_s: cfg.wait_time_max_s,
                dist_ref_m: cfg.dist_ref_m,
            },
            dt_ns: SimTime::from_secs(cfg.mobility_dt).0.max(1),
            queue,
            rng_mac: stream(cfg.seed, STREAM_MAC),
            rng_mobility: stream(cfg.seed, STREAM_MOBILITY),
            vehicles,
            waiting,
            active: BTreeSet::new(),
            edge_queues: vec![VecDeque::new(); graph.edge_count()],
            vmax_nominal: graph.edges().iter().map(|e| e.vmax_mps).collect(),
            cells: HashMap::new(),
            medium: Medium::new(),
            episodes: Vec::new(),
            episode_index: HashMap::new(),
            next_knowledge: 0,
            stats: RunStats::default(),
            skipped: spawned.skipped,
            trace: None,
            tx_log: None,
            checker: None,
            done: false,
            graph,
            cfg,
        })
    }

    /// Loads the network and demand files named by `cfg`.
    pub fn from_config(cfg: ScenarioConfig) -> Result<Self> {
        let graph = RoadGraph::from_file(&cfg.network_path)?;
        let demand = load_demand(&cfg.demand_path)?;
        Self::new(cfg, graph, &demand)
    }

    /// Records every dispatched event.
    pub fn record_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn trace(&self) -> Option<&[TraceEntry]> {
        self.trace.as_deref()
    }

    /// Records every started transmission.
    pub fn record_transmissions(&mut self) {
        self.tx_log = Some(Vec::new());
    }

    pub fn transmissions(&self) -> Option<&[TxRecord]> {
        self.tx_log.as_deref()
    }

    /// Vehicles on `edge`, leader first.
    pub fn edge_queue(&self, edge: EdgeId) -> Vec<VehicleId> {
        self.graph
            .try_edge(edge)
            .map(|_| self.edge_queues[self.graph.edge_index(edge)].iter().copied().collect())
            .unwrap_or_default()
    }

    pub fn now(&self) -> f64 {
        self.queue.now().as_secs()
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn graph(&self) -> &RoadGraph {
        &self.graph
    }

    pub fn stats(&self) -> RunStats {
        self.stats
    }

    pub fn episodes(&self) -> &[EpisodeLog] {
        &self.episodes
    }

    pub fn vehicle_ids(&self) -> impl Iterator<Item = VehicleId> + '_ {
        self.vehicles.keys().copied()
    }

    pub fn vehicle(&self, id: VehicleId) -> Option<&VehicleState> {
        self.vehicles.get(&id).map(|v| &v.state)
    }

    /// The route the vehicle was given at spawn.
    pub fn spawn_route(&self, id: VehicleId) -> Option<&Route> {
        self.vehicles.get(&id).map(|v| &v.spawn_route)
    }

    pub fn is_active(&self, id: VehicleId) -> bool {
        self.vehicles.get(&id).is_some_and(|v| v.phase == Phase::Active)
    }

    pub fn has_arrived(&self, id: VehicleId) -> bool {
        self.vehicles.get(&id).is_some_and(|v| v.phase == Phase::Arrived)
    }

    pub fn rank_of(&self, id: VehicleId) -> Option<f64> {
        self.vehicles.get(&id).map(|v| v.ranking.my_vrank)
    }

    pub fn is_finished(&self) -> bool {
        self.done
    }

    /// Processes every event up to and including time `t` (seconds), or
    /// until the run ends.
    pub fn run_until(&mut self, t: f64) -> Result<()> {
        let limit = SimTime::from_secs(t.min(self.cfg.sim_duration));
        while !self.done {
            match self.queue.peek_time() {
                Some(next) if next <= limit => {}
                Some(_) => break,
                None => {
                    self.done = true;
                    break;
                }
            }
            let ev = self.queue.pop().expect("peeked");
            let entry = TraceEntry::from(&ev);
            if let Some(c) = self.checker.as_mut() {
                c.check(entry)?;
            }
            if let Some(t) = self.trace.as_mut() {
                t.push(entry);
            }
            self.dispatch(ev.kind)?;
        }
        if self.queue.now() >= SimTime::from_secs(self.cfg.sim_duration) {
            self.done = true;
        }
        Ok(())
    }

    /// Runs to the end and reports.
    pub fn run(mut self) -> Result<MetricsReport> {
        self.run_until(f64::INFINITY)?;
        self.done = true;
        if let Some(c) = &self.checker {
            c.finish()?;
        }
        Ok(self.report())
    }

    fn dispatch(&mut self, kind: EventKind) -> Result<()> {
        match kind {
            EventKind::MobilityTick => self.on_tick(),
            EventKind::BeaconDue(v) => self.on_beacon_due(v),
            EventKind::TransmissionStart { vehicle, channel } => self.on_mac_attempt(vehicle, channel),
            EventKind::TransmissionEnd(id) => self.on_transmission_end(id),
            EventKind::TimerExpired(Timer::Relay { vehicle, knowledge }) => self.on_relay_timer(vehicle, knowledge),
            EventKind::TimerExpired(Timer::RerouteWait { vehicle, episode }) => self.on_reroute_timer(vehicle, episode),
            EventKind::VehicleArrival(v) => self.on_arrival(v),
        }
        Ok(())
    }

    fn now_s(&self) -> f64 {
        self.queue.now().as_secs()
    }

    fn schedule_in(&mut self, delay_s: f64, kind: EventKind) {
        let at = self.queue.now() + SimTime::from_secs(delay_s);
        self.queue.push(at, kind);
    }

    fn vmax_effective(&self, edge_idx: usize, edge: EdgeId, t: f64) -> f64 {
        match &self.cfg.incident {
            Some(inc) if inc.edge == edge && inc.active_at(t) => inc.speed_mps.min(self.vmax_nominal[edge_idx]),
            _ => self.vmax_nominal[edge_idx],
        }
    }

    fn spacing(&self) -> f64 {
        self.krauss.length + self.krauss.min_gap
    }

    // ---- mobility -------------------------------------------------------

    fn on_tick(&mut self) {
        let now = self.now_s();
        let dt = self.cfg.mobility_dt;
        self.move_vehicles(now, dt);
        self.insert_departures(now, dt);
        self.rebuild_cells();
        for id in self.waiting.iter() {
            let v = self.vehicles.get_mut(id).expect("known vehicle");
            if v.state.depart_time <= now {
                v.time_loss += dt;
            }
        }
        if self.cfg.run_to_completion && self.waiting.is_empty() && self.active.is_empty() {
            self.done = true;
            return;
        }
        let next = self.queue.now() + SimTime(self.dt_ns);
        if next <= SimTime::from_secs(self.cfg.sim_duration) {
            self.queue.push(next, EventKind::MobilityTick);
        }
    }

    /// Gap ahead of the vehicle at queue position `k` on edge `ei`, measured
    /// from the start-of-tick snapshot.
    fn leader_of(&self, ei: usize, k: usize) -> Option<Leader> {
        let q = &self.edge_queues[ei];
        let me = &self.vehicles[&q[k]].state;
        let edge = self.graph.edge_at_index(ei);
        let spacing = self.spacing();
        if k > 0 {
            let l = &self.vehicles[&q[k - 1]].state;
            let gap = (l.offset_m - me.offset_m) * edge.lanes as f64 - spacing;
            return Some(Leader {
                gap_m: gap,
                speed_mps: l.speed_mps,
            });
        }
        let next = me.next_edge()?;
        let ni = self.graph.edge_index(next);
        let tail = self.edge_queues[ni].back()?;
        let l = &self.vehicles[tail].state;
        let lanes = edge.lanes.min(self.graph.edge_at_index(ni).lanes) as f64;
        let gap = (edge.length_m - me.offset_m + l.offset_m) * lanes - spacing;
        Some(Leader {
            gap_m: gap,
            speed_mps: l.speed_mps,
        })
    }

    fn move_vehicles(&mut self, now: f64, dt: f64) {
        // New speeds from the start-of-tick snapshot.
        let mut updates: Vec<(usize, Vec<(f64, f64)>)> = Vec::new();
        for ei in 0..self.edge_queues.len() {
            if self.edge_queues[ei].is_empty() {
                continue;
            }
            let edge_id = self.graph.edge_at_index(ei).id;
            let vmax = self.vmax_effective(ei, edge_id, now);
            let mut out = Vec::with_capacity(self.edge_queues[ei].len());
            for k in 0..self.edge_queues[ei].len() {
                let leader = self.leader_of(ei, k);
                let s = &self.vehicles[&self.edge_queues[ei][k]].state;
                let (speed, offset) = (s.speed_mps, s.offset_m);
                out.push(krauss_step(speed, offset, vmax, leader, dt, &self.krauss, &mut self.rng_mobility));
            }
            updates.push((ei, out));
        }

        // Apply, keep queue order, and collect vehicles leaving their edge.
        let mut crossing: Vec<VehicleId> = Vec::new();
        for (ei, out) in updates {
            let len = self.graph.edge_at_index(ei).length_m;
            let mut ahead = f64::INFINITY;
            for (k, (v_new, mut x_new)) in out.into_iter().enumerate() {
                let id = self.edge_queues[ei][k];
                if ahead < len {
                    x_new = x_new.min(ahead);
                }
                ahead = x_new;
                let veh = self.vehicles.get_mut(&id).expect("queued vehicle");
                let s = &mut veh.state;
                s.accel_mps2 = (v_new - s.speed_mps) / dt;
                s.speed_mps = v_new;
                s.offset_m = x_new;
                let vmax = self.vmax_nominal[ei];
                veh.time_loss += metrics::congestion_time_loss([(v_new, vmax, dt)]);
                veh.co2 += co2_rate(v_new, veh.state.accel_mps2, &self.co2) * dt;
                if x_new >= len {
                    crossing.push(id);
                }
            }
        }

        let mut transfers: Vec<(f64, VehicleId, usize)> = Vec::new();
        for id in crossing {
            let old = self.vehicles[&id].state.current_edge().expect("on an edge");
            let oi = self.graph.edge_index(old);
            let pos = self.edge_queues[oi].iter().position(|x| *x == id).expect("in queue");
            self.edge_queues[oi].remove(pos);
            let veh = self.vehicles.get_mut(&id).expect("vehicle");
            let progress = advance_route(&mut veh.state, &self.graph);
            match progress {
                Progress::Arrived => {
                    let overshoot = veh.state.offset_m - self.graph.edge(old).length_m;
                    let v = veh.state.speed_mps;
                    let back = if v > 0.0 { (overshoot / v).clamp(0.0, dt) } else { 0.0 };
                    veh.arrived_at = now - back;
                    veh.state.offset_m = self.graph.edge(old).length_m;
                    veh.state.update_position(&self.graph);
                    veh.phase = Phase::Arrived;
                    self.active.remove(&id);
                    self.queue.push(self.queue.now(), EventKind::VehicleArrival(id));
                }
                Progress::EdgeChanged | Progress::Moving => {
                    let ne = veh.state.current_edge().expect("next edge");
                    transfers.push((veh.state.offset_m, id, self.graph.edge_index(ne)));
                }
            }
        }
        // The vehicle that went furthest enters first.
        transfers.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (_, id, ni) in transfers {
            let tail_offset = self.edge_queues[ni].back().map(|t| self.vehicles[t].state.offset_m);
            let veh = self.vehicles.get_mut(&id).expect("vehicle");
            if let Some(t) = tail_offset {
                veh.state.offset_m = veh.state.offset_m.min(t);
            }
            self.edge_queues[ni].push_back(id);
        }
        for id in self.active.iter() {
            let v = self.vehicles.get_mut(id).expect("active vehicle");
            v.state.update_position(&self.graph);
        }
    }

    fn insert_departures(&mut self, now: f64, dt: f64) {
        let mut still_waiting = VecDeque::with_capacity(self.waiting.len());
        let spacing = self.spacing();
        while let Some(id) = self.waiting.pop_front() {
            let depart = self.vehicles[&id].state.depart_time;
            if depart > now {
                still_waiting.push_back(id);
                still_waiting.extend(self.waiting.drain(..));
                break;
            }
            let first = self.vehicles[&id].state.current_edge().expect("non-empty route");
            let ei = self.graph.edge_index(first);
            let edge = self.graph.edge_at_index(ei);
            let vmax = self.vmax_effective(ei, first, now);
            let leader = self.edge_queues[ei].back().map(|t| {
                let l = &self.vehicles[t].state;
                Leader {
                    gap_m: l.offset_m * edge.lanes as f64 - spacing,
                    speed_mps: l.speed_mps,
                }
            });
            if leader.is_some_and(|l| l.gap_m < 0.0) {
                still_waiting.push_back(id);
                continue;
            }
            let speed = match leader {
                Some(l) => {
                    let p = &self.krauss;
                    let safe = l.speed_mps
                        + (l.gap_m - l.speed_mps * p.tau) / ((vmax + l.speed_mps) / (2.0 * p.decel) + p.tau);
                    vmax.min(safe).min(l.gap_m / dt).max(0.0)
                }
                None => vmax,
            };
            self.edge_queues[ei].push_back(id);
            self.active.insert(id);
            let phase = {
                let veh = self.vehicles.get_mut(&id).expect("vehicle");
                veh.phase = Phase::Active;
                veh.active_since = now;
                veh.state.speed_mps = speed;
                veh.state.offset_m = 0.0;
                veh.state.update_position(&self.graph);
                veh.beacon_phase
            };
            self.schedule_in(phase, EventKind::BeaconDue(id));
        }
        self.waiting = still_waiting;
    }

    fn cell_of(&self, p: (f64, f64)) -> (i64, i64) {
        let r = self.cfg.tx_range_m;
        ((p.0 / r).floor() as i64, (p.1 / r).floor() as i64)
    }

    fn rebuild_cells(&mut self) {
        self.cells.clear();
        for id in &self.active {
            let c = self.cell_of(self.vehicles[id].state.position);
            self.cells.entry(c).or_default().push(*id);
        }
    }

    /// Active vehicles within range of `id`, excluding itself.
    fn neighbors_in_range(&self, id: VehicleId) -> Vec<VehicleId> {
        let p = self.vehicles[&id].state.position;
        let (cx, cy) = self.cell_of(p);
        let r = self.cfg.tx_range_m;
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(list) = self.cells.get(&(cx + dx, cy + dy)) {
                    for o in list {
                        if *o == id {
                            continue;
                        }
                        let q = self.vehicles[o].state.position;
                        if (p.0 - q.0).hypot(p.1 - q.1) <= r {
                            out.push(*o);
                        }
                    }
                }
            }
        }
        out
    }

    fn on_arrival(&mut self, id: VehicleId) {
        let busy = {
            let veh = &self.vehicles[&id];
            let span = veh.arrived_at - veh.active_since;
            (span > 0.0).then(|| {
                (self.medium.busy_secs(id, SimTime::from_secs(veh.arrived_at)) / span).clamp(0.0, 1.0)
            })
        };
        let veh = self.vehicles.get_mut(&id).expect("vehicle");
        veh.busy_ratio = busy;
        veh.ranking = RankingState::new();
        veh.store = ReportStore::new();
        veh.relay_pending.clear();
        veh.macs = [Mac::default(), Mac::default()];
    }

    // ---- radio ----------------------------------------------------------

    fn enqueue(&mut self, id: VehicleId, payload: Payload) {
        let ch = payload.channel();
        let veh = self.vehicles.get_mut(&id).expect("vehicle");
        match veh.macs[channel_index(ch)].enqueue(payload) {
            Enqueued::StartContention => {
                let slots = backoff_slots(&mut self.rng_mac) as u64;
                let at = self.queue.now() + SimTime(slots * SLOT_NS);
                self.queue.push(at, EventKind::TransmissionStart { vehicle: id, channel: ch });
            }
            Enqueued::Queued => {}
            Enqueued::Dropped => self.stats.mac_drops += 1,
        }
    }

    fn on_mac_attempt(&mut self, id: VehicleId, ch: Channel) {
        if !self.is_active(id) {
            return;
        }
        let now = self.queue.now();
        if self.medium.sensed_busy(id, ch, now) {
            let idle = self.medium.idle_at(id, ch).max(now);
            let slots = backoff_slots(&mut self.rng_mac) as u64;
            self.queue.push(idle + SimTime(slots * SLOT_NS), EventKind::TransmissionStart { vehicle: id, channel: ch });
            return;
        }
        let veh = self.vehicles.get_mut(&id).expect("vehicle");
        let Some(payload) = veh.macs[channel_index(ch)].begin_transmission() else {
            veh.macs[channel_index(ch)].transmission_done();
            return;
        };
        match &payload {
            Payload::Beacon(b) => {
                self.stats.beacons += 1;
                if b.piggyback.is_some() {
                    self.stats.aggregate_forwards += 1;
                }
            }
            Payload::Knowledge(k) => {
                if k.origin == id {
                    self.stats.knowledge_originated += 1;
                } else {
                    self.stats.knowledge_relays += 1;
                }
            }
            Payload::RouteInfo(_) => self.stats.route_infos += 1,
        }
        if let Some(log) = self.tx_log.as_mut() {
            let kind = match &payload {
                Payload::Beacon(b) => TxKind::Beacon {
                    origin: b.sender,
                    piggyback: b.piggyback.is_some(),
                },
                Payload::Knowledge(k) => TxKind::Knowledge { id: k.id, origin: k.origin },
                Payload::RouteInfo(m) => TxKind::RouteInfo { episode: m.episode },
            };
            log.push(TxRecord {
                time: now.as_secs(),
                sender: id,
                channel: ch,
                kind,
            });
        }
        let duration_ns = airtime_ns(payload.bits(&self.sizes), self.cfg.bitrate_bps);
        let receivers = self.neighbors_in_range(id);
        let tx = Transmission {
            sender: id,
            channel: ch,
            start: now,
            duration_ns,
            payload,
        };
        let end = tx.end();
        let tx_id = self.medium.start(tx, receivers);
        self.queue.push(end, EventKind::TransmissionEnd(tx_id));
    }

    fn on_transmission_end(&mut self, tx_id: crate::radio::TxId) {
        let Some(done) = self.medium.finish(tx_id) else { return };
        let sender = done.tx.sender;
        let ch = done.tx.channel;
        if self.is_active(sender) {
            let veh = self.vehicles.get_mut(&sender).expect("vehicle");
            if veh.macs[channel_index(ch)].transmission_done() {
                let slots = backoff_slots(&mut self.rng_mac) as u64;
                let at = self.queue.now() + SimTime(slots * SLOT_NS);
                self.queue.push(at, EventKind::TransmissionStart { vehicle: sender, channel: ch });
            }
        }
        let sender_pos = self.vehicles[&sender].state.position;
        for (r, outcome) in done.outcomes {
            if outcome == Outcome::Delivered && self.is_active(r) {
                self.deliver(r, sender, sender_pos, &done.tx.payload);
            }
        }
    }

    fn deliver(&mut self, r: VehicleId, sender: VehicleId, sender_pos: (f64, f64), payload: &Payload) {
        let now = self.now_s();
        match payload {
            Payload::Beacon(b) => {
                let sigma = self.cfg.sigma;
                let veh = self.vehicles.get_mut(&r).expect("vehicle");
                veh.ranking.observe(
                    sender,
                    NeighborEntry {
                        position: b.position,
                        speed_mps: b.speed_mps,
                        heading: b.heading,
                        current_edge: b.current_edge,
                        neighbor_ids: b.neighbor_ids.clone(),
                        v_rank: b.v_rank,
                        last_seen: now,
                    },
                );
                if let Some(e) = b.current_edge {
                    veh.store.ingest_sample(e, b.speed_mps, now, sigma);
                }
                if let Some(p) = &b.piggyback {
                    if p.target == r {
                        veh.store.merge_forwarded(&p.reports, &p.chain);
                    }
                }
            }
            Payload::Knowledge(k) => self.deliver_knowledge(r, sender_pos, k.clone()),
            Payload::RouteInfo(m) => {
                let veh = self.vehicles.get_mut(&r).expect("vehicle");
                collect_route_info(&mut veh.rerouting, m);
            }
        }
    }

    // ---- knowledge ------------------------------------------------------

    fn deliver_knowledge(&mut self, r: VehicleId, sender_pos: (f64, f64), k: Arc<KnowledgeMessage>) {
        let now = self.now_s();
        if now - k.created_at > self.cfg.knowledge_ttl_s {
            return;
        }
        let mode = self.cfg.dissemination;
        let range = self.cfg.tx_range_m;
        let zop = self.zop;
        let veh = self.vehicles.get_mut(&r).expect("vehicle");
        let my_pos = veh.state.position;
        match veh.diss.on_receive(&k, sender_pos, my_pos, mode, range, &zop) {
            Reception::First {
                rebroadcast_after_s, ..
            } => {
                veh.known.insert(k.id, k.clone());
                let relay = Arc::new(KnowledgeMessage {
                    hop_origin_pos: sender_pos,
                    ..(*k).clone()
                });
                if let Some(&i) = self.episode_index.get(&k.id) {
                    self.episodes[i].record(r, now);
                }
                match mode {
                    DisseminationMode::Flooding => self.enqueue(r, Payload::Knowledge(relay)),
                    DisseminationMode::Zop => {
                        veh.relay_pending.insert(k.id, relay);
                        self.schedule_in(
                            rebroadcast_after_s,
                            EventKind::TimerExpired(Timer::Relay {
                                vehicle: r,
                                knowledge: k.id,
                            }),
                        );
                    }
                }
                self.consume_knowledge(r, &k);
            }
            Reception::Suppressed => {
                veh.relay_pending.remove(&k.id);
            }
            Reception::Duplicate => {}
        }
    }

    fn on_relay_timer(&mut self, id: VehicleId, k: KnowledgeId) {
        if !self.is_active(id) {
            return;
        }
        let veh = self.vehicles.get_mut(&id).expect("vehicle");
        let msg = if veh.diss.on_timer(k) { veh.relay_pending.remove(&k) } else { None };
        if let Some(msg) = msg {
            self.enqueue(id, Payload::Knowledge(msg));
        }
    }

    /// Congested edges of every live episode this vehicle knows.
    fn live_congestion(&self, id: VehicleId) -> BTreeSet<EdgeId> {
        let now = self.now_s();
        let ttl = self.cfg.knowledge_ttl_s;
        self.vehicles[&id]
            .known
            .values()
            .filter(|k| now - k.created_at <= ttl)
            .flat_map(|k| k.edges())
            .collect()
    }

    fn consume_knowledge(&mut self, id: VehicleId, k: &KnowledgeMessage) {
        let congested = self.live_congestion(id);
        let now = self.now_s();
        let policy = self.cfg.rerouting_policy;
        let veh = self.vehicles.get_mut(&id).expect("vehicle");
        let action = on_knowledge(
            policy,
            &mut veh.rerouting,
            &veh.state,
            &self.graph,
            k.id,
            &congested,
            now,
            &self.planning,
        );
        match action {
            KnowledgeAction::Discard => {}
            KnowledgeAction::Wait { deadline } => {
                self.queue.push(
                    SimTime::from_secs(deadline),
                    EventKind::TimerExpired(Timer::RerouteWait {
                        vehicle: id,
                        episode: k.id,
                    }),
                );
            }
            KnowledgeAction::Reroute(tail) => {
                veh.state.pending_tail = Some(tail);
                veh.reroutes += 1;
                self.stats.reroutes += 1;
            }
        }
    }

    fn on_reroute_timer(&mut self, id: VehicleId, episode: KnowledgeId) {
        if !self.is_active(id) {
            return;
        }
        let congested = self.live_congestion(id);
        let now = self.now_s();
        let veh = self.vehicles.get_mut(&id).expect("vehicle");
        let Some(pop) = veh.rerouting.finish_wait(episode) else { return };
        let Some(route) = plan_for_vehicle(&veh.state, &self.graph, &congested, &pop, &self.planning) else {
            return;
        };
        if route.edges.as_slice() != veh.state.remaining_after_current() {
            veh.state.pending_tail = Some(route.edges.clone());
            veh.reroutes += 1;
            self.stats.reroutes += 1;
        }
        let msg = RouteInfoMessage {
            sender: id,
            episode,
            route_edges: route.edges.into(),
            sent_at: now,
        };
        self.enqueue(id, Payload::RouteInfo(Arc::new(msg)));
    }

    /// Creates a knowledge episode at `origin` and sends it. Returns `None`
    /// when `origin` is not on the road or no segment is congested.
    pub fn originate_knowledge(&mut self, origin: VehicleId, segments: Vec<CongestedSegment>) -> Option<KnowledgeId> {
        if !self.is_active(origin) {
            return None;
        }
        let now = self.now_s();
        let id = KnowledgeId(self.next_knowledge);
        let pos = self.vehicles[&origin].state.position;
        let k = Arc::new(KnowledgeMessage::new(id, origin, now, segments, pos)?);
        self.next_knowledge += 1;
        let population: BTreeSet<VehicleId> = self.active.iter().copied().filter(|v| *v != origin).collect();
        self.episode_index.insert(id, self.episodes.len());
        self.episodes.push(EpisodeLog::new(id, origin, now, population));
        let veh = self.vehicles.get_mut(&origin).expect("vehicle");
        veh.diss.mark_originated(id);
        veh.known.insert(id, k.clone());
        self.enqueue(origin, Payload::Knowledge(k.clone()));
        self.consume_knowledge(origin, &k);
        Some(id)
    }

    fn on_beacon_due(&mut self, id: VehicleId) {
        if !self.is_active(id) {
            return;
        }
        let now = self.now_s();
        let cfg = &self.cfg;
        let max_age = cfg.neighbor_timeout_beacons * cfg.beacon_interval;
        let (report_ttl, sigma, alpha, max_fwd) = (cfg.report_ttl_s, cfg.sigma, cfg.alpha, cfg.max_forward_reports);
        let veh = self.vehicles.get_mut(&id).expect("vehicle");
        veh.ranking.evict_stale(now, max_age);
        veh.store.evict(now, report_ttl);
        let edge = veh.state.current_edge();
        if let Some(e) = edge {
            veh.store.ingest_sample(e, veh.state.speed_mps, now, sigma);
        }
        let pos = veh.state.position;
        let vrank = veh.ranking.refresh(id, pos, alpha, &self.scorer);

        let mut piggyback = None;
        let mut classified = Vec::new();
        if !veh.store.is_empty() {
            match forward_or_classify(&veh.ranking, vrank, &veh.store, &self.graph) {
                AggregationAction::ForwardTo(target) => {
                    let (reports, mut chain) = veh.store.take_for_forward(max_fwd);
                    chain.push(id);
                    chain.sort_unstable();
                    chain.dedup();
                    piggyback = Some(AggregateForward { target, reports, chain });
                }
                AggregationAction::Classified(segs) => classified = segs,
            }
        }
        let src = BeaconSource {
            id,
            now,
            position: pos,
            speed_mps: veh.state.speed_mps,
            heading: edge.map_or((0.0, 0.0), |e| self.graph.heading(e)),
            current_edge: edge,
        };
        let beacon = build_beacon(src, &veh.ranking, piggyback);
        self.enqueue(id, Payload::Beacon(Arc::new(beacon)));

        if !classified.is_empty() {
            let covered = self.live_congestion(id);
            if classified.iter().any(|c| !covered.contains(&c.edge)) {
                self.originate_knowledge(id, classified);
            }
        }
        let interval = self.cfg.beacon_interval;
        self.schedule_in(interval, EventKind::BeaconDue(id));
    }

    // ---- reporting ------------------------------------------------------

    /// Metrics for the run so far.
    pub fn report(&self) -> MetricsReport {
        let end = self.now_s().min(self.cfg.sim_duration);
        let mut busy = Vec::new();
        let mut ever_active = 0u64;
        let (mut dist, mut tt, mut loss, mut co2, mut ff) = (vec![], vec![], vec![], vec![], vec![]);
        for (id, v) in &self.vehicles {
            match v.phase {
                Phase::Waiting => {}
                Phase::Active => {
                    ever_active += 1;
                    let span = end - v.active_since;
                    if span > 0.0 {
                        busy.push((self.medium.busy_secs(*id, SimTime::from_secs(end)) / span).clamp(0.0, 1.0));
                    }
                }
                Phase::Arrived => {
                    ever_active += 1;
                    if let Some(b) = v.busy_ratio {
                        busy.push(b);
                    } else {
                        let span = v.arrived_at - v.active_since;
                        if span > 0.0 {
                            let b = self.medium.busy_secs(*id, SimTime::from_secs(v.arrived_at)) / span;
                            busy.push(b.clamp(0.0, 1.0));
                        }
                    }
                    dist.push(v.state.distance_travelled());
                    tt.push(v.arrived_at - v.state.depart_time);
                    loss.push(v.time_loss);
                    co2.push(v.co2);
                    ff.push(v.spawn_free_flow);
                }
            }
        }
        MetricsReport {
            seed: self.cfg.seed,
            policy: self.cfg.rerouting_policy,
            dissemination: self.cfg.dissemination,
            penetration_rate: self.cfg.penetration_rate,
            vehicles: self.vehicles.len() as u64,
            arrived: tt.len() as u64,
            sim_end_s: end,
            channel_busy_ratio: metrics::mean(&busy),
            total_beacons: self.stats.beacons,
            beacons_per_vehicle: if ever_active > 0 {
                self.stats.beacons as f64 / ever_active as f64
            } else {
                0.0
            },
            coverage: metrics::coverage(&self.episodes),
            overhead: self.stats.knowledge_originated + self.stats.knowledge_relays + self.stats.route_infos,
            delay_s: metrics::mean_delay(&self.episodes),
            collisions: self.medium.collided_receptions(),
            mac_drops: self.stats.mac_drops,
            knowledge_episodes: self.episodes.len() as u64,
            travel_distance_m: metrics::mean(&dist),
            travel_time_s: metrics::mean(&tt),
            congestion_time_loss_s: metrics::mean(&loss),
            co2_g: metrics::mean(&co2),
            planning_time_index: metrics::planning_time_index(&tt, &ff).unwrap_or(f64::NAN),
        }
    }

    /// Number of selected demand entries dropped for equal endpoints.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    /// Vehicles whose route was changed at least once.
    pub fn rerouted_vehicles(&self) -> Vec<VehicleId> {
        self.vehicles.iter().filter(|(_, v)| v.reroutes > 0).map(|(id, _)| *id).collect()
    }

    pub fn radio_constants(&self) -> &RadioConstants {
        &self.radio
    }
}

/// Loads the files named by `cfg`, runs to the end and reports.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<MetricsReport> {
    Simulation::from_config(cfg.clone())?.run()
}

/// Re-runs a scenario while checking every dispatched event against
/// `trace`; fails on the first divergence.
pub fn replay_trace(
    cfg: ScenarioConfig,
    graph: RoadGraph,
    demand: &[DemandEntry],
    trace: Vec<TraceEntry>,
) -> Result<MetricsReport> {
    let mut sim = Simulation::new(cfg, graph, demand)?;
    sim.checker = Some(TraceChecker::new(trace));
    sim.run()
}
