//! Knowledge generation and distribution: beacons, road-speed report
//! aggregation, level-of-service classification at local rank maxima, and
//! suppressed rebroadcast of congestion knowledge.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ids::{EdgeId, VehicleId};
use crate::radio::{in_zop, ZopParams};
use crate::ranking::{select_next_aggregator, RankingState};
use crate::road_network::RoadGraph;

/// Highway Capacity Manual level of service, `A` best.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LevelOfService {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl LevelOfService {
    /// Levels D, E and F signal congestion.
    pub fn is_congested(self) -> bool {
        self >= LevelOfService::D
    }

    pub fn as_char(self) -> char {
        match self {
            LevelOfService::A => 'A',
            LevelOfService::B => 'B',
            LevelOfService::C => 'C',
            LevelOfService::D => 'D',
            LevelOfService::E => 'E',
            LevelOfService::F => 'F',
        }
    }
}

/// Maps a road weight to its level. Each band includes its lower bound
/// (`0.9 → A`, `0.33 → E`); `1.0` is `A` and `0.0` is `F`.
pub fn classify(w: f64) -> LevelOfService {
    if w >= 0.9 {
        LevelOfService::A
    } else if w >= 0.7 {
        LevelOfService::B
    } else if w >= 0.5 {
        LevelOfService::C
    } else if w >= 0.4 {
        LevelOfService::D
    } else if w >= 0.33 {
        LevelOfService::E
    } else {
        LevelOfService::F
    }
}

/// Aggregated average speed on one edge and how many samples it pools.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadReport {
    pub edge: EdgeId,
    pub v_agg: f64,
    pub count: u32,
    pub updated_at: f64,
}

impl RoadReport {
    pub fn sample(edge: EdgeId, speed: f64, at: f64) -> Self {
        Self {
            edge,
            v_agg: speed.max(0.0),
            count: 1,
            updated_at: at,
        }
    }
}

/// Count-weighted mean of two reports on the same edge.
pub fn merge_reports(a: &RoadReport, b: &RoadReport) -> Result<RoadReport> {
    if a.edge != b.edge {
        return Err(Error::EdgeMismatch(a.edge, b.edge));
    }
    let count = a.count + b.count;
    Ok(RoadReport {
        edge: a.edge,
        v_agg: (a.v_agg * a.count as f64 + b.v_agg * b.count as f64) / count as f64,
        count,
        updated_at: a.updated_at.max(b.updated_at),
    })
}

/// Exponential smoothing; `sigma` weighs the old value.
pub fn smooth_report(old_v: f64, new_v: f64, sigma: f64) -> f64 {
    sigma * old_v + (1.0 - sigma) * new_v
}

/// Measured-to-limit speed ratio, clamped to `[0, 1]`.
pub fn road_weight(report: &RoadReport, vmax: f64) -> f64 {
    (report.v_agg / vmax).clamp(0.0, 1.0)
}

/// A vehicle's road reports plus the chain of aggregators they passed
/// through.
#[derive(Debug, Clone, Default)]
pub struct ReportStore {
    reports: BTreeMap<EdgeId, RoadReport>,
    pub visited: BTreeSet<VehicleId>,
}

impl ReportStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }

    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn get(&self, edge: EdgeId) -> Option<&RoadReport> {
        self.reports.get(&edge)
    }

    pub fn iter(&self) -> impl Iterator<Item = &RoadReport> {
        self.reports.values()
    }

    /// A locally sensed speed: smoothed into an existing entry, inserted
    /// otherwise.
    pub fn ingest_sample(&mut self, edge: EdgeId, speed: f64, now: f64, sigma: f64) {
        let sample = RoadReport::sample(edge, speed, now);
        self.reports
            .entry(edge)
            .and_modify(|r| {
                r.v_agg = smooth_report(r.v_agg, sample.v_agg, sigma);
                r.count = r.count.saturating_add(1);
                r.updated_at = now;
            })
            .or_insert(sample);
    }

    /// Reports handed over by a lower-ranked neighbor, pooled by count.
    pub fn merge_forwarded(&mut self, incoming: &[RoadReport], chain: &[VehicleId]) {
        for r in incoming {
            match self.reports.get_mut(&r.edge) {
                Some(own) => *own = merge_reports(own, r).expect("same edge"),
                None => {
                    self.reports.insert(r.edge, *r);
                }
            }
        }
        self.visited.extend(chain.iter().copied());
    }

    /// Drops reports last updated more than `ttl` seconds ago.
    pub fn evict(&mut self, now: f64, ttl: f64) {
        self.reports.retain(|_, r| now - r.updated_at <= ttl);
    }

    /// Removes and returns up to `max` reports, most recent first, and clears
    /// the visited chain, which travels with them.
    pub fn take_for_forward(&mut self, max: usize) -> (Vec<RoadReport>, Vec<VehicleId>) {
        let mut all: Vec<RoadReport> = self.reports.values().copied().collect();
        all.sort_by(|a, b| b.updated_at.total_cmp(&a.updated_at).then(a.edge.cmp(&b.edge)));
        all.truncate(max);
        for r in &all {
            self.reports.remove(&r.edge);
        }
        let chain = std::mem::take(&mut self.visited).into_iter().collect();
        (all, chain)
    }
}

/// Aggregated reports addressed to one neighbor, riding on a beacon.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateForward {
    pub target: VehicleId,
    pub reports: Vec<RoadReport>,
    /// Aggregators already on the chain, sender included.
    pub chain: Vec<VehicleId>,
}

/// One-hop periodic status broadcast. Never forwarded.
#[derive(Debug, Clone, PartialEq)]
pub struct Beacon {
    pub sender: VehicleId,
    pub sent_at: f64,
    pub position: (f64, f64),
    pub speed_mps: f64,
    pub heading: (f64, f64),
    pub current_edge: Option<EdgeId>,
    /// Sorted ascending, never containing the sender.
    pub neighbor_ids: Arc<[VehicleId]>,
    pub v_rank: f64,
    pub piggyback: Option<AggregateForward>,
}

/// Inputs for [`build_beacon`]: the sender's instantaneous state.
#[derive(Debug, Clone, Copy)]
pub struct BeaconSource {
    pub id: VehicleId,
    pub now: f64,
    pub position: (f64, f64),
    pub speed_mps: f64,
    pub heading: (f64, f64),
    pub current_edge: Option<EdgeId>,
}

/// Snapshot of the sender's state and neighbor table.
pub fn build_beacon(src: BeaconSource, ranking: &RankingState, piggyback: Option<AggregateForward>) -> Beacon {
    let ids: Vec<VehicleId> = ranking.neighbor_table.keys().copied().filter(|v| *v != src.id).collect();
    Beacon {
        sender: src.id,
        sent_at: src.now,
        position: src.position,
        speed_mps: src.speed_mps,
        heading: src.heading,
        current_edge: src.current_edge,
        neighbor_ids: ids.into(),
        v_rank: ranking.my_vrank,
        piggyback,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KnowledgeId(pub u64);

impl std::fmt::Display for KnowledgeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CongestedSegment {
    pub edge: EdgeId,
    pub level: LevelOfService,
    pub w_road: f64,
}

/// Congestion notification.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeMessage {
    pub id: KnowledgeId,
    pub origin: VehicleId,
    pub created_at: f64,
    pub congested: Arc<[CongestedSegment]>,
    /// Position of the previous hop; the originator's own position on the
    /// first transmission.
    pub hop_origin_pos: (f64, f64),
}

impl KnowledgeMessage {
    /// `None` unless at least one segment is listed; non-congested levels are
    /// filtered out.
    pub fn new(
        id: KnowledgeId,
        origin: VehicleId,
        created_at: f64,
        congested: Vec<CongestedSegment>,
        origin_pos: (f64, f64),
    ) -> Option<Self> {
        let congested: Vec<_> = congested.into_iter().filter(|c| c.level.is_congested()).collect();
        if congested.is_empty() {
            return None;
        }
        Some(Self {
            id,
            origin,
            created_at,
            congested: congested.into(),
            hop_origin_pos: origin_pos,
        })
    }

    pub fn lists(&self, edge: EdgeId) -> bool {
        self.congested.iter().any(|c| c.edge == edge)
    }

    pub fn edges(&self) -> impl Iterator<Item = EdgeId> + '_ {
        self.congested.iter().map(|c| c.edge)
    }
}

/// Classifies every stored report and keeps the congested ones. Edges the
/// graph does not know are skipped.
pub fn classify_store(store: &ReportStore, g: &RoadGraph) -> Vec<CongestedSegment> {
    store
        .iter()
        .filter_map(|r| {
            let edge = g.try_edge(r.edge)?;
            let w = road_weight(r, edge.vmax_mps);
            let level = classify(w);
            level.is_congested().then_some(CongestedSegment {
                edge: r.edge,
                level,
                w_road: w,
            })
        })
        .collect()
}

/// What the aggregation step decided.
#[derive(Debug, Clone, PartialEq)]
pub enum AggregationAction {
    /// Hand the store to this higher-ranked neighbor.
    ForwardTo(VehicleId),
    /// Local rank maximum: the classification result (possibly empty).
    Classified(Vec<CongestedSegment>),
}

/// Forward to the best higher-ranked neighbor not yet on the chain, or
/// classify when none exists.
pub fn forward_or_classify(
    ranking: &RankingState,
    self_vrank: f64,
    store: &ReportStore,
    g: &RoadGraph,
) -> AggregationAction {
    match select_next_aggregator(ranking, self_vrank, &store.visited) {
        Some(next) => AggregationAction::ForwardTo(next),
        None => AggregationAction::Classified(classify_store(store, g)),
    }
}

/// How knowledge is relayed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DisseminationMode {
    /// Zone-of-preference timers with duplicate suppression.
    Zop,
    /// Every first reception is rebroadcast straight away.
    Flooding,
}

/// What to do with a received knowledge copy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reception {
    /// First copy: rebroadcast after this delay (zero for flooding).
    First { rebroadcast_after_s: f64, in_zone: bool },
    /// A duplicate arrived while our own rebroadcast was pending.
    Suppressed,
    /// Already handled.
    Duplicate,
}

/// Per-vehicle relay bookkeeping: every knowledge id is relayed at most once.
#[derive(Debug, Clone, Default)]
pub struct DisseminationState {
    seen: HashSet<KnowledgeId>,
    pending: BTreeSet<KnowledgeId>,
    relayed: HashSet<KnowledgeId>,
}

impl DisseminationState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn has_seen(&self, id: KnowledgeId) -> bool {
        self.seen.contains(&id)
    }

    /// The originator counts as having seen and relayed its own message.
    pub fn mark_originated(&mut self, id: KnowledgeId) {
        self.seen.insert(id);
        self.relayed.insert(id);
    }

    pub fn on_receive(
        &mut self,
        k: &KnowledgeMessage,
        sender_pos: (f64, f64),
        my_pos: (f64, f64),
        mode: DisseminationMode,
        range_m: f64,
        zop: &ZopParams,
    ) -> Reception {
        if !self.seen.insert(k.id) {
            if mode == DisseminationMode::Zop && self.pending.remove(&k.id) {
                return Reception::Suppressed;
            }
            return Reception::Duplicate;
        }
        match mode {
            DisseminationMode::Flooding => {
                self.relayed.insert(k.id);
                Reception::First {
                    rebroadcast_after_s: 0.0,
                    in_zone: true,
                }
            }
            DisseminationMode::Zop => {
                let dir = (sender_pos.0 - k.hop_origin_pos.0, sender_pos.1 - k.hop_origin_pos.1);
                let (in_zone, wait) = in_zop(sender_pos, dir, my_pos, range_m, zop);
                self.pending.insert(k.id);
                Reception::First {
                    rebroadcast_after_s: wait,
                    in_zone,
                }
            }
        }
    }

    /// Rebroadcast timer fired: true when the relay should go out.
    pub fn on_timer(&mut self, id: KnowledgeId) -> bool {
        if self.pending.remove(&id) && self.relayed.insert(id) {
            return true;
        }
        false
    }

    pub fn relayed_count(&self) -> usize {
        self.relayed.len()
    }
}
