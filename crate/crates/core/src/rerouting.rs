//! Knowledge consumption: distance-proportional waiting, route-announcement
//! collection, popularity-weighted entropy route choice, and the baseline
//! policies.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ids::{EdgeId, NodeId, VehicleId};
use crate::knowledge::KnowledgeId;
use crate::mobility::VehicleState;
use crate::road_network::{
    free_flow_time, k_shortest_paths, path_cost, route_entropy, segment_popularity_weight, shortest_path, Edge,
    PopularityTable, RoadGraph, Route,
};

/// How vehicles react to congestion knowledge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReroutingPolicy {
    /// Routes never change.
    None,
    /// Immediate penalized shortest path, no coordination.
    Selfish,
    /// Wait, collect neighbors' announced routes, pick the minimum-entropy
    /// candidate and announce it.
    Deasy,
}

impl ReroutingPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            ReroutingPolicy::None => "none",
            ReroutingPolicy::Selfish => "selfish",
            ReroutingPolicy::Deasy => "deasy",
        }
    }
}

impl std::str::FromStr for ReroutingPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ReroutingPolicy::None),
            "selfish" => Ok(ReroutingPolicy::Selfish),
            "deasy" => Ok(ReroutingPolicy::Deasy),
            other => Err(Error::Config(format!("unknown rerouting policy `{other}`"))),
        }
    }
}

impl std::fmt::Display for ReroutingPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One-hop announcement of a vehicle's remaining route.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteInfoMessage {
    pub sender: VehicleId,
    pub episode: KnowledgeId,
    pub route_edges: Arc<[EdgeId]>,
    pub sent_at: f64,
}

/// Per-vehicle rerouting bookkeeping.
#[derive(Debug, Clone, Default)]
pub struct ReroutingState {
    pub pending_episode: Option<KnowledgeId>,
    pub wait_deadline: f64,
    pub collected: PopularityTable,
    senders: BTreeSet<VehicleId>,
    processed: BTreeSet<KnowledgeId>,
}

impl ReroutingState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn has_processed(&self, id: KnowledgeId) -> bool {
        self.processed.contains(&id)
    }

    /// Opens the collection window for `episode`.
    pub fn start_wait(&mut self, episode: KnowledgeId, deadline: f64) {
        self.pending_episode = Some(episode);
        self.wait_deadline = deadline;
        self.collected.clear();
        self.senders.clear();
    }

    /// Closes the window, returning the collected table when `episode` was
    /// the pending one.
    pub fn finish_wait(&mut self, episode: KnowledgeId) -> Option<PopularityTable> {
        if self.pending_episode != Some(episode) {
            return None;
        }
        self.pending_episode = None;
        self.senders.clear();
        Some(std::mem::take(&mut self.collected))
    }
}

/// Counts an announcement toward the pending episode's popularity table.
/// Returns false when ignored (other episode, no pending wait, or a sender
/// already heard).
pub fn collect_route_info(state: &mut ReroutingState, m: &RouteInfoMessage) -> bool {
    if state.pending_episode != Some(m.episode) || !state.senders.insert(m.sender) {
        return false;
    }
    state.collected.add_route(&m.route_edges);
    true
}

/// `wait_time_max_s · min(1, dist / dist_ref_m)`.
pub fn compute_waiting_time(dist_to_congestion_m: f64, wait_time_max_s: f64, dist_ref_m: f64) -> f64 {
    wait_time_max_s * (dist_to_congestion_m.max(0.0) / dist_ref_m).min(1.0)
}

/// Distance along the remaining route to the start of the first congested
/// edge; 0 when the current edge is congested, `None` when the route never
/// meets congestion.
pub fn distance_to_congestion(v: &VehicleState, g: &RoadGraph, congested: &BTreeSet<EdgeId>) -> Option<f64> {
    let cur = v.current_edge()?;
    if congested.contains(&cur) {
        return Some(0.0);
    }
    let mut d = g.edge(cur).length_m - v.offset_m;
    for e in v.remaining_after_current() {
        if congested.contains(e) {
            return Some(d.max(0.0));
        }
        d += g.edge(*e).length_m;
    }
    None
}

/// Free-flow travel time with congested edges multiplied by `penalty`.
pub fn penalized_cost<'a>(congested: &'a BTreeSet<EdgeId>, penalty: f64) -> impl Fn(&Edge) -> f64 + 'a {
    move |e: &Edge| {
        let t = e.free_flow_time();
        if congested.contains(&e.id) {
            t * penalty
        } else {
            t
        }
    }
}

fn congested_count(edges: &[EdgeId], congested: &BTreeSet<EdgeId>) -> usize {
    edges.iter().filter(|e| congested.contains(e)).count()
}

/// What a vehicle does with fresh knowledge.
#[derive(Debug, Clone, PartialEq)]
pub enum KnowledgeAction {
    Discard,
    /// Start collecting announcements until the deadline.
    Wait { deadline: f64 },
    /// Switch to this tail at the next node.
    Reroute(Vec<EdgeId>),
}

/// Where a replanned tail starts: the end node of the current edge.
fn replan_origin(v: &VehicleState, g: &RoadGraph) -> Option<NodeId> {
    let cur = v.current_edge()?;
    if v.remaining_after_current().is_empty() {
        return None;
    }
    Some(g.edge(cur).to)
}

/// Parameters shared by the rerouting policies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanningParams {
    pub k_candidates: usize,
    pub congestion_penalty: f64,
    pub wait_time_max_s: f64,
    pub dist_ref_m: f64,
}

/// Decides how `v` reacts to knowledge `id` listing `congested` edges.
/// Each episode is processed at most once per vehicle.
pub fn on_knowledge(
    policy: ReroutingPolicy,
    state: &mut ReroutingState,
    v: &VehicleState,
    g: &RoadGraph,
    id: KnowledgeId,
    congested: &BTreeSet<EdgeId>,
    now: f64,
    p: &PlanningParams,
) -> KnowledgeAction {
    if policy == ReroutingPolicy::None || !state.processed.insert(id) || state.pending_episode.is_some() {
        return KnowledgeAction::Discard;
    }
    let tail = v.remaining_after_current();
    if congested_count(tail, congested) == 0 {
        return KnowledgeAction::Discard;
    }
    let Some(from) = replan_origin(v, g) else {
        return KnowledgeAction::Discard;
    };
    let dest = v.route.destination;
    match policy {
        ReroutingPolicy::None => KnowledgeAction::Discard,
        ReroutingPolicy::Selfish => match selfish_reroute(g, from, dest, congested, p.congestion_penalty) {
            Some(r) if congested_count(&r.edges, congested) == 0 && r.edges != tail => {
                KnowledgeAction::Reroute(r.edges)
            }
            _ => KnowledgeAction::Discard,
        },
        ReroutingPolicy::Deasy => {
            let cands = candidates(g, from, dest, congested, p);
            if !cands.iter().any(|c| congested_count(&c.edges, congested) == 0) {
                return KnowledgeAction::Discard;
            }
            let dist = distance_to_congestion(v, g, congested).unwrap_or(0.0);
            let deadline = now + compute_waiting_time(dist, p.wait_time_max_s, p.dist_ref_m);
            state.start_wait(id, deadline);
            KnowledgeAction::Wait { deadline }
        }
    }
}

/// Up to `k` loop-less candidates from `from` to `dest` under penalized costs.
pub fn candidates(
    g: &RoadGraph,
    from: NodeId,
    dest: NodeId,
    congested: &BTreeSet<EdgeId>,
    p: &PlanningParams,
) -> Vec<Route> {
    k_shortest_paths(g, from, dest, p.k_candidates, penalized_cost(congested, p.congestion_penalty)).unwrap_or_default()
}

/// Per-edge popularity weights for the edges of `routes`.
fn popularity_weights(g: &RoadGraph, routes: &[Route], pop: &PopularityTable) -> BTreeMap<EdgeId, f64> {
    let mut w = BTreeMap::new();
    for r in routes {
        for e in &r.edges {
            w.entry(*e)
                .or_insert_with(|| segment_popularity_weight(g.edge(*e), pop.count(*e)));
        }
    }
    w
}

/// Picks among `cands` (ordered by penalized cost): fewest congested edges
/// first; then, with an empty table, the cheapest; otherwise the lowest
/// entropy, then the lower free-flow time, then the smaller edge sequence.
pub fn select_candidate(
    g: &RoadGraph,
    cands: &[Route],
    congested: &BTreeSet<EdgeId>,
    pop: &PopularityTable,
) -> Option<Route> {
    let fewest = cands.iter().map(|c| congested_count(&c.edges, congested)).min()?;
    let eligible: Vec<&Route> = cands
        .iter()
        .filter(|c| congested_count(&c.edges, congested) == fewest)
        .collect();
    if pop.is_empty() {
        return eligible.first().map(|r| (*r).clone());
    }
    let owned: Vec<Route> = eligible.iter().map(|r| (*r).clone()).collect();
    let weights = popularity_weights(g, &owned, pop);
    owned
        .into_iter()
        .map(|r| (route_entropy(&r, &weights), free_flow_time(g, &r), r))
        .min_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.total_cmp(&b.1))
                .then_with(|| a.2.edges.cmp(&b.2.edges))
        })
        .map(|(_, _, r)| r)
}

/// Candidate generation followed by [`select_candidate`].
pub fn plan_route(
    g: &RoadGraph,
    from: NodeId,
    dest: NodeId,
    congested: &BTreeSet<EdgeId>,
    pop: &PopularityTable,
    p: &PlanningParams,
) -> Option<Route> {
    select_candidate(g, &candidates(g, from, dest, congested, p), congested, pop)
}

/// Plans the tail for a vehicle whose wait expired. `None` when the vehicle
/// is on its last edge.
pub fn plan_for_vehicle(
    v: &VehicleState,
    g: &RoadGraph,
    congested: &BTreeSet<EdgeId>,
    pop: &PopularityTable,
    p: &PlanningParams,
) -> Option<Route> {
    let from = replan_origin(v, g)?;
    plan_route(g, from, v.route.destination, congested, pop, p)
}

/// Penalized shortest path with no coordination.
pub fn selfish_reroute(
    g: &RoadGraph,
    from: NodeId,
    dest: NodeId,
    congested: &BTreeSet<EdgeId>,
    penalty: f64,
) -> Option<Route> {
    shortest_path(g, from, dest, penalized_cost(congested, penalty)).ok()
}

/// Penalized cost of a route, for reporting.
pub fn route_cost(g: &RoadGraph, r: &Route, congested: &BTreeSet<EdgeId>, penalty: f64) -> f64 {
    path_cost(g, &r.edges, penalized_cost(congested, penalty))
}
