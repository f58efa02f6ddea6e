//! Vehicle ranking from one-hop knowledge: ego networks built from beacon
//! neighbor lists, egocentric betweenness, a two-ray link-quality score, and
//! their blend.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::ids::{EdgeId, VehicleId};
use crate::radio::{distance, two_ray_loss_db, RadioConstants};

/// What a vehicle knows about one neighbor from its latest beacon.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborEntry {
    pub position: (f64, f64),
    pub speed_mps: f64,
    pub heading: (f64, f64),
    pub current_edge: Option<EdgeId>,
    /// Sorted ascending.
    pub neighbor_ids: Arc<[VehicleId]>,
    pub v_rank: f64,
    pub last_seen: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RankingState {
    pub neighbor_table: BTreeMap<VehicleId, NeighborEntry>,
    pub my_ebm: f64,
    pub my_rpm: f64,
    pub my_vrank: f64,
    dirty: bool,
}

impl RankingState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, id: VehicleId, entry: NeighborEntry) {
        self.neighbor_table.insert(id, entry);
        self.dirty = true;
    }

    /// Drops entries not refreshed within `max_age` seconds of `now`.
    pub fn evict_stale(&mut self, now: f64, max_age: f64) {
        let before = self.neighbor_table.len();
        self.neighbor_table.retain(|_, e| now - e.last_seen <= max_age + 1e-9);
        if self.neighbor_table.len() != before {
            self.dirty = true;
        }
    }

    pub fn neighbor_ids(&self) -> Vec<VehicleId> {
        self.neighbor_table.keys().copied().collect()
    }

    /// Recomputes EBM, RPM and the rank when the neighborhood changed since
    /// the last call. The link score depends on the own position, so it is
    /// refreshed every time.
    pub fn refresh(&mut self, self_id: VehicleId, self_pos: (f64, f64), alpha: f64, scorer: &LinkScorer) -> f64 {
        if self.dirty {
            self.my_ebm = compute_ebm(&build_adjacency(self, self_id));
            self.dirty = false;
        }
        self.my_rpm = scorer.mean_score(self, self_pos);
        self.my_vrank = compute_vrank(self.my_ebm, self.my_rpm, alpha);
        self.my_vrank
    }
}

/// Symmetric 0/1 adjacency over `{ego} ∪ alters`, ego at index 0, stored as
/// bit rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EgoAdjacency {
    pub ids: Vec<VehicleId>,
    rows: Vec<Vec<u64>>,
}

impl EgoAdjacency {
    /// Ego alone.
    pub fn singleton(ego: VehicleId) -> Self {
        Self::empty(vec![ego])
    }

    fn empty(ids: Vec<VehicleId>) -> Self {
        let words = ids.len().div_ceil(64);
        let rows = vec![vec![0u64; words]; ids.len()];
        Self { ids, rows }
    }

    /// Builds from a dense matrix; the result is symmetrized and the diagonal
    /// cleared.
    pub fn from_matrix(ids: Vec<VehicleId>, matrix: &[Vec<u8>]) -> Self {
        assert_eq!(ids.len(), matrix.len());
        let mut a = Self::empty(ids);
        for (i, row) in matrix.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0 && i != j {
                    a.link(i, j);
                }
            }
        }
        a
    }

    pub fn size(&self) -> usize {
        self.ids.len()
    }

    pub fn link(&mut self, i: usize, j: usize) {
        if i == j {
            return;
        }
        self.rows[i][j / 64] |= 1 << (j % 64);
        self.rows[j][i / 64] |= 1 << (i % 64);
    }

    pub fn is_adjacent(&self, i: usize, j: usize) -> bool {
        self.rows[i][j / 64] & (1 << (j % 64)) != 0
    }

    /// Entry `(i, j)` of the squared matrix: common neighbors of `i` and `j`.
    pub fn two_paths(&self, i: usize, j: usize) -> u32 {
        self.rows[i]
            .iter()
            .zip(&self.rows[j])
            .map(|(a, b)| (a & b).count_ones())
            .sum()
    }

    pub fn matrix(&self) -> Vec<Vec<u8>> {
        let n = self.size();
        (0..n)
            .map(|i| (0..n).map(|j| self.is_adjacent(i, j) as u8).collect())
            .collect()
    }
}

/// Ego network from the neighbor table. Alters are the table's keys in
/// ascending order; two alters are linked when either lists the other.
pub fn build_adjacency(state: &RankingState, self_id: VehicleId) -> EgoAdjacency {
    let mut ids = Vec::with_capacity(state.neighbor_table.len() + 1);
    ids.push(self_id);
    ids.extend(state.neighbor_table.keys().copied().filter(|id| *id != self_id));
    let mut a = EgoAdjacency::empty(ids);
    let alters = &a.ids[1..];
    let index_of = |v: VehicleId| alters.binary_search(&v).ok().map(|k| k + 1);
    let mut links = Vec::new();
    for (i, id) in a.ids.iter().enumerate().skip(1) {
        links.push((0, i));
        for other in state.neighbor_table[id].neighbor_ids.iter() {
            if let Some(j) = index_of(*other) {
                links.push((i, j));
            }
        }
    }
    for (i, j) in links {
        a.link(i, j);
    }
    a
}

/// Egocentric betweenness: Σ over non-adjacent pairs `i < j` with at least
/// one two-step path of `1 / (A²)ᵢⱼ`.
pub fn compute_ebm(a: &EgoAdjacency) -> f64 {
    let n = a.size();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            if a.is_adjacent(i, j) {
                continue;
            }
            let paths = a.two_paths(i, j);
            if paths > 0 {
                total += 1.0 / paths as f64;
            }
        }
    }
    total
}

/// Normalizes per-link two-ray loss against the loss at 1 m (best) and at
/// the transmission range (worst).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkScorer {
    pub constants: RadioConstants,
    pub l_min: f64,
    pub l_max: f64,
}

impl LinkScorer {
    pub fn new(c: &RadioConstants) -> Self {
        Self {
            constants: *c,
            l_min: two_ray_loss_db(1.0, c).expect("positive distance"),
            l_max: two_ray_loss_db(c.tx_range_m, c).expect("positive range"),
        }
    }

    /// Link quality in `[0, 1]` at distance `d`.
    pub fn score(&self, d: f64) -> f64 {
        let loss = two_ray_loss_db(d.max(1e-3), &self.constants).expect("positive distance");
        ((self.l_max - loss) / (self.l_max - self.l_min)).clamp(0.0, 1.0)
    }

    /// Mean link quality over the neighbor table; 0 without neighbors.
    pub fn mean_score(&self, state: &RankingState, self_pos: (f64, f64)) -> f64 {
        if state.neighbor_table.is_empty() {
            return 0.0;
        }
        let sum: f64 = state
            .neighbor_table
            .values()
            .map(|e| self.score(distance(self_pos, e.position)))
            .sum();
        sum / state.neighbor_table.len() as f64
    }
}

/// Mean normalized link quality to the current neighbors; 0 without
/// neighbors.
pub fn compute_rpm_score(state: &RankingState, self_pos: (f64, f64), c: &RadioConstants) -> f64 {
    LinkScorer::new(c).mean_score(state, self_pos)
}

/// `alpha · ebm/(ebm+1) + (1 − alpha) · rpm`.
pub fn compute_vrank(ebm: f64, rpm: f64, alpha: f64) -> f64 {
    let ebm_norm = if ebm.is_infinite() { 1.0 } else { ebm / (ebm + 1.0) };
    alpha * ebm_norm + (1.0 - alpha) * rpm
}

/// The neighbor with the highest advertised rank strictly above
/// `self_vrank`, skipping `exclude`; ties go to the smaller id. `None` means
/// the caller is a local maximum.
pub fn select_next_aggregator(
    state: &RankingState,
    self_vrank: f64,
    exclude: &BTreeSet<VehicleId>,
) -> Option<VehicleId> {
    let mut best: Option<(VehicleId, f64)> = None;
    // Ascending id order, so only a strictly larger rank replaces the best.
    for (id, e) in &state.neighbor_table {
        if e.v_rank <= self_vrank || exclude.contains(id) {
            continue;
        }
        if best.is_none_or(|(_, r)| e.v_rank > r) {
            best = Some((*id, e.v_rank));
        }
    }
    best.map(|(id, _)| id)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(nbrs: &[u32], rank: f64, pos: (f64, f64)) -> NeighborEntry {
        NeighborEntry {
            position: pos,
            speed_mps: 0.0,
            heading: (1.0, 0.0),
            current_edge: None,
            neighbor_ids: nbrs.iter().map(|v| VehicleId(*v)).collect::<Vec<_>>().into(),
            v_rank: rank,
            last_seen: 0.0,
        }
    }

    fn state(table: &[(u32, &[u32])]) -> RankingState {
        let mut s = RankingState::new();
        for (id, nbrs) in table {
            s.observe(VehicleId(*id), entry(nbrs, 0.0, (0.0, 0.0)));
        }
        s
    }

    #[test]
    fn empty_table_is_ego_alone() {
        let a = build_adjacency(&RankingState::new(), VehicleId(7));
        assert_eq!(a.matrix(), vec![vec![0]]);
        assert_eq!(compute_ebm(&a), 0.0);
    }

    #[test]
    fn fully_linked_alters_form_k4() {
        let s = state(&[(1, &[2, 3]), (2, &[1, 3]), (3, &[1, 2])]);
        let a = build_adjacency(&s, VehicleId(0));
        let m = a.matrix();
        for (i, row) in m.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert_eq!(*v, (i != j) as u8);
            }
        }
        assert_eq!(compute_ebm(&a), 0.0);
    }

    #[test]
    fn one_sided_listing_still_links() {
        let s = state(&[(1, &[2]), (2, &[])]);
        let a = build_adjacency(&s, VehicleId(0));
        assert!(a.is_adjacent(1, 2) && a.is_adjacent(2, 1));
    }

    #[test]
    fn star_ebm_counts_each_pair_once() {
        let s = state(&[(1, &[0]), (2, &[0]), (3, &[0])]);
        let a = build_adjacency(&s, VehicleId(0));
        assert_eq!(compute_ebm(&a), 3.0);
    }

    #[test]
    fn shared_broker_halves_credit() {
        // 1 and 2 both reach each other via ego and via 3.
        let s = state(&[(1, &[3]), (2, &[3]), (3, &[1, 2])]);
        assert_eq!(compute_ebm(&build_adjacency(&s, VehicleId(0))), 0.5);
    }

    #[test]
    fn vrank_examples() {
        assert_eq!(compute_vrank(0.0, 0.0, 0.5), 0.0);
        assert!((compute_vrank(3.0, 0.4, 0.5) - 0.575).abs() < 1e-12);
        assert!((compute_vrank(1e15, 1.0, 0.5) - 1.0).abs() < 1e-9);
        assert_eq!(compute_vrank(f64::INFINITY, 1.0, 0.5), 1.0);
    }

    #[test]
    fn rpm_examples() {
        let c = RadioConstants::default();
        assert_eq!(compute_rpm_score(&RankingState::new(), (0.0, 0.0), &c), 0.0);
        let mut s = RankingState::new();
        s.observe(VehicleId(1), entry(&[], 0.0, (287.0, 0.0)));
        assert_eq!(compute_rpm_score(&s, (0.0, 0.0), &c), 0.0);
    }

    #[test]
    fn next_aggregator_picks_highest_above_self() {
        let mut s = RankingState::new();
        s.observe(VehicleId(1), entry(&[], 1.93, (0.0, 0.0)));
        s.observe(VehicleId(2), entry(&[], 1.10, (0.0, 0.0)));
        s.observe(VehicleId(3), entry(&[], 0.80, (0.0, 0.0)));
        let none = BTreeSet::new();
        assert_eq!(select_next_aggregator(&s, 1.50, &none), Some(VehicleId(1)));
        assert_eq!(select_next_aggregator(&s, 2.0, &none), None);
        assert_eq!(select_next_aggregator(&s, 1.93, &none), None);
        let ex: BTreeSet<_> = [VehicleId(1)].into();
        assert_eq!(select_next_aggregator(&s, 1.0, &ex), Some(VehicleId(2)));
    }

    #[test]
    fn next_aggregator_tie_takes_smaller_id() {
        let mut s = RankingState::new();
        s.observe(VehicleId(9), entry(&[], 0.7, (0.0, 0.0)));
        s.observe(VehicleId(4), entry(&[], 0.7, (0.0, 0.0)));
        assert_eq!(select_next_aggregator(&s, 0.1, &BTreeSet::new()), Some(VehicleId(4)));
    }

    #[test]
    fn stale_entries_are_evicted() {
        let mut s = RankingState::new();
        let mut e = entry(&[], 0.0, (0.0, 0.0));
        e.last_seen = 1.0;
        s.observe(VehicleId(1), e.clone());
        e.last_seen = 3.5;
        s.observe(VehicleId(2), e);
        s.evict_stale(4.0, 3.0);
        assert_eq!(s.neighbor_ids(), vec![VehicleId(1), VehicleId(2)]);
        s.evict_stale(4.5, 3.0);
        assert_eq!(s.neighbor_ids(), vec![VehicleId(2)]);
    }
}
