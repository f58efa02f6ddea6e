use std::collections::BTreeMap;

use super::graph::{Edge, RoadGraph};
use super::Route;
use crate::ids::EdgeId;

/// Announced-route counts per road segment for one congestion episode.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PopularityTable {
    counts: BTreeMap<EdgeId, u32>,
}

impl PopularityTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counts one announcement covering `edges`; repeated edges count once.
    pub fn add_route(&mut self, edges: &[EdgeId]) {
        let mut seen = std::collections::BTreeSet::new();
        for e in edges {
            if seen.insert(*e) {
                *self.counts.entry(*e).or_insert(0) += 1;
            }
        }
    }

    pub fn count(&self, edge: EdgeId) -> u32 {
        self.counts.get(&edge).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn clear(&mut self) {
        self.counts.clear();
    }

    pub fn iter(&self) -> impl Iterator<Item = (EdgeId, u32)> + '_ {
        self.counts.iter().map(|(e, n)| (*e, *n))
    }

    /// Multiplies every count by `factor`.
    pub fn scaled(&self, factor: u32) -> Self {
        Self {
            counts: self.counts.iter().map(|(e, n)| (*e, n * factor)).collect(),
        }
    }
}

/// Popularity weight of a segment: `n · length / lanes`.
pub fn segment_popularity_weight(edge: &Edge, n: u32) -> f64 {
    n as f64 * edge.length_m / edge.lanes as f64
}

/// Shannon entropy (natural log) of the weight shares. Zero weights
/// contribute nothing; an all-zero or empty input yields 0.
pub fn entropy_of_weights(weights: &[f64]) -> f64 {
    let q: f64 = weights.iter().filter(|w| **w > 0.0).sum();
    if q <= 0.0 {
        return 0.0;
    }
    weights
        .iter()
        .filter(|w| **w > 0.0)
        .map(|&w| {
            let p = w / q;
            p * (q / w).ln()
        })
        .sum()
}

/// Entropy of a route's segment weights; edges missing from `weights`
/// count as zero.
pub fn route_entropy(route: &Route, weights: &BTreeMap<EdgeId, f64>) -> f64 {
    let ws: Vec<f64> = route
        .edges
        .iter()
        .map(|e| weights.get(e).copied().unwrap_or(0.0))
        .collect();
    entropy_of_weights(&ws)
}

/// Σ length / vmax over the route's edges.
pub fn free_flow_time(g: &RoadGraph, route: &Route) -> f64 {
    route
        .edges
        .iter()
        .map(|e| g.edge(*e).free_flow_time())
        .sum()
}
