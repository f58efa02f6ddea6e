//! Dijkstra and Yen's loop-less k-shortest paths.
//!
//! Ties are broken lexicographically on the edge-id sequence, so every query
//! has exactly one answer. Labels carry the full edge sequence; extending two
//! labels at the same node by the same edge preserves their order because
//! costs are strictly positive, which keeps Dijkstra correct under the
//! combined `(cost, edges)` order.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashSet};

use super::graph::{Edge, RoadGraph};
use super::Route;
use crate::error::{Error, Result};
use crate::ids::{EdgeId, NodeId};

#[derive(Debug, Clone, PartialEq)]
struct Label {
    cost: f64,
    edges: Vec<EdgeId>,
}

impl Eq for Label {}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then_with(|| self.edges.cmp(&other.edges))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct QueueItem {
    label: Label,
    node: usize,
}

impl PartialEq for QueueItem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for QueueItem {}
impl Ord for QueueItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap
        other
            .label
            .cmp(&self.label)
            .then_with(|| other.node.cmp(&self.node))
    }
}
impl PartialOrd for QueueItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Sum of `edge_cost` along `edges`, accumulated in path order.
pub fn path_cost(g: &RoadGraph, edges: &[EdgeId], edge_cost: impl Fn(&Edge) -> f64) -> f64 {
    edges.iter().fold(0.0, |acc, e| acc + edge_cost(g.edge(*e)))
}

fn dijkstra(
    g: &RoadGraph,
    from: usize,
    to: usize,
    edge_cost: &dyn Fn(&Edge) -> f64,
    banned_nodes: &HashSet<usize>,
    banned_edges: &HashSet<EdgeId>,
) -> Option<Label> {
    let n = g.node_count();
    let mut best: Vec<Option<Label>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    let start = Label {
        cost: 0.0,
        edges: Vec::new(),
    };
    best[from] = Some(start.clone());
    heap.push(QueueItem {
        label: start,
        node: from,
    });
    while let Some(QueueItem { label, node }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        if node == to {
            return Some(label);
        }
        for &ei in g.out_indices(node) {
            let e = g.edge_at_index(ei);
            if banned_edges.contains(&e.id) {
                continue;
            }
            let Some(next) = g.node_index(e.to) else { continue };
            if done[next] || banned_nodes.contains(&next) {
                continue;
            }
            let c = edge_cost(e);
            debug_assert!(c > 0.0, "edge costs must be positive");
            let mut edges = label.edges.clone();
            edges.push(e.id);
            let cand = Label {
                cost: label.cost + c,
                edges,
            };
            if best[next].as_ref().is_none_or(|b| cand < *b) {
                best[next] = Some(cand.clone());
                heap.push(QueueItem {
                    label: cand,
                    node: next,
                });
            }
        }
    }
    None
}

fn endpoints(g: &RoadGraph, from: NodeId, to: NodeId) -> Result<(usize, usize)> {
    let f = g.node_index(from).ok_or(Error::UnknownNode(from))?;
    let t = g.node_index(to).ok_or(Error::UnknownNode(to))?;
    Ok((f, t))
}

/// Minimum-cost route; equal-cost routes resolve to the lexicographically
/// smallest edge sequence. `from == to` yields an empty route.
pub fn shortest_path(
    g: &RoadGraph,
    from: NodeId,
    to: NodeId,
    edge_cost: impl Fn(&Edge) -> f64,
) -> Result<Route> {
    let (f, t) = endpoints(g, from, to)?;
    let label = dijkstra(g, f, t, &edge_cost, &HashSet::new(), &HashSet::new())
        .ok_or(Error::Unreachable { from, to })?;
    Ok(Route::new(from, to, label.edges))
}

/// Yen's algorithm: up to `k` distinct loop-less routes in ascending
/// `(cost, edge sequence)` order.
pub fn k_shortest_paths(
    g: &RoadGraph,
    from: NodeId,
    to: NodeId,
    k: usize,
    edge_cost: impl Fn(&Edge) -> f64,
) -> Result<Vec<Route>> {
    let (f, t) = endpoints(g, from, to)?;
    if k == 0 {
        return Ok(Vec::new());
    }
    let first = dijkstra(g, f, t, &edge_cost, &HashSet::new(), &HashSet::new())
        .ok_or(Error::Unreachable { from, to })?;
    let mut accepted: Vec<Label> = vec![first];
    let mut candidates: BTreeSet<Label> = BTreeSet::new();

    while accepted.len() < k {
        let prev = accepted.last().expect("non-empty").clone();
        let prev_nodes = node_indices(g, f, &prev.edges);
        for i in 0..prev.edges.len() {
            let spur = prev_nodes[i];
            let root = &prev.edges[..i];
            let banned_edges: HashSet<EdgeId> = accepted
                .iter()
                .filter(|p| p.edges.len() > i && p.edges[..i] == *root)
                .map(|p| p.edges[i])
                .collect();
            let banned_nodes: HashSet<usize> = prev_nodes[..i].iter().copied().collect();
            let Some(spur_label) = dijkstra(g, spur, t, &edge_cost, &banned_nodes, &banned_edges) else {
                continue;
            };
            let mut edges = root.to_vec();
            edges.extend_from_slice(&spur_label.edges);
            let cand = Label {
                cost: path_cost(g, &edges, &edge_cost),
                edges,
            };
            if !accepted.iter().any(|a| a.edges == cand.edges) {
                candidates.insert(cand);
            }
        }
        match candidates.pop_first() {
            Some(next) => accepted.push(next),
            None => break,
        }
    }
    Ok(accepted
        .into_iter()
        .map(|l| Route::new(from, to, l.edges))
        .collect())
}

fn node_indices(g: &RoadGraph, from: usize, edges: &[EdgeId]) -> Vec<usize> {
    let mut out = Vec::with_capacity(edges.len() + 1);
    out.push(from);
    for e in edges {
        out.push(g.node_index(g.edge(*e).to).expect("edge endpoint exists"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::road_network::GridSpec;

    fn free_flow(e: &Edge) -> f64 {
        e.free_flow_time()
    }

    fn line_graph() -> RoadGraph {
        RoadGraph::parse("node 0 0 0\nnode 1 100 0\nedge 5 0 1 100 1 10\n", "t").unwrap()
    }

    fn diamond() -> RoadGraph {
        let text = "node 0 0 0\nnode 1 100 100\nnode 2 100 -100\nnode 3 200 0\n\
                    edge 0 0 1 141 1 10\nedge 1 1 3 141 1 10\n\
                    edge 2 0 2 150 1 10\nedge 3 2 3 150 1 10\n";
        RoadGraph::parse(text, "t").unwrap()
    }

    #[test]
    fn single_edge() {
        let g = line_graph();
        let r = shortest_path(&g, NodeId(0), NodeId(1), free_flow).unwrap();
        assert_eq!(r.edges, vec![EdgeId(5)]);
    }

    #[test]
    fn unreachable_is_an_error() {
        let g = line_graph();
        let err = shortest_path(&g, NodeId(1), NodeId(0), free_flow).unwrap_err();
        assert!(matches!(err, Error::Unreachable { .. }));
        assert!(matches!(
            shortest_path(&g, NodeId(0), NodeId(9), free_flow).unwrap_err(),
            Error::UnknownNode(NodeId(9))
        ));
    }

    #[test]
    fn equal_cost_tie_takes_smaller_edge_sequence() {
        let g = RoadGraph::manhattan_grid(&GridSpec::new(2, 2, 100.0)).unwrap();
        // 0 -> 3 can go via 1 or via 2 at equal cost.
        let r = shortest_path(&g, NodeId(0), NodeId(3), |_| 1.0).unwrap();
        let alternatives = k_shortest_paths(&g, NodeId(0), NodeId(3), 2, |_| 1.0).unwrap();
        assert_eq!(alternatives.len(), 2);
        assert!(alternatives[0].edges < alternatives[1].edges);
        assert_eq!(r.edges, alternatives[0].edges);
    }

    #[test]
    fn k_one_matches_shortest() {
        let g = diamond();
        let one = k_shortest_paths(&g, NodeId(0), NodeId(3), 1, free_flow).unwrap();
        let sp = shortest_path(&g, NodeId(0), NodeId(3), free_flow).unwrap();
        assert_eq!(one, vec![sp]);
    }

    #[test]
    fn diamond_has_two_routes() {
        let g = diamond();
        let routes = k_shortest_paths(&g, NodeId(0), NodeId(3), 3, free_flow).unwrap();
        assert_eq!(routes.len(), 2);
        assert_eq!(routes[0].edges, vec![EdgeId(0), EdgeId(1)]);
        assert_eq!(routes[1].edges, vec![EdgeId(2), EdgeId(3)]);
    }

    #[test]
    fn routes_are_connected_and_loopless() {
        let g = RoadGraph::manhattan_grid(&GridSpec::new(4, 4, 100.0)).unwrap();
        let routes = k_shortest_paths(&g, NodeId(0), NodeId(15), 8, free_flow).unwrap();
        assert_eq!(routes.len(), 8);
        for r in &routes {
            assert!(r.is_connected(&g));
            assert!(r.is_loopless(&g));
        }
        let set: HashSet<_> = routes.iter().map(|r| r.edges.clone()).collect();
        assert_eq!(set.len(), routes.len());
    }

    #[test]
    fn empty_route_for_same_endpoints() {
        let g = diamond();
        let r = shortest_path(&g, NodeId(2), NodeId(2), free_flow).unwrap();
        assert!(r.is_empty());
    }
}
