//! Road graph, routing substrate and the popularity/entropy measures used for
//! altruistic route choice.

mod graph;
mod popularity;
mod routing;

pub use crate::ids::{EdgeId, NodeId};
pub use graph::{Edge, GridSpec, Node, RoadGraph};
pub use popularity::{
    entropy_of_weights, free_flow_time, route_entropy, segment_popularity_weight, PopularityTable,
};
pub use routing::{k_shortest_paths, path_cost, shortest_path};

/// An ordered, connected sequence of directed edges.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Route {
    pub edges: Vec<EdgeId>,
    pub origin: NodeId,
    pub destination: NodeId,
}

impl Route {
    pub fn new(origin: NodeId, destination: NodeId, edges: Vec<EdgeId>) -> Self {
        Self {
            edges,
            origin,
            destination,
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Node sequence visited by the route, origin first.
    pub fn nodes(&self, g: &RoadGraph) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.edges.len() + 1);
        out.push(self.origin);
        for e in &self.edges {
            out.push(g.edge(*e).to);
        }
        out
    }

    /// True when consecutive edges chain from origin to destination.
    pub fn is_connected(&self, g: &RoadGraph) -> bool {
        let mut at = self.origin;
        for e in &self.edges {
            let Some(edge) = g.try_edge(*e) else {
                return false;
            };
            if edge.from != at {
                return false;
            }
            at = edge.to;
        }
        at == self.destination
    }

    /// True when no node is visited twice.
    pub fn is_loopless(&self, g: &RoadGraph) -> bool {
        let nodes = self.nodes(g);
        let mut seen = std::collections::HashSet::with_capacity(nodes.len());
        nodes.into_iter().all(|n| seen.insert(n))
    }
}
