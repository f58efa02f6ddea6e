use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ids::{EdgeId, NodeId};

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub from: NodeId,
    pub to: NodeId,
    pub length_m: f64,
    pub lanes: u32,
    pub vmax_mps: f64,
}

impl Edge {
    /// Traversal time at the speed limit.
    pub fn free_flow_time(&self) -> f64 {
        self.length_m / self.vmax_mps
    }
}

/// Directed road graph. Nodes and edges keep file order; lookups go through
/// id maps, and outgoing edges of every node are sorted by edge id.
#[derive(Debug, Clone)]
pub struct RoadGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    node_idx: HashMap<NodeId, usize>,
    edge_idx: HashMap<EdgeId, usize>,
    out: Vec<Vec<usize>>,
}

/// Manhattan grid layout for [`RoadGraph::manhattan_grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub rows: u32,
    pub cols: u32,
    pub block_m: f64,
    pub lanes: u32,
    pub vmax_mps: f64,
    /// Optional arterial: every edge along this row gets `corridor_lanes`.
    pub corridor_row: Option<u32>,
    pub corridor_lanes: u32,
}

impl GridSpec {
    pub fn new(rows: u32, cols: u32, block_m: f64) -> Self {
        Self {
            rows,
            cols,
            block_m,
            lanes: 1,
            vmax_mps: 13.89,
            corridor_row: None,
            corridor_lanes: 2,
        }
    }

    pub fn node_at(&self, row: u32, col: u32) -> NodeId {
        NodeId(row * self.cols + col)
    }
}

impl RoadGraph {
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self> {
        let mut node_idx = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if !(n.x.is_finite() && n.y.is_finite()) {
                return Err(Error::InvalidNetwork(format!("node {} has non-finite coordinates", n.id)));
            }
            if node_idx.insert(n.id, i).is_some() {
                return Err(Error::InvalidNetwork(format!("duplicate node {}", n.id)));
            }
        }
        let mut edge_idx = HashMap::with_capacity(edges.len());
        let mut out = vec![Vec::new(); nodes.len()];
        for (i, e) in edges.iter().enumerate() {
            if edge_idx.insert(e.id, i).is_some() {
                return Err(Error::InvalidNetwork(format!("duplicate edge {}", e.id)));
            }
            validate_edge(e, &node_idx).map_err(Error::InvalidNetwork)?;
            out[node_idx[&e.from]].push(i);
        }
        for list in &mut out {
            list.sort_by_key(|&i| edges[i].id);
        }
        Ok(Self {
            nodes,
            edges,
            node_idx,
            edge_idx,
            out,
        })
    }

    /// Parses the line-oriented network format:
    ///
    /// ```text
    /// node <id> <x> <y>
    /// edge <id> <from> <to> <length_m> <lanes> <vmax_mps>
    /// ```
    ///
    /// Blank lines and anything after `#` are ignored.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        let mut edge_lines = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let err = |msg: String| Error::parse(source_name, lineno, msg);
            match fields[0] {
                "node" => {
                    if fields.len() != 4 {
                        return Err(err(format!("expected `node <id> <x> <y>`, got {} fields", fields.len())));
                    }
                    nodes.push(Node {
                        id: NodeId(parse_field(fields[1], "node id").map_err(err)?),
                        x: parse_field(fields[2], "x").map_err(err)?,
                        y: parse_field(fields[3], "y").map_err(err)?,
                    });
                }
                "edge" => {
                    if fields.len() != 7 {
                        return Err(err(format!(
                            "expected `edge <id> <from> <to> <length_m> <lanes> <vmax_mps>`, got {} fields",
                            fields.len()
                        )));
                    }
                    edges.push(Edge {
                        id: EdgeId(parse_field(fields[1], "edge id").map_err(err)?),
                        from: NodeId(parse_field(fields[2], "from").map_err(err)?),
                        to: NodeId(parse_field(fields[3], "to").map_err(err)?),
                        length_m: parse_field(fields[4], "length_m").map_err(err)?,
                        lanes: parse_field(fields[5], "lanes").map_err(err)?,
                        vmax_mps: parse_field(fields[6], "vmax_mps").map_err(err)?,
                    });
                    edge_lines.push(lineno);
                }
                other => return Err(err(format!("unknown record type `{other}`"))),
            }
        }
        // Edges may reference nodes declared further down, so structural
        // checks run once everything is read; errors still name the line.
        let node_idx: HashMap<NodeId, usize> = nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        for (e, &lineno) in edges.iter().zip(&edge_lines) {
            validate_edge(e, &node_idx).map_err(|m| Error::parse(source_name, lineno, m))?;
        }
        RoadGraph::new(nodes, edges)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Serializes back to the network file format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for n in &self.nodes {
            let _ = writeln!(s, "node {} {} {}", n.id, n.x, n.y);
        }
        for e in &self.edges {
            let _ = writeln!(
                s,
                "edge {} {} {} {} {} {}",
                e.id, e.from, e.to, e.length_m, e.lanes, e.vmax_mps
            );
        }
        s
    }

    /// Bidirectional Manhattan grid. Node `r * cols + c` sits at
    /// `(c * block, r * block)`; edge ids are assigned by walking nodes in id
    /// order and their neighbors in id order.
    pub fn manhattan_grid(spec: &GridSpec) -> Result<Self> {
        if spec.rows < 2 || spec.cols < 2 {
            return Err(Error::InvalidNetwork("grid needs at least 2 rows and 2 columns".into()));
        }
        if !(spec.block_m > 0.0) || !(spec.vmax_mps > 0.0) || spec.lanes == 0 {
            return Err(Error::InvalidNetwork("block length, speed and lanes must be positive".into()));
        }
        let mut nodes = Vec::new();
        for r in 0..spec.rows {
            for c in 0..spec.cols {
                nodes.push(Node {
                    id: spec.node_at(r, c),
                    x: c as f64 * spec.block_m,
                    y: r as f64 * spec.block_m,
                });
            }
        }
        let mut edges = Vec::new();
        for r in 0..spec.rows {
            for c in 0..spec.cols {
                let mut nbrs = Vec::with_capacity(4);
                if r > 0 {
                    nbrs.push((r - 1, c));
                }
                if c > 0 {
                    nbrs.push((r, c - 1));
                }
                if c + 1 < spec.cols {
                    nbrs.push((r, c + 1));
                }
                if r + 1 < spec.rows {
                    nbrs.push((r + 1, c));
                }
                for (nr, nc) in nbrs {
                    let on_corridor = spec.corridor_row == Some(r) && nr == r;
                    edges.push(Edge {
                        id: EdgeId(edges.len() as u32),
                        from: spec.node_at(r, c),
                        to: spec.node_at(nr, nc),
                        length_m: spec.block_m,
                        lanes: if on_corridor { spec.corridor_lanes } else { spec.lanes },
                        vmax_mps: spec.vmax_mps,
                    });
                }
            }
        }
        RoadGraph::new(nodes, edges)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains_node(&self, id: NodeId) -> bool {
        self.node_idx.contains_key(&id)
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[self.node_idx[&id]]
    }

    pub fn try_edge(&self, id: EdgeId) -> Option<&Edge> {
        self.edge_idx.get(&id).map(|&i| &self.edges[i])
    }

    /// Panics on unknown ids; callers hold ids that came from this graph.
    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[self.edge_idx[&id]]
    }

    /// Dense index of an edge, stable for the graph's lifetime.
    pub fn edge_index(&self, id: EdgeId) -> usize {
        self.edge_idx[&id]
    }

    pub(crate) fn node_index(&self, id: NodeId) -> Option<usize> {
        self.node_idx.get(&id).copied()
    }

    pub(crate) fn out_indices(&self, node_index: usize) -> &[usize] {
        &self.out[node_index]
    }

    pub(crate) fn edge_at_index(&self, i: usize) -> &Edge {
        &self.edges[i]
    }

    /// Outgoing edges of `node`, ascending by id.
    pub fn out_edges(&self, node: NodeId) -> impl Iterator<Item = &Edge> + '_ {
        let idx = self.node_idx.get(&node).copied();
        idx.into_iter()
            .flat_map(move |i| self.out[i].iter().map(move |&e| &self.edges[e]))
    }

    /// Planar position `offset_m` meters along `edge`.
    pub fn position_on(&self, edge: EdgeId, offset_m: f64) -> (f64, f64) {
        let e = self.edge(edge);
        let a = self.node(e.from);
        let b = self.node(e.to);
        let t = (offset_m / e.length_m).clamp(0.0, 1.0);
        (a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t)
    }

    /// Unit heading of an edge, `(0, 0)` for degenerate geometry.
    pub fn heading(&self, edge: EdgeId) -> (f64, f64) {
        let e = self.edge(edge);
        let a = self.node(e.from);
        let b = self.node(e.to);
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let n = dx.hypot(dy);
        if n > 0.0 {
            (dx / n, dy / n)
        } else {
            (0.0, 0.0)
        }
    }

    /// Returns a copy in which `edge` carries a different speed limit.
    pub fn with_speed(&self, edge: EdgeId, vmax_mps: f64) -> Result<Self> {
        let mut g = self.clone();
        let i = *g.edge_idx.get(&edge).ok_or(Error::UnknownEdge(edge))?;
        g.edges[i].vmax_mps = vmax_mps;
        Ok(g)
    }
}

fn validate_edge(e: &Edge, node_idx: &HashMap<NodeId, usize>) -> std::result::Result<(), String> {
    if !node_idx.contains_key(&e.from) {
        return Err(format!("edge {} references unknown node {}", e.id, e.from));
    }
    if !node_idx.contains_key(&e.to) {
        return Err(format!("edge {} references unknown node {}", e.id, e.to));
    }
    if e.from == e.to {
        return Err(format!("edge {} is a self-loop", e.id));
    }
    if !(e.length_m > 0.0 && e.length_m.is_finite()) {
        return Err(format!("edge {} has non-positive length", e.id));
    }
    if e.lanes == 0 {
        return Err(format!("edge {} has zero lanes", e.id));
    }
    if !(e.vmax_mps > 0.0 && e.vmax_mps.is_finite()) {
        return Err(format!("edge {} has non-positive speed limit", e.id));
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(s: &str, what: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|_| format!("invalid {what} `{s}`"))
}
