//! Independent reference implementations shared by the integration tests.

#![allow(dead_code)]

use std::collections::VecDeque;

use deasy_core::radio::RadioConstants;
use deasy_core::road_network::{Edge, RoadGraph};
use deasy_core::{EdgeId, NodeId};

/// Shortest-path betweenness of node 0 by BFS path counting over every
/// unordered pair of other nodes.
pub fn brute_force_betweenness(adj: &[Vec<u8>]) -> f64 {
    let n = adj.len();
    let bfs = |s: usize| {
        let mut dist = vec![usize::MAX; n];
        let mut sigma = vec![0u64; n];
        dist[s] = 0;
        sigma[s] = 1;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for w in 0..n {
                if adj[u][w] == 0 || u == w {
                    continue;
                }
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    q.push_back(w);
                }
                if dist[w] == dist[u] + 1 {
                    sigma[w] += sigma[u];
                }
            }
        }
        (dist, sigma)
    };
    let all: Vec<_> = (0..n).map(bfs).collect();
    let (d0, s0) = &all[0];
    let mut total = 0.0;
    for s in 1..n {
        for t in s + 1..n {
            let (ds, ss) = &all[s];
            if ds[t] == usize::MAX || d0[s] == usize::MAX || d0[t] == usize::MAX {
                continue;
            }
            if d0[s] + d0[t] == ds[t] {
                total += (s0[s] * s0[t]) as f64 / ss[t] as f64;
            }
        }
    }
    total
}

/// Two-ray loss evaluated without complex types and with the path
/// difference in a cancellation-free form.
pub fn two_ray_oracle(d: f64, c: &RadioConstants) -> f64 {
    let pi = std::f64::consts::PI;
    let hs = c.h_t + c.h_r;
    let hd = c.h_t - c.h_r;
    let d_los = (d * d + hd * hd).sqrt();
    let d_ref = (d * d + hs * hs).sqrt();
    // d_los − d_ref = (hd² − hs²) / (d_los + d_ref)
    let delta = (hd * hd - hs * hs) / (d_los + d_ref);
    let phi = 2.0 * pi * delta / c.lambda_m;
    let sin_t = hs / d_ref;
    let cos_t = d / d_ref;
    let root = (c.epsilon_ground - cos_t).sqrt();
    let gamma = (sin_t - root) / (sin_t + root);
    let re = 1.0 + gamma * phi.cos();
    let im = gamma * phi.sin();
    let mag = (re * re + im * im).sqrt();
    20.0 * (4.0 * pi * d / (c.lambda_m * mag)).log10()
}

/// Every loop-less path from `from` to `to`, by depth-first enumeration.
pub fn all_simple_paths(g: &RoadGraph, from: NodeId, to: NodeId) -> Vec<Vec<EdgeId>> {
    fn go(g: &RoadGraph, at: NodeId, to: NodeId, seen: &mut Vec<NodeId>, path: &mut Vec<EdgeId>, out: &mut Vec<Vec<EdgeId>>) {
        if at == to {
            out.push(path.clone());
            return;
        }
        let next: Vec<&Edge> = g.out_edges(at).collect();
        for e in next {
            if seen.contains(&e.to) {
                continue;
            }
            seen.push(e.to);
            path.push(e.id);
            go(g, e.to, to, seen, path, out);
            path.pop();
            seen.pop();
        }
    }
    let mut out = Vec::new();
    go(g, from, to, &mut vec![from], &mut Vec::new(), &mut out);
    out
}

/// Straight road of `n` nodes spaced `spacing` metres apart.
pub fn line_network(n: u32, spacing: f64, vmax: f64) -> RoadGraph {
    let mut text = String::new();
    for i in 0..n {
        text.push_str(&format!("node {i} {} 0\n", i as f64 * spacing));
    }
    for i in 0..n - 1 {
        text.push_str(&format!("edge {i} {i} {} {spacing} 1 {vmax}\n", i + 1));
    }
    RoadGraph::parse(&text, "line").expect("valid line network")
}

/// A 6×6 version of the bottleneck scenario with 120 vehicles.
pub fn small_bottleneck() -> deasy_core::harness::BottleneckScenario {
    let mut s = deasy_core::harness::BottleneckScenario::default();
    s.grid.rows = 6;
    s.grid.cols = 6;
    s.grid.corridor_row = Some(3);
    s.demand.corridor_row = 3;
    s.demand.vehicles = 120;
    s.demand.depart_window_s = 200.0;
    s.incident_column = 2;
    s
}
