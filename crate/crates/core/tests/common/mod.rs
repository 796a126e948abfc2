//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::HashSet;

use pim_core::graph::{Graph, NodeId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random digraph with `2..=12` nodes, small integer lengths (so equal
/// lengths are common), and an OD pair that is connected.
pub struct Instance {
    pub graph: Graph,
    pub s: NodeId,
    pub d: NodeId,
    pub k: usize,
}

pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let n = rng.random_range(2..=12usize);
        let density = rng.random_range(0.15..0.5);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in 0..n {
                if rng.random_bool(density) {
                    edges.push((u, v, rng.random_range(1..=4u32) as f64));
                }
            }
        }
        let graph = Graph::from_edges(n, edges).unwrap();
        let s = rng.random_range(0..n);
        let d = rng.random_range(0..n);
        if s != d && !all_simple_paths(&graph, s, d).is_empty() {
            return Instance { graph, s, d, k: rng.random_range(1..=5) };
        }
    }
}

fn len_of(g: &Graph, p: &[NodeId]) -> f64 {
    p.windows(2).map(|w| g.edge_length(w[0], w[1]).unwrap()).fold(0.0, |a, b| a + b)
}

/// Every loopless `s -> d` path by depth-first search, ordered by length and
/// then lexicographically by node ids.
pub fn all_simple_paths(g: &Graph, s: NodeId, d: NodeId) -> Vec<(Vec<NodeId>, f64)> {
    fn dfs(g: &Graph, d: NodeId, stack: &mut Vec<NodeId>, on: &mut Vec<bool>, out: &mut Vec<Vec<NodeId>>) {
        let u = *stack.last().unwrap();
        if u == d {
            out.push(stack.clone());
            return;
        }
        for e in g.successors(u) {
            if !on[e.to] {
                on[e.to] = true;
                stack.push(e.to);
                dfs(g, d, stack, on, out);
                stack.pop();
                on[e.to] = false;
            }
        }
    }
    let mut on = vec![false; g.node_count()];
    on[s] = true;
    let mut raw = Vec::new();
    dfs(g, d, &mut vec![s], &mut on, &mut raw);
    let mut out: Vec<(Vec<NodeId>, f64)> = raw.into_iter().map(|p| {
        let l = len_of(g, &p);
        (p, l)
    }).collect();
    out.sort_by(|a, b| match a.1.total_cmp(&b.1) {
        Ordering::Equal => a.0.cmp(&b.0),
        o => o,
    });
    out
}

/// Jaccard similarity of interior node sets; empty interiors count as equal.
pub fn jaccard(a: &[NodeId], b: &[NodeId], s: NodeId, d: NodeId) -> f64 {
    let x: HashSet<NodeId> = a.iter().copied().filter(|&v| v != s && v != d).collect();
    let y: HashSet<NodeId> = b.iter().copied().filter(|&v| v != s && v != d).collect();
    let union = x.union(&y).count();
    if union == 0 {
        1.0
    } else {
        x.intersection(&y).count() as f64 / union as f64
    }
}

/// Greedy threshold filter over the first `cap` paths of the oracle order.
pub fn greedy_diverse(ordered: &[(Vec<NodeId>, f64)], s: NodeId, d: NodeId, k: usize, tau: f64, cap: usize) -> Vec<Vec<NodeId>> {
    let mut kept: Vec<Vec<NodeId>> = Vec::new();
    for (p, _) in ordered.iter().take(cap) {
        if kept.iter().all(|q| jaccard(q, p, s, d) <= tau) {
            kept.push(p.clone());
            if kept.len() == k {
                break;
            }
        }
    }
    kept
}
