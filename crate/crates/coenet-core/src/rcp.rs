//! Revealed Comparative Preference normalization and threshold pruning.
//!
//! For a raw co-enrolment graph with weights x_ij, strength s_i = Σ_j x_ij
//! and ordered-pair total T = Σ_ij x_ij (each undirected edge counted in
//! both directions):
//!
//!   RCP(i, j) = (x_ij / s_i) / (s_j / T) = x_ij · T / (s_i · s_j)
//!
//! which is symmetric by construction. Values ≥ 1 indicate the pair
//! co-occurs more than the two standards' sizes predict.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::graph::{CoGraph, StandardInfo, WeightMode};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RcpError {
    /// RCP needs at least one edge.
    EmptyGraph,
    /// Input must carry raw co-enrolment counts.
    WrongWeightMode,
    /// Raw weights must be positive.
    NonPositiveWeight { a: usize, b: usize },
}

impl fmt::Display for RcpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RcpError::EmptyGraph => f.write_str("RCP undefined on a graph with no edges"),
            RcpError::WrongWeightMode => f.write_str("RCP input must be in raw-count mode"),
            RcpError::NonPositiveWeight { a, b } => {
                write!(f, "non-positive raw weight on edge ({a}, {b})")
            }
        }
    }
}

/// RCP conversion output: the normalized graph plus the ids of
/// zero-strength nodes dropped before the computation.
#[derive(Debug, Clone)]
pub struct RcpGraph {
    pub graph: CoGraph,
    pub zero_strength_removed: Vec<String>,
}

/// Convert raw co-enrolment weights to RCP. Zero-strength (isolated) nodes
/// have undefined RCP and are removed first, reported by id.
pub fn compute_rcp(g: &CoGraph) -> Result<RcpGraph, RcpError> {
    if g.weight_mode() != WeightMode::RawCount {
        return Err(RcpError::WrongWeightMode);
    }
    if g.edge_count() == 0 {
        return Err(RcpError::EmptyGraph);
    }
    for (a, b, w) in g.edges() {
        if w <= 0.0 {
            return Err(RcpError::NonPositiveWeight { a, b });
        }
    }

    let mut keep = Vec::new();
    let mut zero_strength_removed = Vec::new();
    for i in 0..g.node_count() {
        if g.strength(i) > 0.0 {
            keep.push(i);
        } else {
            zero_strength_removed.push(g.nodes()[i].id.clone());
        }
    }
    let mut remap = alloc::vec![usize::MAX; g.node_count()];
    for (new, &old) in keep.iter().enumerate() {
        remap[old] = new;
    }

    // Ordered-pair total: both directions of each undirected edge.
    let total = 2.0 * g.total_weight();
    let edges: Vec<(usize, usize, f64)> = g
        .edges()
        .map(|(a, b, w)| {
            let rcp = w * total / (g.strength(a) * g.strength(b));
            (remap[a], remap[b], rcp)
        })
        .collect();
    let nodes: Vec<StandardInfo> = keep.iter().map(|&i| g.nodes()[i].clone()).collect();

    Ok(RcpGraph {
        graph: CoGraph::from_edges(nodes, &edges, WeightMode::Rcp),
        zero_strength_removed,
    })
}

/// Pruned graph with removal counts for the report.
#[derive(Debug, Clone)]
pub struct RcpResult {
    pub graph: CoGraph,
    pub removed_edges: usize,
    pub removed_isolates: usize,
    pub nodes_before: usize,
    pub nodes_after: usize,
}

/// Drop edges with RCP below `threshold`, then drop nodes left with no
/// edges. The default threshold keeps exactly the edges with RCP ≥ 1.
pub fn prune(g: &CoGraph, threshold: f64) -> RcpResult {
    let kept_edges: Vec<(usize, usize, f64)> = g
        .edges()
        .filter(|&(_, _, w)| w >= threshold)
        .collect();
    let removed_edges = g.edge_count() - kept_edges.len();

    let mut has_edge = alloc::vec![false; g.node_count()];
    for &(a, b, _) in &kept_edges {
        has_edge[a] = true;
        has_edge[b] = true;
    }
    let mut remap = alloc::vec![usize::MAX; g.node_count()];
    let mut nodes = Vec::new();
    for (i, info) in g.nodes().iter().enumerate() {
        if has_edge[i] {
            remap[i] = nodes.len();
            nodes.push(info.clone());
        }
    }
    let removed_isolates = g.node_count() - nodes.len();
    let edges: Vec<(usize, usize, f64)> = kept_edges
        .into_iter()
        .map(|(a, b, w)| (remap[a], remap[b], w))
        .collect();

    RcpResult {
        nodes_before: g.node_count(),
        nodes_after: nodes.len(),
        graph: CoGraph::from_edges(nodes, &edges, g.weight_mode()),
        removed_edges,
        removed_isolates,
    }
}
