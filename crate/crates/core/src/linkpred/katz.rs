use serde::{Deserialize, Serialize};

use super::{rank_candidates, LinkPredError, NodeIndex};
use crate::atlas::BipartiteGraph;
use crate::embedding::Side;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KatzParams {
    pub alpha: f64,
    pub max_len: usize,
    pub weighted: bool,
}

impl Default for KatzParams {
    fn default() -> Self {
        KatzParams { alpha: 0.1, max_len: 6, weighted: false }
    }
}

/// Truncated Katz scores `Σ_{l=1..L} α^l (A^l)_xy` over every node pair.
#[derive(Debug, Clone)]
pub struct KatzTable {
    pub index: NodeIndex,
    pub params: KatzParams,
    /// Upper bound on the adjacency spectral radius, `max over edges sqrt(d_u d_v)`.
    pub radius_bound: f64,
    scores: Vec<f64>,
}

impl KatzTable {
    pub fn n(&self) -> usize {
        self.index.len()
    }

    /// Score between node positions.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.scores[i * self.n() + j]
    }

    pub fn score(&self, a: (Side, u32), b: (Side, u32)) -> Option<f64> {
        Some(self.at(self.index.position(a.0, a.1)?, self.index.position(b.0, b.1)?))
    }

    /// Whether `α · radius_bound < 1`, which guarantees the infinite series converges.
    pub fn converges(&self) -> bool {
        self.params.alpha * self.radius_bound < 1.0
    }
}

pub fn katz_scores(graph: &BipartiteGraph, params: &KatzParams) -> Result<KatzTable, LinkPredError> {
    if !(params.alpha > 0.0) || !params.alpha.is_finite() {
        return Err(LinkPredError::InvalidParams(format!("alpha must be positive, got {}", params.alpha)));
    }
    if params.max_len < 2 {
        return Err(LinkPredError::InvalidParams(format!("max_len must be at least 2, got {}", params.max_len)));
    }
    let index = NodeIndex::from_graph(graph, params.weighted);
    if index.is_empty() {
        return Err(LinkPredError::EmptyGraph);
    }
    let n = index.len();
    let degrees: Vec<f64> = (0..n).map(|i| index.degree(i)).collect();
    let radius_bound = index
        .adjacency
        .iter()
        .enumerate()
        .flat_map(|(i, a)| a.iter().map(move |&(j, _)| (i, j)))
        .map(|(i, j)| (degrees[i] * degrees[j]).sqrt())
        .fold(0.0, f64::max);
    if params.alpha * radius_bound >= 1.0 {
        log::warn!(
            "Katz alpha {} is not below 1/{radius_bound:.3} (spectral radius bound); the series may diverge",
            params.alpha
        );
    }

    // power holds A^l, built row by row from A^(l-1).
    let mut power = vec![0.0f64; n * n];
    for i in 0..n {
        power[i * n + i] = 1.0;
    }
    let mut scores = vec![0.0f64; n * n];
    let mut next = vec![0.0f64; n * n];
    let mut factor = 1.0;
    for _ in 0..params.max_len {
        factor *= params.alpha;
        next.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..n {
            let row = &mut next[i * n..(i + 1) * n];
            for &(k, w) in &index.adjacency[i] {
                for (r, &p) in row.iter_mut().zip(&power[k * n..(k + 1) * n]) {
                    *r += w * p;
                }
            }
        }
        std::mem::swap(&mut power, &mut next);
        for (s, &p) in scores.iter_mut().zip(&power) {
            *s += factor * p;
        }
    }
    Ok(KatzTable { index, params: *params, radius_bound, scores })
}

/// Every opposite-side node ranked by Katz score, ties by existing edge weight
/// then id.
pub fn rank_katz(table: &KatzTable, graph: &BipartiteGraph, side: Side, source: u32) -> Result<Vec<(u32, f64)>, LinkPredError> {
    let i = table.index.position(side, source).ok_or(LinkPredError::UnknownSource { side, id: source })?;
    let scored = graph
        .nodes(side.opposite())
        .iter()
        .filter_map(|&t| {
            let j = table.index.position(side.opposite(), t)?;
            let w = match side {
                Side::Problem => graph.weight(source, t),
                Side::Method => graph.weight(t, source),
            };
            Some((t, table.at(i, j), w))
        })
        .collect();
    Ok(rank_candidates(scored))
}

pub fn predict_katz(
    table: &KatzTable,
    graph: &BipartiteGraph,
    side: Side,
    source: u32,
    k: usize,
) -> Result<Vec<(u32, f64)>, LinkPredError> {
    let mut ranked = rank_katz(table, graph, side, source)?;
    ranked.truncate(k);
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeMap, BTreeSet};

    use super::*;
    use crate::atlas::GraphEdge;

    fn graph(links: &[(u32, u32)], np: u32, nm: u32) -> BipartiteGraph {
        let edges = links
            .iter()
            .enumerate()
            .map(|(i, &(p, m))| GraphEdge { pub_id: format!("e{i}"), problem: p, method: m })
            .collect();
        BipartiteGraph::new((0..np).collect(), (0..nm).collect(), edges, BTreeMap::new(), BTreeMap::new())
    }

    #[test]
    fn single_edge_by_hand() {
        let g = graph(&[(0, 0)], 1, 1);
        let t = katz_scores(&g, &KatzParams { alpha: 0.1, max_len: 3, weighted: false }).unwrap();
        let s = t.score((Side::Problem, 0), (Side::Method, 0)).unwrap();
        assert!((s - 0.101).abs() < 1e-15, "{s}");
        // Even lengths only on the diagonal: 0.01.
        assert!((t.at(0, 0) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn edgeless_graph_scores_zero() {
        let g = graph(&[], 2, 3);
        let t = katz_scores(&g, &KatzParams::default()).unwrap();
        assert!((0..t.n()).all(|i| (0..t.n()).all(|j| t.at(i, j) == 0.0)));
    }

    #[test]
    fn errors() {
        let g = graph(&[(0, 0)], 1, 1);
        assert!(katz_scores(&g, &KatzParams { alpha: 0.0, ..Default::default() }).is_err());
        assert!(katz_scores(&g, &KatzParams { max_len: 1, ..Default::default() }).is_err());
        let empty = BipartiteGraph::new(BTreeSet::new(), BTreeSet::new(), vec![], BTreeMap::new(), BTreeMap::new());
        assert!(matches!(katz_scores(&empty, &KatzParams::default()), Err(LinkPredError::EmptyGraph)));
        let t = katz_scores(&g, &KatzParams::default()).unwrap();
        assert!(matches!(rank_katz(&t, &g, Side::Problem, 7), Err(LinkPredError::UnknownSource { .. })));
    }

    #[test]
    fn hub_ranked_first_for_two_hop_problem() {
        // Method 0 is a hub over problems 0..5; problem 5 also links method 1,
        // which problem 6 uses. Problem 6 reaches the hub through 6-1-5-0.
        let mut links: Vec<(u32, u32)> = (0..6).map(|p| (p, 0)).collect();
        links.push((5, 1));
        links.push((6, 1));
        links.push((0, 2));
        let g = graph(&links, 7, 3);
        let t = katz_scores(&g, &KatzParams::default()).unwrap();
        let ranked = predict_katz(&t, &g, Side::Problem, 6, 3).unwrap();
        // Method 1 is a direct neighbour; of the rest the hub comes first.
        assert_eq!(ranked[0].0, 1);
        assert_eq!(ranked[1].0, 0);
    }

    #[test]
    fn k_beyond_opposite_side_returns_all() {
        let g = graph(&[(0, 0), (1, 1)], 2, 2);
        let t = katz_scores(&g, &KatzParams::default()).unwrap();
        assert_eq!(predict_katz(&t, &g, Side::Method, 1, 10).unwrap().len(), 2);
    }

    #[test]
    fn divergence_bound_reported() {
        let links: Vec<(u32, u32)> = (0..12).flat_map(|p| (0..12).map(move |m| (p, m))).collect();
        let g = graph(&links, 12, 12);
        let t = katz_scores(&g, &KatzParams::default()).unwrap();
        assert!((t.radius_bound - 12.0).abs() < 1e-12);
        assert!(!t.converges());
    }
}
