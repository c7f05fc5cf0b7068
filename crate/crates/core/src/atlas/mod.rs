//! The problem↔method bipartite graph and the analyses built on it.

mod export;
pub mod stats;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use export::{export_graph, import_graph, ExportedGraph};
pub use stats::{fit_lognormal, partition_investigation, InvestigationPartition, LogNormalFit, PartitionClass, PartitionRow};

use crate::clustering::ClusterModel;
use crate::corpus::{Community, Corpus};
use crate::embedding::Side;
use crate::extraction::ExtractionSet;

#[derive(Debug, Error)]
pub enum AtlasError {
    #[error("need at least {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("regression undefined: all cluster totals are identical")]
    DegenerateRegression,
    #[error("graph file: {0}")]
    Io(#[from] std::io::Error),
    #[error("graph file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GraphEdge {
    pub pub_id: String,
    pub problem: u32,
    pub method: u32,
}

/// Problem clusters and method clusters joined by one edge per AI4Science publication.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BipartiteGraph {
    pub problem_nodes: BTreeSet<u32>,
    pub method_nodes: BTreeSet<u32>,
    /// Sorted by publication id.
    pub edges: Vec<GraphEdge>,
    pub problem_labels: BTreeMap<u32, String>,
    pub method_labels: BTreeMap<u32, String>,
    weights: BTreeMap<(u32, u32), usize>,
}

/// Records left out of the graph and why.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BuildReport {
    pub ai4science_records: usize,
    pub edges: usize,
    pub problem_noise: Vec<String>,
    pub method_noise: Vec<String>,
}

impl BipartiteGraph {
    pub fn new(
        problem_nodes: BTreeSet<u32>,
        method_nodes: BTreeSet<u32>,
        mut edges: Vec<GraphEdge>,
        problem_labels: BTreeMap<u32, String>,
        method_labels: BTreeMap<u32, String>,
    ) -> Self {
        edges.sort();
        let mut weights = BTreeMap::new();
        for e in &edges {
            *weights.entry((e.problem, e.method)).or_insert(0) += 1;
        }
        BipartiteGraph { problem_nodes, method_nodes, edges, problem_labels, method_labels, weights }
    }

    /// Distinct-publication count on a (problem, method) pair.
    pub fn weight(&self, problem: u32, method: u32) -> usize {
        self.weights.get(&(problem, method)).copied().unwrap_or(0)
    }

    pub fn weights(&self) -> &BTreeMap<(u32, u32), usize> {
        &self.weights
    }

    pub fn nodes(&self, side: Side) -> &BTreeSet<u32> {
        match side {
            Side::Problem => &self.problem_nodes,
            Side::Method => &self.method_nodes,
        }
    }

    pub fn label(&self, side: Side, id: u32) -> Option<&str> {
        match side {
            Side::Problem => self.problem_labels.get(&id),
            Side::Method => self.method_labels.get(&id),
        }
        .map(String::as_str)
    }

    /// Opposite-side neighbours of a node with edge weights.
    pub fn neighbors(&self, side: Side, id: u32) -> BTreeMap<u32, usize> {
        self.weights
            .iter()
            .filter_map(|(&(p, m), &w)| match side {
                Side::Problem if p == id => Some((m, w)),
                Side::Method if m == id => Some((p, w)),
                _ => None,
            })
            .collect()
    }

    /// Distinct (problem, method) pairs.
    pub fn links(&self) -> BTreeSet<(u32, u32)> {
        self.weights.keys().copied().collect()
    }
}

/// One edge per AI4Science record (optionally restricted to `only`) whose problem and
/// method both fall in non-noise clusters. All clusters of both models become nodes.
pub fn build_bipartite(
    extractions: &ExtractionSet,
    problem_model: &ClusterModel,
    method_model: &ClusterModel,
    only: Option<&BTreeSet<String>>,
) -> (BipartiteGraph, BuildReport) {
    let mut report = BuildReport::default();
    let mut edges = Vec::new();
    for r in extractions.ai4science() {
        if only.is_some_and(|s| !s.contains(&r.pub_id)) {
            continue;
        }
        report.ai4science_records += 1;
        let p = problem_model.assignment(&r.pub_id);
        let m = method_model.assignment(&r.pub_id);
        if p.is_none() {
            report.problem_noise.push(r.pub_id.clone());
        }
        if m.is_none() {
            report.method_noise.push(r.pub_id.clone());
        }
        if let (Some(problem), Some(method)) = (p, m) {
            edges.push(GraphEdge { pub_id: r.pub_id.clone(), problem, method });
        }
    }
    report.edges = edges.len();
    let labels = |m: &ClusterModel| m.clusters.iter().map(|(&c, i)| (c, i.label.clone())).collect();
    let graph = BipartiteGraph::new(
        problem_model.cluster_ids().into_iter().collect(),
        method_model.cluster_ids().into_iter().collect(),
        edges,
        labels(problem_model),
        labels(method_model),
    );
    (graph, report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeStats {
    pub side: Side,
    pub weighted: bool,
    pub degrees: BTreeMap<u32, usize>,
    pub mean: f64,
    pub max: usize,
    pub total: usize,
}

/// Unweighted degree counts distinct neighbours; weighted degree sums edge multiplicities.
/// The mean runs over every node on the side, isolated ones included.
pub fn degree_stats(graph: &BipartiteGraph, side: Side, weighted: bool) -> DegreeStats {
    let mut degrees: BTreeMap<u32, usize> = graph.nodes(side).iter().map(|&n| (n, 0)).collect();
    for (&(p, m), &w) in graph.weights() {
        let node = if side == Side::Problem { p } else { m };
        *degrees.entry(node).or_insert(0) += if weighted { w } else { 1 };
    }
    let total: usize = degrees.values().sum();
    DegreeStats {
        side,
        weighted,
        mean: if degrees.is_empty() { 0.0 } else { total as f64 / degrees.len() as f64 },
        max: degrees.values().copied().max().unwrap_or(0),
        total,
        degrees,
    }
}

/// Per-cluster publication counts used by the investigation partition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterCount {
    pub cluster: u32,
    pub label: String,
    pub total: usize,
    pub ai4science: usize,
}

/// Count all and AI4Science publications per cluster, optionally within `only`.
pub fn cluster_counts(extractions: &ExtractionSet, model: &ClusterModel, only: Option<&BTreeSet<String>>) -> Vec<ClusterCount> {
    let mut counts: BTreeMap<u32, (usize, usize)> = model.clusters.keys().map(|&c| (c, (0, 0))).collect();
    for r in extractions.iter() {
        if only.is_some_and(|s| !s.contains(&r.pub_id)) {
            continue;
        }
        if let Some(c) = model.assignment(&r.pub_id) {
            let e = counts.entry(c).or_insert((0, 0));
            e.0 += 1;
            if r.is_ai4science() {
                e.1 += 1;
            }
        }
    }
    counts
        .into_iter()
        .map(|(cluster, (total, ai4science))| ClusterCount {
            cluster,
            label: model.label(cluster).unwrap_or_default().to_string(),
            total,
            ai4science,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RankedCluster {
    pub cluster: u32,
    pub label: String,
    pub ai4science: usize,
}

/// For each community and side, clusters ranked by the community's AI4Science
/// publication count (descending, ties by cluster id). Clusters with no such
/// publications are omitted.
pub fn community_breakdown(
    corpus: &Corpus,
    extractions: &ExtractionSet,
    problem_model: &ClusterModel,
    method_model: &ClusterModel,
) -> BTreeMap<(Community, Side), Vec<RankedCluster>> {
    let mut out = BTreeMap::new();
    for community in [Community::Science, Community::Ai] {
        for (side, model) in [(Side::Problem, problem_model), (Side::Method, method_model)] {
            let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
            for r in extractions.ai4science() {
                if corpus.get(&r.pub_id).map(|p| p.community) != Some(community) {
                    continue;
                }
                if let Some(c) = model.assignment(&r.pub_id) {
                    *counts.entry(c).or_insert(0) += 1;
                }
            }
            let mut ranked: Vec<RankedCluster> = counts
                .into_iter()
                .map(|(cluster, n)| RankedCluster {
                    cluster,
                    label: model.label(cluster).unwrap_or_default().to_string(),
                    ai4science: n,
                })
                .collect();
            ranked.sort_by(|a, b| b.ai4science.cmp(&a.ai4science).then(a.cluster.cmp(&b.cluster)));
            out.insert((community, side), ranked);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star() -> BipartiteGraph {
        let edges = (0..4).map(|m| GraphEdge { pub_id: format!("p{m}"), problem: 0, method: m }).collect();
        BipartiteGraph::new([0].into(), (0..4).collect(), edges, BTreeMap::new(), BTreeMap::new())
    }

    #[test]
    fn star_degrees() {
        let g = star();
        for weighted in [false, true] {
            let d = degree_stats(&g, Side::Problem, weighted);
            assert_eq!(d.degrees[&0], 4);
            assert_eq!(d.mean, 4.0);
        }
        assert_eq!(degree_stats(&g, Side::Method, false).mean, 1.0);
    }

    #[test]
    fn repeated_pairs_weight_but_not_degree() {
        let edges = vec![
            GraphEdge { pub_id: "a".into(), problem: 1, method: 2 },
            GraphEdge { pub_id: "b".into(), problem: 1, method: 2 },
            GraphEdge { pub_id: "c".into(), problem: 1, method: 3 },
        ];
        let g = BipartiteGraph::new([1].into(), [2, 3].into(), edges, BTreeMap::new(), BTreeMap::new());
        assert_eq!(g.weight(1, 2), 2);
        assert_eq!(degree_stats(&g, Side::Problem, false).degrees[&1], 2);
        assert_eq!(degree_stats(&g, Side::Problem, true).degrees[&1], 3);
        assert_eq!(g.neighbors(Side::Method, 2), BTreeMap::from([(1, 2)]));
    }
}
