//! Problem↔method link prediction: Katz index, node2vec, retrieval-augmented
//! generation, graph-in-prompt generation and the imitation baseline.

mod generative;
mod katz;
mod node2vec;
mod runs;
pub mod synthetic;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generative::{
    generate_links_rag, imitation_baseline, map_generation_to_cluster, predict_llm_graph, retrieve_similar,
    GraphGeneration, ImitationPick, RagGeneration,
};
pub use katz::{katz_scores, predict_katz, rank_katz, KatzParams, KatzTable};
pub use node2vec::{generate_walks, predict_node2vec, rank_node2vec, train_node2vec, Node2VecParams, NodeEmbeddings};
pub use runs::{graph_run, imitation_run, katz_run, node2vec_run, rag_run, reference_text, RagRunParams, TrainView};

use crate::atlas::BipartiteGraph;
use crate::embedding::{EmbeddingError, Side};
use crate::extraction::GenError;

#[derive(Debug, Error)]
pub enum LinkPredError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("unknown {side} node {id}")]
    UnknownSource { side: Side, id: u32 },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("cannot map an empty text")]
    EmptyText,
    #[error("target side has no clusters with centroids")]
    NoClusters,
    #[error(transparent)]
    Generation(#[from] GenError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("prediction file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    SciToAi,
    AiToSci,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::SciToAi, Direction::AiToSci];

    pub fn source_side(self) -> Side {
        match self {
            Direction::SciToAi => Side::Problem,
            Direction::AiToSci => Side::Method,
        }
    }

    pub fn target_side(self) -> Side {
        self.source_side().opposite()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::SciToAi => "sci_to_ai",
            Direction::AiToSci => "ai_to_sci",
        }
    }

    /// Orient a (source, target) pair as (problem, method).
    pub fn link(self, source: u32, target: u32) -> (u32, u32) {
        match self {
            Direction::SciToAi => (source, target),
            Direction::AiToSci => (target, source),
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredMethod {
    Katz,
    Node2vec,
    LlmRag,
    LlmGraph,
    Imitation,
}

impl PredMethod {
    pub const ALL: [PredMethod; 5] =
        [PredMethod::Katz, PredMethod::Node2vec, PredMethod::LlmRag, PredMethod::LlmGraph, PredMethod::Imitation];

    pub fn as_str(self) -> &'static str {
        match self {
            PredMethod::Katz => "katz",
            PredMethod::Node2vec => "node2vec",
            PredMethod::LlmRag => "llm_rag",
            PredMethod::LlmGraph => "llm_graph",
            PredMethod::Imitation => "imitation",
        }
    }

    pub fn is_generative(self) -> bool {
        matches!(self, PredMethod::LlmRag | PredMethod::LlmGraph | PredMethod::Imitation)
    }
}

impl std::fmt::Display for PredMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedTarget {
    pub target: u32,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_text: Option<String>,
}

/// Ranked targets for one query. Structural methods query by cluster; generative
/// methods query by publication, carried in `query`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourcePrediction {
    pub source: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    pub targets: Vec<RankedTarget>,
    /// Every text a generative method produced for this query, in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub texts: Vec<String>,
    /// Generated texts that did not survive parsing or mapping.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped: Vec<String>,
}

impl SourcePrediction {
    pub fn target_ids(&self) -> Vec<u32> {
        self.targets.iter().map(|t| t.target).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRun {
    pub direction: Direction,
    pub method: PredMethod,
    pub k: usize,
    pub seed: u64,
    pub params: serde_json::Value,
    pub predictions: Vec<SourcePrediction>,
}

#[derive(Serialize, Deserialize)]
struct RunHeader {
    direction: Direction,
    method: PredMethod,
    k: usize,
    seed: u64,
    params: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<crate::io::Provenance>,
}

/// One line per (query, rank); a query with no surviving targets gets a line
/// with `rank` 0 and no target.
#[derive(Serialize, Deserialize)]
struct RunRow {
    direction: Direction,
    method: PredMethod,
    source: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    query: Option<String>,
    rank: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    raw_text: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    texts: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    dropped: Vec<String>,
}

impl PredictionRun {
    pub fn new(direction: Direction, method: PredMethod, k: usize, seed: u64, params: serde_json::Value) -> Self {
        PredictionRun { direction, method, k, seed, params, predictions: Vec::new() }
    }

    pub fn file_stem(&self) -> String {
        format!("{}_{}", self.method, self.direction)
    }

    /// Checks the run invariants: no duplicate targets per query, scores
    /// non-increasing, source never among its own targets.
    pub fn validate(&self) -> Result<(), LinkPredError> {
        for p in &self.predictions {
            let mut seen = std::collections::BTreeSet::new();
            for (i, t) in p.targets.iter().enumerate() {
                if !seen.insert(t.target) {
                    return Err(LinkPredError::Format(format!("duplicate target {} for source {}", t.target, p.source)));
                }
                if i > 0 && t.score > p.targets[i - 1].score {
                    return Err(LinkPredError::Format(format!("scores increase for source {}", p.source)));
                }
            }
        }
        Ok(())
    }

    pub fn to_jsonl(&self, provenance: Option<&crate::io::Provenance>) -> Vec<u8> {
        let header = RunHeader {
            direction: self.direction,
            method: self.method,
            k: self.k,
            seed: self.seed,
            params: self.params.clone(),
            provenance: provenance.cloned(),
        };
        let mut rows = Vec::new();
        for p in &self.predictions {
            let row = |rank, t: Option<&RankedTarget>, first: bool| RunRow {
                direction: self.direction,
                method: self.method,
                source: p.source,
                query: p.query.clone(),
                rank,
                target: t.map(|t| t.target),
                score: t.map(|t| t.score),
                raw_text: t.and_then(|t| t.raw_text.clone()),
                texts: if first { p.texts.clone() } else { Vec::new() },
                dropped: if first { p.dropped.clone() } else { Vec::new() },
            };
            if p.targets.is_empty() {
                rows.push(row(0, None, true));
            }
            for (i, t) in p.targets.iter().enumerate() {
                rows.push(row(i + 1, Some(t), i == 0));
            }
        }
        crate::io::jsonl_bytes(&header, &rows).expect("prediction rows serialize")
    }

    pub fn from_jsonl(text: &str) -> Result<Self, LinkPredError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: RunHeader = serde_json::from_str(lines.next().ok_or_else(|| LinkPredError::Format("empty".into()))?)
            .map_err(|e| LinkPredError::Format(e.to_string()))?;
        let mut run = PredictionRun::new(header.direction, header.method, header.k, header.seed, header.params);
        for line in lines {
            let row: RunRow = serde_json::from_str(line).map_err(|e| LinkPredError::Format(e.to_string()))?;
            let fresh = row.rank <= 1;
            if fresh {
                run.predictions.push(SourcePrediction {
                    source: row.source,
                    query: row.query,
                    targets: Vec::new(),
                    texts: row.texts,
                    dropped: row.dropped,
                });
            }
            let current = run.predictions.last_mut().ok_or_else(|| LinkPredError::Format("row before query".into()))?;
            if let (Some(target), Some(score)) = (row.target, row.score) {
                current.targets.push(RankedTarget { target, score, raw_text: row.raw_text });
            }
        }
        Ok(run)
    }
}

/// Sort candidates by score descending, then existing edge weight descending,
/// then node id.
pub(crate) fn rank_candidates(mut scored: Vec<(u32, f64, usize)>) -> Vec<(u32, f64)> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(b.2.cmp(&a.2)).then(a.0.cmp(&b.0)));
    scored.into_iter().map(|(id, s, _)| (id, s)).collect()
}

/// Dense node numbering: problem clusters in id order, then method clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeIndex {
    pub nodes: Vec<(Side, u32)>,
    positions: BTreeMap<(Side, u32), usize>,
    /// Neighbours of each node by position, with edge weight (1 when unweighted).
    pub adjacency: Vec<Vec<(usize, f64)>>,
}

impl NodeIndex {
    pub fn from_graph(graph: &BipartiteGraph, weighted: bool) -> Self {
        let nodes: Vec<(Side, u32)> = graph
            .problem_nodes
            .iter()
            .map(|&p| (Side::Problem, p))
            .chain(graph.method_nodes.iter().map(|&m| (Side::Method, m)))
            .collect();
        let positions: BTreeMap<(Side, u32), usize> = nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (&(p, m), &w) in graph.weights() {
            let (Some(&i), Some(&j)) = (positions.get(&(Side::Problem, p)), positions.get(&(Side::Method, m))) else {
                continue;
            };
            let w = if weighted { w as f64 } else { 1.0 };
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
        for a in &mut adjacency {
            a.sort_by_key(|&(j, _)| j);
        }
        NodeIndex { nodes, positions, adjacency }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn position(&self, side: Side, id: u32) -> Option<usize> {
        self.positions.get(&(side, id)).copied()
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.adjacency[i].iter().map(|&(_, w)| w).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_round_trips_through_jsonl() {
        let mut run = PredictionRun::new(Direction::AiToSci, PredMethod::LlmRag, 2, 7, serde_json::json!({"n": 3}));
        run.predictions.push(SourcePrediction {
            source: 4,
            query: Some("p1".into()),
            targets: vec![
                RankedTarget { target: 1, score: 0.5, raw_text: Some("GNN, used".into()) },
                RankedTarget { target: 0, score: 0.25, raw_text: None },
            ],
            texts: vec!["GNN, used".into(), "garbage".into()],
            dropped: vec!["garbage".into()],
        });
        run.predictions.push(SourcePrediction { source: 4, query: Some("p2".into()), targets: vec![], texts: vec![], dropped: vec![] });
        run.predictions.push(SourcePrediction {
            source: 2,
            query: None,
            targets: vec![RankedTarget { target: 9, score: 1.0, raw_text: None }],
            texts: vec![],
            dropped: vec![],
        });
        let bytes = run.to_jsonl(None);
        assert_eq!(PredictionRun::from_jsonl(std::str::from_utf8(&bytes).unwrap()).unwrap(), run);
        run.validate().unwrap();
    }

    #[test]
    fn validate_rejects_duplicates_and_rising_scores() {
        let mut run = PredictionRun::new(Direction::SciToAi, PredMethod::Katz, 2, 0, serde_json::Value::Null);
        let t = |target, score| RankedTarget { target, score, raw_text: None };
        run.predictions.push(SourcePrediction { source: 0, query: None, targets: vec![t(1, 1.0), t(1, 0.5)], texts: vec![], dropped: vec![] });
        assert!(run.validate().is_err());
        run.predictions[0].targets = vec![t(1, 0.5), t(2, 1.0)];
        assert!(run.validate().is_err());
    }

    #[test]
    fn ranking_tie_breaks() {
        let ranked = rank_candidates(vec![(5, 1.0, 0), (3, 1.0, 0), (9, 1.0, 2), (1, 2.0, 0)]);
        assert_eq!(ranked.iter().map(|r| r.0).collect::<Vec<_>>(), vec![1, 9, 3, 5]);
    }
}
