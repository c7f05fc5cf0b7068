//! Second-order random walks plus skip-gram with negative sampling.
//!
//! Walk steps sample a neighbour (uniformly, or by edge weight when weighted)
//! and accept it with probability proportional to the return/in-out bias; in a
//! bipartite graph a two-step neighbour is never adjacent to the previous node,
//! so the bias is `1/p` for returning and `1/q` otherwise. All randomness comes
//! from one ChaCha8 stream, so a seed fixes the embeddings.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use super::{rank_candidates, LinkPredError, NodeIndex};
use crate::atlas::BipartiteGraph;
use crate::embedding::{cosine, Side};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Node2VecParams {
    pub dim: usize,
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub window: usize,
    pub negatives: usize,
    pub p: f64,
    pub q: f64,
    pub epochs: usize,
    pub learning_rate: f32,
    pub weighted: bool,
}

impl Default for Node2VecParams {
    fn default() -> Self {
        Node2VecParams {
            dim: 128,
            walks_per_node: 10,
            walk_length: 80,
            window: 10,
            negatives: 5,
            p: 1.0,
            q: 1.0,
            epochs: 5,
            learning_rate: 0.025,
            weighted: false,
        }
    }
}

impl Node2VecParams {
    fn validate(&self) -> Result<(), LinkPredError> {
        let bad = |what: &str| Err(LinkPredError::InvalidParams(what.to_string()));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if self.walks_per_node == 0 || self.walk_length < 2 {
            return bad("need at least one walk per node of length at least 2");
        }
        if self.window == 0 || self.epochs == 0 {
            return bad("window and epochs must be positive");
        }
        if !(self.p > 0.0 && self.q > 0.0) || !self.p.is_finite() || !self.q.is_finite() {
            return bad("p and q must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEmbeddings {
    pub nodes: Vec<(Side, u32)>,
    pub dim: usize,
    pub data: Vec<f32>,
    pub params: Node2VecParams,
    pub seed: u64,
    /// Nodes without neighbours; their vectors are the random initialisation.
    pub isolated: Vec<(Side, u32)>,
}

impl NodeEmbeddings {
    pub fn position(&self, side: Side, id: u32) -> Option<usize> {
        self.nodes.iter().position(|&n| n == (side, id))
    }

    pub fn vector(&self, side: Side, id: u32) -> Option<&[f32]> {
        self.position(side, id).map(|i| &self.data[i * self.dim..(i + 1) * self.dim])
    }
}

struct Sampler {
    uniform: bool,
    alias: Vec<Option<WeightedAliasIndex<f64>>>,
}

impl Sampler {
    fn new(index: &NodeIndex, weighted: bool) -> Self {
        let alias = index
            .adjacency
            .iter()
            .map(|a| {
                (weighted && !a.is_empty())
                    .then(|| WeightedAliasIndex::new(a.iter().map(|&(_, w)| w).collect()).expect("positive weights"))
            })
            .collect();
        Sampler { uniform: !weighted, alias }
    }

    fn neighbor(&self, index: &NodeIndex, node: usize, rng: &mut ChaCha8Rng) -> usize {
        let adj = &index.adjacency[node];
        let k = if self.uniform { rng.random_range(0..adj.len()) } else { self.alias[node].as_ref().unwrap().sample(rng) };
        adj[k].0
    }
}

/// `walks_per_node` rounds; each round visits every node in a fresh shuffled
/// order and starts one walk there. Isolated nodes yield single-node walks.
pub fn generate_walks(index: &NodeIndex, params: &Node2VecParams, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let sampler = Sampler::new(index, params.weighted);
    let (ret, out) = (1.0 / params.p, 1.0 / params.q);
    let max_bias = ret.max(out).max(1.0);
    let mut order: Vec<usize> = (0..index.len()).collect();
    let mut walks = Vec::with_capacity(index.len() * params.walks_per_node);
    for _ in 0..params.walks_per_node {
        order.shuffle(rng);
        for &start in &order {
            let mut walk = vec![start];
            if !index.adjacency[start].is_empty() {
                walk.push(sampler.neighbor(index, start, rng));
                while walk.len() < params.walk_length {
                    let (prev, cur) = (walk[walk.len() - 2], walk[walk.len() - 1]);
                    let next = loop {
                        let x = sampler.neighbor(index, cur, rng);
                        let bias = if x == prev { ret } else { out };
                        if bias >= max_bias || rng.random::<f64>() * max_bias < bias {
                            break x;
                        }
                    };
                    walk.push(next);
                }
            }
            walks.push(walk);
        }
    }
    walks
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x.clamp(-10.0, 10.0)).exp())
}

pub fn train_node2vec(graph: &BipartiteGraph, params: &Node2VecParams, seed: u64) -> Result<NodeEmbeddings, LinkPredError> {
    params.validate()?;
    let index = NodeIndex::from_graph(graph, params.weighted);
    if index.is_empty() {
        return Err(LinkPredError::EmptyGraph);
    }
    let n = index.len();
    let d = params.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let walks = generate_walks(&index, params, &mut rng);

    let mut input: Vec<f32> = (0..n * d).map(|_| (rng.random::<f32>() - 0.5) / d as f32).collect();
    let mut output = vec![0.0f32; n * d];

    let mut counts = vec![0.0f64; n];
    for w in &walks {
        for &v in w {
            counts[v] += 1.0;
        }
    }
    let noise = WeightedAliasIndex::new(counts.iter().map(|c| c.powf(0.75)).collect()).expect("walks visit every node");

    let total = (params.epochs * walks.iter().map(Vec::len).sum::<usize>()) as f32;
    let mut processed = 0.0f32;
    let mut grad = vec![0.0f32; d];
    for _ in 0..params.epochs {
        for walk in &walks {
            for (pos, &center) in walk.iter().enumerate() {
                let lr = params.learning_rate * (1.0 - processed / total).max(1e-4);
                processed += 1.0;
                let lo = pos.saturating_sub(params.window);
                let hi = (pos + params.window + 1).min(walk.len());
                for (cpos, &context) in walk.iter().enumerate().take(hi).skip(lo) {
                    if cpos == pos {
                        continue;
                    }
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    let v = &input[center * d..(center + 1) * d];
                    for s in 0..=params.negatives {
                        let (target, label) = if s == 0 {
                            (context, 1.0)
                        } else {
                            let t = noise.sample(&mut rng);
                            if t == context {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let u = &mut output[target * d..(target + 1) * d];
                        let dot: f32 = v.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
                        let g = (label - sigmoid(dot)) * lr;
                        for ((gi, ui), vi) in grad.iter_mut().zip(u.iter_mut()).zip(v) {
                            *gi += g * *ui;
                            *ui += g * vi;
                        }
                    }
                    for (vi, gi) in input[center * d..(center + 1) * d].iter_mut().zip(&grad) {
                        *vi += gi;
                    }
                }
            }
        }
    }
    if input.iter().any(|x| !x.is_finite()) {
        return Err(LinkPredError::InvalidParams("training diverged; lower the learning rate".into()));
    }
    let isolated = (0..n).filter(|&i| index.adjacency[i].is_empty()).map(|i| index.nodes[i]).collect();
    Ok(NodeEmbeddings { nodes: index.nodes, dim: d, data: input, params: *params, seed, isolated })
}

/// Every opposite-side node ranked by cosine similarity to the source, ties by id.
pub fn rank_node2vec(embeds: &NodeEmbeddings, side: Side, source: u32) -> Result<Vec<(u32, f64)>, LinkPredError> {
    let v = embeds.vector(side, source).ok_or(LinkPredError::UnknownSource { side, id: source })?;
    let mut scored = Vec::new();
    for (i, &(s, id)) in embeds.nodes.iter().enumerate() {
        if s == side.opposite() {
            let u = &embeds.data[i * embeds.dim..(i + 1) * embeds.dim];
            scored.push((id, cosine(v, u).unwrap_or(0.0), 0));
        }
    }
    Ok(rank_candidates(scored))
}

pub fn predict_node2vec(embeds: &NodeEmbeddings, side: Side, source: u32, k: usize) -> Result<Vec<(u32, f64)>, LinkPredError> {
    let mut ranked = rank_node2vec(embeds, side, source)?;
    ranked.truncate(k);
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::atlas::GraphEdge;

    fn graph(links: &[(u32, u32)], np: u32, nm: u32) -> BipartiteGraph {
        let edges = links
            .iter()
            .enumerate()
            .map(|(i, &(p, m))| GraphEdge { pub_id: format!("e{i:04}"), problem: p, method: m })
            .collect();
        BipartiteGraph::new((0..np).collect(), (0..nm).collect(), edges, BTreeMap::new(), BTreeMap::new())
    }

    fn small() -> Node2VecParams {
        Node2VecParams { dim: 16, walks_per_node: 5, walk_length: 20, window: 4, epochs: 2, ..Default::default() }
    }

    #[test]
    fn uniform_walk_steps() {
        // Path P0 - M0 - P1 - M1. From M0 (position 2) the next step is P0 or P1
        // with equal probability when p = q = 1.
        let g = graph(&[(0, 0), (1, 0), (1, 1)], 2, 2);
        let index = NodeIndex::from_graph(&g, false);
        let params = Node2VecParams { walks_per_node: 250, walk_length: 100, ..Default::default() };
        let walks = generate_walks(&index, &params, &mut ChaCha8Rng::seed_from_u64(1));
        let (mut to_p0, mut total) = (0usize, 0usize);
        for w in &walks {
            for pair in w.windows(2) {
                if pair[0] == 2 {
                    total += 1;
                    to_p0 += usize::from(pair[1] == 0);
                }
            }
        }
        assert!(total >= 100_000 / 4, "{total}");
        let frac = to_p0 as f64 / total as f64;
        assert!((frac - 0.5).abs() < 0.02 * 0.5, "{frac}");
    }

    #[test]
    fn walks_follow_edges() {
        let g = graph(&[(0, 0), (1, 0), (1, 1), (2, 2)], 4, 3);
        let index = NodeIndex::from_graph(&g, false);
        let params = Node2VecParams { p: 0.5, q: 4.0, ..small() };
        for w in generate_walks(&index, &params, &mut ChaCha8Rng::seed_from_u64(3)) {
            for pair in w.windows(2) {
                assert!(index.adjacency[pair[0]].iter().any(|&(j, _)| j == pair[1]));
            }
            let isolated = index.adjacency[w[0]].is_empty();
            assert_eq!(w.len(), if isolated { 1 } else { params.walk_length });
        }
    }

    #[test]
    fn deterministic_and_flags_isolated() {
        let g = graph(&[(0, 0), (1, 0), (1, 1)], 3, 2);
        let a = train_node2vec(&g, &small(), 9).unwrap();
        let b = train_node2vec(&g, &small(), 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.isolated, vec![(Side::Problem, 2)]);
        assert!(a.data.iter().all(|x| x.is_finite()));
        assert_ne!(a.data, train_node2vec(&g, &small(), 10).unwrap().data);
    }

    #[test]
    fn invalid_params_rejected() {
        let g = graph(&[(0, 0)], 1, 1);
        for bad in [
            Node2VecParams { dim: 0, ..small() },
            Node2VecParams { walk_length: 1, ..small() },
            Node2VecParams { q: 0.0, ..small() },
        ] {
            assert!(matches!(train_node2vec(&g, &bad, 0), Err(LinkPredError::InvalidParams(_))));
        }
    }
}
