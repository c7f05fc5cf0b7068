//! Seeded bipartite block models with held-out links, for sanity-checking
//! predictors against a random ranking.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Direction;
use crate::atlas::{BipartiteGraph, GraphEdge};
use crate::eval::{prf_at_k, Prf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockModel {
    pub blocks: usize,
    /// Problem and method nodes per block.
    pub per_side: usize,
    pub p_within: f64,
    pub p_across: f64,
    /// Fraction of links held out for testing.
    pub holdout: f64,
}

impl Default for BlockModel {
    fn default() -> Self {
        BlockModel { blocks: 2, per_side: 20, p_within: 0.5, p_across: 0.02, holdout: 0.2 }
    }
}

#[derive(Debug, Clone)]
pub struct BlockSplit {
    /// Every node, training links only, one edge per link.
    pub train: BipartiteGraph,
    pub test: BTreeSet<(u32, u32)>,
}

impl BlockModel {
    /// Problem `i` and method `i` both sit in block `i / per_side`. Links are drawn
    /// independently; `round(holdout · links)` of them, chosen uniformly, are held out.
    pub fn sample(&self, seed: u64) -> BlockSplit {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = (self.blocks * self.per_side) as u32;
        let mut links = Vec::new();
        for p in 0..n {
            for m in 0..n {
                let same = p as usize / self.per_side == m as usize / self.per_side;
                if rng.random::<f64>() < if same { self.p_within } else { self.p_across } {
                    links.push((p, m));
                }
            }
        }
        links.shuffle(&mut rng);
        let n_test = (self.holdout * links.len() as f64).round() as usize;
        let test: BTreeSet<(u32, u32)> = links[..n_test].iter().copied().collect();
        let edges = links[n_test..]
            .iter()
            .map(|&(p, m)| GraphEdge { pub_id: format!("p{p:04}m{m:04}"), problem: p, method: m })
            .collect();
        let labels: BTreeMap<u32, String> = (0..n).map(|i| (i, format!("c{i}"))).collect();
        let train = BipartiteGraph::new((0..n).collect(), (0..n).collect(), edges, labels.clone(), labels);
        BlockSplit { train, test }
    }
}

impl BlockSplit {
    /// Sources with at least one held-out link, their held-out targets and their
    /// training neighbours.
    pub fn queries(&self, direction: Direction) -> Vec<(u32, BTreeSet<u32>, BTreeSet<u32>)> {
        let truth = crate::eval::truth_from_links(&self.test, direction);
        truth
            .into_iter()
            .map(|(s, t)| {
                let known = self.train.neighbors(direction.source_side(), s).into_keys().collect();
                (s, t, known)
            })
            .collect()
    }

    fn candidates(&self, direction: Direction, known: &BTreeSet<u32>) -> usize {
        self.train.nodes(direction.target_side()).len() - known.len()
    }

    /// Macro P/R/F1@K of a ranker over held-out links. Training neighbours are
    /// removed from each ranking before truncation, so every method competes over
    /// the same candidate set as the random baseline.
    pub fn evaluate(&self, direction: Direction, k: usize, mut rank: impl FnMut(u32) -> Vec<(u32, f64)>) -> Prf {
        let queries = self.queries(direction);
        let mut sum = Prf::default();
        for (s, truth, known) in &queries {
            let ranked: Vec<u32> = rank(*s).into_iter().map(|(t, _)| t).filter(|t| !known.contains(t)).collect();
            let m = prf_at_k(&ranked, truth, k);
            sum.precision += m.precision;
            sum.recall += m.recall;
            sum.f1 += m.f1;
        }
        let n = queries.len().max(1) as f64;
        Prf { precision: sum.precision / n, recall: sum.recall / n, f1: sum.f1 / n }
    }

    /// Expected macro P/R/F1@K of a uniformly random ranking of the same
    /// candidates. With `c` candidates and `|T|` truths the hit count is
    /// hypergeometric with mean `min(K, c)·|T|/c`, and each metric is linear in it.
    pub fn random_expectation(&self, direction: Direction, k: usize) -> Prf {
        let queries = self.queries(direction);
        let mut sum = Prf::default();
        for (_, truth, known) in &queries {
            let c = self.candidates(direction, known) as f64;
            let t = truth.len() as f64;
            let hits = (k as f64).min(c) * t / c;
            sum.precision += hits / k as f64;
            sum.recall += hits / t;
            sum.f1 += 2.0 * hits / (k as f64 + t);
        }
        let n = queries.len().max(1) as f64;
        Prf { precision: sum.precision / n, recall: sum.recall / n, f1: sum.f1 / n }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_partitions_links() {
        let s = BlockModel::default().sample(1);
        let train = s.train.links();
        assert!(train.is_disjoint(&s.test));
        let total = train.len() + s.test.len();
        assert_eq!(s.test.len(), (0.2 * total as f64).round() as usize);
        assert_eq!(s.train.nodes(crate::embedding::Side::Problem).len(), 40);
    }

    #[test]
    fn random_expectation_matches_simulation() {
        let s = BlockModel::default().sample(4);
        let expect = s.random_expectation(Direction::SciToAi, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let trials = 4000;
        let mut acc = 0.0;
        for _ in 0..trials {
            let mut order: Vec<u32> = (0..40).collect();
            order.shuffle(&mut rng);
            acc += s.evaluate(Direction::SciToAi, 10, |_| order.iter().map(|&t| (t, 0.0)).collect()).recall;
        }
        let sim = acc / trials as f64;
        assert!((sim - expect.recall).abs() < 0.01, "{sim} vs {}", expect.recall);
    }
}
