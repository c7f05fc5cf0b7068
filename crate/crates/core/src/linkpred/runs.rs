//! Whole prediction runs over a training graph: one query per source cluster
//! (Katz, node2vec, graph prompt) or per test publication (RAG, imitation).

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::generative::{generation_text, target_text};
use super::{
    generate_links_rag, imitation_baseline, map_generation_to_cluster, predict_llm_graph, rank_katz, rank_node2vec,
    retrieve_similar, Direction, KatzTable, LinkPredError, NodeEmbeddings, PredMethod, PredictionRun, RankedTarget,
    SourcePrediction,
};
use crate::atlas::BipartiteGraph;
use crate::clustering::ClusterModel;
use crate::embedding::{embed_text, EmbeddingProvider, Side, VectorTable};
use crate::extraction::{AspectExtraction, ExtractionSet, GenClient};

/// Training-era inputs shared by the generative runs.
pub struct TrainView<'a> {
    pub graph: &'a BipartiteGraph,
    pub extractions: &'a ExtractionSet,
    /// AI4Science publications of the training period.
    pub train_ids: &'a BTreeSet<String>,
    pub problem_model: &'a ClusterModel,
    pub method_model: &'a ClusterModel,
    pub problem_vectors: &'a VectorTable,
    pub method_vectors: &'a VectorTable,
}

impl TrainView<'_> {
    pub fn model(&self, side: Side) -> &ClusterModel {
        match side {
            Side::Problem => self.problem_model,
            Side::Method => self.method_model,
        }
    }

    pub fn vectors(&self, side: Side) -> &VectorTable {
        match side {
            Side::Problem => self.problem_vectors,
            Side::Method => self.method_vectors,
        }
    }

    /// Rows of the side's vectors that belong to training publications.
    fn train_vectors(&self, side: Side) -> VectorTable {
        let all = self.vectors(side);
        let mut t = VectorTable::new(all.dim, &all.provider_id, side.instruction());
        for (id, row) in all.rows() {
            if self.train_ids.contains(id) {
                t.push(id, row).expect("same dimension");
            }
        }
        t.l2_normalized = all.l2_normalized;
        t
    }

    /// The query's source-side vector, embedding it if the table lacks it.
    fn query_vector(&self, query: &AspectExtraction, side: Side, provider: &EmbeddingProvider) -> Result<Vec<f32>, LinkPredError> {
        if let Some(v) = self.vectors(side).get(&query.pub_id) {
            return Ok(v.to_vec());
        }
        let text = match side {
            Side::Problem => query.problem_text(),
            Side::Method => query.method_text(),
        }
        .ok_or(LinkPredError::EmptyText)?;
        Ok(embed_text(provider, side.instruction(), &text)?.values)
    }
}

fn structural(ranked: Vec<(u32, f64)>, k: usize) -> Vec<RankedTarget> {
    ranked.into_iter().take(k).map(|(target, score)| RankedTarget { target, score, raw_text: None }).collect()
}

pub fn katz_run(table: &KatzTable, graph: &BipartiteGraph, direction: Direction, k: usize) -> Result<PredictionRun, LinkPredError> {
    let side = direction.source_side();
    let mut run = PredictionRun::new(direction, PredMethod::Katz, k, 0, serde_json::to_value(table.params).unwrap());
    for &source in graph.nodes(side) {
        let targets = structural(rank_katz(table, graph, side, source)?, k);
        run.predictions.push(SourcePrediction { source, query: None, targets, texts: vec![], dropped: vec![] });
    }
    Ok(run)
}

pub fn node2vec_run(embeds: &NodeEmbeddings, direction: Direction, k: usize) -> Result<PredictionRun, LinkPredError> {
    let side = direction.source_side();
    let params = serde_json::to_value(embeds.params).unwrap();
    let mut run = PredictionRun::new(direction, PredMethod::Node2vec, k, embeds.seed, params);
    for &(s, source) in &embeds.nodes {
        if s == side {
            let targets = structural(rank_node2vec(embeds, side, source)?, k);
            run.predictions.push(SourcePrediction { source, query: None, targets, texts: vec![], dropped: vec![] });
        }
    }
    Ok(run)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RagRunParams {
    pub k: usize,
    /// Number of retrieved exemplars shown in each prompt.
    pub n_examples: usize,
}

impl Default for RagRunParams {
    fn default() -> Self {
        RagRunParams { k: 10, n_examples: 5 }
    }
}

/// Generations are mapped to target clusters and deduplicated keeping the first
/// occurrence; the score of rank `r` (0-based) is `k - r`.
pub fn rag_run(
    client: &GenClient,
    provider: &EmbeddingProvider,
    view: &TrainView<'_>,
    queries: &[&AspectExtraction],
    direction: Direction,
    params: RagRunParams,
) -> Result<PredictionRun, LinkPredError> {
    let (ss, ts) = (direction.source_side(), direction.target_side());
    let train = view.train_vectors(ss);
    let target_model = view.model(ts);
    let predictions: Vec<SourcePrediction> = queries
        .par_iter()
        .filter_map(|q| view.model(ss).assignment(&q.pub_id).map(|c| (q, c)))
        .map(|(q, source)| {
            let qv = view.query_vector(q, ss, provider)?;
            let exemplars: Vec<&AspectExtraction> = retrieve_similar(&train, &qv, params.n_examples)?
                .iter()
                .filter_map(|(id, _)| view.extractions.get(id))
                .collect();
            let generation = generate_links_rag(client, q, &exemplars, params.k, direction)?;
            let mut pred = SourcePrediction {
                source,
                query: Some(q.pub_id.clone()),
                targets: vec![],
                texts: vec![],
                dropped: generation.dropped,
            };
            for rec in generation.recommendations {
                let text = generation_text(&rec.keyphrase, rec.usage.as_deref());
                pred.texts.push(text.clone());
                let (target, _) = map_generation_to_cluster(&text, target_model, provider)?;
                if pred.targets.iter().any(|t| t.target == target) {
                    continue;
                }
                let score = (params.k - pred.targets.len()) as f64;
                pred.targets.push(RankedTarget { target, score, raw_text: Some(text) });
            }
            Ok(pred)
        })
        .collect::<Result<_, LinkPredError>>()?;
    let mut run = PredictionRun::new(direction, PredMethod::LlmRag, params.k, 0, json!({
        "n_examples": params.n_examples,
        "model_id": client.model_id(),
        "embedding_provider": provider.provider_id(),
    }));
    run.predictions = predictions;
    Ok(run)
}

/// One graph-prompt query per source cluster of the training graph. Replies
/// that do not parse as a list leave the query with no targets.
pub fn graph_run(
    client: &GenClient,
    provider: &EmbeddingProvider,
    view: &TrainView<'_>,
    direction: Direction,
    k: usize,
) -> Result<PredictionRun, LinkPredError> {
    let ss = direction.source_side();
    let target_model = view.model(direction.target_side());
    let sources: Vec<u32> = view.graph.nodes(ss).iter().copied().collect();
    let predictions: Vec<SourcePrediction> = sources
        .par_iter()
        .map(|&source| {
            let mut pred = SourcePrediction { source, query: None, targets: vec![], texts: vec![], dropped: vec![] };
            match predict_llm_graph(client, view.graph, direction, source, k, target_model, provider) {
                Ok(g) => {
                    pred.texts = g.labels;
                    pred.dropped = g.unmatched;
                    for (r, target) in g.mapped.into_iter().enumerate() {
                        let raw_text = view.graph.label(direction.target_side(), target).map(str::to_string);
                        pred.targets.push(RankedTarget { target, score: (k - r) as f64, raw_text });
                    }
                }
                Err(LinkPredError::Format(raw)) => pred.dropped.push(raw),
                Err(e) => return Err(e),
            }
            Ok(pred)
        })
        .collect::<Result<_, LinkPredError>>()?;
    let mut run = PredictionRun::new(direction, PredMethod::LlmGraph, k, 0, json!({
        "model_id": client.model_id(),
        "embedding_provider": provider.provider_id(),
    }));
    run.predictions = predictions;
    Ok(run)
}

/// The `k` nearest training publications; each contributes its own target
/// cluster (noise skipped, duplicates dropped) and its description as text.
pub fn imitation_run(
    provider: &EmbeddingProvider,
    view: &TrainView<'_>,
    queries: &[&AspectExtraction],
    direction: Direction,
    k: usize,
) -> Result<PredictionRun, LinkPredError> {
    let (ss, ts) = (direction.source_side(), direction.target_side());
    let train = view.train_vectors(ss);
    let predictions: Vec<SourcePrediction> = queries
        .par_iter()
        .filter_map(|q| view.model(ss).assignment(&q.pub_id).map(|c| (q, c)))
        .map(|(q, source)| {
            let qv = view.query_vector(q, ss, provider)?;
            let picks = imitation_baseline(&train, view.extractions, &qv, k, direction)?;
            let mut pred = SourcePrediction { source, query: Some(q.pub_id.clone()), targets: vec![], texts: vec![], dropped: vec![] };
            for pick in picks {
                pred.texts.push(pick.text.clone());
                let Some(target) = view.model(ts).assignment(&pick.pub_id) else { continue };
                if pred.targets.iter().any(|t| t.target == target) {
                    continue;
                }
                pred.targets.push(RankedTarget { target, score: pick.similarity, raw_text: Some(pick.text) });
            }
            Ok(pred)
        })
        .collect::<Result<_, LinkPredError>>()?;
    let mut run = PredictionRun::new(direction, PredMethod::Imitation, k, 0, json!({
        "embedding_provider": provider.provider_id(),
    }));
    run.predictions = predictions;
    Ok(run)
}

/// The reference text for a test publication in `direction`: its target-side
/// keyphrase with usage.
pub fn reference_text(record: &AspectExtraction, direction: Direction) -> Option<String> {
    target_text(record, direction.target_side())
}
