use std::collections::BTreeMap;

use serde_json::{Map, Value};

use super::{Direction, LinkPredError};
use crate::atlas::BipartiteGraph;
use crate::clustering::ClusterModel;
use crate::embedding::{cosine, embed_text, EmbeddingProvider, Side, VectorTable};
use crate::extraction::parse::{
    normalize_field, parse_recommendations, parse_string_list, Recommendation, KEY_METHOD_DEFINITION,
    KEY_METHOD_KEYPHRASE, KEY_PROBLEM_DEFINITION, KEY_PROBLEM_DISCIPLINE, KEY_PROBLEM_KEYPHRASE,
};
use crate::extraction::prompts::{template, PromptKind, DEFAULT_PROMPT_VERSION};
use crate::extraction::{AspectExtraction, ExtractionSet, GenClient};

/// Top-`n` rows of `train` by cosine similarity to `query`, ties by id.
pub fn retrieve_similar(train: &VectorTable, query: &[f32], n: usize) -> Result<Vec<(String, f64)>, LinkPredError> {
    if train.is_empty() {
        return Err(LinkPredError::EmptyTrainingSet);
    }
    let mut scored: Vec<(String, f64)> =
        train.rows().map(|(id, row)| Ok((id.to_string(), cosine(query, row)?))).collect::<Result<_, LinkPredError>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(n);
    Ok(scored)
}

/// `keyphrase, usage`, or the keyphrase alone.
pub(crate) fn generation_text(keyphrase: &str, usage: Option<&str>) -> String {
    match usage {
        Some(u) => format!("{keyphrase}, {u}"),
        None => keyphrase.to_string(),
    }
}

/// The opposite-side description of a record in generation format.
pub(crate) fn target_text(record: &AspectExtraction, target: Side) -> Option<String> {
    let keyphrase = match target {
        Side::Problem => record.problem_keyphrase.as_deref()?,
        Side::Method => record.method_keyphrase.as_deref()?,
    };
    Some(generation_text(keyphrase, record.usage.as_deref()))
}

fn query_aspects(query: &AspectExtraction, side: Side) -> String {
    let na = |v: &Option<String>| Value::String(v.clone().unwrap_or_else(|| "N/A".into()));
    let mut obj = Map::new();
    match side {
        Side::Problem => {
            obj.insert(KEY_PROBLEM_KEYPHRASE.into(), na(&query.problem_keyphrase));
            obj.insert(KEY_PROBLEM_DEFINITION.into(), na(&query.problem_definition));
            obj.insert(KEY_PROBLEM_DISCIPLINE.into(), na(&query.problem_discipline));
        }
        Side::Method => {
            obj.insert(KEY_METHOD_KEYPHRASE.into(), na(&query.method_keyphrase));
            obj.insert(KEY_METHOD_DEFINITION.into(), na(&query.method_definition));
        }
    }
    serde_json::to_string_pretty(&Value::Object(obj)).expect("json object")
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RagGeneration {
    /// Raw replies, one per call.
    pub raw: Vec<String>,
    /// Parsed recommendations in call order.
    pub recommendations: Vec<Recommendation>,
    /// Replies that held no parseable recommendation.
    pub dropped: Vec<String>,
}

/// `k` independent single-recommendation calls (sample indices `0..k`) with the
/// query's source-side aspects and the exemplars' full aspects in the prompt.
pub fn generate_links_rag(
    client: &GenClient,
    query: &AspectExtraction,
    exemplars: &[&AspectExtraction],
    k: usize,
    direction: Direction,
) -> Result<RagGeneration, LinkPredError> {
    let (kind, out_key) = match direction {
        Direction::SciToAi => (PromptKind::RagSciToAi, "AI Method (keyword/keyphrase)"),
        Direction::AiToSci => (PromptKind::RagAiToSci, "Scientific Problem (keyword/keyphrase)"),
    };
    let tpl = template(kind, DEFAULT_PROMPT_VERSION).expect("RAG templates are registered");
    let examples: Vec<String> = exemplars.iter().map(|r| r.aspects_json().to_string()).collect();
    let prompt = tpl.render(&BTreeMap::from([
        ("Key Aspects Extraction", query_aspects(query, direction.source_side())),
        ("examples", examples.join("\n")),
    ]));
    let mut out = RagGeneration::default();
    for sample in 0..k {
        let reply = client.complete_sample(&prompt, sample as u32)?;
        match parse_recommendations(&reply, out_key).and_then(|r| r.into_iter().next()) {
            Some(rec) => out.recommendations.push(rec),
            None => out.dropped.push(reply.clone()),
        }
        out.raw.push(reply);
    }
    Ok(out)
}

/// Cluster of `model` whose centroid is most cosine-similar to the embedded
/// text, ties to the lowest id. Returns the id and the similarity.
pub fn map_generation_to_cluster(
    text: &str,
    model: &ClusterModel,
    provider: &EmbeddingProvider,
) -> Result<(u32, f64), LinkPredError> {
    if text.trim().is_empty() {
        return Err(LinkPredError::EmptyText);
    }
    let v = embed_text(provider, model.side.instruction(), text)?;
    let mut best: Option<(u32, f64)> = None;
    for (&id, info) in &model.clusters {
        if info.centroid.len() != v.values.len() {
            continue;
        }
        let s = cosine(&v.values, &info.centroid)?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((id, s));
        }
    }
    best.ok_or(LinkPredError::NoClusters)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GraphGeneration {
    pub raw: String,
    /// Parsed labels in reply order.
    pub labels: Vec<String>,
    /// Mapped target clusters in reply order, without duplicates, at most `k`.
    pub mapped: Vec<u32>,
    /// Labels that were `N/A` or mapped onto an already predicted cluster.
    pub unmatched: Vec<String>,
}

/// Unique labels of `nodes`, in id order.
fn unique_labels(graph: &BipartiteGraph, side: Side) -> Vec<String> {
    let mut seen = std::collections::BTreeSet::new();
    graph
        .nodes(side)
        .iter()
        .filter_map(|&id| graph.label(side, id))
        .filter(|l| seen.insert(l.to_string()))
        .map(str::to_string)
        .collect()
}

/// Ask for `k` target cluster labels given the source cluster, every candidate
/// label and all training links as `(problem, method, count)` triples.
///
/// Labels are matched exactly, then case-insensitively, then by centroid cosine
/// through [`map_generation_to_cluster`]. When several clusters share a label the
/// lowest id not yet predicted is used.
pub fn predict_llm_graph(
    client: &GenClient,
    graph: &BipartiteGraph,
    direction: Direction,
    source: u32,
    k: usize,
    target_model: &ClusterModel,
    provider: &EmbeddingProvider,
) -> Result<GraphGeneration, LinkPredError> {
    let (ss, ts) = (direction.source_side(), direction.target_side());
    if !graph.nodes(ss).contains(&source) {
        return Err(LinkPredError::UnknownSource { side: ss, id: source });
    }
    let source_label = graph.label(ss, source).unwrap_or(crate::clustering::NA_LABEL).to_string();
    let links: Vec<String> = graph
        .weights()
        .iter()
        .map(|(&(p, m), w)| {
            let pl = graph.label(Side::Problem, p).unwrap_or(crate::clustering::NA_LABEL);
            let ml = graph.label(Side::Method, m).unwrap_or(crate::clustering::NA_LABEL);
            format!("({pl}, {ml}, {w})")
        })
        .collect();
    let (kind, slots) = match direction {
        Direction::SciToAi => (PromptKind::GraphSciToAi, ["sci cluster", "AI clusters"]),
        Direction::AiToSci => (PromptKind::GraphAiToSci, ["AI cluster", "sci clusters"]),
    };
    let tpl = template(kind, DEFAULT_PROMPT_VERSION).expect("graph templates are registered");
    let prompt = tpl.render(&BTreeMap::from([
        (slots[0], source_label),
        (slots[1], unique_labels(graph, ts).join("\n")),
        ("example links", links.join("\n")),
        ("k", k.to_string()),
    ]));
    let raw = client.complete(&prompt)?;
    let labels = parse_string_list(&raw).ok_or_else(|| LinkPredError::Format(format!("unparseable list: {raw}")))?;

    let mut out = GraphGeneration { raw, labels: labels.clone(), ..Default::default() };
    let targets: Vec<(u32, &str)> = graph.nodes(ts).iter().filter_map(|&id| Some((id, graph.label(ts, id)?))).collect();
    for label in labels {
        if out.mapped.len() >= k {
            break;
        }
        let Some(label) = normalize_field(&label) else {
            out.unmatched.push(label);
            continue;
        };
        let free = |pred: &dyn Fn(&str) -> bool| {
            targets.iter().find(|(id, l)| pred(l) && !out.mapped.contains(id)).map(|(id, _)| *id)
        };
        let lower = label.to_lowercase();
        let hit = match free(&|l| l == label) {
            Some(id) => Some(id),
            None => match free(&|l| l.to_lowercase() == lower) {
                Some(id) => Some(id),
                None => Some(map_generation_to_cluster(&label, target_model, provider)?.0).filter(|id| !out.mapped.contains(id)),
            },
        };
        match hit {
            Some(id) => out.mapped.push(id),
            None => out.unmatched.push(label),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImitationPick {
    pub pub_id: String,
    pub similarity: f64,
    pub text: String,
}

/// The opposite-side descriptions of the `k` nearest training records.
pub fn imitation_baseline(
    train: &VectorTable,
    train_records: &ExtractionSet,
    query: &[f32],
    k: usize,
    direction: Direction,
) -> Result<Vec<ImitationPick>, LinkPredError> {
    let nearest = retrieve_similar(train, query, k)?;
    Ok(nearest
        .into_iter()
        .filter_map(|(pub_id, similarity)| {
            let text = target_text(train_records.get(&pub_id)?, direction.target_side())?;
            Some(ImitationPick { pub_id, similarity, text })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{hash_provider, PROBLEM_INSTRUCTION};

    fn table(rows: &[(&str, [f32; 2])]) -> VectorTable {
        let mut t = VectorTable::new(2, "test", PROBLEM_INSTRUCTION);
        for (id, v) in rows {
            t.push(id, v).unwrap();
        }
        t
    }

    #[test]
    fn retrieval_order_and_ties() {
        let t = table(&[("b", [1.0, 0.0]), ("a", [1.0, 0.0]), ("c", [0.0, 1.0]), ("d", [0.6, 0.8])]);
        let r = retrieve_similar(&t, &[1.0, 0.0], 3).unwrap();
        assert_eq!(r.iter().map(|x| x.0.as_str()).collect::<Vec<_>>(), vec!["a", "b", "d"]);
        assert_eq!(retrieve_similar(&t, &[0.0, 1.0], 10).unwrap().len(), 4);
        assert!(matches!(
            retrieve_similar(&VectorTable::new(2, "x", PROBLEM_INSTRUCTION), &[1.0, 0.0], 1),
            Err(LinkPredError::EmptyTrainingSet)
        ));
    }

    #[test]
    fn rag_k1_gives_one_pair() {
        let mut q = AspectExtraction::empty("q", "v1", "mock-v1");
        q.problem_keyphrase = Some("Climate Modeling".into());
        let mut ex = AspectExtraction::empty("e", "v1", "mock-v1");
        ex.problem_keyphrase = Some("Weather".into());
        ex.method_keyphrase = Some("Graph Neural Networks".into());
        ex.usage = Some("Forecasts on meshes.".into());
        let g = generate_links_rag(&GenClient::mock(), &q, &[&ex], 1, Direction::SciToAi).unwrap();
        assert_eq!(g.recommendations.len(), 1);
        assert_eq!(g.recommendations[0].keyphrase, "Graph Neural Networks");
        assert_eq!(g.recommendations[0].usage.as_deref(), Some("Forecasts on meshes."));
    }

    #[test]
    fn empty_text_rejected() {
        let model = ClusterModel::new(Side::Method, vec![], vec![], BTreeMap::new());
        let p = hash_provider(0);
        assert!(matches!(map_generation_to_cluster("  ", &model, &p), Err(LinkPredError::EmptyText)));
        assert!(matches!(map_generation_to_cluster("x", &model, &p), Err(LinkPredError::NoClusters)));
    }
}
