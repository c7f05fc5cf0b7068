//! 2D projection, density clustering, cluster summaries and label-based merging.

pub mod hdbscan;
pub mod knn;
pub mod largevis;
pub mod metrics;
mod model;
pub mod tfidf;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hdbscan::{hdbscan as cluster_hdbscan, HdbscanParams};
pub use largevis::{LayoutParams, Projection2D};
pub use metrics::{adjusted_rand_index, same_partition};
pub use model::{ClusterInfo, ClusterModel};
pub use tfidf::{top_terms_tfidf, ScoredTerm};

use crate::embedding::{Side, VectorTable};
use crate::extraction::parse::{normalize_field, parse_string_list, KEY_METHOD_DEFINITION, KEY_METHOD_KEYPHRASE,
    KEY_PROBLEM_DEFINITION, KEY_PROBLEM_DISCIPLINE, KEY_PROBLEM_KEYPHRASE};
use crate::extraction::prompts::{template, PromptKind};
use crate::extraction::{AspectExtraction, ExtractionSet, GenClient, GenError, DEFAULT_PROMPT_VERSION};

#[derive(Debug, Error)]
pub enum ClusteringError {
    #[error("too few points: need at least {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("input contains non-finite values")]
    NonFinite,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("layout failed: {0}")]
    Layout(String),
    #[error("cluster summarization failed: {0}")]
    Generation(#[from] GenError),
    #[error("cluster files: {0}")]
    Io(#[from] std::io::Error),
    #[error("cluster files: {0}")]
    Format(String),
}

/// Label used when no summary could be produced.
pub const NA_LABEL: &str = "N/A";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterParams {
    pub layout: LayoutParams,
    pub hdbscan: HdbscanParams,
    /// Number of TF-IDF terms shown to the summarizer.
    pub top_terms: usize,
    /// Number of member examples shown to the summarizer (first by publication id).
    pub samples: usize,
    /// Merge radius as a fraction of the layout's bounding-box diagonal.
    pub adjacency_fraction: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            layout: LayoutParams::default(),
            hdbscan: HdbscanParams::default(),
            top_terms: 20,
            samples: 10,
            adjacency_fraction: 0.05,
        }
    }
}

pub fn project_2d(table: &VectorTable, params: &LayoutParams) -> Result<Projection2D, ClusteringError> {
    largevis::largevis(knn::Points { data: &table.data, dim: table.dim }, &table.ids, params)
}

/// A cluster label and why it may be unreliable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummaryLabel {
    pub label: String,
    /// `unparseable` or `overlong`.
    pub flag: Option<String>,
}

fn example_line(side: Side, r: &AspectExtraction) -> String {
    let mut obj = serde_json::Map::new();
    let na = |v: &Option<String>| serde_json::Value::String(v.clone().unwrap_or_else(|| NA_LABEL.into()));
    match side {
        Side::Problem => {
            obj.insert(KEY_PROBLEM_KEYPHRASE.into(), na(&r.problem_keyphrase));
            obj.insert(KEY_PROBLEM_DEFINITION.into(), na(&r.problem_definition));
            obj.insert(KEY_PROBLEM_DISCIPLINE.into(), na(&r.problem_discipline));
        }
        Side::Method => {
            obj.insert(KEY_METHOD_KEYPHRASE.into(), na(&r.method_keyphrase));
            obj.insert(KEY_METHOD_DEFINITION.into(), na(&r.method_definition));
        }
    }
    serde_json::Value::Object(obj).to_string()
}

pub fn summarize_cluster(
    client: &GenClient,
    side: Side,
    top_terms: &[String],
    samples: &[&AspectExtraction],
) -> Result<SummaryLabel, GenError> {
    let kind = match side {
        Side::Problem => PromptKind::SummarizeProblem,
        Side::Method => PromptKind::SummarizeMethod,
    };
    let tpl = template(kind, DEFAULT_PROMPT_VERSION).expect("summary templates are registered");
    let examples: Vec<String> = samples.iter().map(|r| example_line(side, r)).collect();
    let mut slots = BTreeMap::new();
    slots.insert("top words", top_terms.join(", "));
    slots.insert("examples", examples.join("\n"));
    let reply = client.complete(&tpl.render(&slots))?;
    Ok(match parse_string_list(&reply).and_then(|l| l.into_iter().next()) {
        None => SummaryLabel { label: NA_LABEL.into(), flag: Some("unparseable".into()) },
        Some(raw) => match normalize_field(&raw) {
            None => SummaryLabel { label: NA_LABEL.into(), flag: None },
            Some(label) => {
                let flag = (label.split_whitespace().count() > 3).then(|| "overlong".to_string());
                SummaryLabel { label, flag }
            }
        },
    })
}

/// Union clusters with string-equal labels whose 2D centroids lie within `radius`,
/// closing transitively and repeating until stable. `N/A` clusters never merge.
/// Merged clusters keep the smallest member id.
pub fn merge_adjacent_same_label(model: &ClusterModel, proj: &Projection2D, radius: f64) -> ClusterModel {
    let mut current = model.clone();
    loop {
        let ids: Vec<u32> = current.clusters.keys().copied().collect();
        let mut parent: BTreeMap<u32, u32> = ids.iter().map(|&c| (c, c)).collect();
        fn root(p: &BTreeMap<u32, u32>, mut x: u32) -> u32 {
            while p[&x] != x {
                x = p[&x];
            }
            x
        }
        let mut changed = false;
        for (ai, &a) in ids.iter().enumerate() {
            for &b in &ids[ai + 1..] {
                let (ca, cb) = (&current.clusters[&a], &current.clusters[&b]);
                if ca.label == NA_LABEL || ca.label != cb.label {
                    continue;
                }
                let d = ((ca.centroid_2d[0] - cb.centroid_2d[0]).powi(2) + (ca.centroid_2d[1] - cb.centroid_2d[1]).powi(2)).sqrt();
                if d <= radius {
                    let (ra, rb) = (root(&parent, a), root(&parent, b));
                    if ra != rb {
                        parent.insert(ra.max(rb), ra.min(rb));
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return current;
        }
        let mapping: BTreeMap<u32, u32> = ids.iter().map(|&c| (c, root(&parent, c))).collect();
        current = current.remap(&mapping, proj);
    }
}

/// Default merge radius for a layout.
pub fn adjacency_radius(proj: &Projection2D, fraction: f64) -> f64 {
    fraction * proj.bbox_diagonal()
}

fn aspect_text(side: Side, r: &AspectExtraction) -> Option<String> {
    match side {
        Side::Problem => r.problem_text(),
        Side::Method => r.method_text(),
    }
}

/// Layout, cluster, summarize and merge one side's vectors.
pub fn build_cluster_model(
    side: Side,
    vectors: &VectorTable,
    extractions: &ExtractionSet,
    client: &GenClient,
    params: &ClusterParams,
) -> Result<(Projection2D, ClusterModel), ClusteringError> {
    let proj = project_2d(vectors, &params.layout)?;
    let assignments = cluster_hdbscan(&proj.coords, &params.hdbscan)?;
    let mut model = ClusterModel::from_assignments(side, &proj, assignments, vectors)?;

    let cluster_ids: Vec<u32> = model.clusters.keys().copied().collect();
    let members: Vec<Vec<&AspectExtraction>> = cluster_ids
        .iter()
        .map(|&c| {
            let mut m: Vec<&AspectExtraction> =
                model.members(c).into_iter().filter_map(|id| extractions.get(id)).collect();
            m.sort_by(|a, b| a.pub_id.cmp(&b.pub_id));
            m
        })
        .collect();
    let docs: Vec<String> = members
        .iter()
        .map(|m| m.iter().filter_map(|r| aspect_text(side, r)).collect::<Vec<_>>().join("\n"))
        .collect();
    let terms = top_terms_tfidf(&docs, params.top_terms);
    let labels: Vec<Result<SummaryLabel, GenError>> = cluster_ids
        .par_iter()
        .enumerate()
        .map(|(i, _)| {
            let t: Vec<String> = terms[i].iter().map(|s| s.term.clone()).collect();
            let s: Vec<&AspectExtraction> = members[i].iter().take(params.samples).copied().collect();
            summarize_cluster(client, side, &t, &s)
        })
        .collect();
    for ((c, t), l) in cluster_ids.iter().zip(terms).zip(labels) {
        let l = l?;
        let info = model.clusters.get_mut(c).unwrap();
        info.top_terms = t.into_iter().map(|s| s.term).collect();
        info.label = l.label;
        info.label_flag = l.flag;
    }
    let merged = merge_adjacent_same_label(&model, &proj, adjacency_radius(&proj, params.adjacency_fraction));
    Ok((proj, merged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::PROBLEM_INSTRUCTION;

    fn toy_model(labels: &[&str], centers: &[[f64; 2]]) -> (ClusterModel, Projection2D) {
        let mut table = VectorTable::new(2, "t", PROBLEM_INSTRUCTION);
        let mut coords = Vec::new();
        let mut assignments = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for k in 0..3 {
                table.push(&format!("p{c}-{k}"), &[c as f32, k as f32]).unwrap();
                coords.push([center[0] + 0.01 * k as f64, center[1]]);
                assignments.push(Some(c as u32));
            }
        }
        let proj = Projection2D { ids: table.ids.clone(), coords, params: LayoutParams::default(), objective: vec![] };
        let mut model = ClusterModel::from_assignments(Side::Method, &proj, assignments, &table).unwrap();
        for (c, l) in labels.iter().enumerate() {
            model.clusters.get_mut(&(c as u32)).unwrap().label = l.to_string();
        }
        (model, proj)
    }

    #[test]
    fn near_same_label_merges() {
        let (m, p) = toy_model(&["Deep Learning", "Deep Learning"], &[[0.0, 0.0], [0.1, 0.0]]);
        let merged = merge_adjacent_same_label(&m, &p, 1.0);
        assert_eq!(merged.clusters.len(), 1);
        assert_eq!(merged.clusters[&0].size, 6);
        assert_eq!(merged.clusters[&0].merged_from, vec![1]);
        assert!(merged.assignments.iter().all(|a| *a == Some(0)));
    }

    #[test]
    fn far_or_different_labels_stay() {
        let (m, p) = toy_model(&["Deep Learning", "Deep Learning"], &[[0.0, 0.0], [50.0, 0.0]]);
        assert_eq!(merge_adjacent_same_label(&m, &p, 1.0).clusters.len(), 2);
        let (m, p) = toy_model(&["Deep Learning", "Random Forests"], &[[0.0, 0.0], [0.1, 0.0]]);
        assert_eq!(merge_adjacent_same_label(&m, &p, 1.0).clusters.len(), 2);
        let (m, p) = toy_model(&["N/A", "N/A"], &[[0.0, 0.0], [0.1, 0.0]]);
        assert_eq!(merge_adjacent_same_label(&m, &p, 1.0).clusters.len(), 2);
    }

    #[test]
    fn chain_merges_transitively_and_idempotently() {
        let (m, p) = toy_model(&["X", "X", "X", "Y"], &[[0.0, 0.0], [0.9, 0.0], [1.8, 0.0], [0.5, 0.0]]);
        let once = merge_adjacent_same_label(&m, &p, 1.0);
        assert_eq!(once.clusters.len(), 2);
        assert_eq!(merge_adjacent_same_label(&once, &p, 1.0), once);
    }

    #[test]
    fn mock_summary_echoes_first_term() {
        let client = GenClient::mock();
        let r = AspectExtraction::empty("a", "v1", "mock");
        let l = summarize_cluster(&client, Side::Problem, &["protein".into(), "folding".into()], &[&r]).unwrap();
        assert_eq!(l, SummaryLabel { label: "protein".into(), flag: None });
        let again = summarize_cluster(&client, Side::Problem, &["protein".into(), "folding".into()], &[&r]).unwrap();
        assert_eq!(again, l);
        assert_eq!(client.backend_calls(), 1);
        let empty = summarize_cluster(&client, Side::Method, &[], &[]).unwrap();
        assert_eq!(empty.label, NA_LABEL);
    }
}
