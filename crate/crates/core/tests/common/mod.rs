#![allow(dead_code)]

use std::collections::BTreeMap;

use sciatlas::clustering::{ClusterInfo, ClusterModel};
use sciatlas::embedding::Side;
use sciatlas::extraction::{AspectExtraction, ExtractionSet};

/// A record satisfying the AI4Science predicate (or not, when `ai4science` is false).
pub fn record(id: &str, ai4science: bool) -> AspectExtraction {
    let mut r = AspectExtraction::empty(id, "v1", "test");
    r.problem_keyphrase = Some(format!("problem {id}"));
    r.problem_definition = Some("definition".into());
    r.method_keyphrase = Some(format!("method {id}"));
    r.method_definition = Some("definition".into());
    r.usage = Some("usage".into());
    r.is_scientific = true;
    r.uses_ai = ai4science;
    r.ai4science = ai4science;
    r
}

pub fn extraction_set(records: impl IntoIterator<Item = AspectExtraction>) -> ExtractionSet {
    records.into_iter().collect()
}

/// Cluster model from (pub_id, cluster) pairs; labels are `"{side} {id}"`.
pub fn model(side: Side, assignments: &[(&str, Option<u32>)]) -> ClusterModel {
    let mut clusters = BTreeMap::new();
    for (_, c) in assignments {
        if let Some(c) = c {
            let e = clusters.entry(*c).or_insert_with(|| ClusterInfo {
                id: *c,
                size: 0,
                label: format!("{side} {c}"),
                label_flag: None,
                top_terms: vec![],
                centroid: vec![1.0, *c as f32],
                centroid_2d: [*c as f64, 0.0],
                merged_from: vec![],
            });
            e.size += 1;
        }
    }
    ClusterModel::new(
        side,
        assignments.iter().map(|(id, _)| id.to_string()).collect(),
        assignments.iter().map(|(_, c)| *c).collect(),
        clusters,
    )
}
