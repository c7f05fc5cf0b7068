//! Instruction-conditioned text embeddings and similarity primitives.

mod provider;
mod store;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use provider::{EmbedBackend, EmbeddingProvider, HashEmbedder, RemoteEmbedder, HASH_EMBEDDER_DIM};
pub use store::VectorManifest;

use crate::extraction::ExtractionSet;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("cannot embed an empty body")]
    EmptyBody,
    #[error("embedding transport error: {0}")]
    Transport(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("vector has zero norm")]
    ZeroNorm,
    #[error("vector has non-finite entries")]
    NonFinite,
    #[error("missing API key: environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("{} record(s) failed to embed; first: {}", .0.len(), .0.first().map(|(id, e)| format!("{id}: {e}")).unwrap_or_default())]
    Aggregate(Vec<(String, String)>),
    #[error("vector file: {0}")]
    Io(#[from] std::io::Error),
    #[error("vector manifest: {0}")]
    Manifest(String),
}

/// A named instruction the embedder is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Instruction {
    pub id: &'static str,
    pub text: &'static str,
}

pub const PROBLEM_INSTRUCTION: Instruction = Instruction {
    id: "problem-v1",
    text: "Represent the keyphrase and definition of a scientific problem for clustering and visualizing scientific problems",
};

pub const METHOD_INSTRUCTION: Instruction = Instruction {
    id: "method-v1",
    text: "Represent the Artificial Intelligence method paragraph for clustering and visualizing Artificial Intelligence methods",
};

pub const USAGE_INSTRUCTION: Instruction = Instruction {
    id: "usage-v1",
    text: "Represent the usage of an Artificial Intelligence method on a scientific problem for retrieving similar usages",
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Problem,
    Method,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Problem => "problem",
            Side::Method => "method",
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Problem => Side::Method,
            Side::Method => Side::Problem,
        }
    }

    pub fn instruction(self) -> Instruction {
        match self {
            Side::Problem => PROBLEM_INSTRUCTION,
            Side::Method => METHOD_INSTRUCTION,
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
    pub provider_id: String,
    pub instruction_id: String,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

pub fn embed_text(
    provider: &EmbeddingProvider,
    instruction: Instruction,
    body: &str,
) -> Result<EmbeddingVector, EmbeddingError> {
    let values = provider.embed(instruction.text, body)?;
    Ok(EmbeddingVector {
        values,
        provider_id: provider.provider_id().to_string(),
        instruction_id: instruction.id.to_string(),
    })
}

fn dot_and_norms(a: &[f32], b: &[f32]) -> (f64, f64, f64) {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    (dot, na, nb)
}

/// ⟨a,b⟩ / (‖a‖·‖b‖) on raw slices, clamped to [-1, 1].
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64, EmbeddingError> {
    if a.len() != b.len() {
        return Err(EmbeddingError::DimMismatch { expected: a.len(), actual: b.len() });
    }
    let (dot, na, nb) = dot_and_norms(a, b);
    if na == 0.0 || nb == 0.0 {
        return Err(EmbeddingError::ZeroNorm);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    cosine(&a.values, &b.values)
}

/// Scale to unit L2 norm; all-zero vectors are left as they are.
pub fn l2_normalize(values: &mut [f32]) {
    let norm = values.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in values {
            *v = (*v as f64 / norm) as f32;
        }
    }
}

/// Row-major vectors for one aspect kind, keyed by publication id.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorTable {
    pub ids: Vec<String>,
    pub dim: usize,
    pub data: Vec<f32>,
    pub provider_id: String,
    pub instruction_id: String,
    pub instruction: String,
    pub l2_normalized: bool,
}

impl VectorTable {
    pub fn new(dim: usize, provider_id: &str, instruction: Instruction) -> Self {
        VectorTable {
            ids: Vec::new(),
            dim,
            data: Vec::new(),
            provider_id: provider_id.to_string(),
            instruction_id: instruction.id.to_string(),
            instruction: instruction.text.to_string(),
            l2_normalized: false,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids.iter().map(String::as_str).zip(self.data.chunks_exact(self.dim.max(1)))
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.position(id).map(|i| self.row(i))
    }

    pub fn push(&mut self, id: &str, values: &[f32]) -> Result<(), EmbeddingError> {
        if values.len() != self.dim {
            return Err(EmbeddingError::DimMismatch { expected: self.dim, actual: values.len() });
        }
        self.ids.push(id.to_string());
        self.data.extend_from_slice(values);
        Ok(())
    }

    /// L2-normalize every row in place and record it.
    pub fn normalize_rows(&mut self) {
        for row in self.data.chunks_exact_mut(self.dim.max(1)) {
            l2_normalize(row);
        }
        self.l2_normalized = true;
    }
}

/// Problem, method and usage vectors for an extraction set.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub problem: VectorTable,
    pub method: VectorTable,
    pub usage: VectorTable,
}

impl EmbeddingTable {
    pub fn side(&self, side: Side) -> &VectorTable {
        match side {
            Side::Problem => &self.problem,
            Side::Method => &self.method,
        }
    }

    pub fn total_rows(&self) -> usize {
        self.problem.len() + self.method.len() + self.usage.len()
    }
}

/// Embed problem (`keyphrase, definition`), method (`keyphrase, definition`) and
/// usage text of every record; absent aspects get no row. Rows are L2-normalized.
pub fn embed_aspects(extractions: &ExtractionSet, provider: &EmbeddingProvider) -> Result<EmbeddingTable, EmbeddingError> {
    type Row = (String, Option<Vec<f32>>, Option<Vec<f32>>, Option<Vec<f32>>);
    let records: Vec<_> = extractions.iter().collect();
    let embed_opt = |instruction: Instruction, text: Option<String>| -> Result<Option<Vec<f32>>, EmbeddingError> {
        text.map(|t| provider.embed(instruction.text, &t)).transpose()
    };
    let results: Vec<Result<Row, (String, String)>> = records
        .par_iter()
        .map(|r| {
            let attempt = || -> Result<Row, EmbeddingError> {
                Ok((
                    r.pub_id.clone(),
                    embed_opt(PROBLEM_INSTRUCTION, r.problem_text())?,
                    embed_opt(METHOD_INSTRUCTION, r.method_text())?,
                    embed_opt(USAGE_INSTRUCTION, r.usage.clone())?,
                ))
            };
            attempt().map_err(|e| (r.pub_id.clone(), e.to_string()))
        })
        .collect();

    let dim = provider.dim();
    let pid = provider.provider_id();
    let mut table = EmbeddingTable {
        problem: VectorTable::new(dim, pid, PROBLEM_INSTRUCTION),
        method: VectorTable::new(dim, pid, METHOD_INSTRUCTION),
        usage: VectorTable::new(dim, pid, USAGE_INSTRUCTION),
    };
    let mut failures = Vec::new();
    for result in results {
        match result {
            Ok((id, p, m, u)) => {
                for (vec, target) in [(p, &mut table.problem), (m, &mut table.method), (u, &mut table.usage)] {
                    if let Some(v) = vec {
                        target.push(&id, &v)?;
                    }
                }
            }
            Err(failure) => failures.push(failure),
        }
    }
    if !failures.is_empty() {
        return Err(EmbeddingError::Aggregate(failures));
    }
    table.problem.normalize_rows();
    table.method.normalize_rows();
    table.usage.normalize_rows();
    Ok(table)
}

/// Convenience constructor for the offline provider.
pub fn hash_provider(seed: u64) -> EmbeddingProvider {
    EmbeddingProvider::new(Arc::new(HashEmbedder::new(seed)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::AspectExtraction;
    use proptest::prelude::*;

    fn v(values: &[f32]) -> EmbeddingVector {
        EmbeddingVector { values: values.to_vec(), provider_id: "t".into(), instruction_id: "i".into() }
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&v(&[0.3, -2.0]), &v(&[0.3, -2.0])).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        // 32 / (sqrt(14) * sqrt(77)) by hand.
        let expected = 32.0 / (14.0f64.sqrt() * 77.0f64.sqrt());
        let got = cosine_similarity(&v(&[1.0, 2.0, 3.0]), &v(&[4.0, 5.0, 6.0])).unwrap();
        assert!((got - expected).abs() <= 1e-12, "{got} vs {expected}");
        assert!((got - 0.974_631_846_197_076_2).abs() <= 1e-12);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(EmbeddingError::ZeroNorm)));
        assert!(matches!(cosine(&[1.0], &[1.0, 0.0]), Err(EmbeddingError::DimMismatch { .. })));
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_scale_invariant(
            a in proptest::collection::vec(-10.0f32..10.0, 5),
            b in proptest::collection::vec(-10.0f32..10.0, 5),
            scale in 0.01f32..100.0,
        ) {
            prop_assume!(a.iter().any(|x| x.abs() > 1e-3) && b.iter().any(|x| x.abs() > 1e-3));
            let ab = cosine(&a, &b).unwrap();
            prop_assert_eq!(ab, cosine(&b, &a).unwrap());
            let scaled: Vec<f32> = a.iter().map(|x| x * scale).collect();
            prop_assert!((cosine(&scaled, &b).unwrap() - ab).abs() < 1e-5);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }
    }

    #[test]
    fn instructions_distinct() {
        assert_ne!(PROBLEM_INSTRUCTION.id, METHOD_INSTRUCTION.id);
        assert_ne!(PROBLEM_INSTRUCTION.text, METHOD_INSTRUCTION.text);
    }

    fn record(id: &str, problem: bool, method: bool) -> AspectExtraction {
        let mut r = AspectExtraction::empty(id, "v1", "mock");
        if problem {
            r.problem_keyphrase = Some("Protein Folding".into());
            r.problem_definition = Some("Predicting folds".into());
        }
        if method {
            r.method_keyphrase = Some("Transformers".into());
            r.method_definition = Some("Attention models".into());
            r.usage = Some("Transformers predict folds".into());
        }
        r
    }

    #[test]
    fn absent_aspects_have_no_rows_and_cache_is_warm() {
        let set: ExtractionSet = vec![record("a", true, true), record("b", true, false), record("c", false, false)]
            .into_iter()
            .collect();
        let provider = hash_provider(7);
        let table = embed_aspects(&set, &provider).unwrap();
        assert_eq!(table.problem.ids, vec!["a", "b"]);
        assert_eq!(table.method.ids, vec!["a"]);
        assert_eq!(table.usage.ids, vec!["a"]);
        assert_eq!(table.total_rows(), 4);
        assert_eq!(table.problem.row(0), table.problem.row(1));
        let calls = provider.backend_calls();
        let again = embed_aspects(&set, &provider).unwrap();
        assert_eq!(again, table);
        assert_eq!(provider.backend_calls(), calls);
    }

    #[test]
    fn problem_and_method_use_their_instructions() {
        let set: ExtractionSet = vec![record("a", true, true)].into_iter().collect();
        let table = embed_aspects(&set, &hash_provider(1)).unwrap();
        assert_eq!(table.problem.instruction_id, "problem-v1");
        assert_eq!(table.method.instruction_id, "method-v1");
        assert!(table.problem.instruction.starts_with("Represent the keyphrase and definition"));
        assert!(table.method.instruction.starts_with("Represent the Artificial Intelligence method paragraph"));
    }
}
