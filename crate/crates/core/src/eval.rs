//! Scoring of prediction runs: ranking metrics @K, novel-link counts and
//! text-generation metrics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine, embed_text, EmbeddingProvider, Instruction};
use crate::extraction::ExtractionSet;
use crate::io::fmt_f64;
use crate::linkpred::{reference_text, Direction, PredMethod, PredictionRun};
use crate::text::tokenize;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no candidates to score")]
    NoCandidates,
    #[error("K must be positive")]
    ZeroK,
    #[error("{method} run has no generated texts")]
    MissingTexts { method: PredMethod },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Mean of per-source values.
    #[default]
    Macro,
    /// Ratios of summed hit counts.
    Micro,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    All,
    Well,
    Under,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::All => "all",
            Partition::Well => "well",
            Partition::Under => "under",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Distinct hits among the first `k` predictions.
pub fn hits_at_k(predicted: &[u32], truth: &BTreeSet<u32>, k: usize) -> usize {
    let mut seen = BTreeSet::new();
    predicted.iter().take(k).filter(|t| seen.insert(**t) && truth.contains(t)).count()
}

/// Precision = hits/K (short lists keep K), recall = hits/|T|.
pub fn prf_at_k(predicted: &[u32], truth: &BTreeSet<u32>, k: usize) -> Prf {
    let hits = hits_at_k(predicted, truth, k) as f64;
    let precision = hits / k as f64;
    let recall = if truth.is_empty() { 0.0 } else { hits / truth.len() as f64 };
    Prf { precision, recall, f1: harmonic(precision, recall) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub direction: Direction,
    pub method: PredMethod,
    pub partition: Partition,
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Queries scored.
    pub sources: usize,
    /// Queries left out because their source has no truth links.
    pub excluded: usize,
    /// Scored queries with fewer than `k` predictions.
    pub short_lists: usize,
}

/// Source cluster → target clusters it links to, from (problem, method) pairs.
pub fn truth_from_links(links: &BTreeSet<(u32, u32)>, direction: Direction) -> BTreeMap<u32, BTreeSet<u32>> {
    let mut truth: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    for &(p, m) in links {
        let (s, t) = match direction {
            Direction::SciToAi => (p, m),
            Direction::AiToSci => (m, p),
        };
        truth.entry(s).or_default().insert(t);
    }
    truth
}

/// P/R/F1@K over queries `(source, ranked targets)`; queries whose source has
/// no truth are excluded and counted.
pub fn precision_recall_f1_at_k(
    predictions: &[(u32, Vec<u32>)],
    truth: &BTreeMap<u32, BTreeSet<u32>>,
    k: usize,
    averaging: Averaging,
) -> Result<(Prf, usize, usize, usize), EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    let (mut sum, mut n, mut excluded, mut short) = (Prf::default(), 0usize, 0usize, 0usize);
    let (mut hits, mut truth_total) = (0usize, 0usize);
    for (source, predicted) in predictions {
        let Some(t) = truth.get(source).filter(|t| !t.is_empty()) else {
            excluded += 1;
            continue;
        };
        n += 1;
        short += usize::from(predicted.len() < k);
        let m = prf_at_k(predicted, t, k);
        sum.precision += m.precision;
        sum.recall += m.recall;
        sum.f1 += m.f1;
        hits += hits_at_k(predicted, t, k);
        truth_total += t.len();
    }
    let prf = if n == 0 {
        Prf::default()
    } else {
        match averaging {
            Averaging::Macro => Prf { precision: sum.precision / n as f64, recall: sum.recall / n as f64, f1: sum.f1 / n as f64 },
            Averaging::Micro => {
                let p = hits as f64 / (k * n) as f64;
                let r = hits as f64 / truth_total as f64;
                Prf { precision: p, recall: r, f1: harmonic(p, r) }
            }
        }
    };
    Ok((prf, n, excluded, short))
}

fn run_pairs(run: &PredictionRun, only: Option<&BTreeSet<u32>>) -> Vec<(u32, Vec<u32>)> {
    run.predictions
        .iter()
        .filter(|p| only.is_none_or(|s| s.contains(&p.source)))
        .map(|p| (p.source, p.target_ids()))
        .collect()
}

/// Metric rows for one run at every K, for all sources and for each supplied
/// partition of source clusters.
pub fn evaluate_run(
    run: &PredictionRun,
    truth: &BTreeMap<u32, BTreeSet<u32>>,
    ks: &[usize],
    averaging: Averaging,
    partitions: &[(Partition, BTreeSet<u32>)],
) -> Result<Vec<MetricRow>, EvalError> {
    let mut rows = Vec::new();
    let all = [(Partition::All, None)];
    let parts = all.into_iter().chain(partitions.iter().map(|(p, s)| (*p, Some(s))));
    for (partition, only) in parts {
        let pairs = run_pairs(run, only);
        for &k in ks {
            let (prf, sources, excluded, short_lists) = precision_recall_f1_at_k(&pairs, truth, k, averaging)?;
            rows.push(MetricRow {
                direction: run.direction,
                method: run.method,
                partition,
                k,
                precision: prf.precision,
                recall: prf.recall,
                f1: prf.f1,
                sources,
                excluded,
                short_lists,
            });
        }
    }
    Ok(rows)
}

/// Distinct (problem, method) pairs predicted within the top `k` that are absent
/// from `reference`.
pub fn count_novel_links(run: &PredictionRun, reference: &BTreeSet<(u32, u32)>, k: usize) -> usize {
    let mut novel = BTreeSet::new();
    for p in &run.predictions {
        for t in p.targets.iter().take(k) {
            let link = run.direction.link(p.source, t.target);
            if !reference.contains(&link) {
                novel.insert(link);
            }
        }
    }
    novel.len()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Rouge1 {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
    /// Both texts had no tokens.
    pub both_empty: bool,
}

fn counts(text: &str) -> HashMap<String, usize> {
    let mut c = HashMap::new();
    for t in tokenize(text) {
        *c.entry(t).or_insert(0) += 1;
    }
    c
}

/// Unigram overlap with clipped multiset counts.
pub fn rouge1(candidate: &str, reference: &str) -> Rouge1 {
    let (c, r) = (counts(candidate), counts(reference));
    let (nc, nr): (usize, usize) = (c.values().sum(), r.values().sum());
    if nc == 0 && nr == 0 {
        return Rouge1 { both_empty: true, ..Default::default() };
    }
    let overlap: usize = c.iter().map(|(t, &n)| n.min(r.get(t).copied().unwrap_or(0))).sum();
    let precision = if nc == 0 { 0.0 } else { overlap as f64 / nc as f64 };
    let recall = if nr == 0 { 0.0 } else { overlap as f64 / nr as f64 };
    Rouge1 { precision, recall, f: harmonic(precision, recall), both_empty: false }
}

pub fn rouge1_f(candidate: &str, reference: &str) -> f64 {
    rouge1(candidate, reference).f
}

/// A text-similarity metric. `None` means the scorer is unavailable.
pub trait TextScorer: Sync {
    fn name(&self) -> &str;
    fn score(&self, candidate: &str, reference: &str) -> Option<f64>;
}

pub struct Rouge1Scorer;

impl TextScorer for Rouge1Scorer {
    fn name(&self) -> &str {
        "rouge1_f"
    }

    fn score(&self, candidate: &str, reference: &str) -> Option<f64> {
        Some(rouge1_f(candidate, reference))
    }
}

/// Cosine similarity of instruction-conditioned embeddings.
pub struct EmbeddingCosineScorer<'a> {
    pub provider: &'a EmbeddingProvider,
    pub instruction: Instruction,
}

impl TextScorer for EmbeddingCosineScorer<'_> {
    fn name(&self) -> &str {
        "cosine"
    }

    fn score(&self, candidate: &str, reference: &str) -> Option<f64> {
        let a = embed_text(self.provider, self.instruction, candidate).ok()?;
        let b = embed_text(self.provider, self.instruction, reference).ok()?;
        cosine(&a.values, &b.values).ok()
    }
}

/// External scorer: runs `program args…`, writes `{"candidate","reference"}` as
/// one JSON line to stdin and reads a number from stdout. Any failure, including
/// a missing program, yields `None`.
pub struct SubprocessScorer {
    pub name: String,
    pub program: String,
    pub args: Vec<String>,
}

impl TextScorer for SubprocessScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, candidate: &str, reference: &str) -> Option<f64> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .ok()?;
        let line = serde_json::json!({"candidate": candidate, "reference": reference}).to_string();
        child.stdin.take()?.write_all(format!("{line}\n").as_bytes()).ok()?;
        let out = child.wait_with_output().ok()?;
        if !out.status.success() {
            return None;
        }
        String::from_utf8(out.stdout).ok()?.trim().parse().ok().filter(|x: &f64| x.is_finite())
    }
}

/// Best score over the candidates; `None` when the scorer is unavailable.
pub fn best_score_at_k(candidates: &[String], reference: &str, scorer: &dyn TextScorer) -> Result<Option<f64>, EvalError> {
    if candidates.is_empty() {
        return Err(EvalError::NoCandidates);
    }
    let mut best: Option<f64> = None;
    for c in candidates {
        match scorer.score(c, reference) {
            Some(s) => best = Some(best.map_or(s, |b| b.max(s))),
            None => return Ok(None),
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextGenRow {
    pub metric: String,
    pub direction: Direction,
    pub method: PredMethod,
    pub partition: Partition,
    pub k: usize,
    /// `None` renders as `n/a`.
    pub mean: Option<f64>,
    pub queries: usize,
}

/// Mean best-score@K per (scorer, K, partition) for a run whose queries are
/// publications. The reference is the test record's own target-side text;
/// queries without texts or reference are skipped.
pub fn text_gen_report(
    run: &PredictionRun,
    truth_records: &ExtractionSet,
    scorers: &[&dyn TextScorer],
    ks: &[usize],
    partitions: &[(Partition, BTreeSet<u32>)],
) -> Result<Vec<TextGenRow>, EvalError> {
    if run.predictions.iter().all(|p| p.texts.is_empty()) {
        return Err(EvalError::MissingTexts { method: run.method });
    }
    let scored: Vec<(u32, &[String], String)> = run
        .predictions
        .iter()
        .filter_map(|p| {
            let record = truth_records.get(p.query.as_deref()?)?;
            let reference = reference_text(record, run.direction)?;
            (!p.texts.is_empty()).then_some((p.source, p.texts.as_slice(), reference))
        })
        .collect();
    let mut rows = Vec::new();
    let all = [(Partition::All, None)];
    for (partition, only) in all.into_iter().chain(partitions.iter().map(|(p, s)| (*p, Some(s)))) {
        let subset: Vec<_> = scored.iter().filter(|(s, _, _)| only.is_none_or(|o| o.contains(s))).collect();
        for scorer in scorers {
            for &k in ks {
                let mut total = Some(0.0);
                for (_, texts, reference) in &subset {
                    let n = k.min(texts.len());
                    match (best_score_at_k(&texts[..n], reference, *scorer)?, total) {
                        (Some(s), Some(t)) => total = Some(t + s),
                        _ => total = None,
                    }
                }
                let mean = if subset.is_empty() { None } else { total.map(|t| t / subset.len() as f64) };
                rows.push(TextGenRow {
                    metric: scorer.name().to_string(),
                    direction: run.direction,
                    method: run.method,
                    partition,
                    k,
                    mean,
                    queries: subset.len(),
                });
            }
        }
    }
    Ok(rows)
}

pub const METRIC_COLUMNS: &str = "direction\tmethod\tpartition\tk\tprecision\trecall\tf1\tsources\texcluded\tshort_lists";
pub const TEXT_COLUMNS: &str = "metric\tdirection\tmethod\tpartition\tk\tmean\tqueries";

pub fn metrics_tsv(rows: &[MetricRow]) -> String {
    let mut out = format!("{METRIC_COLUMNS}\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.direction,
            r.method,
            r.partition.as_str(),
            r.k,
            fmt_f64(r.precision),
            fmt_f64(r.recall),
            fmt_f64(r.f1),
            r.sources,
            r.excluded,
            r.short_lists
        ));
    }
    out
}

pub fn text_tsv(rows: &[TextGenRow]) -> String {
    let mut out = format!("{TEXT_COLUMNS}\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.metric,
            r.direction,
            r.method,
            r.partition.as_str(),
            r.k,
            r.mean.map_or_else(|| "n/a".to_string(), fmt_f64),
            r.queries
        ));
    }
    out
}
