//! Aspect extraction and AI4Science classification through a [`GenClient`].

pub mod client;
pub mod mock;
pub mod parse;
pub mod prompts;

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use client::{BackendKind, GenBackend, GenClient, GenError, RemoteChatBackend, ResponseCache, RetryPolicy};
pub use prompts::{PromptKind, DEFAULT_PROMPT_VERSION};

use crate::corpus::{Corpus, Publication};
use parse::ASPECT_KEYS;

pub const EXTRACTION_SCHEMA: &str = "sciatlas.extractions";

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("prompt version {0:?} is not registered")]
    UnknownPromptVersion(String),
    #[error("generation failed for {pub_id}: {source}")]
    Generation {
        pub_id: String,
        #[source]
        source: GenError,
    },
    #[error("batch parallelism must be at least 1")]
    InvalidParallelism,
    #[error("only {succeeded}/{total} extractions succeeded (required fraction {required})")]
    BatchBelowThreshold { succeeded: usize, total: usize, required: f64, report: BatchReport },
    #[error("malformed extraction file: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionFlags {
    /// Reply parsed, but some field was missing or mistyped.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub parse_warning: bool,
    /// Reply could not be parsed at all; aspects are all absent.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub parse_error: bool,
    /// Classification reply unparseable; both flags forced false.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub classify_error: bool,
    /// Backend failure after retries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation_error: Option<String>,
}

/// The six extracted aspects of one publication plus its classification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectExtraction {
    pub pub_id: String,
    pub problem_keyphrase: Option<String>,
    pub problem_definition: Option<String>,
    pub problem_discipline: Option<String>,
    pub method_keyphrase: Option<String>,
    pub method_definition: Option<String>,
    pub usage: Option<String>,
    pub is_scientific: bool,
    pub uses_ai: bool,
    /// Stored value of [`AspectExtraction::is_ai4science`] at write time.
    pub ai4science: bool,
    pub prompt_version: String,
    pub model_id: String,
    #[serde(default)]
    pub flags: ExtractionFlags,
}

impl AspectExtraction {
    pub fn empty(pub_id: &str, prompt_version: &str, model_id: &str) -> Self {
        AspectExtraction {
            pub_id: pub_id.to_string(),
            problem_keyphrase: None,
            problem_definition: None,
            problem_discipline: None,
            method_keyphrase: None,
            method_definition: None,
            usage: None,
            is_scientific: false,
            uses_ai: false,
            ai4science: false,
            prompt_version: prompt_version.to_string(),
            model_id: model_id.to_string(),
            flags: ExtractionFlags::default(),
        }
    }

    pub fn has_problem(&self) -> bool {
        self.problem_keyphrase.is_some()
    }

    pub fn has_method(&self) -> bool {
        self.method_keyphrase.is_some()
    }

    pub fn has_any_aspect(&self) -> bool {
        self.aspect_fields().iter().any(|f| f.is_some())
    }

    fn aspect_fields(&self) -> [&Option<String>; 6] {
        [
            &self.problem_keyphrase,
            &self.problem_definition,
            &self.problem_discipline,
            &self.method_keyphrase,
            &self.method_definition,
            &self.usage,
        ]
    }

    /// Scientific problem, AI method and usage all present, both flags true.
    pub fn is_ai4science(&self) -> bool {
        self.is_scientific
            && self.uses_ai
            && self.problem_keyphrase.is_some()
            && self.problem_definition.is_some()
            && self.method_keyphrase.is_some()
            && self.method_definition.is_some()
            && self.usage.is_some()
    }

    /// `keyphrase, definition` for the problem side.
    pub fn problem_text(&self) -> Option<String> {
        join_aspect(&self.problem_keyphrase, &self.problem_definition)
    }

    /// `keyphrase, definition` for the method side.
    pub fn method_text(&self) -> Option<String> {
        join_aspect(&self.method_keyphrase, &self.method_definition)
    }

    /// The six fields as the JSON object the prompts use, absent as `N/A`.
    pub fn aspects_json(&self) -> serde_json::Value {
        let mut obj = serde_json::Map::new();
        for (key, value) in ASPECT_KEYS.iter().zip(self.aspect_fields()) {
            obj.insert(key.to_string(), serde_json::Value::String(value.clone().unwrap_or_else(|| "N/A".into())));
        }
        serde_json::Value::Object(obj)
    }

    fn apply_parsed(&mut self, parsed: parse::ParsedAspects) {
        let [pk, pd, pdisc, mk, md, usage] = parsed.fields;
        self.problem_keyphrase = pk;
        self.problem_definition = pd;
        self.problem_discipline = pdisc;
        self.method_keyphrase = mk;
        self.method_definition = md;
        self.usage = usage;
        self.flags.parse_warning = parsed.warning;
        if self.usage.is_some() && self.method_keyphrase.is_none() {
            self.usage = None;
            self.flags.parse_warning = true;
        }
    }
}

/// Keyphrase and definition joined with `", "`; either alone if the other is absent.
pub fn join_aspect(keyphrase: &Option<String>, definition: &Option<String>) -> Option<String> {
    match (keyphrase, definition) {
        (Some(k), Some(d)) => Some(format!("{k}, {d}")),
        (Some(k), None) => Some(k.clone()),
        (None, Some(d)) => Some(d.clone()),
        (None, None) => None,
    }
}

fn render_extract_prompt(publication: &Publication, version: &str) -> Result<String, ExtractionError> {
    let t = prompts::template(PromptKind::ExtractAspects, version)
        .ok_or_else(|| ExtractionError::UnknownPromptVersion(version.to_string()))?;
    Ok(t.render(&BTreeMap::from([
        ("title", one_line(&publication.title)),
        ("abstract", one_line(&publication.abstract_text)),
    ])))
}

/// Titles and abstracts are substituted on a single line.
fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Extract the six aspects. Unparseable replies yield an all-absent record with
/// `flags.parse_error`; backend failures after retries are errors.
pub fn extract_aspects(
    publication: &Publication,
    client: &GenClient,
    prompt_version: &str,
) -> Result<AspectExtraction, ExtractionError> {
    let prompt = render_extract_prompt(publication, prompt_version)?;
    let reply = client
        .complete(&prompt)
        .map_err(|source| ExtractionError::Generation { pub_id: publication.id.clone(), source })?;
    let mut record = AspectExtraction::empty(&publication.id, prompt_version, client.model_id());
    match parse::parse_aspects(&reply) {
        Some(parsed) => record.apply_parsed(parsed),
        None => record.flags.parse_error = true,
    }
    Ok(record)
}

/// Ask whether the problem is scientific and the method is AI; the answer is
/// written back into `extraction`. Unparseable replies set both flags false.
pub fn classify_ai4science(
    publication: &Publication,
    extraction: &mut AspectExtraction,
    client: &GenClient,
) -> Result<(bool, bool), ExtractionError> {
    let t = prompts::template(PromptKind::ClassifyAi4Science, &extraction.prompt_version)
        .ok_or_else(|| ExtractionError::UnknownPromptVersion(extraction.prompt_version.clone()))?;
    let results = serde_json::to_string_pretty(&extraction.aspects_json()).expect("json object");
    let prompt = t.render(&BTreeMap::from([
        ("title", one_line(&publication.title)),
        ("abstract", one_line(&publication.abstract_text)),
        ("results", results),
    ]));
    let reply = client
        .complete(&prompt)
        .map_err(|source| ExtractionError::Generation { pub_id: publication.id.clone(), source })?;
    let (scientific, ai) = match parse::parse_classification(&reply) {
        Some(flags) => {
            extraction.flags.classify_error = false;
            flags
        }
        None => {
            extraction.flags.classify_error = true;
            (false, false)
        }
    };
    extraction.is_scientific = scientific;
    extraction.uses_ai = ai;
    extraction.ai4science = extraction.is_ai4science();
    Ok((scientific, ai))
}

/// Extractions keyed and ordered by publication id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExtractionSet {
    records: BTreeMap<String, AspectExtraction>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ExtractionHeader {
    schema: String,
    version: u32,
    #[serde(flatten)]
    provenance: Option<crate::io::Provenance>,
}

impl ExtractionSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, record: AspectExtraction) {
        self.records.insert(record.pub_id.clone(), record);
    }

    pub fn get(&self, pub_id: &str) -> Option<&AspectExtraction> {
        self.records.get(pub_id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &AspectExtraction> {
        self.records.values()
    }

    pub fn ai4science(&self) -> impl Iterator<Item = &AspectExtraction> {
        self.records.values().filter(|r| r.is_ai4science())
    }

    pub fn to_jsonl(&self, provenance: Option<&crate::io::Provenance>) -> Vec<u8> {
        let header = ExtractionHeader { schema: EXTRACTION_SCHEMA.into(), version: 1, provenance: provenance.cloned() };
        let records: Vec<&AspectExtraction> = self.records.values().collect();
        crate::io::jsonl_bytes(&header, &records).expect("extractions serialize")
    }

    pub fn from_jsonl(text: &str) -> Result<Self, ExtractionError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: ExtractionHeader = lines
            .next()
            .ok_or_else(|| ExtractionError::Malformed("empty file".into()))
            .and_then(|l| serde_json::from_str(l).map_err(|e| ExtractionError::Malformed(format!("header: {e}"))))?;
        if header.schema != EXTRACTION_SCHEMA {
            return Err(ExtractionError::Malformed(format!("unexpected schema {:?}", header.schema)));
        }
        let mut set = ExtractionSet::new();
        for (i, line) in lines.enumerate() {
            let record: AspectExtraction = serde_json::from_str(line)
                .map_err(|e| ExtractionError::Malformed(format!("record {}: {e}", i + 1)))?;
            set.insert(record);
        }
        Ok(set)
    }
}

impl FromIterator<AspectExtraction> for ExtractionSet {
    fn from_iter<I: IntoIterator<Item = AspectExtraction>>(iter: I) -> Self {
        let mut set = ExtractionSet::new();
        for r in iter {
            set.insert(r);
        }
        set
    }
}

#[derive(Debug, Clone)]
pub struct BatchOptions {
    pub parallelism: usize,
    pub prompt_version: String,
    pub min_success_fraction: f64,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            parallelism: 1,
            prompt_version: DEFAULT_PROMPT_VERSION.to_string(),
            min_success_fraction: 0.95,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchReport {
    pub total: usize,
    pub succeeded: usize,
    pub classified: usize,
    pub parse_errors: usize,
    pub parse_warnings: usize,
    pub classify_errors: usize,
    /// `(pub_id, error)` for records whose generation failed.
    pub failures: Vec<(String, String)>,
}

fn extract_one(p: &Publication, client: &GenClient, version: &str) -> Result<AspectExtraction, ExtractionError> {
    let mut record = extract_aspects(p, client, version)?;
    if record.has_any_aspect() {
        classify_ai4science(p, &mut record, client)?;
    }
    Ok(record)
}

/// Extract and classify every publication. Output is ordered by publication id
/// whatever the completion order; failed records are kept all-absent with
/// `flags.generation_error` so the set always covers the corpus.
pub fn batch_extract(
    corpus: &Corpus,
    client: &GenClient,
    options: &BatchOptions,
) -> Result<(ExtractionSet, BatchReport), ExtractionError> {
    if options.parallelism == 0 {
        return Err(ExtractionError::InvalidParallelism);
    }
    if !prompts::is_registered(&options.prompt_version) {
        return Err(ExtractionError::UnknownPromptVersion(options.prompt_version.clone()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.parallelism)
        .build()
        .map_err(|e| ExtractionError::Malformed(format!("thread pool: {e}")))?;
    let results: Vec<(String, Result<AspectExtraction, ExtractionError>)> = pool.install(|| {
        corpus
            .records()
            .par_iter()
            .map(|p| (p.id.clone(), extract_one(p, client, &options.prompt_version)))
            .collect()
    });

    let mut report = BatchReport { total: corpus.len(), ..Default::default() };
    let mut set = ExtractionSet::new();
    let mut by_id: HashMap<String, Result<AspectExtraction, ExtractionError>> = results.into_iter().collect();
    let mut ids: Vec<&String> = by_id.keys().collect();
    ids.sort();
    let ids: Vec<String> = ids.into_iter().cloned().collect();
    for id in ids {
        match by_id.remove(&id).expect("present") {
            Ok(record) => {
                report.succeeded += 1;
                report.parse_errors += record.flags.parse_error as usize;
                report.parse_warnings += record.flags.parse_warning as usize;
                report.classify_errors += record.flags.classify_error as usize;
                report.classified += record.has_any_aspect() as usize;
                set.insert(record);
            }
            Err(e) => {
                let mut record = AspectExtraction::empty(&id, &options.prompt_version, client.model_id());
                record.flags.generation_error = Some(e.to_string());
                report.failures.push((id, e.to_string()));
                set.insert(record);
            }
        }
    }
    let fraction = if report.total == 0 { 1.0 } else { report.succeeded as f64 / report.total as f64 };
    if fraction < options.min_success_fraction {
        return Err(ExtractionError::BatchBelowThreshold {
            succeeded: report.succeeded,
            total: report.total,
            required: options.min_success_fraction,
            report,
        });
    }
    Ok((set, report))
}
