//! Publication records: loading, validation, year split and corpus totals.
//!
//! The record file is line-delimited JSON. An optional first line
//! `{"schema":"sciatlas.corpus","version":1}` versions the format; every other
//! line carries exactly the keys `id`, `title`, `abstract`, `venue`, `year`.
//! Records that violate an invariant are quarantined into a [`LoadReport`]
//! rather than dropped silently. A duplicate id is fatal.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::ExtractionSet;

pub const CORPUS_SCHEMA: &str = "sciatlas.corpus";
pub const CORPUS_VERSION: u32 = 1;
pub const MIN_YEAR: i32 = 1900;
pub const MAX_YEAR: i32 = 2100;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("duplicate publication id {id:?} on line {line} (first seen on line {first_line})")]
    DuplicateId { id: String, line: usize, first_line: usize },
    #[error("unsupported corpus schema {schema:?} version {version}")]
    UnsupportedSchema { schema: String, version: u64 },
    #[error("venue map line {line}: {reason}")]
    VenueMap { line: usize, reason: String },
    #[error("extractions missing for {} publication(s): {}", .0.len(), .0.join(", "))]
    MissingExtractions(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Community {
    Science,
    Ai,
}

impl Community {
    pub const ALL: [Community; 2] = [Community::Science, Community::Ai];

    pub fn as_str(self) -> &'static str {
        match self {
            Community::Science => "science",
            Community::Ai => "ai",
        }
    }
}

impl fmt::Display for Community {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Community {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "science" => Ok(Community::Science),
            "ai" => Ok(Community::Ai),
            other => Err(format!("unknown community {other:?} (expected science|ai)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Publication {
    pub id: String,
    pub title: String,
    pub abstract_text: String,
    pub venue: String,
    pub year: i32,
    pub community: Community,
}

/// On-disk shape of a record; community is derived, never stored.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    title: String,
    #[serde(rename = "abstract")]
    abstract_text: String,
    venue: String,
    year: i64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema: String,
    version: u64,
}

/// Venue name → community. Matching ignores case and repeated whitespace.
#[derive(Debug, Clone, Default)]
pub struct VenueMap {
    entries: HashMap<String, Community>,
}

fn normalize_venue(venue: &str) -> String {
    venue.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl VenueMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, venue: &str, community: Community) {
        self.entries.insert(normalize_venue(venue), community);
    }

    pub fn get(&self, venue: &str) -> Option<Community> {
        self.entries.get(&normalize_venue(venue)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parse `venue<TAB>community` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut map = VenueMap::new();
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (venue, community) = line.rsplit_once('\t').ok_or_else(|| CorpusError::VenueMap {
                line: i + 1,
                reason: "expected `venue<TAB>science|ai`".into(),
            })?;
            let community = community
                .parse()
                .map_err(|reason| CorpusError::VenueMap { line: i + 1, reason })?;
            if venue.trim().is_empty() {
                return Err(CorpusError::VenueMap { line: i + 1, reason: "empty venue".into() });
            }
            map.insert(venue, community);
        }
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path)
            .map_err(|source| CorpusError::Unreadable { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub line: usize,
    pub id: Option<String>,
    pub reason: String,
}

/// Records quarantined during load, one line per rejection when rendered.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub rejected: Vec<Rejection>,
}

impl LoadReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in &self.rejected {
            out.push_str(&format!(
                "line {}\t{}\t{}\n",
                r.line,
                r.id.as_deref().unwrap_or("-"),
                r.reason.replace(['\t', '\n'], " ")
            ));
        }
        out
    }
}

/// An immutable, validated set of publications in file order.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    records: Vec<Publication>,
    index: HashMap<String, usize>,
}

impl Corpus {
    /// Build from already-validated publications. Fails on duplicate ids.
    pub fn from_publications(records: Vec<Publication>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, p) in records.iter().enumerate() {
            if let Some(first) = index.insert(p.id.clone(), i) {
                return Err(CorpusError::DuplicateId { id: p.id.clone(), line: i + 1, first_line: first + 1 });
            }
        }
        Ok(Corpus { records, index })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Publication> {
        self.records.iter()
    }

    pub fn records(&self) -> &[Publication] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Option<&Publication> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn community_counts(&self) -> BTreeMap<Community, usize> {
        let mut counts = BTreeMap::new();
        for p in &self.records {
            *counts.entry(p.community).or_insert(0) += 1;
        }
        counts
    }

    /// Serialize with the schema header; reloading yields the same records.
    pub fn to_jsonl(&self) -> Vec<u8> {
        let header = Header { schema: CORPUS_SCHEMA.into(), version: CORPUS_VERSION as u64 };
        let raws: Vec<RawRecord> = self
            .records
            .iter()
            .map(|p| RawRecord {
                id: p.id.clone(),
                title: p.title.clone(),
                abstract_text: p.abstract_text.clone(),
                venue: p.venue.clone(),
                year: p.year as i64,
            })
            .collect();
        crate::io::jsonl_bytes(&header, &raws).expect("corpus records serialize")
    }
}

/// Parse record text. Invalid records go into the report; duplicates are fatal.
pub fn parse_corpus(text: &str, venues: &VenueMap) -> Result<(Corpus, LoadReport), CorpusError> {
    let mut report = LoadReport::default();
    let mut records = Vec::new();
    let mut first_line_of: HashMap<String, usize> = HashMap::new();

    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 {
            if let Ok(h) = serde_json::from_str::<Header>(line) {
                if h.schema != CORPUS_SCHEMA || h.version != CORPUS_VERSION as u64 {
                    return Err(CorpusError::UnsupportedSchema { schema: h.schema, version: h.version });
                }
                continue;
            }
        }
        let raw: RawRecord = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                let id = serde_json::from_str::<serde_json::Value>(line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(|x| x.as_str()).map(str::to_owned));
                report.rejected.push(Rejection { line: line_no, id, reason: format!("malformed record: {e}") });
                continue;
            }
        };
        if let Some(&first_line) = first_line_of.get(&raw.id) {
            return Err(CorpusError::DuplicateId { id: raw.id, line: line_no, first_line });
        }
        first_line_of.insert(raw.id.clone(), line_no);

        let reject = |reason: String| Rejection { line: line_no, id: Some(raw.id.clone()), reason };
        if raw.id.trim().is_empty() {
            report.rejected.push(reject("empty id".into()));
            continue;
        }
        if raw.title.trim().is_empty() {
            report.rejected.push(reject("empty title".into()));
            continue;
        }
        if raw.abstract_text.trim().is_empty() {
            report.rejected.push(reject("empty abstract".into()));
            continue;
        }
        if raw.year < MIN_YEAR as i64 || raw.year > MAX_YEAR as i64 {
            report.rejected.push(reject(format!("year {} outside {MIN_YEAR}..={MAX_YEAR}", raw.year)));
            continue;
        }
        let Some(community) = venues.get(&raw.venue) else {
            report.rejected.push(reject(format!("venue {:?} not in venue map", raw.venue)));
            continue;
        };
        records.push(Publication {
            id: raw.id,
            title: raw.title,
            abstract_text: raw.abstract_text,
            venue: raw.venue,
            year: raw.year as i32,
            community,
        });
    }
    Ok((Corpus::from_publications(records)?, report))
}

pub fn load_corpus(path: &Path, venues: &VenueMap) -> Result<(Corpus, LoadReport), CorpusError> {
    let text = fs::read_to_string(path)
        .map_err(|source| CorpusError::Unreadable { path: path.to_path_buf(), source })?;
    parse_corpus(&text, venues)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub last_train_year: i32,
    pub train: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

impl CorpusSplit {
    pub fn is_train(&self, id: &str) -> bool {
        self.train.contains(id)
    }

    pub fn is_test(&self, id: &str) -> bool {
        self.test.contains(id)
    }
}

/// Records up to and including `last_train_year` train; later ones test.
pub fn split_by_year(corpus: &Corpus, last_train_year: i32) -> CorpusSplit {
    let mut split = CorpusSplit { last_train_year, ..Default::default() };
    for p in corpus.iter() {
        if p.year <= last_train_year {
            split.train.insert(p.id.clone());
        } else {
            split.test.insert(p.id.clone());
        }
    }
    split
}

/// Corpus totals in the shape of a dataset summary table.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsReport {
    pub publications: usize,
    pub problem_extractions: usize,
    pub method_extractions: usize,
    pub ai4science: usize,
    pub per_venue: BTreeMap<String, usize>,
    pub per_community: BTreeMap<Community, usize>,
    pub ai4science_per_community: BTreeMap<Community, usize>,
}

pub fn corpus_stats(corpus: &Corpus, extractions: &ExtractionSet) -> Result<StatsReport, CorpusError> {
    let missing: Vec<String> = corpus
        .iter()
        .filter(|p| extractions.get(&p.id).is_none())
        .map(|p| p.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(CorpusError::MissingExtractions(missing));
    }
    let mut report = StatsReport { publications: corpus.len(), ..Default::default() };
    for p in corpus.iter() {
        let ext = extractions.get(&p.id).expect("checked above");
        if ext.has_problem() {
            report.problem_extractions += 1;
        }
        if ext.has_method() {
            report.method_extractions += 1;
        }
        *report.per_venue.entry(p.venue.clone()).or_insert(0) += 1;
        *report.per_community.entry(p.community).or_insert(0) += 1;
        if ext.is_ai4science() {
            report.ai4science += 1;
            *report.ai4science_per_community.entry(p.community).or_insert(0) += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn venues() -> VenueMap {
        VenueMap::parse("# test map\nNature\tscience\nNeurIPS\tai\n").unwrap()
    }

    fn line(id: &str, year: i32, venue: &str) -> String {
        format!(r#"{{"id":"{id}","title":"T {id}","abstract":"A {id}","venue":"{venue}","year":{year}}}"#)
    }

    #[test]
    fn three_valid_lines() {
        let text = [line("a", 2020, "Nature"), line("b", 2021, "NeurIPS"), line("c", 2023, "nature")].join("\n");
        let (c, report) = parse_corpus(&text, &venues()).unwrap();
        assert_eq!(c.len(), 3);
        assert!(report.rejected.is_empty());
        assert_eq!(c.get("b").unwrap().community, Community::Ai);
        assert_eq!(c.get("c").unwrap().community, Community::Science);
    }

    #[test]
    fn missing_abstract_is_reported() {
        let text = format!(
            "{}\n{}\n",
            line("a", 2020, "Nature"),
            r#"{"id":"b","title":"T","venue":"Nature","year":2020}"#
        );
        let (c, report) = parse_corpus(&text, &venues()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(report.rejected.len(), 1);
        assert_eq!(report.rejected[0].line, 2);
        assert_eq!(report.rejected[0].id.as_deref(), Some("b"));
        assert!(report.rejected[0].reason.contains("abstract"));
        assert!(report.render().starts_with("line 2\tb\t"));
    }

    #[test]
    fn invariant_violations_quarantined() {
        let text = [
            r#"{"id":"e","title":" ","abstract":"x","venue":"Nature","year":2020}"#.to_string(),
            line("y", 1800, "Nature"),
            line("v", 2020, "Unknown Journal"),
            "not json".to_string(),
        ]
        .join("\n");
        let (c, report) = parse_corpus(&text, &venues()).unwrap();
        assert!(c.is_empty());
        let lines: Vec<usize> = report.rejected.iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![1, 2, 3, 4]);
    }

    #[test]
    fn duplicate_id_is_fatal() {
        let text = [line("a", 2020, "Nature"), line("a", 2021, "Nature")].join("\n");
        match parse_corpus(&text, &venues()) {
            Err(CorpusError::DuplicateId { id, line, first_line }) => {
                assert_eq!((id.as_str(), line, first_line), ("a", 2, 1));
            }
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn unreadable_file() {
        let err = load_corpus(Path::new("/nonexistent/records.jsonl"), &venues()).unwrap_err();
        assert!(matches!(err, CorpusError::Unreadable { .. }));
    }

    #[test]
    fn wrong_schema_header() {
        let text = format!("{}\n{}", r#"{"schema":"other","version":9}"#, line("a", 2020, "Nature"));
        assert!(matches!(parse_corpus(&text, &venues()), Err(CorpusError::UnsupportedSchema { .. })));
    }

    #[test]
    fn split_examples() {
        let text = [line("a", 2020, "Nature"), line("b", 2022, "Nature"), line("c", 2023, "Nature")].join("\n");
        let (c, _) = parse_corpus(&text, &venues()).unwrap();
        let s = split_by_year(&c, 2022);
        assert_eq!(s.train.iter().cloned().collect::<Vec<_>>(), vec!["a", "b"]);
        assert_eq!(s.test.iter().cloned().collect::<Vec<_>>(), vec!["c"]);

        let text = [line("a", 2024, "Nature"), line("b", 2024, "Nature")].join("\n");
        let (c, _) = parse_corpus(&text, &venues()).unwrap();
        let s = split_by_year(&c, 2022);
        assert!(s.train.is_empty());
        assert_eq!(s.test.len(), 2);
    }

    #[test]
    fn venue_map_errors() {
        assert!(VenueMap::parse("Nature science").is_err());
        assert!(VenueMap::parse("Nature\tbiology").is_err());
        let m = VenueMap::parse("  Physical   Review\tscience").unwrap();
        assert_eq!(m.get("physical review"), Some(Community::Science));
    }

    fn arb_pub() -> impl Strategy<Value = (String, String, String, i32, bool)> {
        (
            "[a-z0-9]{1,8}",
            "[ -~]{1,20}".prop_filter("non-blank", |s| !s.trim().is_empty()),
            "\\PC{1,40}".prop_filter("non-blank", |s| !s.trim().is_empty()),
            MIN_YEAR..=MAX_YEAR,
            any::<bool>(),
        )
    }

    proptest! {
        #[test]
        fn write_load_round_trip(pubs in proptest::collection::vec(arb_pub(), 0..12)) {
            let mut seen = BTreeSet::new();
            let records: Vec<Publication> = pubs
                .into_iter()
                .filter(|p| seen.insert(p.0.clone()))
                .map(|(id, title, abs, year, sci)| Publication {
                    id,
                    title,
                    abstract_text: abs,
                    venue: if sci { "Nature".into() } else { "NeurIPS".into() },
                    year,
                    community: if sci { Community::Science } else { Community::Ai },
                })
                .collect();
            let corpus = Corpus::from_publications(records.clone()).unwrap();
            let bytes = corpus.to_jsonl();
            let (back, report) = parse_corpus(std::str::from_utf8(&bytes).unwrap(), &venues()).unwrap();
            prop_assert!(report.rejected.is_empty());
            prop_assert_eq!(back.records(), &records[..]);
        }

        #[test]
        fn split_partitions(years in proptest::collection::vec(2010i32..2026, 1..40), boundary in 2008i32..2028) {
            let records: Vec<Publication> = years.iter().enumerate().map(|(i, &y)| Publication {
                id: format!("p{i}"), title: "t".into(), abstract_text: "a".into(),
                venue: "Nature".into(), year: y, community: Community::Science,
            }).collect();
            let corpus = Corpus::from_publications(records).unwrap();
            let s = split_by_year(&corpus, boundary);
            prop_assert_eq!(s.train.len() + s.test.len(), corpus.len());
            prop_assert!(s.train.is_disjoint(&s.test));
            for p in corpus.iter() {
                prop_assert_eq!(s.is_train(&p.id), p.year <= boundary);
            }
        }
    }
}
