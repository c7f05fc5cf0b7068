//! Per-cluster TF-IDF: each cluster's concatenated texts form one document.
//! `tf` is the raw count, `idf = ln(N / df)`.

use std::collections::{BTreeMap, BTreeSet};

use crate::text::content_terms;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTerm {
    pub term: String,
    pub score: f64,
    pub count: usize,
}

/// Top `k` terms for every document, ranked by score, then raw count, then lexicographically.
pub fn top_terms_tfidf(docs: &[String], k: usize) -> Vec<Vec<ScoredTerm>> {
    let counts: Vec<BTreeMap<String, usize>> = docs
        .iter()
        .map(|d| {
            let mut m = BTreeMap::new();
            for t in content_terms(d) {
                *m.entry(t).or_insert(0) += 1;
            }
            m
        })
        .collect();
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for m in &counts {
        for t in m.keys() {
            *df.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let n = docs.len() as f64;
    counts
        .iter()
        .map(|m| {
            let mut scored: Vec<ScoredTerm> = m
                .iter()
                .map(|(t, &c)| ScoredTerm { term: t.clone(), score: c as f64 * (n / df[t.as_str()] as f64).ln(), count: c })
                .collect();
            scored.sort_by(|a, b| {
                b.score.total_cmp(&a.score).then(b.count.cmp(&a.count)).then_with(|| a.term.cmp(&b.term))
            });
            scored.truncate(k);
            scored
        })
        .collect()
}

/// Terms shared by every document (zero IDF).
pub fn ubiquitous_terms(docs: &[String]) -> BTreeSet<String> {
    let mut sets = docs.iter().map(|d| content_terms(d).into_iter().collect::<BTreeSet<_>>());
    let Some(first) = sets.next() else { return BTreeSet::new() };
    sets.fold(first, |acc, s| acc.intersection(&s).cloned().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concentrated_term_ranks_first() {
        let docs = vec![
            format!("{} structure folding", "protein ".repeat(10)),
            "climate model structure".to_string(),
            "galaxy survey structure".to_string(),
        ];
        let top = top_terms_tfidf(&docs, 3);
        assert_eq!(top[0][0].term, "protein");
        assert!(top.iter().all(|t| t.iter().take(2).all(|s| s.term != "structure")));
        assert!(ubiquitous_terms(&docs).contains("structure"));
    }

    #[test]
    fn hand_computed_table() {
        // N = 3 documents.
        // doc0: alpha×3 beta×2 gamma×1 ; doc1: beta×1 delta×2 ; doc2: gamma×1 delta×1 omega×1
        // df: alpha 1, beta 2, gamma 2, delta 2, omega 1
        // doc0: alpha 3·ln3 = 3.2958, beta 2·ln1.5 = 0.8109, gamma ln1.5 = 0.4055
        // doc2: omega ln3 = 1.0986, delta 0.4055, gamma 0.4055 (count tie → lexicographic)
        let docs = vec![
            "alpha alpha alpha beta beta gamma".to_string(),
            "beta delta delta".to_string(),
            "gamma delta omega".to_string(),
        ];
        let top = top_terms_tfidf(&docs, 5);
        let names = |i: usize| top[i].iter().map(|s| s.term.as_str()).collect::<Vec<_>>();
        assert_eq!(names(0), vec!["alpha", "beta", "gamma"]);
        assert_eq!(names(1), vec!["delta", "beta"]);
        assert_eq!(names(2), vec!["omega", "delta", "gamma"]);
        assert!((top[0][0].score - 3.295_836_866_004_329).abs() < 1e-12);
        assert!((top[1][0].score - 0.810_930_216_216_329).abs() < 1e-12);
    }
}
