//! Deterministic offline generator.
//!
//! It recognizes which shipped prompt it was given and answers by rule:
//!
//! * extraction: the first [`MOCK_PROBLEMS`] / [`MOCK_METHODS`] entry whose trigger
//!   occurs in the lowercased abstract; `__NOAI__` blanks the method and usage,
//!   `__NOPROBLEM__` blanks the problem, `__GARBLE__` yields an unparseable reply;
//! * classification: scientific iff a problem was extracted, its discipline is not
//!   a computing discipline and the abstract lacks `__NOSCI__`; AI iff the method
//!   is flagged as AI in [`MOCK_METHODS`] and the abstract lacks `__NOAI__`;
//! * cluster summaries: the first listed top term;
//! * RAG: the opposite-side aspect of example `sample mod n`;
//! * graph prompts: the K highest-weight neighbors of the source, padded with the
//!   remaining candidate domains in listed order.

use std::collections::HashMap;

use serde_json::json;

use super::client::{GenBackend, GenError};

pub const SENTINEL_NO_AI: &str = "__NOAI__";
pub const SENTINEL_NO_SCIENCE: &str = "__NOSCI__";
pub const SENTINEL_NO_PROBLEM: &str = "__NOPROBLEM__";
pub const SENTINEL_GARBLE: &str = "__GARBLE__";

pub struct MockProblem {
    pub trigger: &'static str,
    pub keyphrase: &'static str,
    pub definition: &'static str,
    pub discipline: &'static str,
}

pub struct MockMethod {
    pub trigger: &'static str,
    pub keyphrase: &'static str,
    pub definition: &'static str,
    pub is_ai: bool,
}

pub const MOCK_PROBLEMS: &[MockProblem] = &[
    MockProblem {
        trigger: "protein",
        keyphrase: "Protein Structure Prediction",
        definition: "Determining the three-dimensional folded structure of proteins from amino acid sequences.",
        discipline: "Biology",
    },
    MockProblem {
        trigger: "climate",
        keyphrase: "Climate Modeling",
        definition: "Simulating long-term atmospheric and oceanic dynamics of the climate system.",
        discipline: "Earth Science",
    },
    MockProblem {
        trigger: "galaxy",
        keyphrase: "Galaxy Morphology Classification",
        definition: "Categorizing galaxies by their visual morphology in astronomical survey images.",
        discipline: "Astronomy",
    },
    MockProblem {
        trigger: "molecul",
        keyphrase: "Molecular Property Prediction",
        definition: "Estimating chemical and physical properties of candidate molecules.",
        discipline: "Chemistry",
    },
    MockProblem {
        trigger: "tumor",
        keyphrase: "Tumor Detection",
        definition: "Locating and delineating tumors in medical scans of patients.",
        discipline: "Medicine",
    },
    MockProblem {
        trigger: "earthquake",
        keyphrase: "Earthquake Forecasting",
        definition: "Anticipating the timing and magnitude of seismic events from geophysical records.",
        discipline: "Geophysics",
    },
    MockProblem {
        trigger: "recommend",
        keyphrase: "Recommendation Quality",
        definition: "Improving the relevance of items suggested to users of online platforms.",
        discipline: "Computer Science",
    },
    MockProblem {
        trigger: "translation",
        keyphrase: "Machine Translation Quality",
        definition: "Translating text between natural languages faithfully and fluently.",
        discipline: "Computer Science",
    },
];

pub const MOCK_METHODS: &[MockMethod] = &[
    MockMethod {
        trigger: "transformer",
        keyphrase: "Transformer Networks",
        definition: "Attention-based neural sequence models that relate all positions of an input.",
        is_ai: true,
    },
    MockMethod {
        trigger: "graph neural",
        keyphrase: "Graph Neural Networks",
        definition: "Neural networks that pass messages along the edges of graph-structured data.",
        is_ai: true,
    },
    MockMethod {
        trigger: "convolutional",
        keyphrase: "Convolutional Neural Networks",
        definition: "Neural networks with learned convolution filters applied over grid-structured inputs.",
        is_ai: true,
    },
    MockMethod {
        trigger: "random forest",
        keyphrase: "Random Forests",
        definition: "Ensembles of decision trees trained on bootstrap resamples with random feature subsets.",
        is_ai: true,
    },
    MockMethod {
        trigger: "reinforcement",
        keyphrase: "Reinforcement Learning",
        definition: "Learning decision policies that maximize cumulative reward through interaction.",
        is_ai: true,
    },
    MockMethod {
        trigger: "finite element",
        keyphrase: "Finite Element Method",
        definition: "Numerical discretization of partial differential equations over a mesh of elements.",
        is_ai: false,
    },
];

const COMPUTING_DISCIPLINES: &[&str] = &["computer science", "information science", "data science"];

pub fn match_problem(abstract_text: &str) -> Option<&'static MockProblem> {
    if abstract_text.contains(SENTINEL_NO_PROBLEM) {
        return None;
    }
    let lower = abstract_text.to_lowercase();
    MOCK_PROBLEMS.iter().find(|p| lower.contains(p.trigger))
}

pub fn match_method(abstract_text: &str) -> Option<&'static MockMethod> {
    if abstract_text.contains(SENTINEL_NO_AI) {
        return None;
    }
    let lower = abstract_text.to_lowercase();
    MOCK_METHODS.iter().find(|m| lower.contains(m.trigger))
}

/// The text of the first line starting with `prefix`, without the prefix.
fn line_after<'a>(prompt: &'a str, prefix: &str) -> Option<&'a str> {
    prompt.lines().find_map(|l| l.strip_prefix(prefix))
}

/// Lines between a heading line and the next `## ` heading.
fn section<'a>(prompt: &'a str, heading: &str) -> Vec<&'a str> {
    let mut lines = prompt.lines().skip_while(|l| !l.starts_with(heading));
    if lines.next().is_none() {
        return Vec::new();
    }
    lines.take_while(|l| !l.starts_with("## ")).filter(|l| !l.trim().is_empty()).collect()
}

#[derive(Debug, Default)]
pub struct MockGenerator;

impl MockGenerator {
    fn extract(&self, prompt: &str) -> String {
        let title = line_after(prompt, "Title: ").unwrap_or("").trim();
        let abstract_text = line_after(prompt, "Abstract: ").unwrap_or("");
        if abstract_text.contains(SENTINEL_GARBLE) {
            return "I am unable to produce the requested extraction.".into();
        }
        let problem = match_problem(abstract_text);
        let method = match_method(abstract_text);
        let na = || "N/A".to_string();
        let usage = match (problem, method) {
            (Some(p), Some(m)) => format!("{} is applied to {}.", m.keyphrase, p.keyphrase.to_lowercase()),
            (None, Some(m)) => format!("{} is applied to the task studied in the paper.", m.keyphrase),
            _ => na(),
        };
        let reply = json!({
            "Problem (keyword/keyphrase)": problem.map_or_else(na, |p| p.keyphrase.to_string()),
            "Problem (definition)": problem.map_or_else(na, |p| format!("{} Context: {title}", p.definition)),
            "Problem Discipline": problem.map_or_else(na, |p| p.discipline.to_string()),
            "Method (keyword/keyphrase)": method.map_or_else(na, |m| m.keyphrase.to_string()),
            "Method (definition)": method.map_or_else(na, |m| m.definition.to_string()),
            "Usage": usage,
        });
        format!("```json\n{}\n```", serde_json::to_string_pretty(&reply).unwrap())
    }

    fn classify(&self, prompt: &str) -> String {
        let abstract_text = line_after(prompt, "Abstract: ").unwrap_or("");
        let results = section(prompt, "## Extraction Results").join("\n");
        let parsed = super::parse::parse_aspects(&results).unwrap_or_default();
        let discipline = parsed.fields[2].as_deref().unwrap_or("").to_lowercase();
        let scientific = parsed.fields[0].is_some()
            && !COMPUTING_DISCIPLINES.contains(&discipline.as_str())
            && !abstract_text.contains(SENTINEL_NO_SCIENCE);
        let ai = parsed.fields[3]
            .as_deref()
            .and_then(|k| MOCK_METHODS.iter().find(|m| m.keyphrase == k))
            .is_some_and(|m| m.is_ai)
            && !abstract_text.contains(SENTINEL_NO_AI);
        let py = |b: bool| if b { "True" } else { "False" };
        format!("{{\n    \"Scientific problem\": {},\n    \"AI method\": {},\n}}", py(scientific), py(ai))
    }

    fn summarize(&self, prompt: &str) -> String {
        let first = section(prompt, "## Top words from texual information")
            .iter()
            .find(|l| !l.starts_with("Below are"))
            .and_then(|l| l.split(',').map(str::trim).find(|t| !t.is_empty()))
            .unwrap_or("N/A")
            .to_string();
        serde_json::to_string(&vec![first]).unwrap()
    }

    fn rag(&self, prompt: &str, sample: u32, sci_to_ai: bool) -> String {
        let examples: Vec<serde_json::Value> = section(prompt, "## Examples of AI usage in similar scientific papers:")
            .iter()
            .filter_map(|l| serde_json::from_str(l).ok())
            .collect();
        let (target_key, out_key) = if sci_to_ai {
            ("Method (keyword/keyphrase)", "AI Method (keyword/keyphrase)")
        } else {
            ("Problem (keyword/keyphrase)", "Scientific Problem (keyword/keyphrase)")
        };
        let (keyphrase, usage) = if examples.is_empty() {
            ("N/A".to_string(), "N/A".to_string())
        } else {
            let ex = &examples[sample as usize % examples.len()];
            (
                ex[target_key].as_str().unwrap_or("N/A").to_string(),
                ex["Usage"].as_str().unwrap_or("N/A").to_string(),
            )
        };
        let reply = json!([{ out_key: keyphrase, "AI Usage": usage }]);
        serde_json::to_string_pretty(&reply).unwrap()
    }

    fn graph(&self, prompt: &str, sci_to_ai: bool) -> String {
        let (source_heading, candidates_heading) = if sci_to_ai {
            ("## Scientific problem domain", "## Possible Artificial Intelligence domains")
        } else {
            ("## Artificial Intelligence method domain", "## Possible scientific problem domains")
        };
        let source = section(prompt, source_heading).first().map(|s| s.trim().to_string()).unwrap_or_default();
        let candidates: Vec<String> = section(prompt, candidates_heading).iter().map(|s| s.trim().to_string()).collect();
        let k: usize = line_after(prompt, "* Exactly recommend ")
            .and_then(|rest| rest.split_whitespace().next())
            .and_then(|n| n.parse().ok())
            .unwrap_or(1);

        let mut weights: HashMap<String, u64> = HashMap::new();
        let mut order: Vec<String> = Vec::new();
        for line in section(prompt, "## Past usage of AI methods to solve Scientific problems:") {
            let Some(inner) = line.trim().strip_prefix('(').and_then(|l| l.strip_suffix(')')) else { continue };
            let Some((pair, count)) = inner.rsplit_once(", ") else { continue };
            let Ok(count) = count.trim().parse::<u64>() else { continue };
            // Split "u, v" where the method-side label is a known candidate (sci→ai)
            // or the problem-side label is (ai→sci).
            let split = pair.match_indices(", ").map(|(i, _)| (&pair[..i], &pair[i + 2..])).find(|(u, v)| {
                if sci_to_ai {
                    *u == source && candidates.iter().any(|c| c == v)
                } else {
                    *v == source && candidates.iter().any(|c| c == u)
                }
            });
            if let Some((u, v)) = split {
                let neighbor = if sci_to_ai { v } else { u };
                if !weights.contains_key(neighbor) {
                    order.push(neighbor.to_string());
                }
                *weights.entry(neighbor.to_string()).or_insert(0) += count;
            }
        }
        order.sort_by(|a, b| weights[b].cmp(&weights[a]));
        let mut picks: Vec<String> = order.into_iter().take(k).collect();
        for c in &candidates {
            if picks.len() >= k {
                break;
            }
            if !picks.contains(c) {
                picks.push(c.clone());
            }
        }
        serde_json::to_string_pretty(&picks).unwrap()
    }
}

impl GenBackend for MockGenerator {
    fn model_id(&self) -> &str {
        "mock-v1"
    }

    fn generate(&self, prompt: &str, sample: u32) -> Result<String, GenError> {
        let reply = if prompt.contains("your task is to extract the following aspects") {
            self.extract(prompt)
        } else if prompt.contains("please determine if the main research problem") {
            self.classify(prompt)
        } else if prompt.contains("summarizing the cluster into a keyword") {
            self.summarize(prompt)
        } else if prompt.contains("(u,v,k): Scientific problem u has been solved") {
            self.graph(prompt, prompt.contains("## Scientific problem domain"))
        } else if prompt.contains("## Examples of AI usage in similar scientific papers:") {
            self.rag(prompt, sample, prompt.contains("## Scientific Problem\n"))
        } else {
            "N/A".to_string()
        };
        Ok(reply)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triggers_in_table_order() {
        assert_eq!(match_problem("A protein and a climate study").unwrap().keyphrase, "Protein Structure Prediction");
        assert_eq!(match_method("Graph neural nets and transformers").unwrap().keyphrase, "Transformer Networks");
        assert!(match_method("transformer __NOAI__").is_none());
        assert!(match_problem("protein __NOPROBLEM__").is_none());
    }

    #[test]
    fn graph_reply_picks_heaviest_neighbors() {
        let prompt = "(u,v,k): Scientific problem u has been solved\n## Scientific problem domain\nProteins\n\n\
                      ## Possible Artificial Intelligence domains\nGNN\nCNN, deep\nRF\n\n\
                      ## Past usage of AI methods to solve Scientific problems:\n(Proteins, GNN, 2)\n\
                      (Proteins, CNN, deep, 5)\n(Other, RF, 9)\n\n## Notes\n* Exactly recommend 2 AI methods.\n";
        let out = MockGenerator.generate(prompt, 0).unwrap();
        assert_eq!(crate::extraction::parse::parse_string_list(&out).unwrap(), vec!["CNN, deep", "GNN"]);
    }
}
