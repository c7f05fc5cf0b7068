//! Versioned prompt templates with `{name}` slots substituted textually.

use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PromptKind {
    ExtractAspects,
    ClassifyAi4Science,
    SummarizeProblem,
    SummarizeMethod,
    RagSciToAi,
    RagAiToSci,
    GraphSciToAi,
    GraphAiToSci,
}

/// A template plus the slot names it must receive.
#[derive(Debug, Clone, Copy)]
pub struct PromptTemplate {
    pub kind: PromptKind,
    pub version: &'static str,
    pub text: &'static str,
    pub slots: &'static [&'static str],
}

pub const DEFAULT_PROMPT_VERSION: &str = "v1";

const V1: &[PromptTemplate] = &[
    PromptTemplate {
        kind: PromptKind::ExtractAspects,
        version: "v1",
        text: include_str!("../../prompts/extract_aspects.v1.txt"),
        slots: &["title", "abstract"],
    },
    PromptTemplate {
        kind: PromptKind::ClassifyAi4Science,
        version: "v1",
        text: include_str!("../../prompts/classify_ai4science.v1.txt"),
        slots: &["title", "abstract", "results"],
    },
    PromptTemplate {
        kind: PromptKind::SummarizeProblem,
        version: "v1",
        text: include_str!("../../prompts/summarize_problem.v1.txt"),
        slots: &["top words", "examples"],
    },
    PromptTemplate {
        kind: PromptKind::SummarizeMethod,
        version: "v1",
        text: include_str!("../../prompts/summarize_method.v1.txt"),
        slots: &["top words", "examples"],
    },
    PromptTemplate {
        kind: PromptKind::RagSciToAi,
        version: "v1",
        text: include_str!("../../prompts/rag_sci_to_ai.v1.txt"),
        slots: &["Key Aspects Extraction", "examples"],
    },
    PromptTemplate {
        kind: PromptKind::RagAiToSci,
        version: "v1",
        text: include_str!("../../prompts/rag_ai_to_sci.v1.txt"),
        slots: &["Key Aspects Extraction", "examples"],
    },
    PromptTemplate {
        kind: PromptKind::GraphSciToAi,
        version: "v1",
        text: include_str!("../../prompts/graph_sci_to_ai.v1.txt"),
        slots: &["sci cluster", "AI clusters", "example links", "k"],
    },
    PromptTemplate {
        kind: PromptKind::GraphAiToSci,
        version: "v1",
        text: include_str!("../../prompts/graph_ai_to_sci.v1.txt"),
        slots: &["AI cluster", "sci clusters", "example links", "k"],
    },
];

/// Look up a registered template.
pub fn template(kind: PromptKind, version: &str) -> Option<&'static PromptTemplate> {
    V1.iter().find(|t| t.kind == kind && t.version == version)
}

pub fn is_registered(version: &str) -> bool {
    V1.iter().any(|t| t.version == version)
}

impl PromptTemplate {
    /// Substitute every slot. Panics if a declared slot is missing from `values`,
    /// since that is a programming error, not a data error.
    pub fn render(&self, values: &BTreeMap<&str, String>) -> String {
        let mut out = self.text.to_string();
        for slot in self.slots {
            let value = values
                .get(slot)
                .unwrap_or_else(|| panic!("slot {{{slot}}} not supplied for {:?}", self.kind));
            out = out.replace(&format!("{{{slot}}}"), value);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_slot_appears_in_its_template() {
        for t in V1 {
            for slot in t.slots {
                assert!(t.text.contains(&format!("{{{slot}}}")), "{:?} lacks {slot}", t.kind);
            }
        }
    }

    #[test]
    fn render_substitutes_only_named_slots() {
        let t = template(PromptKind::ExtractAspects, "v1").unwrap();
        let values = BTreeMap::from([("title", "My Title".to_string()), ("abstract", "Body.".to_string())]);
        let out = t.render(&values);
        assert!(out.contains("Title: My Title\nAbstract: Body.\n"));
        assert!(out.contains("\"Problem (keyword/keyphrase)\": \"...\""));
        assert!(!out.contains("{title}"));
    }

    #[test]
    fn unknown_version() {
        assert!(template(PromptKind::ExtractAspects, "v9").is_none());
        assert!(is_registered("v1"));
        assert!(!is_registered("v2"));
    }
}
