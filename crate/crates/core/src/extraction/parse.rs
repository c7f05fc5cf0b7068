//! Lenient parsers for the structured replies the prompts ask for.
//!
//! Replies often arrive wrapped in code fences or with trailing prose, and the
//! classification and list prompts ask for Python literals rather than JSON.

use std::sync::OnceLock;

use regex::Regex;
use serde_json::Value;

/// Absent-marker normalization: `N/A` (any case) and blank strings mean "not extracted".
pub fn normalize_field(value: &str) -> Option<String> {
    let trimmed = value.trim();
    if trimmed.is_empty() || trimmed.eq_ignore_ascii_case("n/a") {
        None
    } else {
        Some(trimmed.to_string())
    }
}

/// The outermost `open ... close` span, if any.
fn span(text: &str, open: char, close: char) -> Option<&str> {
    let start = text.find(open)?;
    let end = text.rfind(close)?;
    (end > start).then(|| &text[start..=end])
}

/// Turn Python-ish literals into JSON: `True/False/None`, single quotes, trailing commas.
fn pythonish_to_json(text: &str) -> String {
    static TRAILING: OnceLock<Regex> = OnceLock::new();
    let trailing = TRAILING.get_or_init(|| Regex::new(r",(\s*[}\]])").unwrap());
    let mut out = String::with_capacity(text.len());
    let mut in_double = false;
    let mut in_single = false;
    let mut escaped = false;
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if escaped {
            out.push(c);
            escaped = false;
        } else if c == '\\' {
            out.push(c);
            escaped = true;
        } else if in_double {
            out.push(c);
            if c == '"' {
                in_double = false;
            }
        } else if in_single {
            if c == '\'' {
                out.push('"');
                in_single = false;
            } else if c == '"' {
                out.push_str("\\\"");
            } else {
                out.push(c);
            }
        } else if c == '"' {
            in_double = true;
            out.push(c);
        } else if c == '\'' {
            in_single = true;
            out.push('"');
        } else {
            let rest: String = chars[i..chars.len().min(i + 5)].iter().collect();
            let boundary = i == 0 || !chars[i - 1].is_alphanumeric();
            if boundary && rest.starts_with("True") {
                out.push_str("true");
                i += 4;
                continue;
            } else if boundary && rest.starts_with("False") {
                out.push_str("false");
                i += 5;
                continue;
            } else if boundary && rest.starts_with("None") {
                out.push_str("null");
                i += 4;
                continue;
            }
            out.push(c);
        }
        i += 1;
    }
    trailing.replace_all(&out, "$1").into_owned()
}

fn parse_value(text: &str, open: char, close: char) -> Option<Value> {
    let body = span(text, open, close)?;
    serde_json::from_str(body)
        .ok()
        .or_else(|| serde_json::from_str(&pythonish_to_json(body)).ok())
}

pub const KEY_PROBLEM_KEYPHRASE: &str = "Problem (keyword/keyphrase)";
pub const KEY_PROBLEM_DEFINITION: &str = "Problem (definition)";
pub const KEY_PROBLEM_DISCIPLINE: &str = "Problem Discipline";
pub const KEY_METHOD_KEYPHRASE: &str = "Method (keyword/keyphrase)";
pub const KEY_METHOD_DEFINITION: &str = "Method (definition)";
pub const KEY_USAGE: &str = "Usage";

pub const ASPECT_KEYS: [&str; 6] = [
    KEY_PROBLEM_KEYPHRASE,
    KEY_PROBLEM_DEFINITION,
    KEY_PROBLEM_DISCIPLINE,
    KEY_METHOD_KEYPHRASE,
    KEY_METHOD_DEFINITION,
    KEY_USAGE,
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedAspects {
    /// Values in [`ASPECT_KEYS`] order, normalized.
    pub fields: [Option<String>; 6],
    /// A key was missing or held a non-string value.
    pub warning: bool,
}

/// Parse the six-field extraction object. `None` when no object can be recovered.
pub fn parse_aspects(response: &str) -> Option<ParsedAspects> {
    let value = parse_value(response, '{', '}')?;
    let obj = value.as_object()?;
    let mut parsed = ParsedAspects::default();
    for (slot, key) in ASPECT_KEYS.iter().enumerate() {
        let found = obj
            .get(*key)
            .or_else(|| obj.iter().find(|(k, _)| k.eq_ignore_ascii_case(key)).map(|(_, v)| v));
        match found {
            Some(Value::String(s)) => parsed.fields[slot] = normalize_field(s),
            Some(Value::Null) => {}
            _ => parsed.warning = true,
        }
    }
    if parsed.fields.iter().all(Option::is_none) && parsed.warning {
        return None;
    }
    Some(parsed)
}

/// Parse `{"Scientific problem": True/False, "AI method": True/False}`.
pub fn parse_classification(response: &str) -> Option<(bool, bool)> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r#"(?i)["']?(scientific problem|ai method)["']?\s*:\s*["']?(true|false)"#).unwrap()
    });
    let mut scientific = None;
    let mut ai = None;
    for cap in re.captures_iter(response) {
        let flag = cap[2].eq_ignore_ascii_case("true");
        if cap[1].eq_ignore_ascii_case("scientific problem") {
            scientific.get_or_insert(flag);
        } else {
            ai.get_or_insert(flag);
        }
    }
    Some((scientific?, ai?))
}

/// Parse a list of strings such as `["Graph Neural Networks", 'Transformers']`.
pub fn parse_string_list(response: &str) -> Option<Vec<String>> {
    let value = parse_value(response, '[', ']')?;
    let items = value.as_array()?;
    Some(
        items
            .iter()
            .filter_map(|v| match v {
                Value::String(s) => Some(s.trim().to_string()),
                Value::Number(n) => Some(n.to_string()),
                _ => None,
            })
            .filter(|s| !s.is_empty())
            .collect(),
    )
}

/// One generated recommendation: keyphrase plus optional usage text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recommendation {
    pub keyphrase: String,
    pub usage: Option<String>,
}

/// Parse `[{"<keyphrase_key>": "...", "AI Usage": "..."}, ...]`. Entries whose keyphrase
/// is absent (`N/A`) are skipped.
pub fn parse_recommendations(response: &str, keyphrase_key: &str) -> Option<Vec<Recommendation>> {
    let value = parse_value(response, '[', ']').or_else(|| parse_value(response, '{', '}'))?;
    let items: Vec<&Value> = match &value {
        Value::Array(items) => items.iter().collect(),
        Value::Object(_) => vec![&value],
        _ => return None,
    };
    let mut out = Vec::new();
    let mut any_object = false;
    for item in items {
        let Some(obj) = item.as_object() else { continue };
        any_object = true;
        let lookup = |key: &str| {
            obj.iter()
                .find(|(k, _)| k.eq_ignore_ascii_case(key))
                .and_then(|(_, v)| v.as_str())
                .and_then(normalize_field)
        };
        let keyphrase = lookup(keyphrase_key).or_else(|| {
            obj.iter()
                .find(|(k, _)| k.to_lowercase().contains("keyword"))
                .and_then(|(_, v)| v.as_str())
                .and_then(normalize_field)
        });
        if let Some(keyphrase) = keyphrase {
            out.push(Recommendation { keyphrase, usage: lookup("AI Usage").or_else(|| lookup("Usage")) });
        }
    }
    any_object.then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aspects_with_fences_and_na() {
        let reply = "Sure!\n```json\n{\n \"Problem (keyword/keyphrase)\": \"protein structure prediction\",\n \
                     \"Problem (definition)\": \"Predicting 3D structure.\",\n \"Problem Discipline\": \"Biology\",\n \
                     \"Method (keyword/keyphrase)\": \"Neural Networks\",\n \"Method (definition)\": \"N/A\",\n \
                     \"Usage\": \"\"\n}\n```";
        let p = parse_aspects(reply).unwrap();
        assert_eq!(p.fields[0].as_deref(), Some("protein structure prediction"));
        assert_eq!(p.fields[3].as_deref(), Some("Neural Networks"));
        assert_eq!(p.fields[4], None);
        assert_eq!(p.fields[5], None);
        assert!(!p.warning);
    }

    #[test]
    fn aspects_missing_key_warns() {
        let p = parse_aspects(r#"{"Problem (keyword/keyphrase)": "x"}"#).unwrap();
        assert!(p.warning);
        assert_eq!(p.fields[0].as_deref(), Some("x"));
    }

    #[test]
    fn aspects_unparseable() {
        assert!(parse_aspects("I cannot help with that.").is_none());
        assert!(parse_aspects("{not json at all}").is_none());
    }

    #[test]
    fn classification_python_literal() {
        let reply = "{\n    \"Scientific problem\": True,\n    \"AI method\": False,\n}";
        assert_eq!(parse_classification(reply), Some((true, false)));
        assert_eq!(parse_classification("{'AI method': true, 'Scientific problem': false}"), Some((false, true)));
        assert_eq!(parse_classification("{\"Scientific problem\": maybe}"), None);
    }

    #[test]
    fn string_lists() {
        assert_eq!(parse_string_list(r#"["Protein Design"]"#).unwrap(), vec!["Protein Design"]);
        assert_eq!(parse_string_list("Answer: ['A', \"B\",]").unwrap(), vec!["A", "B"]);
        assert_eq!(parse_string_list("['it''s']"), None);
        assert_eq!(parse_string_list("no list"), None);
    }

    #[test]
    fn recommendations() {
        let reply = r#"[
{
        "AI Method (keyword/keyphrase)": "Graph Neural Networks",
        "AI Usage": "Model molecules as graphs."
    },
]"#;
        let recs = parse_recommendations(reply, "AI Method (keyword/keyphrase)").unwrap();
        assert_eq!(
            recs,
            vec![Recommendation {
                keyphrase: "Graph Neural Networks".into(),
                usage: Some("Model molecules as graphs.".into())
            }]
        );
        let na = parse_recommendations(r#"[{"AI Method (keyword/keyphrase)": "N/A", "AI Usage": "N/A"}]"#, "AI Method (keyword/keyphrase)");
        assert_eq!(na, Some(vec![]));
        assert_eq!(parse_recommendations("nothing", "x"), None);
    }

    #[test]
    fn python_conversion_keeps_strings_intact() {
        assert_eq!(pythonish_to_json(r#"{"None True": True}"#), r#"{"None True": true}"#);
        assert_eq!(pythonish_to_json("['say \"hi\"']"), r#"["say \"hi\""]"#);
    }
}
