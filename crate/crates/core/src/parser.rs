//! Extraction of the structured recommendation from raw model text.
//!
//! Parsing is lenient about everything around the JSON (markdown fences,
//! prose, whitespace) but strict about the JSON itself: malformed JSON is a
//! failure, not something to repair. Failures never abort a run; they are
//! classified and become part of the evaluation record.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::scenario::GroupScenario;

/// Why a response could not be turned into a valid recommendation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseFailure {
    /// No well-formed JSON object anywhere in the text.
    NoJsonFound,
    /// JSON found, but no usable "recommendation" key.
    MissingKeys,
    /// The recommendation names items that do not exist in the scenario.
    /// Hallucinated names are a hard failure; the offending names are kept.
    UnknownItems(Vec<String>),
    /// The recommendation list was empty.
    EmptyList,
}

impl ParseFailure {
    pub fn label(&self) -> &'static str {
        match self {
            ParseFailure::NoJsonFound => "no_json_found",
            ParseFailure::MissingKeys => "missing_keys",
            ParseFailure::UnknownItems(_) => "unknown_items",
            ParseFailure::EmptyList => "empty_list",
        }
    }
}

/// The parsed recommendation for one response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedRecommendation {
    /// Value of the "strategy" key, if the model echoed one.
    pub strategy_echo: Option<String>,
    /// Canonical item ids in the order the model produced them, first
    /// occurrence kept on duplicates. Non-empty whenever `failure` is `None`.
    pub items: Vec<String>,
    /// Value of the "explanation" key, stored verbatim and never graded.
    pub explanation_text: Option<String>,
    pub failure: Option<ParseFailure>,
    /// The model listed the same item more than once.
    pub had_duplicates: bool,
    /// Unknown names within Levenshtein distance 2 of a real item name;
    /// reported for analysis, never auto-corrected.
    pub near_misses: usize,
}

impl ParsedRecommendation {
    fn failed(failure: ParseFailure) -> Self {
        ParsedRecommendation {
            strategy_echo: None,
            items: Vec::new(),
            explanation_text: None,
            failure: Some(failure),
            had_duplicates: false,
            near_misses: 0,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.failure.is_none()
    }

    pub fn failure_label(&self) -> &'static str {
        self.failure.as_ref().map_or("none", ParseFailure::label)
    }
}

/// Extract the recommendation from raw model output.
///
/// The first well-formed JSON object containing a "recommendation" key wins.
/// The key may hold a single string or a list; names are canonicalized
/// case-insensitively against the scenario's item ids and, when a title map
/// is present, against the display titles.
pub fn parse_response(
    raw_text: &str,
    scenario: &GroupScenario,
    title_map: Option<&BTreeMap<String, String>>,
) -> ParsedRecommendation {
    let objects = extract_json_objects(raw_text);
    if objects.is_empty() {
        return ParsedRecommendation::failed(ParseFailure::NoJsonFound);
    }

    let Some(obj) = objects
        .iter()
        .find_map(|v| v.as_object().filter(|o| o.contains_key("recommendation")))
    else {
        return ParsedRecommendation::failed(ParseFailure::MissingKeys);
    };

    let raw_items: Vec<String> = match &obj["recommendation"] {
        Value::String(s) if !s.trim().is_empty() => vec![s.trim().to_string()],
        Value::String(_) => return ParsedRecommendation::failed(ParseFailure::EmptyList),
        Value::Array(values) => values.iter().map(value_as_name).collect(),
        _ => return ParsedRecommendation::failed(ParseFailure::MissingKeys),
    };
    if raw_items.is_empty() {
        return ParsedRecommendation::failed(ParseFailure::EmptyList);
    }

    // Lookup table: lowercased id -> canonical id, plus titles when present.
    let mut lookup: BTreeMap<String, &str> = scenario
        .item_ids
        .iter()
        .map(|id| (id.to_lowercase(), id.as_str()))
        .collect();
    if let Some(map) = title_map {
        for (id, title) in map {
            lookup.insert(title.to_lowercase(), id.as_str());
        }
    }

    let mut items: Vec<String> = Vec::new();
    let mut unknown: Vec<String> = Vec::new();
    let mut had_duplicates = false;
    for raw in &raw_items {
        match lookup.get(&raw.trim().to_lowercase()) {
            Some(&id) => {
                if items.iter().any(|seen| seen == id) {
                    had_duplicates = true;
                } else {
                    items.push(id.to_string());
                }
            }
            None => unknown.push(raw.trim().to_string()),
        }
    }

    let near_misses = unknown
        .iter()
        .filter(|name| {
            let lowered = name.to_lowercase();
            lookup.keys().any(|known| levenshtein(&lowered, known) <= 2)
        })
        .count();

    let strategy_echo = obj
        .get("strategy")
        .and_then(Value::as_str)
        .map(str::to_string);
    let explanation_text = obj
        .get("explanation")
        .and_then(Value::as_str)
        .map(str::to_string);

    let failure = if !unknown.is_empty() {
        Some(ParseFailure::UnknownItems(unknown))
    } else if items.is_empty() {
        Some(ParseFailure::EmptyList)
    } else {
        None
    };

    ParsedRecommendation {
        strategy_echo,
        items,
        explanation_text,
        failure,
        had_duplicates,
        near_misses,
    }
}

fn value_as_name(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Scan the text for balanced `{...}` blocks and parse each as JSON,
/// returning the well-formed objects in order of appearance. Fences and
/// surrounding prose fall out naturally: only brace-delimited spans are
/// considered.
fn extract_json_objects(text: &str) -> Vec<Value> {
    let bytes = text.as_bytes();
    let mut objects = Vec::new();
    let mut pos = 0;
    while let Some(offset) = text[pos..].find('{') {
        let start = pos + offset;
        match balanced_end(bytes, start) {
            Some(end) => match serde_json::from_str::<Value>(&text[start..=end]) {
                Ok(value) => {
                    objects.push(value);
                    pos = end + 1;
                }
                // Balanced but invalid (e.g. trailing comma): do not repair;
                // keep scanning inside in case a nested object is valid.
                Err(_) => pos = start + 1,
            },
            None => pos = start + 1,
        }
    }
    objects
}

/// Index of the brace closing the object that opens at `start`, honoring
/// string literals and escapes. `None` if the braces never balance.
fn balanced_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut current = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        current[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let substitution = prev[j] + usize::from(ca != cb);
            current[j + 1] = substitution.min(prev[j + 1] + 1).min(current[j] + 1);
        }
        std::mem::swap(&mut prev, &mut current);
    }
    prev[b.len()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testfix::{scenario_from_matrix, table2_scenario};
    use proptest::prelude::*;

    #[test]
    fn strips_markdown_fences() {
        let parsed = parse_response(
            "```json {\"strategy\":\"MPL\",\"recommendation\":[\"item_3\"]} ```",
            &table2_scenario(),
            None,
        );
        assert_eq!(parsed.items, ["item_3"]);
        assert!(parsed.failure.is_none());
        assert_eq!(parsed.strategy_echo.as_deref(), Some("MPL"));
    }

    #[test]
    fn promotes_a_scalar_recommendation_to_a_list() {
        let parsed = parse_response(
            r#"{"strategy":"ADD","recommendation":"item_5"}"#,
            &table2_scenario(),
            None,
        );
        assert_eq!(parsed.items, ["item_5"]);
        assert!(parsed.failure.is_none());
    }

    #[test]
    fn unknown_items_are_a_hard_failure() {
        let s = crate::scenario::generate_scenario(2, 50, 11, Default::default()).unwrap();
        let parsed = parse_response(
            r#"{"strategy":"ADD","recommendation":["item_99"]}"#,
            &s,
            None,
        );
        assert_eq!(
            parsed.failure,
            Some(ParseFailure::UnknownItems(vec!["item_99".to_string()]))
        );
        assert_eq!(parsed.failure_label(), "unknown_items");
    }

    #[test]
    fn one_unknown_item_fails_even_next_to_known_ones() {
        let parsed = parse_response(
            r#"{"recommendation":["item_1","Heat"]}"#,
            &table2_scenario(),
            None,
        );
        assert_eq!(
            parsed.failure,
            Some(ParseFailure::UnknownItems(vec!["Heat".to_string()]))
        );
        // The known part of the list is still kept for auditing.
        assert_eq!(parsed.items, ["item_1"]);
    }

    #[test]
    fn prose_without_json_is_no_json_found() {
        let parsed = parse_response("The best movie is Heat.", &table2_scenario(), None);
        assert_eq!(parsed.failure, Some(ParseFailure::NoJsonFound));
    }

    #[test]
    fn json_without_recommendation_key_is_missing_keys() {
        let parsed = parse_response(
            r#"{"strategy":"ADD","result":["item_1"]}"#,
            &table2_scenario(),
            None,
        );
        assert_eq!(parsed.failure, Some(ParseFailure::MissingKeys));
    }

    #[test]
    fn empty_recommendation_list_is_empty_list() {
        let parsed = parse_response(
            r#"{"strategy":"ADD","recommendation":[]}"#,
            &table2_scenario(),
            None,
        );
        assert_eq!(parsed.failure, Some(ParseFailure::EmptyList));
    }

    #[test]
    fn trailing_commas_are_not_repaired() {
        let parsed = parse_response(
            r#"{"strategy":"ADD","recommendation":["item_1"],}"#,
            &table2_scenario(),
            None,
        );
        assert_eq!(parsed.failure, Some(ParseFailure::NoJsonFound));
    }

    #[test]
    fn first_object_with_a_recommendation_key_wins() {
        let text = r#"Some analysis: {"score": 3} then
            {"strategy":"LMS","recommendation":["item_2"]} and later
            {"strategy":"LMS","recommendation":["item_1"]}"#;
        let parsed = parse_response(text, &table2_scenario(), None);
        assert_eq!(parsed.items, ["item_2"]);
    }

    #[test]
    fn duplicates_are_deduplicated_and_flagged() {
        let parsed = parse_response(
            r#"{"recommendation":["item_2","ITEM_2","item_4"]}"#,
            &table2_scenario(),
            None,
        );
        assert_eq!(parsed.items, ["item_2", "item_4"]);
        assert!(parsed.had_duplicates);
        assert!(parsed.failure.is_none());
    }

    #[test]
    fn titles_map_back_to_item_ids_case_insensitively() {
        let map: BTreeMap<String, String> = [
            ("item_1".to_string(), "Heat".to_string()),
            ("item_2".to_string(), "Fargo".to_string()),
        ]
        .into();
        let s = scenario_from_matrix(vec![vec![1, 2]]);
        let parsed = parse_response(
            r#"{"strategy":"ADD","recommendation":["FARGO"]}"#,
            &s,
            Some(&map),
        );
        assert_eq!(parsed.items, ["item_2"]);
        assert!(parsed.failure.is_none());
    }

    #[test]
    fn near_misses_are_counted_but_not_corrected() {
        let parsed = parse_response(
            r#"{"recommendation":["itme_3"]}"#,
            &table2_scenario(),
            None,
        );
        assert_eq!(parsed.failure_label(), "unknown_items");
        assert_eq!(parsed.near_misses, 1);

        let parsed = parse_response(
            r#"{"recommendation":["completely wrong"]}"#,
            &table2_scenario(),
            None,
        );
        assert_eq!(parsed.near_misses, 0);
    }

    #[test]
    fn explanation_text_is_stored_verbatim() {
        let parsed = parse_response(
            r#"{"strategy":"ADD","recommendation":["item_1"],"explanation":"Because sums."}"#,
            &table2_scenario(),
            None,
        );
        assert_eq!(parsed.explanation_text.as_deref(), Some("Because sums."));
    }

    #[test]
    fn braces_inside_strings_do_not_confuse_the_scanner() {
        let parsed = parse_response(
            r#"{"strategy":"note } with brace","recommendation":["item_1"]}"#,
            &table2_scenario(),
            None,
        );
        assert_eq!(parsed.items, ["item_1"]);
    }

    proptest! {
        #[test]
        fn oracle_renders_always_round_trip(
            matrix in proptest::collection::vec(
                proptest::collection::vec(0i32..=10, 1..=8),
                1..=4,
            ).prop_filter("rectangular", |m| {
                let w = m[0].len();
                m.iter().all(|row| row.len() == w)
            }),
            subset in any::<u8>(),
        ) {
            let s = scenario_from_matrix(matrix);
            // Take a non-empty pseudo-random subset of items as the "model" output.
            let picked: Vec<String> = s
                .item_ids
                .iter()
                .enumerate()
                .filter(|(j, _)| subset & (1 << (j % 8)) != 0)
                .map(|(_, id)| id.clone())
                .collect();
            let picked = if picked.is_empty() { vec![s.item_ids[0].clone()] } else { picked };
            let rendered = serde_json::json!({
                "strategy": "ADD",
                "recommendation": picked,
            })
            .to_string();
            let parsed = parse_response(&rendered, &s, None);
            prop_assert!(parsed.failure.is_none());
            prop_assert_eq!(parsed.items, picked);
        }
    }
}
