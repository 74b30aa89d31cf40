//! Evaluation records and metrics: overlap accuracy, NDCG@k, list-length
//! statistics and grouped breakdowns.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aggregation::{gold_label, GoldResult, StrategyKind, StrategySpec};
use crate::error::{Error, Result};
use crate::parser::{ParseFailure, ParsedRecommendation};
use crate::promptkit::{PromptCondition, ScenarioFormat};
use crate::scenario::GroupScenario;

/// Failure category stored on a record. Extends the parser's categories with
/// transport failures, where no text ever arrived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    None,
    NoJsonFound,
    MissingKeys,
    UnknownItems,
    EmptyList,
    Transport,
}

impl FailureKind {
    pub fn label(&self) -> &'static str {
        match self {
            FailureKind::None => "none",
            FailureKind::NoJsonFound => "no_json_found",
            FailureKind::MissingKeys => "missing_keys",
            FailureKind::UnknownItems => "unknown_items",
            FailureKind::EmptyList => "empty_list",
            FailureKind::Transport => "transport",
        }
    }

    pub fn is_failure(&self) -> bool {
        *self != FailureKind::None
    }
}

impl From<Option<&ParseFailure>> for FailureKind {
    fn from(failure: Option<&ParseFailure>) -> Self {
        match failure {
            None => FailureKind::None,
            Some(ParseFailure::NoJsonFound) => FailureKind::NoJsonFound,
            Some(ParseFailure::MissingKeys) => FailureKind::MissingKeys,
            Some(ParseFailure::UnknownItems(_)) => FailureKind::UnknownItems,
            Some(ParseFailure::EmptyList) => FailureKind::EmptyList,
        }
    }
}

/// One scenario x model x condition x format outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub scenario_id: String,
    pub model: String,
    pub strategy: StrategyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approval_threshold: Option<i32>,
    pub condition: PromptCondition,
    pub format: ScenarioFormat,
    pub group_size: usize,
    pub num_items: usize,
    pub complexity: usize,
    pub parsed_items: Vec<String>,
    pub gold_winners: Vec<String>,
    pub correct: bool,
    pub list_length: usize,
    /// Absent on failures and on scenarios where no item has positive
    /// relevance (the ranking metric is undefined there).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ndcg5: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ndcg10: Option<f64>,
    pub failure: FailureKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unknown_items: Vec<String>,
    #[serde(default)]
    pub had_duplicates: bool,
    #[serde(default)]
    pub near_misses: usize,
    pub latency_ms: u64,
}

impl EvalRecord {
    /// The unique key of a record within a run.
    pub fn cell_key(&self) -> (String, String, String, String) {
        (
            self.scenario_id.clone(),
            self.model.clone(),
            self.condition.label(),
            self.format.to_string(),
        )
    }
}

/// Relevance grading used by NDCG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NdcgRelevance {
    /// Relevance of an item is its aggregate score under the strategy
    /// (graded; invariant under oracle tie permutations).
    #[default]
    Score,
    /// Relevance 1 for members of the oracle top-k, 0 otherwise.
    BinaryTopK,
}

impl fmt::Display for NdcgRelevance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NdcgRelevance::Score => "score",
            NdcgRelevance::BinaryTopK => "binary_top_k",
        })
    }
}

/// True iff the response parsed cleanly and shares at least one item with
/// the gold tie set.
pub fn overlap_correct(parsed: &ParsedRecommendation, gold: &GoldResult) -> bool {
    parsed.is_ok() && parsed.items.iter().any(|item| gold.winners.contains(item))
}

/// NDCG at depth `k` of a recommended list against the strategy oracle.
///
/// DCG sums `rel(item_i) / log2(i + 1)` over 1-based positions up to
/// `min(k, len)`; the ideal DCG uses the score-sorted item list truncated at
/// the same depth, which makes a correct prefix of any length score 1.0.
/// Unknown and repeated items contribute relevance 0 at their positions.
/// Returns 0 when the ideal DCG is 0.
pub fn ndcg_at_k(
    items: &[String],
    scenario: &GroupScenario,
    strategy: &StrategySpec,
    k: usize,
    relevance: NdcgRelevance,
) -> f64 {
    if k == 0 || items.is_empty() {
        return 0.0;
    }
    let gold = gold_label(scenario, strategy);
    let depth = k.min(items.len());

    let rel_of = |item: &str| -> f64 {
        match relevance {
            NdcgRelevance::Score => gold.scores.get(item).map_or(0.0, |&s| s as f64),
            NdcgRelevance::BinaryTopK => {
                let cut = k.min(gold.ranking.len());
                if gold.ranking[..cut].iter().any(|i| i == item) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    };

    let mut seen = BTreeSet::new();
    let dcg: f64 = items[..depth]
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let rel = if seen.insert(item.as_str()) { rel_of(item) } else { 0.0 };
            rel / ((i + 2) as f64).log2()
        })
        .sum();

    let ideal: Vec<f64> = match relevance {
        NdcgRelevance::Score => gold.ranking.iter().map(|item| rel_of(item)).collect(),
        NdcgRelevance::BinaryTopK => vec![1.0; k.min(gold.ranking.len())],
    };
    let idcg: f64 = ideal
        .iter()
        .take(depth)
        .enumerate()
        .map(|(i, rel)| rel / ((i + 2) as f64).log2())
        .sum();

    if idcg <= 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

/// Mean and population standard deviation of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthStat {
    pub mean: f64,
    pub std_dev: f64,
    pub n: usize,
}

fn length_stat(values: &[f64]) -> LengthStat {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    LengthStat {
        mean,
        std_dev: variance.sqrt(),
        n,
    }
}

/// Recommendation list lengths per model, next to the gold tie-set lengths
/// over the same scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListLengthStats {
    pub per_model: BTreeMap<String, LengthStat>,
    pub gold: LengthStat,
}

/// Compute list-length statistics over failure-free records; the gold
/// baseline is taken over the distinct scenarios present in the records.
pub fn list_length_stats(records: &[EvalRecord]) -> Result<ListLengthStats> {
    if records.is_empty() {
        return Err(Error::argument("list_length_stats needs at least one record"));
    }
    let mut per_model_values: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut gold_by_scenario: BTreeMap<&str, f64> = BTreeMap::new();
    for record in records {
        if !record.failure.is_failure() {
            per_model_values
                .entry(&record.model)
                .or_default()
                .push(record.list_length as f64);
        }
        gold_by_scenario
            .entry(&record.scenario_id)
            .or_insert(record.gold_winners.len() as f64);
    }
    let gold_values: Vec<f64> = gold_by_scenario.into_values().collect();
    Ok(ListLengthStats {
        per_model: per_model_values
            .into_iter()
            .map(|(model, values)| (model.to_string(), length_stat(&values)))
            .collect(),
        gold: length_stat(&gold_values),
    })
}

/// Keys a record set can be grouped by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupKey {
    Model,
    Complexity,
    Strategy,
    Condition,
    Format,
}

impl GroupKey {
    pub fn name(&self) -> &'static str {
        match self {
            GroupKey::Model => "model",
            GroupKey::Complexity => "complexity",
            GroupKey::Strategy => "strategy",
            GroupKey::Condition => "condition",
            GroupKey::Format => "format",
        }
    }

    fn value_of(&self, record: &EvalRecord) -> String {
        match self {
            GroupKey::Model => record.model.clone(),
            GroupKey::Complexity => record.complexity.to_string(),
            GroupKey::Strategy => record.strategy.code().to_string(),
            GroupKey::Condition => record.condition.label(),
            GroupKey::Format => record.format.to_string(),
        }
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GroupKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "model" => Ok(GroupKey::Model),
            "complexity" => Ok(GroupKey::Complexity),
            "strategy" => Ok(GroupKey::Strategy),
            "condition" => Ok(GroupKey::Condition),
            "format" => Ok(GroupKey::Format),
            other => Err(Error::argument(format!(
                "unknown grouping key: {other} (expected model, complexity, strategy, condition or format)"
            ))),
        }
    }
}

/// One summary row per distinct grouping-key tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    /// (key name, key value) pairs in the requested key order.
    pub keys: Vec<(String, String)>,
    pub n: usize,
    pub accuracy: f64,
    /// Over failure-free records only; absent when a group has none.
    pub mean_list_length: Option<f64>,
    pub std_list_length: Option<f64>,
    pub mean_ndcg5: Option<f64>,
    pub mean_ndcg10: Option<f64>,
    /// Count per failure category, including `none`.
    pub failure_counts: BTreeMap<String, usize>,
}

impl MetricsSummary {
    pub fn key_value(&self, name: &str) -> Option<&str> {
        self.keys
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }
}

/// Group records by the given keys and fold each group into a summary.
///
/// Failures stay in the accuracy denominator: a model that emits garbage is
/// wrong, not excluded. The fold is order-independent; records are sorted
/// canonically first so float accumulation is reproducible.
pub fn summarize(records: &[EvalRecord], keys: &[GroupKey]) -> Result<Vec<MetricsSummary>> {
    if records.is_empty() {
        return Err(Error::argument("summarize needs at least one record"));
    }
    if keys.is_empty() {
        return Err(Error::argument("summarize needs at least one grouping key"));
    }

    let mut sorted: Vec<&EvalRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.cell_key());

    let mut groups: BTreeMap<Vec<String>, Vec<&EvalRecord>> = BTreeMap::new();
    for record in sorted {
        let tuple: Vec<String> = keys.iter().map(|k| k.value_of(record)).collect();
        groups.entry(tuple).or_default().push(record);
    }

    let mut summaries: Vec<MetricsSummary> = groups
        .into_iter()
        .map(|(tuple, group)| {
            let n = group.len();
            let correct = group.iter().filter(|r| r.correct).count();
            let lengths: Vec<f64> = group
                .iter()
                .filter(|r| !r.failure.is_failure())
                .map(|r| r.list_length as f64)
                .collect();
            let (mean_len, std_len) = if lengths.is_empty() {
                (None, None)
            } else {
                let stat = length_stat(&lengths);
                (Some(stat.mean), Some(stat.std_dev))
            };
            let mean_of = |select: fn(&EvalRecord) -> Option<f64>| {
                let values: Vec<f64> = group.iter().filter_map(|r| select(r)).collect();
                if values.is_empty() {
                    None
                } else {
                    Some(values.iter().sum::<f64>() / values.len() as f64)
                }
            };
            let mut failure_counts: BTreeMap<String, usize> = BTreeMap::new();
            for record in &group {
                *failure_counts
                    .entry(record.failure.label().to_string())
                    .or_default() += 1;
            }
            MetricsSummary {
                keys: keys
                    .iter()
                    .map(|k| k.name().to_string())
                    .zip(tuple)
                    .collect(),
                n,
                accuracy: correct as f64 / n as f64,
                mean_list_length: mean_len,
                std_list_length: std_len,
                mean_ndcg5: mean_of(|r| r.ndcg5),
                mean_ndcg10: mean_of(|r| r.ndcg10),
                failure_counts,
            }
        })
        .collect();

    // Numeric-aware ordering so complexity 20 sorts before 100.
    summaries.sort_by(|a, b| {
        for ((_, va), (_, vb)) in a.keys.iter().zip(&b.keys) {
            let ordering = match (va.parse::<u64>(), vb.parse::<u64>()) {
                (Ok(na), Ok(nb)) => na.cmp(&nb),
                _ => va.cmp(vb),
            };
            if ordering != std::cmp::Ordering::Equal {
                return ordering;
            }
        }
        std::cmp::Ordering::Equal
    });
    Ok(summaries)
}

/// Assemble a record from a parsed response.
#[allow(clippy::too_many_arguments)]
pub fn build_record(
    scenario: &GroupScenario,
    strategy: &StrategySpec,
    model: &str,
    condition: PromptCondition,
    format: ScenarioFormat,
    parsed: &ParsedRecommendation,
    gold: &GoldResult,
    relevance: NdcgRelevance,
    latency_ms: u64,
) -> EvalRecord {
    // With score relevance, a scenario whose aggregate scores are all zero
    // (possible under APP when nothing clears the threshold) has no ranking
    // signal: every ordering is equally ideal. The metric is left absent
    // there rather than recorded as 0.
    let ndcg_defined = match relevance {
        NdcgRelevance::Score => gold.scores.values().any(|&s| s > 0),
        NdcgRelevance::BinaryTopK => true,
    };
    let (ndcg5, ndcg10) = if parsed.is_ok() && ndcg_defined {
        (
            Some(ndcg_at_k(&parsed.items, scenario, strategy, 5, relevance)),
            Some(ndcg_at_k(&parsed.items, scenario, strategy, 10, relevance)),
        )
    } else {
        (None, None)
    };
    let unknown_items = match &parsed.failure {
        Some(ParseFailure::UnknownItems(items)) => items.clone(),
        _ => Vec::new(),
    };
    EvalRecord {
        scenario_id: scenario.scenario_id.clone(),
        model: model.to_string(),
        strategy: strategy.kind,
        approval_threshold: (strategy.kind == StrategyKind::App)
            .then_some(strategy.approval_threshold),
        condition,
        format,
        group_size: scenario.group_size,
        num_items: scenario.num_items,
        complexity: scenario.complexity,
        parsed_items: parsed.items.clone(),
        gold_winners: gold.winners.clone(),
        correct: overlap_correct(parsed, gold),
        list_length: parsed.items.len(),
        ndcg5,
        ndcg10,
        failure: FailureKind::from(parsed.failure.as_ref()),
        unknown_items,
        had_duplicates: parsed.had_duplicates,
        near_misses: parsed.near_misses,
        latency_ms,
    }
}

/// Assemble a record for a cell whose transport failed; no text arrived, so
/// the cell scores as incorrect with the `transport` failure category.
pub fn transport_failure_record(
    scenario: &GroupScenario,
    strategy: &StrategySpec,
    model: &str,
    condition: PromptCondition,
    format: ScenarioFormat,
    gold: &GoldResult,
    latency_ms: u64,
) -> EvalRecord {
    EvalRecord {
        scenario_id: scenario.scenario_id.clone(),
        model: model.to_string(),
        strategy: strategy.kind,
        approval_threshold: (strategy.kind == StrategyKind::App)
            .then_some(strategy.approval_threshold),
        condition,
        format,
        group_size: scenario.group_size,
        num_items: scenario.num_items,
        complexity: scenario.complexity,
        parsed_items: Vec::new(),
        gold_winners: gold.winners.clone(),
        correct: false,
        list_length: 0,
        ndcg5: None,
        ndcg10: None,
        failure: FailureKind::Transport,
        unknown_items: Vec::new(),
        had_duplicates: false,
        near_misses: 0,
        latency_ms,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::{top_k, DEFAULT_APPROVAL_THRESHOLD};
    use crate::scenario::{generate_scenario, RatingScale};
    use crate::testfix::{scenario_from_matrix, table2_scenario};
    use proptest::prelude::*;

    fn spec(kind: StrategyKind) -> StrategySpec {
        StrategySpec::new(kind, DEFAULT_APPROVAL_THRESHOLD)
    }

    fn parsed_ok(items: &[&str]) -> ParsedRecommendation {
        ParsedRecommendation {
            strategy_echo: None,
            items: items.iter().map(|s| s.to_string()).collect(),
            explanation_text: None,
            failure: None,
            had_duplicates: false,
            near_misses: 0,
        }
    }

    fn gold_with_winners(winners: &[&str]) -> GoldResult {
        GoldResult {
            winners: winners.iter().map(|s| s.to_string()).collect(),
            scores: BTreeMap::new(),
            ranking: winners.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn overlap_counts_any_shared_item_as_correct() {
        let gold = gold_with_winners(&["item_1", "item_3"]);
        assert!(overlap_correct(&parsed_ok(&["item_3"]), &gold));
    }

    #[test]
    fn disjoint_lists_are_incorrect() {
        let gold = gold_with_winners(&["item_5"]);
        assert!(!overlap_correct(&parsed_ok(&["item_2", "item_4"]), &gold));
    }

    #[test]
    fn parse_failures_are_incorrect() {
        let gold = gold_with_winners(&["item_1"]);
        let mut parsed = parsed_ok(&["item_1"]);
        parsed.failure = Some(ParseFailure::NoJsonFound);
        assert!(!overlap_correct(&parsed, &gold));
    }

    #[test]
    fn ndcg_of_the_oracle_top_k_is_one() {
        let s = table2_scenario();
        let strategy = spec(StrategyKind::Add);
        let items = top_k(&s, &strategy, 5).unwrap();
        assert_eq!(ndcg_at_k(&items, &s, &strategy, 5, NdcgRelevance::Score), 1.0);
        assert_eq!(
            ndcg_at_k(&items, &s, &strategy, 5, NdcgRelevance::BinaryTopK),
            1.0
        );
    }

    #[test]
    fn ndcg_of_a_reversed_ranking_is_below_one() {
        // Strictly decreasing scores: 9, 7, 5.
        let s = scenario_from_matrix(vec![vec![9, 7, 5]]);
        let strategy = spec(StrategyKind::Add);
        let mut items = top_k(&s, &strategy, 3).unwrap();
        items.reverse();
        let value = ndcg_at_k(&items, &s, &strategy, 3, NdcgRelevance::Score);
        assert!(value > 0.0 && value < 1.0, "got {value}");
    }

    #[test]
    fn ndcg_two_item_worked_example() {
        // ADD scores {item_1: 10, item_2: 5}, parsed [item_2, item_1], k = 2.
        let s = scenario_from_matrix(vec![vec![10, 5]]);
        let strategy = spec(StrategyKind::Add);
        let items = vec!["item_2".to_string(), "item_1".to_string()];
        let got = ndcg_at_k(&items, &s, &strategy, 2, NdcgRelevance::Score);
        // Independent arithmetic from the DCG definition.
        let expected = (5.0 / 2f64.log2() + 10.0 / 3f64.log2())
            / (10.0 / 2f64.log2() + 5.0 / 3f64.log2());
        assert!((got - expected).abs() < 1e-9, "got {got}, expected {expected}");
        assert!((expected - 0.859_718_699_852_197_2).abs() < 1e-9);
    }

    #[test]
    fn ndcg_short_correct_prefix_scores_one() {
        let s = table2_scenario();
        let strategy = spec(StrategyKind::Add);
        let items = vec!["item_5".to_string()];
        assert_eq!(ndcg_at_k(&items, &s, &strategy, 5, NdcgRelevance::Score), 1.0);
    }

    #[test]
    fn ndcg_unknown_and_duplicate_items_contribute_zero() {
        let s = scenario_from_matrix(vec![vec![10, 5]]);
        let strategy = spec(StrategyKind::Add);
        let unknown = vec!["item_9".to_string(), "item_1".to_string()];
        let dup = vec!["item_1".to_string(), "item_1".to_string()];
        let clean = vec!["item_1".to_string()];
        let u = ndcg_at_k(&unknown, &s, &strategy, 2, NdcgRelevance::Score);
        let d = ndcg_at_k(&dup, &s, &strategy, 2, NdcgRelevance::Score);
        let c = ndcg_at_k(&clean, &s, &strategy, 2, NdcgRelevance::Score);
        assert!(u < c);
        assert!(d < c);
        assert_eq!(c, 1.0);
    }

    #[test]
    fn ndcg_is_zero_when_ideal_dcg_is_zero() {
        let s = scenario_from_matrix(vec![vec![0, 0]]);
        let strategy = spec(StrategyKind::Add);
        let items = vec!["item_1".to_string()];
        assert_eq!(ndcg_at_k(&items, &s, &strategy, 2, NdcgRelevance::Score), 0.0);
    }

    #[test]
    fn records_omit_ndcg_when_no_item_has_positive_relevance() {
        // APP at threshold 7 with nothing above it: all scores zero.
        let s = scenario_from_matrix(vec![vec![1, 2], vec![3, 0]]);
        let strategy = StrategySpec::new(StrategyKind::App, 7);
        let gold = gold_label(&s, &strategy);
        assert_eq!(gold.winners.len(), 2, "all items tie at zero approvals");
        let record = build_record(
            &s,
            &strategy,
            "oracle",
            PromptCondition::baseline(),
            ScenarioFormat::JsonItem,
            &parsed_ok(&["item_1", "item_2"]),
            &gold,
            NdcgRelevance::Score,
            0,
        );
        assert!(record.correct);
        assert_eq!(record.ndcg5, None);
        assert_eq!(record.ndcg10, None);
        // Binary relevance never degenerates.
        let record = build_record(
            &s,
            &strategy,
            "oracle",
            PromptCondition::baseline(),
            ScenarioFormat::JsonItem,
            &parsed_ok(&["item_1", "item_2"]),
            &gold,
            NdcgRelevance::BinaryTopK,
            0,
        );
        assert_eq!(record.ndcg5, Some(1.0));
    }

    #[test]
    fn ndcg_is_invariant_under_gold_tie_permutations() {
        // items 1 and 2 tie at the top under MPL.
        let s = scenario_from_matrix(vec![vec![9, 9, 3]]);
        let strategy = spec(StrategyKind::Mpl);
        let a = vec!["item_1".to_string(), "item_2".to_string()];
        let b = vec!["item_2".to_string(), "item_1".to_string()];
        assert_eq!(
            ndcg_at_k(&a, &s, &strategy, 2, NdcgRelevance::Score),
            ndcg_at_k(&b, &s, &strategy, 2, NdcgRelevance::Score)
        );
    }

    #[test]
    fn list_length_identity_for_oracle_like_records() {
        let s = table2_scenario();
        let strategy = spec(StrategyKind::Mpl);
        let gold = gold_label(&s, &strategy);
        let parsed = parsed_ok(&["item_1", "item_4"]);
        let record = build_record(
            &s,
            &strategy,
            "oracle",
            PromptCondition::baseline(),
            ScenarioFormat::JsonItem,
            &parsed,
            &gold,
            NdcgRelevance::Score,
            0,
        );
        let stats = list_length_stats(&[record]).unwrap();
        assert_eq!(stats.per_model["oracle"].mean, stats.gold.mean);
        assert_eq!(stats.per_model["oracle"].n, 1);
    }

    #[test]
    fn list_length_stats_reject_empty_input() {
        assert!(list_length_stats(&[]).is_err());
    }

    #[test]
    fn population_std_dev_is_used() {
        let stat = length_stat(&[1.0, 3.0]);
        assert_eq!(stat.mean, 2.0);
        assert_eq!(stat.std_dev, 1.0, "population std of [1,3] is 1, not sqrt(2)");
    }

    fn sample_records() -> Vec<EvalRecord> {
        let strategies = [StrategyKind::Add, StrategyKind::App, StrategyKind::Lms, StrategyKind::Mpl];
        let mut records = Vec::new();
        for (i, kind) in strategies.iter().cycle().take(12).enumerate() {
            let s = generate_scenario(2, 5, i as u64, RatingScale::default()).unwrap();
            let strategy = StrategySpec::new(*kind, DEFAULT_APPROVAL_THRESHOLD);
            let gold = gold_label(&s, &strategy);
            let parsed = if i % 3 == 0 {
                ParsedRecommendation {
                    strategy_echo: None,
                    items: vec![],
                    explanation_text: None,
                    failure: Some(ParseFailure::NoJsonFound),
                    had_duplicates: false,
                    near_misses: 0,
                }
            } else {
                parsed_ok(&[gold.winners[0].as_str()])
            };
            records.push(build_record(
                &s,
                &strategy,
                if i % 2 == 0 { "model_a" } else { "model_b" },
                PromptCondition::baseline(),
                ScenarioFormat::JsonItem,
                &parsed,
                &gold,
                NdcgRelevance::Score,
                0,
            ));
        }
        records
    }

    #[test]
    fn summaries_partition_the_records() {
        let records = sample_records();
        for key in [GroupKey::Model, GroupKey::Strategy, GroupKey::Complexity] {
            let summaries = summarize(&records, &[key]).unwrap();
            let total: usize = summaries.iter().map(|s| s.n).sum();
            assert_eq!(total, records.len(), "{key}");
        }
    }

    #[test]
    fn summaries_are_invariant_to_record_order() {
        let records = sample_records();
        let mut shuffled = records.clone();
        shuffled.reverse();
        shuffled.swap(0, 5);
        assert_eq!(
            summarize(&records, &[GroupKey::Model]).unwrap(),
            summarize(&shuffled, &[GroupKey::Model]).unwrap()
        );
    }

    #[test]
    fn grouping_by_strategy_yields_four_rows() {
        let summaries = summarize(&sample_records(), &[GroupKey::Strategy]).unwrap();
        assert_eq!(summaries.len(), 4);
        let codes: Vec<&str> = summaries
            .iter()
            .map(|s| s.key_value("strategy").unwrap())
            .collect();
        assert_eq!(codes, ["ADD", "APP", "LMS", "MPL"]);
    }

    #[test]
    fn failure_counts_cover_every_record() {
        let records = sample_records();
        let summaries = summarize(&records, &[GroupKey::Model]).unwrap();
        for summary in summaries {
            let counted: usize = summary.failure_counts.values().sum();
            assert_eq!(counted, summary.n);
        }
    }

    #[test]
    fn unknown_grouping_key_is_an_argument_error() {
        assert!(matches!(
            "vibe".parse::<GroupKey>(),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn empty_inputs_are_argument_errors() {
        assert!(summarize(&[], &[GroupKey::Model]).is_err());
        let records = sample_records();
        assert!(summarize(&records, &[]).is_err());
    }

    proptest! {
        #[test]
        fn adding_items_never_flips_correct_to_incorrect(
            base in proptest::collection::vec(0usize..5, 1..4),
            additions in proptest::collection::vec(0usize..5, 0..4),
        ) {
            let gold = gold_with_winners(&["item_1", "item_3"]);
            let to_items = |idx: &[usize]| -> Vec<String> {
                idx.iter().map(|i| format!("item_{}", i + 1)).collect()
            };
            let mut parsed = parsed_ok(&[]);
            parsed.items = to_items(&base);
            let before = overlap_correct(&parsed, &gold);
            let mut extended = parsed.clone();
            extended.items.extend(to_items(&additions));
            let after = overlap_correct(&extended, &gold);
            prop_assert!(!before || after);
        }

        #[test]
        fn ndcg_stays_in_unit_interval(
            matrix in proptest::collection::vec(proptest::collection::vec(0i32..=10, 2..=8), 1..=4),
            pick in any::<u16>(),
            k in 1usize..=10,
        ) {
            let width = matrix[0].len();
            let rect: Vec<Vec<i32>> = matrix.iter().map(|row| {
                let mut r = row.clone();
                r.resize(width, 0);
                r
            }).collect();
            let s = scenario_from_matrix(rect);
            let strategy = spec(StrategyKind::Add);
            let items: Vec<String> = s
                .item_ids
                .iter()
                .enumerate()
                .filter(|(j, _)| pick & (1 << (j % 16)) != 0)
                .map(|(_, id)| id.clone())
                .collect();
            let items = if items.is_empty() { vec![s.item_ids[0].clone()] } else { items };
            for relevance in [NdcgRelevance::Score, NdcgRelevance::BinaryTopK] {
                let v = ndcg_at_k(&items, &s, &strategy, k, relevance);
                prop_assert!((0.0..=1.0 + 1e-12).contains(&v), "ndcg {v} out of range");
            }
        }
    }
}
