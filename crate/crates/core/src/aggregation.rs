//! Exact implementations of the four social choice-based aggregation
//! strategies, used as the gold-label oracle.
//!
//! All scores are exact integers: sums, counts, minima and maxima of integer
//! ratings. No floating point is involved anywhere in the oracle.

use std::cmp::Reverse;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{GroupScenario, RatingScale};

/// Default approval threshold on the 0-10 scale (top tertile). The threshold
/// is a per-run knob and is recorded in every evaluation record.
pub const DEFAULT_APPROVAL_THRESHOLD: i32 = 7;

/// The four aggregation strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StrategyKind {
    /// Additive Utilitarian: highest sum of all group members' ratings.
    Add,
    /// Approval Voting: highest number of ratings at or above a threshold.
    App,
    /// Least Misery: highest of all lowest per-item ratings.
    Lms,
    /// Most Pleasure: highest individual group member rating.
    Mpl,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::Add,
        StrategyKind::App,
        StrategyKind::Lms,
        StrategyKind::Mpl,
    ];

    /// Short code used in prompts, records and reports.
    pub fn code(&self) -> &'static str {
        match self {
            StrategyKind::Add => "ADD",
            StrategyKind::App => "APP",
            StrategyKind::Lms => "LMS",
            StrategyKind::Mpl => "MPL",
        }
    }

    /// Full strategy name.
    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Add => "Additive Utilitarian",
            StrategyKind::App => "Approval Voting",
            StrategyKind::Lms => "Least Misery",
            StrategyKind::Mpl => "Most Pleasure",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ADD" => Ok(StrategyKind::Add),
            "APP" => Ok(StrategyKind::App),
            "LMS" => Ok(StrategyKind::Lms),
            "MPL" => Ok(StrategyKind::Mpl),
            other => Err(Error::argument(format!("unknown strategy: {other}"))),
        }
    }
}

/// A strategy plus its parameters. The approval threshold is only consulted
/// by APP; a rating counts as an approval when it is at or above it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    pub approval_threshold: i32,
}

impl StrategySpec {
    pub fn new(kind: StrategyKind, approval_threshold: i32) -> Self {
        StrategySpec {
            kind,
            approval_threshold,
        }
    }

    pub fn validate(&self, scale: RatingScale) -> Result<()> {
        if self.kind == StrategyKind::App && !scale.contains(self.approval_threshold) {
            return Err(Error::config(format!(
                "approval threshold {} outside rating range [{}, {}]",
                self.approval_threshold, scale.min, scale.max
            )));
        }
        Ok(())
    }
}

/// The oracle output for one (scenario, strategy) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldResult {
    /// Tie set of maximal items, in item-index order. Always non-empty.
    pub winners: Vec<String>,
    /// Aggregate score per item.
    pub scores: BTreeMap<String, i64>,
    /// All items ordered by descending score, ties broken by ascending item
    /// index.
    pub ranking: Vec<String>,
}

fn score_column(column: impl Iterator<Item = i32>, strategy: &StrategySpec) -> i64 {
    match strategy.kind {
        StrategyKind::Add => column.map(i64::from).sum(),
        StrategyKind::App => column
            .filter(|&r| r >= strategy.approval_threshold)
            .count() as i64,
        StrategyKind::Lms => column.map(i64::from).min().expect("non-empty column"),
        StrategyKind::Mpl => column.map(i64::from).max().expect("non-empty column"),
    }
}

fn score_by_index(scenario: &GroupScenario, strategy: &StrategySpec) -> Vec<i64> {
    assert!(
        !scenario.ratings.is_empty() && !scenario.item_ids.is_empty(),
        "scenario must be non-empty"
    );
    (0..scenario.num_items)
        .map(|j| score_column(scenario.ratings.iter().map(|row| row[j]), strategy))
        .collect()
}

/// Aggregate score per item under the given strategy.
pub fn score_items(scenario: &GroupScenario, strategy: &StrategySpec) -> BTreeMap<String, i64> {
    score_by_index(scenario, strategy)
        .into_iter()
        .enumerate()
        .map(|(j, score)| (scenario.item_ids[j].clone(), score))
        .collect()
}

/// Compute the gold label: the argmax tie set plus the full strategy-induced
/// ranking.
pub fn gold_label(scenario: &GroupScenario, strategy: &StrategySpec) -> GoldResult {
    let scores = score_by_index(scenario, strategy);
    let best = *scores.iter().max().expect("non-empty scores");

    let winners: Vec<String> = scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s == best)
        .map(|(j, _)| scenario.item_ids[j].clone())
        .collect();

    let mut order: Vec<usize> = (0..scenario.num_items).collect();
    order.sort_by_key(|&j| (Reverse(scores[j]), j));
    let ranking: Vec<String> = order
        .into_iter()
        .map(|j| scenario.item_ids[j].clone())
        .collect();

    let scores_map = scores
        .into_iter()
        .enumerate()
        .map(|(j, s)| (scenario.item_ids[j].clone(), s))
        .collect();

    GoldResult {
        winners,
        scores: scores_map,
        ranking,
    }
}

/// First `k` entries of the strategy-induced ranking.
pub fn top_k(scenario: &GroupScenario, strategy: &StrategySpec, k: usize) -> Result<Vec<String>> {
    if k < 1 || k > scenario.num_items {
        return Err(Error::argument(format!(
            "k = {k} out of range 1..={}",
            scenario.num_items
        )));
    }
    let gold = gold_label(scenario, strategy);
    Ok(gold.ranking[..k].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testfix::{scenario_from_matrix, table2_scenario};
    use proptest::prelude::*;

    fn spec(kind: StrategyKind) -> StrategySpec {
        StrategySpec::new(kind, DEFAULT_APPROVAL_THRESHOLD)
    }

    #[test]
    fn table2_add_scores() {
        let scores = score_items(&table2_scenario(), &spec(StrategyKind::Add));
        let expected: Vec<(&str, i64)> = vec![
            ("item_1", 14),
            ("item_2", 9),
            ("item_3", 5),
            ("item_4", 14),
            ("item_5", 16),
        ];
        for (id, want) in expected {
            assert_eq!(scores[id], want, "ADD score for {id}");
        }
    }

    #[test]
    fn table2_lms_scores() {
        let scores = score_items(&table2_scenario(), &spec(StrategyKind::Lms));
        let expected: Vec<(&str, i64)> = vec![
            ("item_1", 4),
            ("item_2", 2),
            ("item_3", 2),
            ("item_4", 4),
            ("item_5", 7),
        ];
        for (id, want) in expected {
            assert_eq!(scores[id], want, "LMS score for {id}");
        }
    }

    #[test]
    fn table2_winners_per_strategy() {
        let s = table2_scenario();
        assert_eq!(gold_label(&s, &spec(StrategyKind::Add)).winners, ["item_5"]);
        assert_eq!(gold_label(&s, &spec(StrategyKind::Lms)).winners, ["item_5"]);
        assert_eq!(
            gold_label(&s, &spec(StrategyKind::Mpl)).winners,
            ["item_1", "item_4"]
        );
        assert_eq!(
            gold_label(&s, &StrategySpec::new(StrategyKind::App, 7)).winners,
            ["item_5"]
        );
    }

    #[test]
    fn table2_app_counts_ratings_at_or_above_threshold() {
        let scores = score_items(&table2_scenario(), &StrategySpec::new(StrategyKind::App, 7));
        assert_eq!(scores["item_1"], 1);
        assert_eq!(scores["item_2"], 1);
        assert_eq!(scores["item_3"], 0);
        assert_eq!(scores["item_4"], 1);
        assert_eq!(scores["item_5"], 2);
    }

    #[test]
    fn single_user_reduces_to_the_user_vector() {
        let s = scenario_from_matrix(vec![vec![3, 9, 0, 5]]);
        for kind in [StrategyKind::Add, StrategyKind::Lms, StrategyKind::Mpl] {
            let scores = score_items(&s, &spec(kind));
            assert_eq!(scores["item_1"], 3, "{kind}");
            assert_eq!(scores["item_2"], 9, "{kind}");
            assert_eq!(scores["item_3"], 0, "{kind}");
            assert_eq!(scores["item_4"], 5, "{kind}");
        }
    }

    #[test]
    fn all_equal_matrix_ties_every_item() {
        let s = scenario_from_matrix(vec![vec![5, 5, 5], vec![5, 5, 5]]);
        for kind in StrategyKind::ALL {
            let gold = gold_label(&s, &spec(kind));
            assert_eq!(gold.winners, ["item_1", "item_2", "item_3"], "{kind}");
        }
        assert_eq!(
            top_k(&s, &spec(StrategyKind::Add), 2).unwrap(),
            ["item_1", "item_2"]
        );
    }

    #[test]
    fn table2_add_top3_breaks_ties_by_item_index() {
        let got = top_k(&table2_scenario(), &spec(StrategyKind::Add), 3).unwrap();
        assert_eq!(got, ["item_5", "item_1", "item_4"]);
    }

    #[test]
    fn top_k_full_length_is_a_permutation() {
        let s = table2_scenario();
        let full = top_k(&s, &spec(StrategyKind::Mpl), s.num_items).unwrap();
        let mut sorted = full.clone();
        sorted.sort();
        let mut items = s.item_ids.clone();
        items.sort();
        assert_eq!(sorted, items);
    }

    #[test]
    fn top_k_rejects_out_of_range_k() {
        let s = table2_scenario();
        assert!(top_k(&s, &spec(StrategyKind::Add), 0).is_err());
        assert!(top_k(&s, &spec(StrategyKind::Add), 6).is_err());
    }

    #[test]
    fn app_threshold_outside_scale_is_rejected() {
        let spec = StrategySpec::new(StrategyKind::App, 11);
        assert!(spec.validate(RatingScale::default()).is_err());
        let spec = StrategySpec::new(StrategyKind::Add, 11);
        assert!(spec.validate(RatingScale::default()).is_ok());
    }

    /// Naive re-derivation of the winners straight from the strategy prose,
    /// kept deliberately separate from the production scoring path.
    fn naive_winners(ratings: &[Vec<i32>], strategy: &StrategySpec) -> Vec<usize> {
        let items = ratings[0].len();
        let mut scores = Vec::new();
        for j in 0..items {
            let mut sum = 0i64;
            let mut min = i64::MAX;
            let mut max = i64::MIN;
            let mut approvals = 0i64;
            for row in ratings {
                let r = i64::from(row[j]);
                sum += r;
                if r < min {
                    min = r;
                }
                if r > max {
                    max = r;
                }
                if row[j] >= strategy.approval_threshold {
                    approvals += 1;
                }
            }
            scores.push(match strategy.kind {
                StrategyKind::Add => sum,
                StrategyKind::App => approvals,
                StrategyKind::Lms => min,
                StrategyKind::Mpl => max,
            });
        }
        let best = *scores.iter().max().unwrap();
        (0..items).filter(|&j| scores[j] == best).collect()
    }

    #[test]
    fn small_exhaustive_matrices_match_the_naive_oracle() {
        // 1..=2 users x 1..=2 items, ratings in {0,1,2}: cheap slice of the
        // full equivalence check run by the acceptance suite.
        for users in 1..=2usize {
            for items in 1..=2usize {
                let cells = users * items;
                for assignment in 0..3usize.pow(cells as u32) {
                    let mut v = assignment;
                    let ratings: Vec<Vec<i32>> = (0..users)
                        .map(|_| {
                            (0..items)
                                .map(|_| {
                                    let r = (v % 3) as i32;
                                    v /= 3;
                                    r
                                })
                                .collect()
                        })
                        .collect();
                    let scenario = scenario_from_matrix(ratings.clone());
                    for kind in StrategyKind::ALL {
                        for threshold in [1, 2] {
                            let strategy = StrategySpec::new(kind, threshold);
                            let got: Vec<usize> = gold_label(&scenario, &strategy)
                                .winners
                                .iter()
                                .map(|id| scenario.item_index(id).unwrap())
                                .collect();
                            assert_eq!(got, naive_winners(&ratings, &strategy));
                        }
                    }
                }
            }
        }
    }

    fn arb_matrix() -> impl Strategy<Value = Vec<Vec<i32>>> {
        (1usize..=4, 1usize..=6).prop_flat_map(|(users, items)| {
            proptest::collection::vec(
                proptest::collection::vec(0i32..=10, items),
                users..=users,
            )
        })
    }

    proptest! {
        #[test]
        fn shifting_all_ratings_preserves_winners_for_shift_invariant_strategies(
            matrix in arb_matrix(),
            shift in 1i32..=5,
        ) {
            let base = scenario_from_matrix(matrix.clone());
            let shifted = scenario_from_matrix(
                matrix.iter().map(|row| row.iter().map(|r| r + shift).collect()).collect(),
            );
            for kind in [StrategyKind::Add, StrategyKind::Lms, StrategyKind::Mpl] {
                let strategy = spec(kind);
                prop_assert_eq!(
                    gold_label(&base, &strategy).winners,
                    gold_label(&shifted, &strategy).winners
                );
            }
        }

        #[test]
        fn permuting_users_changes_nothing(matrix in arb_matrix(), seed in any::<u64>()) {
            let mut permuted = matrix.clone();
            let n = permuted.len();
            // Fisher-Yates driven by the seed.
            let mut state = seed;
            for i in (1..n).rev() {
                state = crate::seed::splitmix64(state);
                permuted.swap(i, (state % (i as u64 + 1)) as usize);
            }
            let a = scenario_from_matrix(matrix);
            let b = scenario_from_matrix(permuted);
            for kind in StrategyKind::ALL {
                let strategy = spec(kind);
                let ga = gold_label(&a, &strategy);
                let gb = gold_label(&b, &strategy);
                prop_assert_eq!(&ga.winners, &gb.winners);
                prop_assert_eq!(&ga.scores, &gb.scores);
                prop_assert_eq!(&ga.ranking, &gb.ranking);
            }
        }

        #[test]
        fn permuting_items_permutes_scores_and_winners(
            matrix in arb_matrix(),
            seed in any::<u64>(),
        ) {
            let items = matrix[0].len();
            let mut perm: Vec<usize> = (0..items).collect();
            let mut state = seed;
            for i in (1..items).rev() {
                state = crate::seed::splitmix64(state);
                perm.swap(i, (state % (i as u64 + 1)) as usize);
            }
            // Column j of the permuted matrix is column perm[j] of the original.
            let permuted: Vec<Vec<i32>> = matrix
                .iter()
                .map(|row| perm.iter().map(|&j| row[j]).collect())
                .collect();
            let a = scenario_from_matrix(matrix);
            let b = scenario_from_matrix(permuted);
            for kind in StrategyKind::ALL {
                let strategy = spec(kind);
                let ga = gold_label(&a, &strategy);
                let gb = gold_label(&b, &strategy);
                // Scores travel with the columns.
                for (bj, &aj) in perm.iter().enumerate() {
                    prop_assert_eq!(
                        ga.scores[&a.item_ids[aj]],
                        gb.scores[&b.item_ids[bj]]
                    );
                }
                // Winner sets map onto each other through the permutation.
                let winners_a: std::collections::BTreeSet<usize> = ga
                    .winners
                    .iter()
                    .map(|id| a.item_index(id).unwrap())
                    .collect();
                let winners_b: std::collections::BTreeSet<usize> = gb
                    .winners
                    .iter()
                    .map(|id| perm[b.item_index(id).unwrap()])
                    .collect();
                prop_assert_eq!(winners_a, winners_b);
            }
        }

        #[test]
        fn winners_form_a_prefix_of_the_ranking(matrix in arb_matrix()) {
            let s = scenario_from_matrix(matrix);
            for kind in StrategyKind::ALL {
                let gold = gold_label(&s, &spec(kind));
                prop_assert!(!gold.winners.is_empty());
                prop_assert_eq!(gold.ranking.len(), s.num_items);
                let prefix: Vec<&String> = gold.ranking.iter().take(gold.winners.len()).collect();
                let winners: Vec<&String> = gold.winners.iter().collect();
                prop_assert_eq!(prefix, winners);
                // Scores are non-increasing along the ranking.
                let ranked_scores: Vec<i64> =
                    gold.ranking.iter().map(|id| gold.scores[id]).collect();
                prop_assert!(ranked_scores.windows(2).all(|w| w[0] >= w[1]));
            }
        }
    }
}
