//! Benchmark harness measuring whether chat-completion language models can
//! correctly apply social choice-based aggregation strategies to group
//! rating matrices.
//!
//! The crate provides:
//!
//! - [`scenario`]: seeded generation of group rating scenarios over a
//!   complexity grid, persisted as JSON Lines;
//! - [`aggregation`]: the exact in-process oracle for the four strategies
//!   (ADD, APP, LMS, MPL), tie sets and induced rankings;
//! - [`promptkit`]: prompt rendering for every condition (baseline,
//!   explanation, in-context learning, domain cues) and data format
//!   (per-item JSON, per-user JSON, plain-text table);
//! - [`llmclient`]: a blocking chat-completion HTTP client plus deterministic
//!   mock models for offline testing;
//! - [`parser`]: lenient extraction of the recommendation from raw model
//!   text, with classified failures;
//! - [`metrics`]: overlap accuracy, NDCG@k, list-length statistics and
//!   grouped summaries;
//! - [`runner`]: end-to-end orchestration, crash-safe resumable runs and
//!   CSV/Markdown reports.

pub mod aggregation;
pub mod error;
pub mod llmclient;
pub mod metrics;
pub mod parser;
pub mod promptkit;
pub mod runner;
pub mod scenario;

mod seed;

pub use error::{Error, Result};

#[cfg(test)]
pub(crate) mod testfix {
    use crate::scenario::GroupScenario;

    /// Build a scenario directly from a rating matrix, with item_1.. ids.
    pub(crate) fn scenario_from_matrix(ratings: Vec<Vec<i32>>) -> GroupScenario {
        let group_size = ratings.len();
        let num_items = ratings[0].len();
        GroupScenario {
            scenario_id: format!("fix-{group_size}x{num_items}"),
            user_ids: (1..=group_size).map(|u| format!("user_{u:05}")).collect(),
            item_ids: (1..=num_items).map(|i| format!("item_{i}")).collect(),
            ratings,
            group_size,
            num_items,
            complexity: group_size * num_items,
            seed: 0,
        }
    }

    /// The worked 2x5 example scenario used throughout the tests.
    pub(crate) fn table2_scenario() -> GroupScenario {
        GroupScenario {
            scenario_id: "table2".to_string(),
            user_ids: vec!["user_57749".to_string(), "user_78033".to_string()],
            item_ids: (1..=5).map(|i| format!("item_{i}")).collect(),
            ratings: vec![vec![4, 2, 2, 10, 9], vec![10, 7, 3, 4, 7]],
            group_size: 2,
            num_items: 5,
            complexity: 10,
            seed: 0,
        }
    }
}
