//! Deterministic generation of group rating scenarios.
//!
//! A scenario is an integer rating matrix (users x items) drawn uniformly at
//! random from a seeded generator. A corpus is a batch of scenarios whose
//! (group size, item count) cells are assigned uniformly at random over a
//! configurable grid, with per-scenario seeds derived from a master seed so
//! that corpora are extensible without reshuffling earlier entries.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Default number of scenarios in a corpus.
pub const DEFAULT_TOTAL_GROUPS: usize = 1000;
/// Default group-size grid.
pub const DEFAULT_GROUP_SIZES: [usize; 3] = [2, 4, 8];
/// Default item-count grid.
pub const DEFAULT_ITEM_COUNTS: [usize; 4] = [5, 10, 25, 50];
/// Default master seed used when none is supplied.
pub const DEFAULT_MASTER_SEED: u64 = 42;

// Stream tags for seed derivation; never reuse a tag for a new purpose.
const STREAM_CELL: u64 = 0x01;
const STREAM_SCENARIO: u64 = 0x02;
pub(crate) const STREAM_ICL: u64 = 0x03;

/// Inclusive integer rating range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingScale {
    pub min: i32,
    pub max: i32,
}

impl RatingScale {
    pub fn new(min: i32, max: i32) -> Self {
        RatingScale { min, max }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min >= self.max {
            return Err(Error::config(format!(
                "invalid rating range: min {} must be below max {}",
                self.min, self.max
            )));
        }
        Ok(())
    }

    pub fn contains(&self, rating: i32) -> bool {
        self.min <= rating && rating <= self.max
    }
}

impl Default for RatingScale {
    fn default() -> Self {
        RatingScale { min: 0, max: 10 }
    }
}

/// One group rating scenario: the unit of evaluation.
///
/// `ratings` is row-major: `ratings[u][i]` is the rating user `u` gave item
/// `i`. Serialized as one JSON object per line in corpus files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupScenario {
    pub scenario_id: String,
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
    pub ratings: Vec<Vec<i32>>,
    pub group_size: usize,
    pub num_items: usize,
    pub complexity: usize,
    pub seed: u64,
}

impl GroupScenario {
    pub fn rating(&self, user_idx: usize, item_idx: usize) -> i32 {
        self.ratings[user_idx][item_idx]
    }

    /// Index of an item id within this scenario, if present.
    pub fn item_index(&self, item_id: &str) -> Option<usize> {
        self.item_ids.iter().position(|id| id == item_id)
    }

    /// Check the structural invariants of a scenario (dimensions, the
    /// complexity product, id uniqueness, rating bounds).
    pub fn validate(&self, scale: RatingScale) -> Result<()> {
        if self.group_size == 0 || self.num_items == 0 {
            return Err(Error::argument("scenario must have >= 1 user and item"));
        }
        if self.user_ids.len() != self.group_size
            || self.item_ids.len() != self.num_items
            || self.ratings.len() != self.group_size
            || self.ratings.iter().any(|row| row.len() != self.num_items)
        {
            return Err(Error::argument(format!(
                "scenario {}: inconsistent dimensions",
                self.scenario_id
            )));
        }
        if self.complexity != self.group_size * self.num_items {
            return Err(Error::argument(format!(
                "scenario {}: complexity {} != {} x {}",
                self.scenario_id, self.complexity, self.group_size, self.num_items
            )));
        }
        let unique_users: HashSet<&String> = self.user_ids.iter().collect();
        let unique_items: HashSet<&String> = self.item_ids.iter().collect();
        if unique_users.len() != self.user_ids.len() || unique_items.len() != self.item_ids.len() {
            return Err(Error::argument(format!(
                "scenario {}: duplicate user or item ids",
                self.scenario_id
            )));
        }
        for row in &self.ratings {
            for &r in row {
                if !scale.contains(r) {
                    return Err(Error::argument(format!(
                        "scenario {}: rating {} outside [{}, {}]",
                        self.scenario_id, r, scale.min, scale.max
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Configuration for corpus generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub total_groups: usize,
    pub group_sizes: Vec<usize>,
    pub item_counts: Vec<usize>,
    pub rating_min: i32,
    pub rating_max: i32,
    pub master_seed: u64,
    /// When false, item ids are taken from the bundled title list instead of
    /// `item_<n>`.
    pub anonymize_items: bool,
    /// Assign grid cells round-robin instead of uniformly at random. Gives
    /// exactly balanced cell counts; intended for tests.
    pub stratified: bool,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            total_groups: DEFAULT_TOTAL_GROUPS,
            group_sizes: DEFAULT_GROUP_SIZES.to_vec(),
            item_counts: DEFAULT_ITEM_COUNTS.to_vec(),
            rating_min: 0,
            rating_max: 10,
            master_seed: DEFAULT_MASTER_SEED,
            anonymize_items: true,
            stratified: false,
        }
    }
}

impl CorpusConfig {
    pub fn scale(&self) -> RatingScale {
        RatingScale::new(self.rating_min, self.rating_max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_groups < 1 {
            return Err(Error::config("total_groups must be >= 1"));
        }
        if self.group_sizes.is_empty() || self.item_counts.is_empty() {
            return Err(Error::config("group_sizes and item_counts must be non-empty"));
        }
        if self.group_sizes.iter().any(|&s| s == 0) || self.item_counts.iter().any(|&i| i == 0) {
            return Err(Error::config("group sizes and item counts must be >= 1"));
        }
        self.scale().validate()
    }
}

/// Generate one scenario with a uniform random integer rating matrix.
///
/// Identical `(size, items, seed, scale)` inputs yield a bit-identical
/// scenario. User ids are pseudonymous five-digit identifiers drawn from the
/// same seed, re-drawn on collision.
pub fn generate_scenario(
    group_size: usize,
    num_items: usize,
    seed: u64,
    scale: RatingScale,
) -> Result<GroupScenario> {
    generate_scenario_named(group_size, num_items, seed, scale, None)
}

/// As [`generate_scenario`], but with explicit item names (used when a corpus
/// is generated with real titles in place of anonymous ids).
pub fn generate_scenario_named(
    group_size: usize,
    num_items: usize,
    seed: u64,
    scale: RatingScale,
    item_names: Option<&[String]>,
) -> Result<GroupScenario> {
    if group_size < 1 || num_items < 1 {
        return Err(Error::argument("group_size and num_items must be >= 1"));
    }
    scale.validate()?;
    if let Some(names) = item_names {
        if names.len() < num_items {
            return Err(Error::config(format!(
                "need {} item names, got {}",
                num_items,
                names.len()
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut user_ids = Vec::with_capacity(group_size);
    let mut taken = HashSet::new();
    while user_ids.len() < group_size {
        let id = format!("user_{:05}", rng.gen_range(0..100_000u32));
        if taken.insert(id.clone()) {
            user_ids.push(id);
        }
    }

    let ratings: Vec<Vec<i32>> = (0..group_size)
        .map(|_| {
            (0..num_items)
                .map(|_| rng.gen_range(scale.min..=scale.max))
                .collect()
        })
        .collect();

    let item_ids: Vec<String> = match item_names {
        Some(names) => names[..num_items].to_vec(),
        None => (1..=num_items).map(|i| format!("item_{i}")).collect(),
    };

    Ok(GroupScenario {
        scenario_id: format!("g{group_size}x{num_items}-{seed:016x}"),
        user_ids,
        item_ids,
        ratings,
        group_size,
        num_items,
        complexity: group_size * num_items,
        seed,
    })
}

/// Generate a full corpus in a deterministic order.
///
/// Each scenario's grid cell is an independent uniform draw over
/// `group_sizes x item_counts` (or round-robin when `stratified` is set);
/// its matrix seed is derived from `(master_seed, index)`.
pub fn generate_corpus(config: &CorpusConfig) -> Result<Vec<GroupScenario>> {
    let names = if config.anonymize_items {
        None
    } else {
        Some(crate::promptkit::TitleBank::bundled().into_titles())
    };
    generate_corpus_with_titles(config, names.as_deref())
}

/// As [`generate_corpus`], with an explicit title list for non-anonymous
/// corpora (ignored when `anonymize_items` is set).
pub fn generate_corpus_with_titles(
    config: &CorpusConfig,
    titles: Option<&[String]>,
) -> Result<Vec<GroupScenario>> {
    config.validate()?;
    let scale = config.scale();
    let names = if config.anonymize_items { None } else { titles };
    if !config.anonymize_items && names.is_none() {
        return Err(Error::config(
            "anonymize_items is off but no title list was supplied",
        ));
    }

    let cells: Vec<(usize, usize)> = config
        .group_sizes
        .iter()
        .flat_map(|&s| config.item_counts.iter().map(move |&i| (s, i)))
        .collect();

    let mut corpus = Vec::with_capacity(config.total_groups);
    for index in 0..config.total_groups as u64 {
        let (size, items) = if config.stratified {
            cells[(index as usize) % cells.len()]
        } else {
            let mut cell_rng =
                ChaCha8Rng::seed_from_u64(derive_seed(config.master_seed, STREAM_CELL, index));
            let size = config.group_sizes[cell_rng.gen_range(0..config.group_sizes.len())];
            let items = config.item_counts[cell_rng.gen_range(0..config.item_counts.len())];
            (size, items)
        };
        let sseed = derive_seed(config.master_seed, STREAM_SCENARIO, index);
        corpus.push(generate_scenario_named(size, items, sseed, scale, names)?);
    }
    Ok(corpus)
}

/// Write a corpus as JSON Lines, one scenario per line.
pub fn write_corpus_jsonl(path: &Path, corpus: &[GroupScenario]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for scenario in corpus {
        serde_json::to_writer(&mut w, scenario)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read a corpus from JSON Lines, checking structural invariants per line.
pub fn read_corpus_jsonl(path: &Path, scale: RatingScale) -> Result<Vec<GroupScenario>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut corpus = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let scenario: GroupScenario = serde_json::from_str(&line).map_err(|e| {
            Error::config(format!(
                "{}:{}: bad scenario record: {e}",
                path.display(),
                lineno + 1
            ))
        })?;
        scenario.validate(scale)?;
        corpus.push(scenario);
    }
    Ok(corpus)
}
