//! Prompt rendering for every experimental condition and data format.
//!
//! The rendered prompt text is a frozen contract: golden-file tests pin every
//! (strategy x format x condition) combination byte-for-byte. Change the
//! templates only together with the golden files.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Map, Value};

use crate::aggregation::{gold_label, StrategyKind, StrategySpec};
use crate::error::{Error, Result};
use crate::scenario::{generate_scenario, GroupScenario, RatingScale, STREAM_ICL};
use crate::seed::derive_seed;

/// Group sizes of the three bundled in-context examples; each example has
/// [`ICL_EXAMPLE_ITEMS`] items.
pub const ICL_EXAMPLE_SIZES: [usize; 3] = [2, 4, 8];
pub const ICL_EXAMPLE_ITEMS: usize = 50;

/// How the rating matrix is serialized inside the prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioFormat {
    /// JSON object mapping each item to its list of ratings (user order fixed).
    JsonItem,
    /// JSON object mapping each user to an object of item -> rating.
    JsonUser,
    /// Plain-text aligned table, users as rows, items as columns.
    #[serde(rename = "dataframe")]
    DataframeText,
}

impl ScenarioFormat {
    pub const ALL: [ScenarioFormat; 3] = [
        ScenarioFormat::JsonItem,
        ScenarioFormat::JsonUser,
        ScenarioFormat::DataframeText,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioFormat::JsonItem => "json_item",
            ScenarioFormat::JsonUser => "json_user",
            ScenarioFormat::DataframeText => "dataframe",
        }
    }
}

impl fmt::Display for ScenarioFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json_item" => Ok(ScenarioFormat::JsonItem),
            "json_user" => Ok(ScenarioFormat::JsonUser),
            "dataframe" => Ok(ScenarioFormat::DataframeText),
            other => Err(Error::argument(format!(
                "unknown scenario format: {other} (expected json_item, json_user or dataframe)"
            ))),
        }
    }
}

/// A prompt condition: the always-on baseline plus at most one of the three
/// prompt variants, and an optional ranked top-k output request.
///
/// The three variants are applied to the baseline independently and are never
/// stacked on each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct PromptCondition {
    pub with_explanation: bool,
    pub with_icl: bool,
    pub with_domain_cues: bool,
    pub ranked_topk: Option<usize>,
}

impl PromptCondition {
    pub fn baseline() -> Self {
        PromptCondition::default()
    }

    pub fn explanation() -> Self {
        PromptCondition {
            with_explanation: true,
            ..Default::default()
        }
    }

    pub fn icl() -> Self {
        PromptCondition {
            with_icl: true,
            ..Default::default()
        }
    }

    pub fn domain_cues() -> Self {
        PromptCondition {
            with_domain_cues: true,
            ..Default::default()
        }
    }

    /// The four unranked conditions, in canonical order.
    pub const fn variants() -> [PromptCondition; 4] {
        [
            PromptCondition {
                with_explanation: false,
                with_icl: false,
                with_domain_cues: false,
                ranked_topk: None,
            },
            PromptCondition {
                with_explanation: true,
                with_icl: false,
                with_domain_cues: false,
                ranked_topk: None,
            },
            PromptCondition {
                with_explanation: false,
                with_icl: true,
                with_domain_cues: false,
                ranked_topk: None,
            },
            PromptCondition {
                with_explanation: false,
                with_icl: false,
                with_domain_cues: true,
                ranked_topk: None,
            },
        ]
    }

    pub fn with_ranked(mut self, k: usize) -> Self {
        self.ranked_topk = Some(k);
        self
    }

    /// True for the plain baseline: no variant flags and no ranked output.
    pub fn is_plain_baseline(&self) -> bool {
        *self == PromptCondition::baseline()
    }

    pub fn validate(&self) -> Result<()> {
        let variants =
            u8::from(self.with_explanation) + u8::from(self.with_icl) + u8::from(self.with_domain_cues);
        if variants > 1 {
            return Err(Error::config(
                "prompt conditions are never stacked: set at most one of explanation, icl, domain_cues",
            ));
        }
        if self.ranked_topk == Some(0) {
            return Err(Error::config("ranked_topk must be >= 1"));
        }
        Ok(())
    }

    /// Canonical label, e.g. `baseline`, `icl`, `baseline+ranked10`.
    pub fn label(&self) -> String {
        let base = if self.with_explanation {
            "explanation"
        } else if self.with_icl {
            "icl"
        } else if self.with_domain_cues {
            "domain_cues"
        } else {
            "baseline"
        };
        match self.ranked_topk {
            Some(k) => format!("{base}+ranked{k}"),
            None => base.to_string(),
        }
    }
}

impl fmt::Display for PromptCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for PromptCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (base, ranked) = match s.split_once('+') {
            Some((base, suffix)) => {
                let k = suffix
                    .strip_prefix("ranked")
                    .and_then(|v| v.parse::<usize>().ok())
                    .ok_or_else(|| {
                        Error::argument(format!("bad condition suffix in {s:?}: expected +ranked<k>"))
                    })?;
                (base, Some(k))
            }
            None => (s, None),
        };
        let mut condition = match base {
            "baseline" => PromptCondition::baseline(),
            "explanation" => PromptCondition::explanation(),
            "icl" => PromptCondition::icl(),
            "domain_cues" => PromptCondition::domain_cues(),
            other => {
                return Err(Error::argument(format!(
                    "unknown condition: {other} (expected baseline, explanation, icl or domain_cues, \
                     optionally +ranked<k>)"
                )))
            }
        };
        condition.ranked_topk = ranked;
        condition.validate()?;
        Ok(condition)
    }
}

impl Serialize for PromptCondition {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for PromptCondition {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// A fully rendered prompt plus the metadata that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub prompt_text: String,
    pub strategy: StrategySpec,
    pub format: ScenarioFormat,
    pub condition: PromptCondition,
    pub scenario_id: String,
    /// Scenario ids of the in-context examples (empty unless `with_icl`).
    pub icl_example_ids: Vec<String>,
    /// item_id -> display title substitution (present only under domain cues).
    pub title_map: Option<BTreeMap<String, String>>,
}

/// One solved in-context example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IclExample {
    pub scenario: GroupScenario,
    /// Oracle winners of `scenario` under the bank's strategy.
    pub winners: Vec<String>,
}

/// Three solved example groups (sizes 2, 4 and 8; 50 items each) for one
/// strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IclBank {
    pub strategy: StrategySpec,
    pub examples: Vec<IclExample>,
}

impl IclBank {
    pub fn example_ids(&self) -> Vec<String> {
        self.examples
            .iter()
            .map(|e| e.scenario.scenario_id.clone())
            .collect()
    }
}

/// Newline-delimited list of display titles used as domain cues.
#[derive(Debug, Clone, PartialEq)]
pub struct TitleBank {
    titles: Vec<String>,
}

impl TitleBank {
    /// The bundled title list (60 titles).
    pub fn bundled() -> Self {
        TitleBank::parse(include_str!("../assets/movie_titles.txt"))
            .expect("bundled title list is valid")
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TitleBank::parse(&text)
    }

    fn parse(text: &str) -> Result<Self> {
        let titles: Vec<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect();
        if titles.is_empty() {
            return Err(Error::config("title list is empty"));
        }
        let mut seen = std::collections::HashSet::new();
        for t in &titles {
            if !seen.insert(t.to_lowercase()) {
                return Err(Error::config(format!("duplicate title in list: {t}")));
            }
        }
        Ok(TitleBank { titles })
    }

    pub fn titles(&self) -> &[String] {
        &self.titles
    }

    pub fn len(&self) -> usize {
        self.titles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.titles.is_empty()
    }

    pub fn into_titles(self) -> Vec<String> {
        self.titles
    }
}

/// Serialize the rating matrix in the given format, with item ids as names.
pub fn serialize_scenario(scenario: &GroupScenario, format: ScenarioFormat) -> String {
    serialize_scenario_named(scenario, format, &scenario.item_ids)
}

fn serialize_scenario_named(
    scenario: &GroupScenario,
    format: ScenarioFormat,
    names: &[String],
) -> String {
    match format {
        ScenarioFormat::JsonItem => {
            let mut obj = Map::new();
            for (j, name) in names.iter().enumerate() {
                let column: Vec<Value> =
                    scenario.ratings.iter().map(|row| json!(row[j])).collect();
                obj.insert(name.clone(), Value::Array(column));
            }
            Value::Object(obj).to_string()
        }
        ScenarioFormat::JsonUser => {
            let mut obj = Map::new();
            for (u, user) in scenario.user_ids.iter().enumerate() {
                let mut per_user = Map::new();
                for (j, name) in names.iter().enumerate() {
                    per_user.insert(name.clone(), json!(scenario.ratings[u][j]));
                }
                obj.insert(user.clone(), Value::Object(per_user));
            }
            Value::Object(obj).to_string()
        }
        ScenarioFormat::DataframeText => {
            let idx_width = scenario.user_ids.iter().map(String::len).max().unwrap_or(0);
            let col_widths: Vec<usize> = names
                .iter()
                .enumerate()
                .map(|(j, name)| {
                    let digits = scenario
                        .ratings
                        .iter()
                        .map(|row| row[j].to_string().len())
                        .max()
                        .unwrap_or(1);
                    name.len().max(digits)
                })
                .collect();

            let mut out = String::new();
            out.push_str(&" ".repeat(idx_width));
            for (name, width) in names.iter().zip(&col_widths) {
                out.push_str(&format!("  {name:>width$}"));
            }
            for (u, user) in scenario.user_ids.iter().enumerate() {
                out.push('\n');
                out.push_str(&format!("{user:<idx_width$}"));
                for (j, width) in col_widths.iter().enumerate() {
                    out.push_str(&format!("  {:>width$}", scenario.ratings[u][j]));
                }
            }
            out
        }
    }
}

/// The fixed natural-language paragraph describing a strategy's procedure,
/// as embedded in every prompt.
pub fn strategy_explanation(strategy: &StrategySpec) -> String {
    explanation_with_noun(strategy, "item")
}

fn explanation_with_noun(strategy: &StrategySpec, noun: &str) -> String {
    match strategy.kind {
        StrategyKind::Add => format!(
            "The group recommendation must be derived with the Additive Utilitarian (ADD) \
             strategy. It recommends the {noun} with the highest sum of all group members' \
             ratings: for every {noun}, add up the ratings given by each group member, and \
             the {noun} with the largest total wins."
        ),
        StrategyKind::App => format!(
            "The group recommendation must be derived with the Approval Voting (APP) strategy. \
             It recommends the {noun} with the highest number of ratings above a predefined \
             threshold. The threshold here is {t}: every rating of {t} or higher counts as one \
             approval. Count the approvals for every {noun}, and the {noun} with the most \
             approvals wins.",
            t = strategy.approval_threshold
        ),
        StrategyKind::Lms => format!(
            "The group recommendation must be derived with the Least Misery (LMS) strategy. \
             It recommends the {noun} which has the highest of all lowest per-{noun} ratings: \
             for every {noun}, find the lowest rating any group member gave it, and the {noun} \
             whose lowest rating is largest wins."
        ),
        StrategyKind::Mpl => format!(
            "The group recommendation must be derived with the Most Pleasure (MPL) strategy. \
             It recommends the {noun} with the highest individual group member rating: for \
             every {noun}, find the highest rating any group member gave it, and the {noun} \
             whose highest rating is largest wins."
        ),
    }
}

/// Generate the three solved in-context examples for a strategy.
///
/// The example scenarios depend only on the seed (so every strategy sees the
/// same three groups); the answers are the oracle winners under the given
/// strategy.
pub fn make_icl_bank(strategy: &StrategySpec, seed: u64) -> Result<IclBank> {
    let mut examples = Vec::with_capacity(ICL_EXAMPLE_SIZES.len());
    for (i, &size) in ICL_EXAMPLE_SIZES.iter().enumerate() {
        let scenario = generate_scenario(
            size,
            ICL_EXAMPLE_ITEMS,
            derive_seed(seed, STREAM_ICL, i as u64),
            RatingScale::default(),
        )?;
        let winners = gold_label(&scenario, strategy).winners;
        examples.push(IclExample { scenario, winners });
    }
    Ok(IclBank {
        strategy: *strategy,
        examples,
    })
}

fn format_note(format: ScenarioFormat, noun: &str) -> String {
    match format {
        ScenarioFormat::JsonItem => format!(
            "The ratings are given as a JSON object mapping each {noun} to the list of ratings \
             it received, one per group member, in a fixed member order."
        ),
        ScenarioFormat::JsonUser => format!(
            "The ratings are given as a JSON object mapping each user to an object with their \
             rating per {noun}."
        ),
        ScenarioFormat::DataframeText => format!(
            "The ratings are given as a table with one row per user and one column per {noun}."
        ),
    }
}

/// Render the complete prompt for one evaluation cell.
///
/// The parts appear in a fixed order: task framing, strategy explanation,
/// solved examples (ICL only), the serialized scenario, the tie instruction
/// and the output contract. Under domain cues every item id is replaced by a
/// distinct title and the word "item" in the template becomes "movie".
pub fn build_prompt(
    scenario: &GroupScenario,
    strategy: &StrategySpec,
    format: ScenarioFormat,
    condition: &PromptCondition,
    icl_bank: Option<&IclBank>,
    title_bank: Option<&TitleBank>,
) -> Result<PromptBundle> {
    condition.validate()?;

    let noun = if condition.with_domain_cues { "movie" } else { "item" };

    let (title_map, display_names): (Option<BTreeMap<String, String>>, Vec<String>) =
        if condition.with_domain_cues {
            let bank = title_bank.ok_or_else(|| {
                Error::config("domain cues requested but no title bank supplied")
            })?;
            if bank.len() < scenario.num_items {
                return Err(Error::config(format!(
                    "domain cues need {} titles, bank has {}",
                    scenario.num_items,
                    bank.len()
                )));
            }
            let names: Vec<String> = bank.titles()[..scenario.num_items].to_vec();
            let map = scenario
                .item_ids
                .iter()
                .cloned()
                .zip(names.iter().cloned())
                .collect();
            (Some(map), names)
        } else {
            (None, scenario.item_ids.clone())
        };

    let scenario_block = serialize_scenario_named(scenario, format, &display_names);

    let mut icl_example_ids = Vec::new();
    let mut icl_section = String::new();
    if condition.with_icl {
        let bank = icl_bank
            .ok_or_else(|| Error::config("in-context learning requested but no ICL bank supplied"))?;
        if bank.examples.len() != ICL_EXAMPLE_SIZES.len() {
            return Err(Error::config(format!(
                "ICL bank must hold exactly {} examples, got {}",
                ICL_EXAMPLE_SIZES.len(),
                bank.examples.len()
            )));
        }
        if bank.strategy != *strategy {
            return Err(Error::config(format!(
                "ICL bank was built for {} (threshold {}), prompt uses {} (threshold {})",
                bank.strategy.kind,
                bank.strategy.approval_threshold,
                strategy.kind,
                strategy.approval_threshold
            )));
        }
        icl_example_ids = bank.example_ids();
        icl_section.push_str("Here are three solved examples that apply this exact strategy.\n");
        for example in &bank.examples {
            // Example tables always use the per-item JSON form.
            let table =
                serialize_scenario_named(&example.scenario, ScenarioFormat::JsonItem, &example.scenario.item_ids);
            let answer = serde_json::to_string(&example.winners).expect("winner list serializes");
            icl_section.push_str(&format!(
                "If the input would be {table}, the correct recommendation would be {answer}.\n"
            ));
        }
        icl_section.push('\n');
    }

    let explanation = explanation_with_noun(strategy, noun);
    let note = format_note(format, noun);
    let code = strategy.kind.code();

    let mut output_contract = if condition.with_explanation {
        format!(
            "Respond with a single JSON object with the keys \"strategy\", \"recommendation\" \
             and \"explanation\". Set \"strategy\" to \"{code}\" and set \"recommendation\" to \
             the list of recommended {noun} identifiers."
        )
    } else {
        format!(
            "Respond with a single JSON object with the keys \"strategy\" and \
             \"recommendation\". Set \"strategy\" to \"{code}\" and set \"recommendation\" to \
             the list of recommended {noun} identifiers."
        )
    };
    if let Some(k) = condition.ranked_topk {
        let k = k.min(scenario.num_items);
        output_contract.push_str(&format!(
            " Rank the {noun}s from best to worst according to the strategy and set \
             \"recommendation\" to an ordered JSON list of exactly the top {k} {noun} \
             identifiers, best first."
        ));
    }
    if condition.with_explanation {
        output_contract.push_str(
            " Provide a short explanation detailing how you derived the recommendation. \
             Explain to the group how the strategy works and why the output is being \
             recommended to them.",
        );
    }

    let prompt_text = format!(
        "You are selecting the best {noun} to recommend to a group of {group_size} people, \
         based on the ratings below.\n\n{explanation}\n\n{icl_section}The group scenario: \
         {note}\n\n{scenario_block}\n\nIf several {noun}s tie for the best result according \
         to the strategy, recommend all tied {noun}s as a list.\n\n{output_contract}\n",
        group_size = scenario.group_size,
    );

    Ok(PromptBundle {
        prompt_text,
        strategy: *strategy,
        format,
        condition: *condition,
        scenario_id: scenario.scenario_id.clone(),
        icl_example_ids,
        title_map,
    })
}
