//! Chat-completion transport: a blocking HTTP client for local model
//! servers, plus deterministic in-process mock models used for offline
//! testing and metric validation.
//!
//! The wire format is the widely implemented local chat-completion JSON
//! shape: `POST {base_url}/api/chat` with
//! `{"model", "messages": [{"role","content"}], "stream": false,
//! "options": {"temperature", "num_predict"}}`, answered by
//! `{"message": {"content": ...}, ...}`.

use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::aggregation::{gold_label, GoldResult, StrategySpec};
use crate::error::Result;
use crate::promptkit::PromptBundle;
use crate::scenario::GroupScenario;
use crate::seed::hash_str;

/// Decoding parameters sent with every request. Temperature defaults to 0
/// so that repeated runs are as reproducible as the server allows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeParams {
    pub temperature: f32,
    pub max_tokens: u32,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            temperature: 0.0,
            max_tokens: 1024,
        }
    }
}

/// A named chat-completion endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpoint {
    pub name: String,
    pub base_url: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Base of the exponential backoff between retries, in milliseconds.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default)]
    pub decode: DecodeParams,
}

fn default_timeout_secs() -> u64 {
    120
}

fn default_max_retries() -> u32 {
    2
}

fn default_backoff_ms() -> u64 {
    200
}

impl ModelEndpoint {
    pub fn new(name: impl Into<String>, base_url: impl Into<String>) -> Self {
        ModelEndpoint {
            name: name.into(),
            base_url: base_url.into(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            backoff_ms: default_backoff_ms(),
            decode: DecodeParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.timeout_secs == 0 {
            return Err(crate::Error::config(format!(
                "endpoint {}: timeout must be > 0",
                self.name
            )));
        }
        Ok(())
    }
}

/// Transport classification of a completion attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportStatus {
    Ok,
    /// Transient fault (timeout, refused connection, 5xx); retried.
    RetryableFailure,
    /// Permanent fault: 4xx, protocol mismatch, or retries exhausted.
    FatalFailure,
}

/// Outcome of one completion call. `raw_text` is present exactly when the
/// status is `Ok`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub raw_text: Option<String>,
    pub latency_ms: u64,
    pub attempt_count: u32,
    pub status: TransportStatus,
    /// Message or response body of the last failure, kept for the log.
    pub error: Option<String>,
}

impl CompletionResult {
    pub fn is_ok(&self) -> bool {
        self.status == TransportStatus::Ok
    }

    fn ok(text: String, latency_ms: u64, attempt_count: u32) -> Self {
        CompletionResult {
            raw_text: Some(text),
            latency_ms,
            attempt_count,
            status: TransportStatus::Ok,
            error: None,
        }
    }

    fn fatal(error: String, latency_ms: u64, attempt_count: u32) -> Self {
        CompletionResult {
            raw_text: None,
            latency_ms,
            attempt_count,
            status: TransportStatus::FatalFailure,
            error: Some(error),
        }
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    stream: bool,
    options: ChatOptions,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatOptions {
    temperature: f32,
    num_predict: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    content: String,
}

/// Blocking HTTP client; cheap to clone and safe to share across threads.
#[derive(Debug, Clone)]
pub struct HttpClient {
    inner: reqwest::blocking::Client,
}

impl HttpClient {
    pub fn new() -> Result<Self> {
        let inner = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| crate::Error::config(format!("building HTTP client: {e}")))?;
        Ok(HttpClient { inner })
    }

    /// Send the prompt as a single user message and return the model's text.
    ///
    /// Transient faults (timeout, refused connection, 5xx) are retried with
    /// exponential backoff up to `max_retries`; 4xx responses fail
    /// immediately with the body preserved. The call never blocks longer
    /// than `timeout * (max_retries + 1)` plus the backoff budget.
    pub fn complete(&self, endpoint: &ModelEndpoint, prompt: &PromptBundle) -> CompletionResult {
        let url = format!("{}/api/chat", endpoint.base_url.trim_end_matches('/'));
        let request = ChatRequest {
            model: &endpoint.name,
            messages: [ChatMessage {
                role: "user",
                content: &prompt.prompt_text,
            }],
            stream: false,
            options: ChatOptions {
                temperature: endpoint.decode.temperature,
                num_predict: endpoint.decode.max_tokens,
            },
        };

        let started = Instant::now();
        let mut attempt: u32 = 0;
        loop {
            attempt += 1;
            let outcome = self
                .inner
                .post(&url)
                .timeout(Duration::from_secs(endpoint.timeout_secs))
                .json(&request)
                .send();

            let retryable_error: String = match outcome {
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        let elapsed = started.elapsed().as_millis() as u64;
                        return match response.json::<ChatResponse>() {
                            Ok(parsed) => {
                                CompletionResult::ok(parsed.message.content, elapsed, attempt)
                            }
                            Err(e) => CompletionResult::fatal(
                                format!("malformed chat response: {e}"),
                                elapsed,
                                attempt,
                            ),
                        };
                    }
                    let body = response.text().unwrap_or_default();
                    let message = format!("HTTP {status}: {}", truncate(&body, 500));
                    if status.is_server_error() {
                        message
                    } else {
                        return CompletionResult::fatal(
                            message,
                            started.elapsed().as_millis() as u64,
                            attempt,
                        );
                    }
                }
                Err(e) => format!("transport error: {e}"),
            };

            if attempt > endpoint.max_retries {
                return CompletionResult::fatal(
                    format!("retries exhausted: {retryable_error}"),
                    started.elapsed().as_millis() as u64,
                    attempt,
                );
            }
            thread::sleep(Duration::from_millis(
                endpoint.backoff_ms.saturating_mul(1 << (attempt - 1).min(8)),
            ));
        }
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((idx, _)) => &s[..idx],
        None => s,
    }
}

/// Deterministic stand-ins for a model, used to validate the harness and its
/// metrics end to end without any inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum MockPolicy {
    /// Emits the gold tie set (or the gold top-k for ranked prompts) in the
    /// required JSON shape.
    PerfectOracle,
    /// Emits exactly one member of the gold tie set.
    SingleWinnerOnly,
    /// Emits one winner plus `extra` further items, preferring non-winners.
    OverRecommender { extra: usize },
    /// Applies the strategy using only the first `visible_ratings` ratings
    /// of the matrix in row-major order, as if the rest had been forgotten.
    Amnesiac { visible_ratings: usize },
    /// At the given rate the output is unusable (no JSON, truncated JSON or
    /// missing keys); otherwise valid output wrapped in fences and prose.
    MalformedJson { rate: f64 },
}

/// Produce a mock completion. Deterministic in all inputs, including the
/// policy seed.
pub fn mock_complete(
    policy: &MockPolicy,
    policy_seed: u64,
    prompt: &PromptBundle,
    scenario: &GroupScenario,
    strategy: &StrategySpec,
) -> CompletionResult {
    let gold = gold_label(scenario, strategy);
    let decision = hash_str(
        policy_seed,
        &format!("{}|{}|{}", scenario.scenario_id, prompt.condition, prompt.format),
    );

    let text = match policy {
        MockPolicy::PerfectOracle => render_json(prompt, &answer_items(&gold, prompt)),
        MockPolicy::SingleWinnerOnly => {
            let pick = (decision % gold.winners.len() as u64) as usize;
            render_json(prompt, std::slice::from_ref(&gold.winners[pick]))
        }
        MockPolicy::OverRecommender { extra } => {
            let mut items = vec![gold.winners[0].clone()];
            // Non-winners first (they follow the winners in the ranking),
            // then remaining winners if the scenario runs out of losers.
            for candidate in gold
                .ranking
                .iter()
                .skip(gold.winners.len())
                .chain(gold.ranking.iter().take(gold.winners.len()).skip(1))
            {
                if items.len() > *extra {
                    break;
                }
                items.push(candidate.clone());
            }
            render_json(prompt, &items)
        }
        MockPolicy::Amnesiac { visible_ratings } => {
            let items = amnesiac_answer(scenario, strategy, *visible_ratings, prompt);
            render_json(prompt, &items)
        }
        MockPolicy::MalformedJson { rate } => {
            let fraction = (decision % 1_000_000) as f64 / 1_000_000.0;
            let valid = render_json(prompt, &answer_items(&gold, prompt));
            if fraction < *rate {
                corrupt(&valid, decision)
            } else {
                format!("Sure, here is the result:\n```json\n{valid}\n```\nLet me know if you need anything else.")
            }
        }
    };

    CompletionResult::ok(text, 0, 1)
}

/// What a perfectly behaved model should answer for this prompt.
fn answer_items(gold: &GoldResult, prompt: &PromptBundle) -> Vec<String> {
    match prompt.condition.ranked_topk {
        Some(k) => gold.ranking[..k.min(gold.ranking.len())].to_vec(),
        None => gold.winners.clone(),
    }
}

fn amnesiac_answer(
    scenario: &GroupScenario,
    strategy: &StrategySpec,
    visible_ratings: usize,
    prompt: &PromptBundle,
) -> Vec<String> {
    // Score each item over the ratings it still "remembers": cell (u, j) is
    // visible when u * num_items + j < visible_ratings.
    let mut scores: Vec<Option<i64>> = vec![None; scenario.num_items];
    for (j, score) in scores.iter_mut().enumerate() {
        let column: Vec<i32> = scenario
            .ratings
            .iter()
            .enumerate()
            .filter(|(u, _)| u * scenario.num_items + j < visible_ratings)
            .map(|(_, row)| row[j])
            .collect();
        if column.is_empty() {
            continue;
        }
        let partial = GroupScenario {
            scenario_id: String::new(),
            user_ids: (0..column.len()).map(|u| format!("u{u}")).collect(),
            item_ids: vec!["only".to_string()],
            ratings: column.iter().map(|&r| vec![r]).collect(),
            group_size: column.len(),
            num_items: 1,
            complexity: column.len(),
            seed: 0,
        };
        *score = Some(gold_label(&partial, strategy).scores["only"]);
    }

    let mut scored: Vec<(usize, i64)> = scores
        .iter()
        .enumerate()
        .filter_map(|(j, s)| s.map(|v| (j, v)))
        .collect();
    if scored.is_empty() {
        return Vec::new();
    }
    scored.sort_by_key(|&(j, s)| (std::cmp::Reverse(s), j));

    let picked: Vec<usize> = match prompt.condition.ranked_topk {
        Some(k) => scored.iter().take(k).map(|&(j, _)| j).collect(),
        None => {
            let best = scored[0].1;
            scored
                .iter()
                .take_while(|&&(_, s)| s == best)
                .map(|&(j, _)| j)
                .collect()
        }
    };
    picked
        .into_iter()
        .map(|j| scenario.item_ids[j].clone())
        .collect()
}

/// Render the answer in the JSON shape the prompt demands, using display
/// titles when the prompt substituted them.
fn render_json(prompt: &PromptBundle, items: &[String]) -> String {
    let display: Vec<String> = items
        .iter()
        .map(|id| match &prompt.title_map {
            Some(map) => map.get(id).cloned().unwrap_or_else(|| id.clone()),
            None => id.clone(),
        })
        .collect();
    let mut obj = Map::new();
    obj.insert("strategy".to_string(), json!(prompt.strategy.kind.code()));
    obj.insert("recommendation".to_string(), json!(display));
    if prompt.condition.with_explanation {
        obj.insert(
            "explanation".to_string(),
            json!(format!(
                "The {} strategy was applied to the provided ratings.",
                prompt.strategy.kind.code()
            )),
        );
    }
    Value::Object(obj).to_string()
}

fn corrupt(valid: &str, decision: u64) -> String {
    match (decision >> 32) % 3 {
        0 => "I think the best choice for this group is clear from the ratings.".to_string(),
        1 => valid[..valid.len().saturating_sub(2)].to_string(),
        _ => valid.replacen("\"recommendation\"", "\"result\"", 1),
    }
}
