//! End-to-end orchestration: corpus, strategy assignment, prompt, model,
//! parse, metrics, persistence.
//!
//! A run walks every selected (scenario x endpoint x condition x format)
//! cell, appends one record per cell to `results.jsonl` and flushes as it
//! goes, so an interrupted run can be resumed: already-recorded cells are
//! skipped by key. Reports are derived artifacts; the JSONL records are the
//! source of truth.

mod report;

pub use report::report;

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::aggregation::{
    gold_label, StrategyKind, StrategySpec, DEFAULT_APPROVAL_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::llmclient::{mock_complete, HttpClient, MockPolicy, ModelEndpoint};
use crate::metrics::{
    build_record, transport_failure_record, EvalRecord, NdcgRelevance,
};
use crate::parser::parse_response;
use crate::promptkit::{build_prompt, make_icl_bank, IclBank, PromptCondition, ScenarioFormat, TitleBank};
use crate::scenario::{
    generate_corpus, read_corpus_jsonl, CorpusConfig, GroupScenario, RatingScale,
};
use crate::seed::hash_str;

/// Environment variable overriding the base URL of every HTTP endpoint.
pub const BASE_URL_ENV: &str = "GRSBENCH_BASE_URL";

/// Non-baseline cells are limited to scenarios with this many items unless
/// `full_grid` is set, mirroring how condition sweeps are usually run only
/// at the highest complexities.
pub const HIGH_COMPLEXITY_ITEM_COUNT: usize = 50;

/// Where the corpus comes from: a JSONL file or an inline generation config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CorpusSource {
    Path { path: PathBuf },
    Inline(CorpusConfig),
}

impl Default for CorpusSource {
    fn default() -> Self {
        CorpusSource::Inline(CorpusConfig::default())
    }
}

/// A model to evaluate: either a real HTTP endpoint or an in-process mock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EndpointSpec {
    Http(ModelEndpoint),
    Mock {
        name: String,
        #[serde(flatten)]
        policy: MockPolicy,
        #[serde(default)]
        seed: u64,
    },
}

impl EndpointSpec {
    pub fn name(&self) -> &str {
        match self {
            EndpointSpec::Http(endpoint) => &endpoint.name,
            EndpointSpec::Mock { name, .. } => name,
        }
    }

    pub fn mock(name: impl Into<String>, policy: MockPolicy) -> Self {
        EndpointSpec::Mock {
            name: name.into(),
            policy,
            seed: 0,
        }
    }
}

/// Declarative description of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub corpus: CorpusSource,
    pub endpoints: Vec<EndpointSpec>,
    pub conditions: Vec<PromptCondition>,
    pub formats: Vec<ScenarioFormat>,
    pub strategy_seed: u64,
    pub icl_seed: u64,
    pub approval_threshold: i32,
    pub out_dir: PathBuf,
    pub resume: bool,
    /// Run every condition and format over the whole corpus instead of
    /// limiting non-baseline cells to 50-item scenarios.
    pub full_grid: bool,
    pub ndcg_relevance: NdcgRelevance,
    /// Title list for domain cues; the bundled list is used when absent.
    pub title_file: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: CorpusSource::default(),
            endpoints: Vec::new(),
            conditions: vec![PromptCondition::baseline()],
            formats: vec![ScenarioFormat::JsonItem],
            strategy_seed: 1001,
            icl_seed: 5005,
            approval_threshold: DEFAULT_APPROVAL_THRESHOLD,
            out_dir: PathBuf::from("out"),
            resume: false,
            full_grid: false,
            ndcg_relevance: NdcgRelevance::Score,
            title_file: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.endpoints.is_empty() {
            return Err(Error::config("at least one endpoint is required"));
        }
        if self.conditions.is_empty() {
            return Err(Error::config("at least one condition is required"));
        }
        if self.formats.is_empty() {
            return Err(Error::config("at least one format is required"));
        }
        let mut names = HashSet::new();
        for endpoint in &self.endpoints {
            if !names.insert(endpoint.name()) {
                return Err(Error::config(format!(
                    "duplicate endpoint name: {}",
                    endpoint.name()
                )));
            }
            if let EndpointSpec::Http(e) = endpoint {
                e.validate()?;
            }
        }
        for condition in &self.conditions {
            condition.validate()?;
        }
        if let CorpusSource::Inline(corpus) = &self.corpus {
            corpus.validate()?;
            let scale = corpus.scale();
            if !scale.contains(self.approval_threshold) {
                return Err(Error::config(format!(
                    "approval threshold {} outside rating range [{}, {}]",
                    self.approval_threshold, scale.min, scale.max
                )));
            }
        }
        Ok(())
    }
}

/// Load a run config from a TOML file.
pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let config: RunConfig = toml::from_str(&text)
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    Ok(config)
}

/// Everything needed to reproduce a run (against the same endpoints).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: RunConfig,
    /// Strategy assigned to each scenario.
    pub strategies: BTreeMap<String, StrategyKind>,
    /// Scenario ids of the ICL examples, per strategy code (present only
    /// when an ICL condition is part of the run).
    pub icl_bank_ids: BTreeMap<String, Vec<String>>,
    pub started_at_unix: u64,
    pub finished_at_unix: Option<u64>,
}

/// Summary of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub results_path: PathBuf,
    pub manifest_path: PathBuf,
    pub records_written: usize,
    /// Cells skipped because a resumed results file already contained them.
    pub records_resumed: usize,
    /// Unparseable lines dropped from a resumed results file.
    pub lines_dropped: usize,
    pub transport_failures: usize,
}

/// Assign one strategy per scenario: an independent uniform draw over the
/// four kinds, keyed on the scenario id so the assignment is stable under
/// corpus extension and shared across all endpoints of the run.
pub fn assign_strategies(
    corpus: &[GroupScenario],
    seed: u64,
    approval_threshold: i32,
) -> BTreeMap<String, StrategySpec> {
    corpus
        .iter()
        .map(|scenario| {
            let kind =
                StrategyKind::ALL[(hash_str(seed, &scenario.scenario_id) % 4) as usize];
            (
                scenario.scenario_id.clone(),
                StrategySpec::new(kind, approval_threshold),
            )
        })
        .collect()
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Read records strictly; any malformed line is an error.
pub fn read_records_jsonl(path: &Path) -> Result<Vec<EvalRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EvalRecord = serde_json::from_str(&line).map_err(|e| {
            Error::config(format!(
                "{}:{}: bad record: {e}",
                path.display(),
                lineno + 1
            ))
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Read what can be read, dropping malformed lines (e.g. a torn final line
/// after a crash). Returns the records and the number of dropped lines.
fn load_records_lenient(path: &Path) -> Result<(Vec<EvalRecord>, usize)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut dropped = 0usize;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<EvalRecord>(&line) {
            Ok(record) => records.push(record),
            Err(_) => dropped += 1,
        }
    }
    Ok((records, dropped))
}

fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

enum ResolvedEndpoint {
    Http(ModelEndpoint),
    Mock {
        name: String,
        policy: MockPolicy,
        seed: u64,
    },
}

impl ResolvedEndpoint {
    fn name(&self) -> &str {
        match self {
            ResolvedEndpoint::Http(e) => &e.name,
            ResolvedEndpoint::Mock { name, .. } => name,
        }
    }
}

/// Execute a run end to end.
///
/// Records are appended and flushed one by one; a fatal transport failure on
/// a cell is recorded as that cell's outcome and the run continues. The
/// corpus file is never modified.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;

    let corpus: Vec<GroupScenario> = match &config.corpus {
        CorpusSource::Inline(corpus_config) => generate_corpus(corpus_config)?,
        // Accept any rating range in a pre-built corpus; structure is still checked.
        CorpusSource::Path { path } => {
            read_corpus_jsonl(path, RatingScale::new(i32::MIN, i32::MAX))?
        }
    };
    if corpus.is_empty() {
        return Err(Error::config("corpus is empty"));
    }

    let assignment = assign_strategies(&corpus, config.strategy_seed, config.approval_threshold);

    let needs_icl = config.conditions.iter().any(|c| c.with_icl);
    let mut icl_banks: BTreeMap<StrategyKind, IclBank> = BTreeMap::new();
    if needs_icl {
        for kind in StrategyKind::ALL {
            let spec = StrategySpec::new(kind, config.approval_threshold);
            icl_banks.insert(kind, make_icl_bank(&spec, config.icl_seed)?);
        }
    }

    let needs_titles = config.conditions.iter().any(|c| c.with_domain_cues);
    let titles: Option<TitleBank> = if needs_titles {
        Some(match &config.title_file {
            Some(path) => TitleBank::from_file(path)?,
            None => TitleBank::bundled(),
        })
    } else {
        None
    };

    let base_url_override = std::env::var(BASE_URL_ENV).ok();
    let endpoints: Vec<ResolvedEndpoint> = config
        .endpoints
        .iter()
        .map(|spec| match spec {
            EndpointSpec::Http(endpoint) => {
                let mut endpoint = endpoint.clone();
                if let Some(url) = &base_url_override {
                    endpoint.base_url = url.clone();
                }
                ResolvedEndpoint::Http(endpoint)
            }
            EndpointSpec::Mock { name, policy, seed } => ResolvedEndpoint::Mock {
                name: name.clone(),
                policy: policy.clone(),
                seed: *seed,
            },
        })
        .collect();
    let http = if endpoints.iter().any(|e| matches!(e, ResolvedEndpoint::Http(_))) {
        Some(HttpClient::new()?)
    } else {
        None
    };

    fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    let results_path = config.out_dir.join("results.jsonl");
    let manifest_path = config.out_dir.join("manifest.json");

    let mut done: HashSet<(String, String, String, String)> = HashSet::new();
    let mut lines_dropped = 0usize;
    if results_path.exists() {
        if !config.resume {
            return Err(Error::config(format!(
                "{} already exists; pass resume=true or use a fresh output directory",
                results_path.display()
            )));
        }
        let (existing, dropped) = load_records_lenient(&results_path)?;
        lines_dropped = dropped;
        // Rewrite the file so a torn final line does not linger.
        let file = File::create(&results_path).map_err(|e| Error::io(&results_path, e))?;
        let mut writer = std::io::BufWriter::new(file);
        for record in &existing {
            serde_json::to_writer(&mut writer, record)?;
            writer.write_all(b"\n").map_err(|e| Error::io(&results_path, e))?;
        }
        writer.flush().map_err(|e| Error::io(&results_path, e))?;
        done = existing.iter().map(EvalRecord::cell_key).collect();
    }

    let mut manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        strategies: assignment
            .iter()
            .map(|(id, spec)| (id.clone(), spec.kind))
            .collect(),
        icl_bank_ids: icl_banks
            .iter()
            .map(|(kind, bank)| (kind.code().to_string(), bank.example_ids()))
            .collect(),
        started_at_unix: unix_now(),
        finished_at_unix: None,
    };
    write_manifest(&manifest_path, &manifest)?;

    let mut out = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&results_path)
        .map_err(|e| Error::io(&results_path, e))?;

    let mut records_written = 0usize;
    let mut records_resumed = 0usize;
    let mut transport_failures = 0usize;

    for scenario in &corpus {
        let strategy = assignment[&scenario.scenario_id];
        let gold = gold_label(scenario, &strategy);
        for endpoint in &endpoints {
            for condition in &config.conditions {
                for format in &config.formats {
                    let in_subset = scenario.num_items == HIGH_COMPLEXITY_ITEM_COUNT;
                    let plain_cell =
                        condition.is_plain_baseline() && *format == ScenarioFormat::JsonItem;
                    if !config.full_grid && !plain_cell && !in_subset {
                        continue;
                    }

                    let key = (
                        scenario.scenario_id.clone(),
                        endpoint.name().to_string(),
                        condition.label(),
                        format.to_string(),
                    );
                    if done.contains(&key) {
                        records_resumed += 1;
                        continue;
                    }

                    let bundle = build_prompt(
                        scenario,
                        &strategy,
                        *format,
                        condition,
                        icl_banks.get(&strategy.kind),
                        titles.as_ref(),
                    )?;

                    let completion = match endpoint {
                        ResolvedEndpoint::Mock { policy, seed, .. } => {
                            mock_complete(policy, *seed, &bundle, scenario, &strategy)
                        }
                        ResolvedEndpoint::Http(model) => http
                            .as_ref()
                            .expect("http client exists when http endpoints do")
                            .complete(model, &bundle),
                    };

                    let record = match &completion.raw_text {
                        Some(text) => {
                            let parsed =
                                parse_response(text, scenario, bundle.title_map.as_ref());
                            build_record(
                                scenario,
                                &strategy,
                                endpoint.name(),
                                *condition,
                                *format,
                                &parsed,
                                &gold,
                                config.ndcg_relevance,
                                completion.latency_ms,
                            )
                        }
                        None => {
                            transport_failures += 1;
                            eprintln!(
                                "transport failure on {} / {}: {}",
                                scenario.scenario_id,
                                endpoint.name(),
                                completion.error.as_deref().unwrap_or("unknown")
                            );
                            transport_failure_record(
                                scenario,
                                &strategy,
                                endpoint.name(),
                                *condition,
                                *format,
                                &gold,
                                completion.latency_ms,
                            )
                        }
                    };

                    let mut line = serde_json::to_string(&record)?;
                    line.push('\n');
                    out.write_all(line.as_bytes())
                        .map_err(|e| Error::io(&results_path, e))?;
                    out.flush().map_err(|e| Error::io(&results_path, e))?;
                    done.insert(key);
                    records_written += 1;
                }
            }
        }
    }

    manifest.finished_at_unix = Some(unix_now());
    write_manifest(&manifest_path, &manifest)?;

    Ok(RunOutcome {
        results_path,
        manifest_path,
        records_written,
        records_resumed,
        lines_dropped,
        transport_failures,
    })
}
