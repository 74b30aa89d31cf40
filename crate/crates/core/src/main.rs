//! Command-line interface: corpus generation, evaluation runs, reports and
//! ICL bank inspection.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use grsbench::aggregation::{StrategyKind, StrategySpec, DEFAULT_APPROVAL_THRESHOLD};
use grsbench::error::Error;
use grsbench::llmclient::{MockPolicy, ModelEndpoint};
use grsbench::metrics::GroupKey;
use grsbench::promptkit::{make_icl_bank, PromptCondition, ScenarioFormat, TitleBank};
use grsbench::runner::{self, CorpusSource, EndpointSpec, RunConfig};
use grsbench::scenario::{
    generate_corpus_with_titles, write_corpus_jsonl, CorpusConfig, DEFAULT_MASTER_SEED,
};

#[derive(Parser)]
#[command(
    name = "grsbench",
    version,
    about = "Benchmark chat-completion models on social choice-based group rating aggregation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario corpus as JSON Lines.
    GenCorpus {
        /// Output path for the corpus.
        #[arg(long, default_value = "corpus.jsonl")]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        total: usize,
        #[arg(long, default_value_t = DEFAULT_MASTER_SEED)]
        master_seed: u64,
        #[arg(long, value_delimiter = ',', default_values_t = [2usize, 4, 8])]
        group_sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [5usize, 10, 25, 50])]
        item_counts: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        rating_min: i32,
        #[arg(long, default_value_t = 10)]
        rating_max: i32,
        /// Use display titles as item ids instead of anonymous item_<n>.
        #[arg(long)]
        titles_as_items: bool,
        /// Newline-delimited title list (bundled list used when absent).
        #[arg(long)]
        title_file: Option<PathBuf>,
        /// Balance grid cells exactly instead of sampling them uniformly.
        #[arg(long)]
        stratified: bool,
    },

    /// Print (or save) the three solved in-context examples for a strategy.
    IclBank {
        /// Strategy code: ADD, APP, LMS or MPL.
        #[arg(long)]
        strategy: String,
        #[arg(long, default_value_t = 5005)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_APPROVAL_THRESHOLD)]
        approval_threshold: i32,
        /// Write the bank as JSON to this path instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Execute an evaluation run.
    Run {
        /// Declarative run config (TOML). Flags below override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Evaluate an existing corpus file instead of generating one.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Resume into an existing output directory, skipping recorded cells.
        #[arg(long)]
        resume: bool,
        /// Run every condition and format over the whole corpus.
        #[arg(long)]
        full_grid: bool,
        /// Conditions, e.g. baseline,explanation,icl,domain_cues,baseline+ranked10.
        #[arg(long, value_delimiter = ',')]
        conditions: Option<Vec<String>>,
        /// Formats: json_item, json_user, dataframe.
        #[arg(long, value_delimiter = ',')]
        formats: Option<Vec<String>>,
        #[arg(long)]
        strategy_seed: Option<u64>,
        #[arg(long)]
        icl_seed: Option<u64>,
        #[arg(long)]
        approval_threshold: Option<i32>,
        /// Add a mock endpoint, e.g. perfect_oracle, single_winner_only,
        /// over_recommender:2, amnesiac:100, malformed_json:0.25.
        #[arg(long)]
        mock: Vec<String>,
        /// Add an HTTP endpoint as name=base_url.
        #[arg(long)]
        endpoint: Vec<String>,
        #[arg(long)]
        title_file: Option<PathBuf>,
    },

    /// Derive CSV and Markdown report tables from a results file.
    Report {
        #[arg(long)]
        results: PathBuf,
        /// Report directory (defaults to `report` next to the results file).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Grouping of summary.csv: comma-separated keys out of
        /// model, complexity, strategy, condition, format.
        #[arg(long, value_delimiter = ',', default_value = "model,complexity")]
        group_by: Vec<String>,
    },
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                // Bad flag values are configuration mistakes too.
                Error::Config(_) | Error::Argument(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn execute(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::GenCorpus {
            out,
            total,
            master_seed,
            group_sizes,
            item_counts,
            rating_min,
            rating_max,
            titles_as_items,
            title_file,
            stratified,
        } => {
            let config = CorpusConfig {
                total_groups: total,
                group_sizes,
                item_counts,
                rating_min,
                rating_max,
                master_seed,
                anonymize_items: !titles_as_items,
                stratified,
            };
            let titles = match &title_file {
                Some(path) => Some(TitleBank::from_file(path)?.into_titles()),
                None => Some(TitleBank::bundled().into_titles()),
            };
            let corpus = generate_corpus_with_titles(&config, titles.as_deref())?;
            write_corpus_jsonl(&out, &corpus)?;
            println!("wrote {} scenarios to {}", corpus.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }

        Command::IclBank {
            strategy,
            seed,
            approval_threshold,
            out,
        } => {
            let kind: StrategyKind = strategy.parse()?;
            let bank = make_icl_bank(&StrategySpec::new(kind, approval_threshold), seed)?;
            let text = serde_json::to_string_pretty(&bank)?;
            match out {
                Some(path) => {
                    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
                    println!("wrote ICL bank for {kind} to {}", path.display());
                }
                None => println!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Run {
            config,
            corpus,
            out,
            resume,
            full_grid,
            conditions,
            formats,
            strategy_seed,
            icl_seed,
            approval_threshold,
            mock,
            endpoint,
            title_file,
        } => {
            let mut run_config = match config {
                Some(path) => runner::load_run_config(&path)?,
                None => RunConfig::default(),
            };
            if let Some(path) = corpus {
                run_config.corpus = CorpusSource::Path { path };
            }
            if let Some(dir) = out {
                run_config.out_dir = dir;
            }
            if resume {
                run_config.resume = true;
            }
            if full_grid {
                run_config.full_grid = true;
            }
            if let Some(values) = conditions {
                run_config.conditions = values
                    .iter()
                    .map(|v| v.parse::<PromptCondition>())
                    .collect::<Result<_, _>>()?;
            }
            if let Some(values) = formats {
                run_config.formats = values
                    .iter()
                    .map(|v| v.parse::<ScenarioFormat>())
                    .collect::<Result<_, _>>()?;
            }
            if let Some(seed) = strategy_seed {
                run_config.strategy_seed = seed;
            }
            if let Some(seed) = icl_seed {
                run_config.icl_seed = seed;
            }
            if let Some(threshold) = approval_threshold {
                run_config.approval_threshold = threshold;
            }
            if let Some(path) = title_file {
                run_config.title_file = Some(path);
            }
            for policy_spec in &mock {
                let policy = parse_mock_policy(policy_spec)?;
                let name = format!("mock-{}", policy_spec.replace([':', '.'], "_"));
                run_config.endpoints.push(EndpointSpec::mock(name, policy));
            }
            for endpoint_spec in &endpoint {
                let (name, base_url) = endpoint_spec.split_once('=').ok_or_else(|| {
                    Error::config(format!("bad --endpoint {endpoint_spec:?}: expected name=base_url"))
                })?;
                run_config
                    .endpoints
                    .push(EndpointSpec::Http(ModelEndpoint::new(name, base_url)));
            }

            let outcome = runner::run(&run_config)?;
            println!(
                "wrote {} records to {} ({} resumed, {} dropped lines)",
                outcome.records_written,
                outcome.results_path.display(),
                outcome.records_resumed,
                outcome.lines_dropped,
            );
            println!("manifest: {}", outcome.manifest_path.display());
            if outcome.transport_failures > 0 {
                eprintln!(
                    "{} cells failed at the transport level",
                    outcome.transport_failures
                );
                return Ok(ExitCode::from(3));
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Report {
            results,
            out,
            group_by,
        } => {
            let out_dir = out.unwrap_or_else(|| {
                results
                    .parent()
                    .map(|p| p.join("report"))
                    .unwrap_or_else(|| PathBuf::from("report"))
            });
            let keys: Vec<GroupKey> = group_by
                .iter()
                .map(|k| k.parse())
                .collect::<Result<_, _>>()?;
            let written = runner::report(&results, &out_dir, &keys)?;
            for path in written {
                println!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn parse_mock_policy(s: &str) -> Result<MockPolicy, Error> {
    let (name, arg) = match s.split_once(':') {
        Some((name, arg)) => (name, Some(arg)),
        None => (s, None),
    };
    let need_no_arg = |policy: MockPolicy| match arg {
        None => Ok(policy),
        Some(_) => Err(Error::config(format!("mock policy {name} takes no argument"))),
    };
    match name {
        "perfect_oracle" => need_no_arg(MockPolicy::PerfectOracle),
        "single_winner_only" => need_no_arg(MockPolicy::SingleWinnerOnly),
        "over_recommender" => {
            let extra = arg
                .and_then(|a| a.parse().ok())
                .ok_or_else(|| Error::config("over_recommender needs :<extra>, e.g. over_recommender:2"))?;
            Ok(MockPolicy::OverRecommender { extra })
        }
        "amnesiac" => {
            let visible_ratings = arg
                .and_then(|a| a.parse().ok())
                .ok_or_else(|| Error::config("amnesiac needs :<visible_ratings>, e.g. amnesiac:100"))?;
            Ok(MockPolicy::Amnesiac { visible_ratings })
        }
        "malformed_json" => {
            let rate = arg
                .and_then(|a| a.parse().ok())
                .ok_or_else(|| Error::config("malformed_json needs :<rate>, e.g. malformed_json:0.25"))?;
            Ok(MockPolicy::MalformedJson { rate })
        }
        other => Err(Error::config(format!("unknown mock policy: {other}"))),
    }
}
