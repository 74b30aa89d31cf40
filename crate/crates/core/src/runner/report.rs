//! Report derivation: CSV files for plotting plus a human-readable Markdown
//! summary, all computed from the results JSONL.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::metrics::{list_length_stats, summarize, EvalRecord, GroupKey, MetricsSummary};
use crate::promptkit::ScenarioFormat;
use crate::runner::{read_records_jsonl, RunManifest};

/// Complexity levels at which condition, format and ranking comparisons are
/// tabulated.
pub const COMPARISON_COMPLEXITIES: [usize; 3] = [100, 200, 400];

/// Derive all report files from a results file. Returns the paths written.
///
/// `group_keys` selects the grouping of the general-purpose `summary.csv`;
/// the fixed-shape tables are always produced.
pub fn report(results_path: &Path, out_dir: &Path, group_keys: &[GroupKey]) -> Result<Vec<PathBuf>> {
    let records = read_records_jsonl(results_path)?;
    if records.is_empty() {
        return Err(Error::EmptyResults(results_path.to_path_buf()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let manifest = read_manifest_nearby(results_path);
    let mut written = Vec::new();
    let mut md = String::new();
    md.push_str("# Run report\n");

    // (a) corpus distribution over the distinct scenarios seen.
    let distribution = corpus_distribution(&records);
    written.push(write_csv(
        out_dir.join("corpus_distribution.csv"),
        &distribution.csv_rows(),
    )?);
    md.push_str("\n## Scenario distribution\n\n");
    md.push_str(&distribution.markdown());

    // (b) accuracy vs complexity series per model.
    let by_complexity = summarize(&records, &[GroupKey::Model, GroupKey::Complexity])?;
    written.push(write_csv(
        out_dir.join("accuracy_by_complexity.csv"),
        &accuracy_rows(&by_complexity, &["model", "complexity"]),
    )?);
    md.push_str("\n## Accuracy by group complexity\n\n");
    md.push_str(&accuracy_matrix_markdown(&by_complexity, "model", "complexity"));

    // (c) condition comparison at the top complexities.
    let comparison: Vec<EvalRecord> = records
        .iter()
        .filter(|r| COMPARISON_COMPLEXITIES.contains(&r.complexity))
        .cloned()
        .collect();
    let condition_summaries = if comparison.is_empty() {
        Vec::new()
    } else {
        summarize(&comparison, &[GroupKey::Condition, GroupKey::Complexity])?
    };
    written.push(write_csv(
        out_dir.join("condition_comparison.csv"),
        &accuracy_rows(&condition_summaries, &["condition", "complexity"]),
    )?);
    md.push_str("\n## Conditions at 100/200/400 ratings\n\n");
    md.push_str(&fixed_complexity_markdown(
        &condition_summaries,
        "condition",
        &condition_values(&condition_summaries),
    ));

    // (d) format comparison at the top complexities.
    let format_summaries = if comparison.is_empty() {
        Vec::new()
    } else {
        summarize(&comparison, &[GroupKey::Format, GroupKey::Complexity])?
    };
    written.push(write_csv(
        out_dir.join("format_comparison.csv"),
        &accuracy_rows(&format_summaries, &["format", "complexity"]),
    )?);
    md.push_str("\n## Data formats at 100/200/400 ratings\n\n");
    let format_order: Vec<String> = ScenarioFormat::ALL
        .iter()
        .map(|f| f.to_string())
        .filter(|name| format_summaries.iter().any(|s| s.key_value("format") == Some(name)))
        .collect();
    md.push_str(&fixed_complexity_markdown(&format_summaries, "format", &format_order));

    // (e) recommendation list lengths.
    let lengths = list_length_stats(&records)?;
    let mut length_rows = vec![vec![
        "source".to_string(),
        "mean".to_string(),
        "std_dev".to_string(),
        "n".to_string(),
    ]];
    length_rows.push(vec![
        "ground_truth".to_string(),
        format!("{:.4}", lengths.gold.mean),
        format!("{:.4}", lengths.gold.std_dev),
        lengths.gold.n.to_string(),
    ]);
    for (model, stat) in &lengths.per_model {
        length_rows.push(vec![
            model.clone(),
            format!("{:.4}", stat.mean),
            format!("{:.4}", stat.std_dev),
            stat.n.to_string(),
        ]);
    }
    written.push(write_csv(out_dir.join("list_length.csv"), &length_rows)?);
    md.push_str("\n## Recommendation list length\n\n");
    let mut header = vec!["".to_string(), "ground_truth".to_string()];
    header.extend(lengths.per_model.keys().cloned());
    let mut mean_row = vec!["mean".to_string(), format!("{:.2}", lengths.gold.mean)];
    let mut std_row = vec!["(std)".to_string(), format!("({:.2})", lengths.gold.std_dev)];
    for stat in lengths.per_model.values() {
        mean_row.push(format!("{:.2}", stat.mean));
        std_row.push(format!("({:.2})", stat.std_dev));
    }
    md.push_str(&markdown_table(&header, &[mean_row, std_row]));

    // (f) NDCG at the top complexities, per model.
    let ndcg_summaries = if comparison.is_empty() {
        Vec::new()
    } else {
        summarize(&comparison, &[GroupKey::Model, GroupKey::Complexity])?
    };
    let mut ndcg_rows = vec![vec![
        "model".to_string(),
        "complexity".to_string(),
        "n".to_string(),
        "ndcg5".to_string(),
        "ndcg10".to_string(),
    ]];
    for summary in &ndcg_summaries {
        ndcg_rows.push(vec![
            summary.key_value("model").unwrap_or("").to_string(),
            summary.key_value("complexity").unwrap_or("").to_string(),
            summary.n.to_string(),
            summary.mean_ndcg5.map_or(String::new(), |v| format!("{v:.4}")),
            summary.mean_ndcg10.map_or(String::new(), |v| format!("{v:.4}")),
        ]);
    }
    written.push(write_csv(out_dir.join("ndcg.csv"), &ndcg_rows)?);
    md.push_str("\n## NDCG at 100/200/400 ratings\n\n");
    md.push_str(&ndcg_markdown(&ndcg_summaries));

    // (g) the general-purpose summary.
    let keys: Vec<GroupKey> = if group_keys.is_empty() {
        vec![GroupKey::Model, GroupKey::Complexity]
    } else {
        group_keys.to_vec()
    };
    let summaries = summarize(&records, &keys)?;
    written.push(write_csv(
        out_dir.join("summary.csv"),
        &summary_rows(&summaries, &keys),
    )?);

    // (h) failure breakdown per model.
    let failure_table = failure_breakdown(&records)?;
    written.push(write_csv(out_dir.join("failures.csv"), &failure_table)?);
    md.push_str("\n## Failures\n\n");
    md.push_str(&markdown_table(
        &failure_table[0],
        &failure_table[1..].to_vec(),
    ));

    md.push_str("\n---\n");
    md.push_str(
        "\nNotes: accuracy counts a record as correct when the parsed recommendation \
         overlaps the oracle tie set; parse and transport failures stay in the denominator. \
         List-length standard deviations are population standard deviations.",
    );
    if let Some(manifest) = manifest {
        md.push_str(&format!(
            " NDCG relevance mode: {}. Approval threshold: {}. Tool version {}.",
            manifest.config.ndcg_relevance, manifest.config.approval_threshold, manifest.tool_version,
        ));
    }
    md.push('\n');

    let md_path = out_dir.join("report.md");
    fs::write(&md_path, md).map_err(|e| Error::io(&md_path, e))?;
    written.push(md_path);
    Ok(written)
}

fn read_manifest_nearby(results_path: &Path) -> Option<RunManifest> {
    let manifest_path = results_path.parent()?.join("manifest.json");
    let text = fs::read_to_string(manifest_path).ok()?;
    serde_json::from_str(&text).ok()
}

struct Distribution {
    sizes: Vec<usize>,
    item_counts: Vec<usize>,
    cells: BTreeMap<(usize, usize), usize>,
    total: usize,
}

impl Distribution {
    fn count(&self, size: usize, items: usize) -> usize {
        self.cells.get(&(size, items)).copied().unwrap_or(0)
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        let mut rows = Vec::new();
        let mut header = vec!["group_size".to_string()];
        header.extend(self.item_counts.iter().map(|i| format!("items_{i}")));
        header.push("total".to_string());
        rows.push(header);
        for &size in &self.sizes {
            let mut row = vec![size.to_string()];
            let mut total = 0;
            for &items in &self.item_counts {
                let c = self.count(size, items);
                total += c;
                row.push(c.to_string());
            }
            row.push(total.to_string());
            rows.push(row);
        }
        let mut totals = vec!["total".to_string()];
        for &items in &self.item_counts {
            let c: usize = self.sizes.iter().map(|&s| self.count(s, items)).sum();
            totals.push(c.to_string());
        }
        totals.push(self.total.to_string());
        rows.push(totals);
        rows
    }

    fn markdown(&self) -> String {
        let rows = self.csv_rows();
        markdown_table(&rows[0], &rows[1..].to_vec())
    }
}

fn corpus_distribution(records: &[EvalRecord]) -> Distribution {
    let mut scenarios: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for record in records {
        scenarios
            .entry(&record.scenario_id)
            .or_insert((record.group_size, record.num_items));
    }
    let mut cells: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for &(size, items) in scenarios.values() {
        *cells.entry((size, items)).or_default() += 1;
    }
    let sizes: Vec<usize> = cells.keys().map(|&(s, _)| s).collect::<BTreeSet<_>>().into_iter().collect();
    let item_counts: Vec<usize> =
        cells.keys().map(|&(_, i)| i).collect::<BTreeSet<_>>().into_iter().collect();
    Distribution {
        sizes,
        item_counts,
        total: scenarios.len(),
        cells,
    }
}

fn accuracy_rows(summaries: &[MetricsSummary], key_names: &[&str]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    let mut header: Vec<String> = key_names.iter().map(|k| k.to_string()).collect();
    header.push("n".to_string());
    header.push("accuracy".to_string());
    rows.push(header);
    for summary in summaries {
        let mut row: Vec<String> = key_names
            .iter()
            .map(|k| summary.key_value(k).unwrap_or("").to_string())
            .collect();
        row.push(summary.n.to_string());
        row.push(format!("{:.4}", summary.accuracy));
        rows.push(row);
    }
    rows
}

fn summary_rows(summaries: &[MetricsSummary], keys: &[GroupKey]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    let mut header: Vec<String> = keys.iter().map(|k| k.name().to_string()).collect();
    header.extend(
        [
            "n",
            "accuracy",
            "mean_list_length",
            "std_list_length",
            "mean_ndcg5",
            "mean_ndcg10",
            "failure_rate",
        ]
        .map(String::from),
    );
    rows.push(header);
    for summary in summaries {
        let mut row: Vec<String> = keys
            .iter()
            .map(|k| summary.key_value(k.name()).unwrap_or("").to_string())
            .collect();
        let failures: usize = summary
            .failure_counts
            .iter()
            .filter(|(label, _)| label.as_str() != "none")
            .map(|(_, count)| count)
            .sum();
        row.push(summary.n.to_string());
        row.push(format!("{:.4}", summary.accuracy));
        row.push(opt(summary.mean_list_length));
        row.push(opt(summary.std_list_length));
        row.push(opt(summary.mean_ndcg5));
        row.push(opt(summary.mean_ndcg10));
        row.push(format!("{:.4}", failures as f64 / summary.n as f64));
        rows.push(row);
    }
    rows
}

fn opt(value: Option<f64>) -> String {
    value.map_or(String::new(), |v| format!("{v:.4}"))
}

fn condition_values(summaries: &[MetricsSummary]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    for summary in summaries {
        if let Some(v) = summary.key_value("condition") {
            seen.insert(v.to_string());
        }
    }
    seen.into_iter().collect()
}

/// Rows = the fixed comparison complexities, columns = the given key values.
fn fixed_complexity_markdown(
    summaries: &[MetricsSummary],
    key: &str,
    columns: &[String],
) -> String {
    let mut header = vec!["ratings".to_string()];
    header.extend(columns.iter().cloned());
    let mut rows = Vec::new();
    for complexity in COMPARISON_COMPLEXITIES {
        let mut row = vec![complexity.to_string()];
        for column in columns {
            let cell = summaries
                .iter()
                .find(|s| {
                    s.key_value(key) == Some(column)
                        && s.key_value("complexity") == Some(&complexity.to_string())
                })
                .map_or("-".to_string(), |s| format!("{:.3}", s.accuracy));
            row.push(cell);
        }
        rows.push(row);
    }
    markdown_table(&header, &rows)
}

fn ndcg_markdown(summaries: &[MetricsSummary]) -> String {
    let models: Vec<String> = {
        let mut seen = BTreeSet::new();
        for s in summaries {
            if let Some(m) = s.key_value("model") {
                seen.insert(m.to_string());
            }
        }
        seen.into_iter().collect()
    };
    let mut header = vec!["ratings".to_string()];
    for model in &models {
        header.push(format!("{model} nDCG@5"));
        header.push(format!("{model} nDCG@10"));
    }
    let mut rows = Vec::new();
    for complexity in COMPARISON_COMPLEXITIES {
        let mut row = vec![complexity.to_string()];
        for model in &models {
            let summary = summaries.iter().find(|s| {
                s.key_value("model") == Some(model)
                    && s.key_value("complexity") == Some(&complexity.to_string())
            });
            row.push(summary.and_then(|s| s.mean_ndcg5).map_or("-".into(), |v| format!("{v:.3}")));
            row.push(summary.and_then(|s| s.mean_ndcg10).map_or("-".into(), |v| format!("{v:.3}")));
        }
        rows.push(row);
    }
    markdown_table(&header, &rows)
}

/// One row per (model, complexity) accuracy cell, as a matrix.
fn accuracy_matrix_markdown(summaries: &[MetricsSummary], row_key: &str, col_key: &str) -> String {
    let mut row_values = BTreeSet::new();
    let mut cols: BTreeSet<u64> = BTreeSet::new();
    for s in summaries {
        if let Some(r) = s.key_value(row_key) {
            row_values.insert(r.to_string());
        }
        if let Some(c) = s.key_value(col_key) {
            if let Ok(n) = c.parse::<u64>() {
                cols.insert(n);
            }
        }
    }
    let col_values: Vec<u64> = cols.into_iter().collect();

    let mut header = vec![row_key.to_string()];
    header.extend(col_values.iter().map(|c| c.to_string()));
    let mut rows = Vec::new();
    for row_value in row_values {
        let mut row = vec![row_value.clone()];
        for col in &col_values {
            let cell = summaries
                .iter()
                .find(|s| {
                    s.key_value(row_key) == Some(&row_value)
                        && s.key_value(col_key) == Some(&col.to_string())
                })
                .map_or("-".to_string(), |s| format!("{:.3}", s.accuracy));
            row.push(cell);
        }
        rows.push(row);
    }
    markdown_table(&header, &rows)
}

fn failure_breakdown(records: &[EvalRecord]) -> Result<Vec<Vec<String>>> {
    let categories = [
        "none",
        "no_json_found",
        "missing_keys",
        "unknown_items",
        "empty_list",
        "transport",
    ];
    let summaries = summarize(records, &[GroupKey::Model])?;
    let mut rows = Vec::new();
    let mut header = vec!["model".to_string()];
    header.extend(categories.iter().map(|c| c.to_string()));
    header.push("near_miss_names".to_string());
    header.push("duplicated_lists".to_string());
    rows.push(header);
    for summary in &summaries {
        let model = summary.key_value("model").unwrap_or("").to_string();
        let mut row = vec![model.clone()];
        for category in categories {
            row.push(
                summary
                    .failure_counts
                    .get(category)
                    .copied()
                    .unwrap_or(0)
                    .to_string(),
            );
        }
        let near: usize = records
            .iter()
            .filter(|r| r.model == model)
            .map(|r| r.near_misses)
            .sum();
        let dup: usize = records
            .iter()
            .filter(|r| r.model == model && r.had_duplicates)
            .count();
        row.push(near.to_string());
        row.push(dup.to_string());
        rows.push(row);
    }
    Ok(rows)
}

fn write_csv(path: PathBuf, rows: &[Vec<String>]) -> Result<PathBuf> {
    let mut writer = csv::Writer::from_path(&path).map_err(|e| {
        Error::io(&path, std::io::Error::other(e))
    })?;
    for row in rows {
        writer
            .write_record(row)
            .map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn markdown_table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str(&format!("| {} |\n", header.join(" | ")));
    out.push_str(&format!(
        "|{}\n",
        header.iter().map(|_| " --- |").collect::<String>()
    ));
    for row in rows {
        out.push_str(&format!("| {} |\n", row.join(" | ")));
    }
    out
}
