use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{doc_ids, welch_t, DocScore, EvalError, MetricReport, TTestResult};
use crate::engine::StarRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Rouge1,
    Rouge2,
    RougeL,
    Bleu,
    Factscore,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Rouge1, Metric::Rouge2, Metric::RougeL, Metric::Bleu, Metric::Factscore];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Rouge1 => "ROUGE-1",
            Metric::Rouge2 => "ROUGE-2",
            Metric::RougeL => "ROUGE-L",
            Metric::Bleu => "BLEU",
            Metric::Factscore => "Factscore",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Metric::Rouge1 => "rouge1",
            Metric::Rouge2 => "rouge2",
            Metric::RougeL => "rouge_l",
            Metric::Bleu => "bleu",
            Metric::Factscore => "factscore",
        }
    }

    /// F1 for the ROUGE variants; `None` when a factual-consistency score is missing.
    pub fn of(self, d: &DocScore) -> Option<f64> {
        match self {
            Metric::Rouge1 => Some(d.rouge1.f1),
            Metric::Rouge2 => Some(d.rouge2.f1),
            Metric::RougeL => Some(d.rouge_l.f1),
            Metric::Bleu => Some(d.bleu),
            Metric::Factscore => d.factscore,
        }
    }

    /// Multiplier used when printing; overlap metrics are shown as percentages.
    fn display_scale(self) -> f64 {
        if self == Metric::Factscore {
            1.0
        } else {
            100.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    Without,
    T3,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub metric: Metric,
    pub mean_without: f64,
    pub mean_t3: f64,
    pub winner: Winner,
    /// Absent when the statistic is undefined (constant samples with
    /// different means, or fewer than two documents).
    pub test: Option<TTestResult>,
}

impl MetricComparison {
    pub fn p(&self) -> Option<f64> {
        self.test.map(|t| t.p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub dataset: String,
    pub metrics: Vec<MetricComparison>,
    /// Significant under the table's star rule.
    pub starred: bool,
    /// T3 has the larger mean on every metric.
    pub highlighted: bool,
}

impl ComparisonRow {
    pub fn get(&self, metric: Metric) -> Option<&MetricComparison> {
        self.metrics.iter().find(|m| m.metric == metric)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceTable {
    pub alpha: f64,
    pub star_rule: StarRule,
    pub rows: Vec<ComparisonRow>,
}

/// Builds one row per `(without, t3)` pair of reports.
pub fn compare_runs(
    pairs: &[(&MetricReport, &MetricReport)],
    alpha: f64,
    star_rule: StarRule,
) -> Result<SignificanceTable, EvalError> {
    let mut rows = Vec::with_capacity(pairs.len());
    for (wo, t3) in pairs {
        rows.push(compare_pair(wo, t3, alpha, star_rule)?);
    }
    Ok(SignificanceTable { alpha, star_rule, rows })
}

fn compare_pair(wo: &MetricReport, t3: &MetricReport, alpha: f64, rule: StarRule) -> Result<ComparisonRow, EvalError> {
    let (ids_wo, ids_t3) = (doc_ids(wo), doc_ids(t3));
    if ids_wo != ids_t3 {
        let only_wo: Vec<_> = ids_wo.difference(&ids_t3).copied().collect();
        let only_t3: Vec<_> = ids_t3.difference(&ids_wo).copied().collect();
        return Err(EvalError::DocumentSetMismatch(format!(
            "only in without: {only_wo:?}; only in T3: {only_t3:?}"
        )));
    }
    let mut metrics = Vec::new();
    for metric in Metric::ALL {
        let (Some(a), Some(b)) = (wo.values(metric), t3.values(metric)) else {
            continue;
        };
        if a.is_empty() {
            continue;
        }
        let mean_without = super::mean(&a);
        let mean_t3 = super::mean(&b);
        let winner = if mean_t3 > mean_without {
            Winner::T3
        } else if mean_without > mean_t3 {
            Winner::Without
        } else {
            Winner::Tie
        };
        let test = match welch_t(&a, &b, alpha) {
            Ok(t) => Some(t),
            Err(e) => {
                log::warn!("{} on {}: no t-test for {}: {e}", t3.model, wo.dataset, metric.label());
                None
            }
        };
        metrics.push(MetricComparison { metric, mean_without, mean_t3, winner, test });
    }
    let significant = |m: &MetricComparison| m.test.is_some_and(|t| t.significant);
    let starred = !metrics.is_empty()
        && match rule {
            StarRule::AllMetrics => metrics.iter().all(significant),
            StarRule::AnyMetric => metrics.iter().any(significant),
        };
    let highlighted = !metrics.is_empty() && metrics.iter().all(|m| m.winner == Winner::T3);
    let model = if t3.model.is_empty() { wo.model.clone() } else { t3.model.clone() };
    Ok(ComparisonRow { model, dataset: wo.dataset.clone(), metrics, starred, highlighted })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Markdown => "md",
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

pub fn render_report(table: &SignificanceTable, format: ReportFormat) -> String {
    match format {
        ReportFormat::Markdown => render_markdown(table),
        ReportFormat::Csv => render_csv(table),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(table).expect("tables serialize");
            s.push('\n');
            s
        }
    }
}

impl SignificanceTable {
    pub fn write(&self, format: ReportFormat, path: &Path) -> Result<(), EvalError> {
        std::fs::write(path, render_report(self, format)).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))
    }

    pub fn from_json(raw: &str) -> Result<Self, EvalError> {
        serde_json::from_str(raw).map_err(|e| EvalError::Io(e.to_string()))
    }

    /// Metrics present in at least one row, in canonical order.
    fn columns(&self) -> Vec<Metric> {
        Metric::ALL
            .into_iter()
            .filter(|m| self.rows.iter().any(|r| r.get(*m).is_some()))
            .collect()
    }
}

fn render_markdown(table: &SignificanceTable) -> String {
    let columns = table.columns();
    let mut datasets: Vec<&str> = Vec::new();
    for row in &table.rows {
        if !datasets.contains(&row.dataset.as_str()) {
            datasets.push(&row.dataset);
        }
    }
    let rule = match table.star_rule {
        StarRule::AllMetrics => "every metric",
        StarRule::AnyMetric => "at least one metric",
    };
    let mut out = String::new();
    let _ = writeln!(out, "# Results without and with T3\n");
    let _ = writeln!(
        out,
        "Bold marks the larger mean of each pair. `*` marks a model whose Welch p-value is below {} on {rule}. \
         Rows where T3 wins every metric are marked in the last column. \
         ROUGE and BLEU are shown x100.\n",
        table.alpha
    );
    for dataset in &datasets {
        let _ = writeln!(out, "## {dataset}\n");
        let mut header = String::from("| Model |");
        let mut rule_line = String::from("|---|");
        for m in &columns {
            let _ = write!(header, " {} w/o | T3 |", m.label());
            rule_line.push_str("---:|---:|");
        }
        header.push_str(" T3 wins all |");
        rule_line.push_str(":---:|");
        let _ = writeln!(out, "{header}\n{rule_line}");
        for row in table.rows.iter().filter(|r| r.dataset == *dataset) {
            let star = if row.starred { "*" } else { "" };
            let _ = write!(out, "| {}{star} |", row.model);
            for m in &columns {
                match row.get(*m) {
                    Some(c) => {
                        let wo = format!("{:.2}", c.mean_without * m.display_scale());
                        let t3 = format!("{:.2}", c.mean_t3 * m.display_scale());
                        let (wo, t3) = match c.winner {
                            Winner::Without => (format!("**{wo}**"), t3),
                            Winner::T3 => (wo, format!("**{t3}**")),
                            Winner::Tie => (wo, t3),
                        };
                        let _ = write!(out, " {wo} | {t3} |");
                    }
                    None => out.push_str(" - | - |"),
                }
            }
            let _ = writeln!(out, " {} |", if row.highlighted { "yes" } else { "" });
        }
        out.push('\n');
    }
    let _ = writeln!(out, "## p-values\n");
    let mut header = String::from("| Model | Dataset |");
    let mut rule_line = String::from("|---|---|");
    for m in &columns {
        let _ = write!(header, " {} |", m.label());
        rule_line.push_str("---:|");
    }
    let _ = writeln!(out, "{header}\n{rule_line}");
    for row in &table.rows {
        let star = if row.starred { "*" } else { "" };
        let _ = write!(out, "| {}{star} | {} |", row.model, row.dataset);
        for m in &columns {
            match row.get(*m).and_then(MetricComparison::p) {
                Some(p) => {
                    let _ = write!(out, " {p:.4} |");
                }
                None => out.push_str(" - |"),
            }
        }
        out.push('\n');
    }
    out
}

fn render_csv(table: &SignificanceTable) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["model".to_string(), "dataset".into(), "starred".into(), "highlighted".into()];
    for m in Metric::ALL {
        header.push(format!("{}_without", m.key()));
        header.push(format!("{}_t3", m.key()));
        header.push(format!("{}_p", m.key()));
    }
    w.write_record(&header).expect("in-memory csv");
    for row in &table.rows {
        let mut rec = vec![row.model.clone(), row.dataset.clone(), row.starred.to_string(), row.highlighted.to_string()];
        for m in Metric::ALL {
            match row.get(m) {
                Some(c) => {
                    rec.push(c.mean_without.to_string());
                    rec.push(c.mean_t3.to_string());
                    rec.push(c.p().map(|p| p.to_string()).unwrap_or_default());
                }
                None => rec.extend([String::new(), String::new(), String::new()]),
            }
        }
        w.write_record(&rec).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv output is utf-8")
}
