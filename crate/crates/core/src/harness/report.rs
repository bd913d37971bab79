//! Metric-vs-human evaluation with overall and grouped breakdowns.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::combine::{TRAINED_COMBINER_NAME, TRAINED_NOTE};
use super::dataset::{aggregate_ratings, rating_agreement, DatasetRecord};
use super::HarnessError;
use crate::stats::{self, PairedSamples};

/// One-tailed significance level for the asterisk flags.
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// Correlations this close to ±1 are pulled inside the open interval before
/// the Fisher transform.
const MAX_ABS_R: f64 = 1.0 - 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupBy {
    None,
    System,
    Domain,
}

impl GroupBy {
    fn key<'a>(&self, r: &'a DatasetRecord) -> Option<&'a str> {
        match self {
            GroupBy::None => None,
            GroupBy::System => Some(&r.system),
            GroupBy::Domain => Some(&r.domain),
        }
    }
}

impl FromStr for GroupBy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(GroupBy::None),
            "system" => Ok(GroupBy::System),
            "domain" => Ok(GroupBy::Domain),
            _ => Err(format!("unknown grouping {s:?} (expected none, system or domain)")),
        }
    }
}

/// Scores of one metric, keyed by record id.
#[derive(Debug, Clone)]
pub struct MetricScores<'a> {
    pub name: String,
    /// Number of references the metric consumed, as displayed (`0`, `1`, `3-5`).
    pub refs: String,
    pub scores: &'a BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub samples: usize,
    /// Population variance of the aggregated ratings in this column.
    pub rating_variance: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    /// `None` when undefined (too few samples or zero variance).
    pub pearson: Option<f64>,
    pub mse: Option<f64>,
    pub pearson_best: bool,
    pub mse_best: bool,
    /// One-tailed p-value against the column's best metric.
    pub pearson_p: Option<f64>,
    pub mse_p: Option<f64>,
    pub pearson_significantly_worse: bool,
    pub mse_significantly_worse: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub refs: String,
    pub overall: Cell,
    pub groups: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub group_by: GroupBy,
    pub total: usize,
    pub overall: Column,
    pub groups: Vec<Column>,
    pub rows: Vec<MetricRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating_agreement: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Default)]
struct Fit {
    pearson: Option<f64>,
    mse: Option<f64>,
    residuals: Option<Vec<f64>>,
}

struct ColumnData {
    column: Column,
    /// One entry per metric.
    fits: Vec<Fit>,
}

fn column(name: &str, members: &[&DatasetRecord], metrics: &[MetricScores<'_>]) -> ColumnData {
    let y: Vec<f64> = members.iter().map(|r| aggregate_ratings(r)).collect();
    let rating_variance = if y.is_empty() { 0.0 } else { stats::variance(&y) };
    let fits = metrics
        .iter()
        .map(|m| {
            let x: Vec<f64> = members.iter().map(|r| m.scores[&r.id]).collect();
            let Ok(samples) = PairedSamples::new(x, y.clone()) else {
                return Fit::default();
            };
            let pearson = stats::pearson(&samples).ok();
            let residuals = stats::squared_residuals(&samples).ok();
            let mse = residuals.as_deref().map(stats::mean);
            Fit { pearson, mse, residuals }
        })
        .collect();
    ColumnData { column: Column { name: name.to_string(), samples: members.len(), rating_variance }, fits }
}

fn clamp_r(r: f64) -> f64 {
    r.clamp(-MAX_ABS_R, MAX_ABS_R)
}

/// Marks the best metric in a column and tests every other metric against it.
fn cells(data: &ColumnData) -> Vec<Cell> {
    let n = data.column.samples;
    let mut out: Vec<Cell> =
        data.fits.iter().map(|f| Cell { pearson: f.pearson, mse: f.mse, ..Cell::default() }).collect();

    let best_pearson = data.fits.iter().enumerate().filter_map(|(i, f)| f.pearson.map(|p| (i, p))).fold(
        None,
        |best: Option<(usize, f64)>, (i, p)| match best {
            Some((_, bp)) if bp >= p => best,
            _ => Some((i, p)),
        },
    );
    if let Some((bi, bp)) = best_pearson {
        out[bi].pearson_best = true;
        for (i, cell) in out.iter_mut().enumerate() {
            if i == bi {
                continue;
            }
            if let Some(p) = cell.pearson {
                cell.pearson_p = stats::fisher_z_test(clamp_r(bp), clamp_r(p), n, n).ok();
            }
        }
    }

    let best_mse = data.fits.iter().enumerate().filter_map(|(i, f)| f.mse.map(|m| (i, m))).fold(
        None,
        |best: Option<(usize, f64)>, (i, m)| match best {
            Some((_, bm)) if bm <= m => best,
            _ => Some((i, m)),
        },
    );
    if let Some((bi, _)) = best_mse {
        out[bi].mse_best = true;
        let best_res = data.fits[bi].residuals.as_deref().expect("mse implies residuals");
        for (i, cell) in out.iter_mut().enumerate() {
            if i == bi {
                continue;
            }
            if let Some(res) = data.fits[i].residuals.as_deref() {
                cell.mse_p = stats::two_sample_t_test(best_res, res).ok();
            }
        }
    }

    for cell in &mut out {
        cell.pearson_significantly_worse = cell.pearson_p.is_some_and(|p| p < SIGNIFICANCE_LEVEL);
        cell.mse_significantly_worse = cell.mse_p.is_some_and(|p| p < SIGNIFICANCE_LEVEL);
    }
    out
}

/// Evaluates every metric against the mean human rating of each record.
/// Significance flags compare each metric to the best one in the same column.
/// `records` may be any subset of a dataset; only their ids need scores.
pub fn evaluate(
    metrics: &[MetricScores<'_>],
    records: &[DatasetRecord],
    group_by: GroupBy,
) -> Result<MetricReport, HarnessError> {
    for m in metrics {
        if let Some(r) = records.iter().find(|r| !m.scores.contains_key(&r.id)) {
            return Err(HarnessError::MissingScore { metric: m.name.clone(), id: r.id.clone() });
        }
    }
    let all: Vec<&DatasetRecord> = records.iter().collect();
    let overall = column("overall", &all, metrics);
    let overall_cells = cells(&overall);

    let mut grouped: BTreeMap<&str, Vec<&DatasetRecord>> = BTreeMap::new();
    for r in records {
        if let Some(k) = group_by.key(r) {
            grouped.entry(k).or_default().push(r);
        }
    }
    let group_data: Vec<ColumnData> = grouped.iter().map(|(k, members)| column(k, members, metrics)).collect();
    let group_cells: Vec<Vec<Cell>> = group_data.iter().map(cells).collect();

    let rows = metrics
        .iter()
        .enumerate()
        .map(|(i, m)| MetricRow {
            metric: m.name.clone(),
            refs: m.refs.clone(),
            overall: overall_cells[i].clone(),
            groups: group_cells.iter().map(|c| c[i].clone()).collect(),
        })
        .collect();

    Ok(MetricReport {
        group_by,
        total: records.len(),
        overall: overall.column,
        groups: group_data.into_iter().map(|d| d.column).collect(),
        rows,
        rating_agreement: rating_agreement(records),
        notes: if metrics.iter().any(|m| m.name == TRAINED_COMBINER_NAME) {
            vec![TRAINED_NOTE.to_string()]
        } else {
            Vec::new()
        },
    })
}

fn fmt_value(v: Option<f64>, worse: bool) -> String {
    match v {
        Some(v) => format!("{v:.3}{}", if worse { "*" } else { " " }),
        None => "n/a ".to_string(),
    }
}

impl MetricReport {
    /// Fixed-width text table: metric, refs, then Pearson and MSE columns
    /// (one pair overall, or one per group). `*` marks cells significantly
    /// worse than the column's best metric.
    pub fn render_table(&self) -> String {
        let grouped = self.group_by != GroupBy::None;
        let columns: Vec<&Column> = if grouped { self.groups.iter().collect() } else { vec![&self.overall] };
        let cells_of = |row: &MetricRow| -> Vec<Cell> {
            if grouped {
                row.groups.clone()
            } else {
                vec![row.overall.clone()]
            }
        };

        let mut header: Vec<String> = vec!["metric".into(), "refs".into()];
        let mut samples: Vec<String> = vec!["# samples".into(), String::new()];
        for label in ["Pearson", "MSE"] {
            for c in &columns {
                header.push(if grouped { format!("{label}:{}", c.name) } else { label.to_string() });
                samples.push(c.samples.to_string());
            }
        }
        let mut body: Vec<Vec<String>> = Vec::new();
        for row in &self.rows {
            let cells = cells_of(row);
            let mut line = vec![row.metric.clone(), row.refs.clone()];
            line.extend(cells.iter().map(|c| fmt_value(c.pearson, c.pearson_significantly_worse)));
            line.extend(cells.iter().map(|c| fmt_value(c.mse, c.mse_significantly_worse)));
            body.push(line);
        }

        let mut all_rows = vec![header, samples];
        all_rows.extend(body);
        let widths: Vec<usize> =
            (0..all_rows[0].len()).map(|j| all_rows.iter().map(|r| r[j].chars().count()).max().unwrap_or(0)).collect();

        let mut out = String::new();
        for (i, r) in all_rows.iter().enumerate() {
            let line: Vec<String> = r
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(j, (cell, &w))| if j == 0 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", line.join(" | ").trim_end());
            if i == 1 {
                let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
                let _ = writeln!(out, "{}", rule.join("-+-"));
            }
        }
        let _ = writeln!(
            out,
            "* significantly worse than the best metric in the column (one-tailed p < {SIGNIFICANCE_LEVEL}; Fisher z for Pearson, Welch t for MSE)"
        );
        if let Some(k) = self.rating_agreement {
            let _ = writeln!(out, "rating agreement (quadratic weighted kappa): {k:.3}");
        }
        for note in &self.notes {
            let _ = writeln!(out, "note: {note}");
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// `min-max` (or a single number) of the reference counts in `records`.
pub fn reference_count_label(records: &[DatasetRecord]) -> String {
    let counts: Vec<usize> = records.iter().map(|r| r.references.len()).collect();
    match (counts.iter().min(), counts.iter().max()) {
        (Some(lo), Some(hi)) if lo != hi => format!("{lo}-{hi}"),
        (Some(lo), _) => lo.to_string(),
        _ => "0".to_string(),
    }
}

/// Ratings lookup keyed by id; handy for callers building targets.
pub fn ratings_by_id(records: &[DatasetRecord]) -> HashMap<String, f64> {
    records.iter().map(|r| (r.id.clone(), aggregate_ratings(r))).collect()
}
