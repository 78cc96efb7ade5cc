use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::format_number;
use crate::metrics::MetricKind;
use crate::predict::{KindSummary, MetricSet, PredictionReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

/// One exported report row. Metric cells are mean and SD of the per-point
/// contributions in the report's headline mode; `None` for failed reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub index: usize,
    pub speed: f64,
    pub kind: String,
    pub rmse_mean: Option<f64>,
    pub rmse_sd: Option<f64>,
    pub mape_mean: Option<f64>,
    pub mape_sd: Option<f64>,
    pub ortho_mean: Option<f64>,
    pub ortho_sd: Option<f64>,
    pub status: String,
    pub flags: String,
}

impl ReportRow {
    pub fn from_report(r: &PredictionReport) -> Self {
        let cell = |kind: MetricKind| {
            r.headline().map(|e| {
                let s = e.summary(kind);
                (s.mean, s.sd)
            })
        };
        let rmse = cell(MetricKind::Rmse);
        let mape = cell(MetricKind::Mape);
        let ortho = cell(MetricKind::Ortho);
        Self {
            index: r.index,
            speed: r.target_speed,
            kind: r.kind.label().to_string(),
            rmse_mean: rmse.map(|c| c.0),
            rmse_sd: rmse.map(|c| c.1),
            mape_mean: mape.map(|c| c.0),
            mape_sd: mape.map(|c| c.1),
            ortho_mean: ortho.map(|c| c.0),
            ortho_sd: ortho.map(|c| c.1),
            status: r.status.label().to_string(),
            flags: r.flags.tokens(),
        }
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(format_number).unwrap_or_default()
}

fn csv_text(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
}

fn json_text<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

const REPORT_COLUMNS: [&str; 11] = [
    "index",
    "speed",
    "kind",
    "rmse_mean",
    "rmse_sd",
    "mape_mean",
    "mape_sd",
    "ortho_mean",
    "ortho_sd",
    "status",
    "flags",
];

/// One row per report in fixed column order. Failed reports keep their row
/// with empty metric cells (CSV) or nulls (JSON).
pub fn export_report(reports: &[PredictionReport], format: ReportFormat) -> String {
    let rows: Vec<ReportRow> = reports.iter().map(ReportRow::from_report).collect();
    match format {
        ReportFormat::Json => json_text(&rows),
        ReportFormat::Csv => csv_text(
            &REPORT_COLUMNS,
            rows.into_iter().map(|r| {
                vec![
                    r.index.to_string(),
                    format_number(r.speed),
                    r.kind,
                    cell(r.rmse_mean),
                    cell(r.rmse_sd),
                    cell(r.mape_mean),
                    cell(r.mape_sd),
                    cell(r.ortho_mean),
                    cell(r.ortho_sd),
                    r.status,
                    r.flags,
                ]
            }),
        ),
    }
}

const SUMMARY_COLUMNS: [&str; 10] = [
    "kind", "scope", "total", "failed", "included", "metric", "mean", "sd", "median", "n",
];

/// Per-kind summary in long form: one row per kind, scope (`all` or
/// `clean`) and metric.
pub fn export_summary(summary: &[KindSummary], format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => json_text(&summary),
        ReportFormat::Csv => {
            let mut rows = Vec::new();
            for s in summary {
                let scopes: [(&str, usize, &MetricSet); 2] = [
                    ("all", s.total - s.failed, &s.all_metrics),
                    ("clean", s.clean, &s.clean_metrics),
                ];
                for (scope, included, set) in scopes {
                    for kind in [MetricKind::Rmse, MetricKind::Mape, MetricKind::ResidualSd, MetricKind::Ortho] {
                        let a = set.get(kind);
                        rows.push(vec![
                            s.kind.label().to_string(),
                            scope.to_string(),
                            s.total.to_string(),
                            s.failed.to_string(),
                            included.to_string(),
                            kind.name().to_string(),
                            format_number(a.mean),
                            format_number(a.sd),
                            format_number(a.median),
                            a.n.to_string(),
                        ]);
                    }
                }
            }
            csv_text(&SUMMARY_COLUMNS, rows.into_iter())
        }
    }
}
