use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::runlog::read_trial_log;
use super::select::top_k;
use super::{RunConfig, RunError, CONFIG_FILE, TRIALS_FILE};
use crate::strategies::TrialRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// Best trial per run, one row each.
    Table,
    /// Top-k trials per run.
    Csv,
    /// `(flops, ce, label)` for the top-k trials per run.
    ScatterData,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            "scatter-data" => Ok(ReportFormat::ScatterData),
            _ => Err(format!(
                "unknown report format {s:?} (table, csv, scatter-data)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub config: RunConfig,
    pub trials: Vec<TrialRecord>,
}

impl LoadedRun {
    pub fn name(&self) -> String {
        self.dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.dir.display().to_string())
    }
}

pub fn load_run(dir: &Path) -> Result<LoadedRun, RunError> {
    let path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&path).map_err(|e| RunError::io(&path, e))?;
    let config: RunConfig = serde_json::from_str(&text).map_err(|e| RunError::Corrupt {
        path: path.clone(),
        message: e.to_string(),
    })?;
    let log = read_trial_log(&dir.join(TRIALS_FILE))?;
    Ok(LoadedRun {
        dir: dir.to_owned(),
        config,
        trials: log.trials,
    })
}

/// One ranked trial. Percent metrics are absent when the evaluator gave only
/// an objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub run: String,
    pub strategy: String,
    pub rank: usize,
    pub trial_id: u64,
    pub layer_type: String,
    pub fusion: String,
    pub ce: f64,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub flops: u64,
}

impl ReportRow {
    fn from_trial(run: &LoadedRun, rank: usize, t: &TrialRecord) -> Self {
        let m = t.metrics;
        Self {
            run: run.name(),
            strategy: run.config.strategy.name().to_string(),
            rank,
            trial_id: t.trial_id,
            layer_type: t.genotype.layer_type.to_string(),
            fusion: t.genotype.fusion.to_string(),
            ce: m.map_or(t.objective.unwrap_or(f64::NAN), |m| m.cross_entropy),
            accuracy: m.map(|m| m.accuracy),
            precision: m.map(|m| m.precision_macro),
            recall: m.map(|m| m.recall_macro),
            f1: m.map(|m| m.f1_macro),
            flops: t.flops,
        }
    }

    pub fn label(&self) -> String {
        format!("{}/{}", self.layer_type, self.fusion)
    }
}

/// `x` rounded to 6 significant digits, printed in shortest form.
pub fn format_sig(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("own float format parses");
    rounded.to_string()
}

fn rows(runs: &[LoadedRun], k: usize) -> Vec<ReportRow> {
    runs.iter()
        .flat_map(|run| {
            top_k(&run.trials, k)
                .into_iter()
                .enumerate()
                .map(move |(i, t)| ReportRow::from_trial(run, i + 1, &t))
        })
        .collect()
}

const CSV_HEADER: [&str; 12] = [
    "run",
    "strategy",
    "rank",
    "trial_id",
    "layer_type",
    "fusion",
    "ce",
    "accuracy",
    "precision",
    "recall",
    "f1",
    "flops",
];

pub fn render_csv(rows: &[ReportRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    let opt = |x: Option<f64>| x.map(format_sig).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.run.clone(),
            r.strategy.clone(),
            r.rank.to_string(),
            r.trial_id.to_string(),
            r.layer_type.clone(),
            r.fusion.clone(),
            format_sig(r.ce),
            opt(r.accuracy),
            opt(r.precision),
            opt(r.recall),
            opt(r.f1),
            r.flops.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv of utf-8 fields")
}

pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect()
}

/// Rank-1 rows only, in the column layout of the published result tables.
pub fn render_table(rows: &[ReportRow]) -> String {
    let header = [
        "Run",
        "Strategy",
        "Type",
        "Fusion",
        "CE (↓)",
        "Acc (↑)",
        "Pr (↑)",
        "Re (↑)",
        "F1 (↑)",
        "FLOPs·10⁸",
    ];
    let pct = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.2}"));
    let body: Vec<[String; 10]> = rows
        .iter()
        .filter(|r| r.rank == 1)
        .map(|r| {
            [
                r.run.clone(),
                r.strategy.clone(),
                r.layer_type.clone(),
                r.fusion.clone(),
                format!("{:.3}", r.ce),
                pct(r.accuracy),
                pct(r.precision),
                pct(r.recall),
                pct(r.f1),
                format!("{:.3}", r.flops as f64 / 1e8),
            ]
        })
        .collect();
    let mut widths = header.map(|h| h.chars().count());
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &mut dyn Iterator<Item = &str>| {
        let padded: Vec<String> = cells
            .zip(widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        writeln!(out, "| {} |", padded.join(" | ")).expect("write to string");
    };
    line(&mut header.iter().copied());
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(&mut rule.iter().map(String::as_str));
    for row in &body {
        line(&mut row.iter().map(String::as_str));
    }
    out
}

pub fn render_scatter(rows: &[ReportRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["flops", "ce", "label"])
        .expect("in-memory write");
    for r in rows {
        w.write_record([r.flops.to_string(), format_sig(r.ce), r.label()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv of utf-8 fields")
}

pub fn report_runs(runs: &[LoadedRun], format: ReportFormat, k: usize) -> String {
    match format {
        ReportFormat::Table => render_table(&rows(runs, 1)),
        ReportFormat::Csv => render_csv(&rows(runs, k)),
        ReportFormat::ScatterData => render_scatter(&rows(runs, k)),
    }
}

/// Loads every run it can; the rest come back as warnings.
pub fn report(dirs: &[PathBuf], format: ReportFormat, k: usize) -> (String, Vec<String>) {
    let mut runs = Vec::new();
    let mut warnings = Vec::new();
    for dir in dirs {
        match load_run(dir) {
            Ok(run) => runs.push(run),
            Err(e) => {
                log::warn!("skipping {}: {e}", dir.display());
                warnings.push(format!("skipping {}: {e}", dir.display()));
            }
        }
    }
    (report_runs(&runs, format, k), warnings)
}
