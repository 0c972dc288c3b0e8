//! CSV formats: features, labels, metric reports and Shapley values.

use std::collections::HashMap;
use std::path::Path;

use exactct_core::biomarkers::{FeatureVector, FEATURE_NAMES};
use exactct_core::ml::{Dataset, Metrics};
use exactct_core::shap::ShapExplanation;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Shortest decimal form that parses back to the same `f64` (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| CliError::parse(path, e))
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::Reader::from_path(path).map_err(|e| CliError::parse(path, e))
}

fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| CliError::parse(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| CliError::parse(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn feature_header() -> Vec<String> {
    std::iter::once("case_id").chain(FEATURE_NAMES).map(String::from).collect()
}

pub fn write_features(path: &Path, rows: &[FeatureVector]) -> Result<()> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|f| std::iter::once(f.case_id.clone()).chain(f.values().iter().map(|&v| fmt_f64(v))).collect())
        .collect();
    write_rows(path, &feature_header(), &body)
}

/// Any `case_id,<feature>...` table.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = reader(path)?;
        let header = r.headers().map_err(|e| CliError::parse(path, e))?.clone();
        if header.get(0) != Some("case_id") {
            return Err(CliError::parse(path, "first column must be case_id"));
        }
        let names: Vec<String> = header.iter().skip(1).map(String::from).collect();
        let (mut ids, mut rows) = (Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec.map_err(|e| CliError::parse(path, e))?;
            ids.push(rec[0].to_string());
            let vals = rec
                .iter()
                .skip(1)
                .map(|s| s.trim().parse::<f64>().map_err(|e| CliError::parse(path, format!("{s:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(vals);
        }
        Ok(Self { names, ids, rows })
    }

    pub fn to_feature_vectors(&self) -> Result<Vec<FeatureVector>> {
        if self.names != feature_header()[1..] {
            return Err(CliError::Invalid("table does not carry the canonical feature columns".into()));
        }
        self.ids
            .iter()
            .zip(&self.rows)
            .map(|(id, r)| Ok(FeatureVector::from_values(id.as_str(), r)?))
            .collect()
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| CliError::Invalid(format!("no feature column `{name}`")))?;
        Ok(self.rows.iter().map(|r| r[j]).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelRow {
    pub case_id: String,
    pub label: bool,
    pub split: Option<Split>,
}

fn parse_label(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "cd" | "true" => Some(true),
        "0" | "itb" | "false" => Some(false),
        _ => None,
    }
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRow>> {
    let mut r = reader(path)?;
    let header = r.headers().map_err(|e| CliError::parse(path, e))?.clone();
    if header.get(0) != Some("case_id") || header.get(1) != Some("label") {
        return Err(CliError::parse(path, "expected header case_id,label[,split]"));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::parse(path, e))?;
        let label = parse_label(&rec[1]).ok_or_else(|| CliError::parse(path, format!("bad label {:?}", &rec[1])))?;
        let split = match rec.get(2).map(str::trim) {
            None | Some("") => None,
            Some(s) if s.eq_ignore_ascii_case("train") => Some(Split::Train),
            Some(s) if s.eq_ignore_ascii_case("test") => Some(Split::Test),
            Some(s) => return Err(CliError::parse(path, format!("bad split {s:?}"))),
        };
        out.push(LabelRow { case_id: rec[0].to_string(), label, split });
    }
    Ok(out)
}

pub fn write_labels(path: &Path, rows: &[LabelRow]) -> Result<()> {
    let header = ["case_id", "label", "split"].map(String::from);
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let split = match r.split {
                Some(Split::Train) => "train",
                Some(Split::Test) => "test",
                None => "",
            };
            vec![r.case_id.clone(), if r.label { "1" } else { "0" }.into(), split.into()]
        })
        .collect();
    write_rows(path, &header, &body)
}

/// Features joined with labels and split into train and test rows. Without a
/// split column every row is used for both.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub train: Dataset,
    pub test: Dataset,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub has_split: bool,
}

pub fn join(table: &FeatureTable, labels: &[LabelRow]) -> Result<Cohort> {
    let by_id: HashMap<&str, &LabelRow> = labels.iter().map(|l| (l.case_id.as_str(), l)).collect();
    let has_split = labels.iter().any(|l| l.split.is_some());
    let (mut trx, mut try_, mut tri) = (Vec::new(), Vec::new(), Vec::new());
    let (mut tex, mut tey, mut tei) = (Vec::new(), Vec::new(), Vec::new());
    for (id, row) in table.ids.iter().zip(&table.rows) {
        let l = by_id
            .get(id.as_str())
            .ok_or_else(|| CliError::Invalid(format!("no label for case {id}")))?;
        if l.split != Some(Split::Test) {
            trx.push(row.clone());
            try_.push(l.label);
            tri.push(id.clone());
        }
        if l.split != Some(Split::Train) {
            tex.push(row.clone());
            tey.push(l.label);
            tei.push(id.clone());
        }
    }
    Ok(Cohort {
        train: Dataset::new(table.names.clone(), trx, try_)?,
        test: Dataset::new(table.names.clone(), tex, tey)?,
        train_ids: tri,
        test_ids: tei,
        has_split,
    })
}

pub const THRESHOLD_COLUMNS: [&str; 7] = [
    "AUC",
    "Threshold",
    "Specificity",
    "Sensitivity",
    "MCC",
    "Accuracy",
    "Balanced Accuracy",
];

pub const MODEL_COLUMNS: [&str; 8] = [
    "Accuracy",
    "Balanced Accuracy",
    "Recall",
    "Specificity",
    "PPV",
    "F1",
    "MCC",
    "AUC",
];

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdRow {
    pub feature: String,
    pub auc: Option<f64>,
    pub threshold: f64,
    /// Training ROC was flipped: lower values indicate the positive class.
    pub flipped: bool,
    pub j: f64,
    pub metrics: Metrics,
}

pub fn write_threshold_report(path: &Path, rows: &[ThresholdRow]) -> Result<()> {
    let header: Vec<String> = std::iter::once("Feature").chain(THRESHOLD_COLUMNS).map(String::from).collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let m = &r.metrics;
            vec![
                r.feature.clone(),
                fmt_opt(r.auc),
                format!("{:.4}", r.threshold),
                format!("{:.4}", m.specificity),
                format!("{:.4}", m.recall),
                format!("{:.4}", m.mcc),
                format!("{:.4}", m.accuracy),
                format!("{:.4}", m.balanced_accuracy),
            ]
        })
        .collect();
    write_rows(path, &header, &body)
}

pub fn write_model_report(path: &Path, rows: &[(String, Metrics)]) -> Result<()> {
    let header: Vec<String> = std::iter::once("Model").chain(MODEL_COLUMNS).map(String::from).collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, m)| {
            vec![
                name.clone(),
                format!("{:.4}", m.accuracy),
                format!("{:.4}", m.balanced_accuracy),
                format!("{:.4}", m.recall),
                format!("{:.4}", m.specificity),
                format!("{:.4}", m.ppv),
                format!("{:.4}", m.f1),
                format!("{:.4}", m.mcc),
                fmt_opt(m.auc),
            ]
        })
        .collect();
    write_rows(path, &header, &body)
}

pub fn write_shap(path: &Path, names: &[String], ids: &[String], ex: &[ShapExplanation]) -> Result<()> {
    let header: Vec<String> = ["case_id".to_string(), "phi0".to_string()]
        .into_iter()
        .chain(names.iter().map(|n| format!("phi_{n}")))
        .chain(std::iter::once("margin".to_string()))
        .collect();
    let body: Vec<Vec<String>> = ids
        .iter()
        .zip(ex)
        .map(|(id, e)| {
            std::iter::once(id.clone())
                .chain(std::iter::once(fmt_f64(e.phi0)))
                .chain(e.phi.iter().map(|&v| fmt_f64(v)))
                .chain(std::iter::once(fmt_f64(e.fx)))
                .collect()
        })
        .collect();
    write_rows(path, &header, &body)
}
