//! One function per subcommand. Each returns its in-memory result as well as
//! writing its output files, so the pipeline can be driven without the binary.

use std::path::{Path, PathBuf};

use exactct_core::biomarkers::FeatureVector;
use exactct_core::ml::{
    auc, confusion_metrics, predict_score, roc_curve, roc_curve_oriented, train, youden_threshold, Dataset, Metrics,
    Model, ModelKind, ModelSnapshot,
};
use exactct_core::shap::{explain_shap, summarize, ShapSummary};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Config;
use crate::error::{CliError, Result};
use crate::extract::{extract_case, Findings};
use crate::manifest::{CaseManifest, LoadedCase};
use crate::render::{write_bundle, OverlayManifest};
use crate::synth::generate_cohort;
use crate::table::{
    join, read_labels, write_features, write_model_report, write_shap, write_threshold_report, FeatureTable, Split,
    ThresholdRow,
};

pub fn cmd_synth(cfg: &Config, out: &Path) -> Result<Vec<PathBuf>> {
    let paths = generate_cohort(&cfg.synth, cfg.seed, out)?;
    log::info!("wrote {} synthetic cases to {}", paths.len(), out.display());
    Ok(paths)
}

/// Expand a `.txt` list (one manifest per line, relative to the list) or
/// pass a single manifest through.
pub fn manifest_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.extension().is_some_and(|e| e == "txt") {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            let base = p.parent().unwrap_or(Path::new("."));
            out.extend(
                text.lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty() && !l.starts_with('#'))
                    .map(|l| base.join(l)),
            );
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(CliError::Invalid("no case manifests given".into()));
    }
    Ok(out)
}

fn case_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add(index as u64)
}

fn load_and_extract(path: &Path, cfg: &Config, index: usize) -> Result<(LoadedCase, Findings)> {
    let case = LoadedCase::load(CaseManifest::load(path)?)?;
    let f = extract_case(&case, &cfg.extract, case_seed(cfg.seed, index))?;
    Ok((case, f))
}

/// Extract features for every case, in input order.
pub fn cmd_extract(cfg: &Config, inputs: &[PathBuf], out: &Path) -> Result<Vec<FeatureVector>> {
    let paths = manifest_paths(inputs)?;
    let rows = paths
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let (_, f) = load_and_extract(p, cfg, i)?;
            log::debug!("extracted {}", f.features.case_id);
            Ok(f.features)
        })
        .collect::<Result<Vec<_>>>()?;
    write_features(out, &rows)?;
    log::info!("wrote {} feature rows to {}", rows.len(), out.display());
    Ok(rows)
}

fn column(d: &Dataset, j: usize) -> Vec<f64> {
    d.x.iter().map(|r| r[j]).collect()
}

/// Per-feature Youden cut-offs chosen on the training rows and scored on the
/// test rows.
pub fn cmd_thresholds(features: &Path, labels: &Path, out: &Path) -> Result<Vec<ThresholdRow>> {
    let table = FeatureTable::read(features)?;
    let cohort = join(&table, &read_labels(labels)?)?;
    let mut rows = Vec::with_capacity(table.names.len());
    for (j, name) in table.names.iter().enumerate() {
        let train_scores = column(&cohort.train, j);
        let curve = roc_curve(&train_scores, &cohort.train.y)?;
        let y = youden_threshold(&curve);
        let test_scores = column(&cohort.test, j);
        let pred: Vec<bool> = test_scores.iter().map(|&s| curve.predict(s, y.threshold)).collect();
        let mut metrics = confusion_metrics(&pred, &cohort.test.y)?;
        metrics.auc = roc_curve_oriented(&test_scores, &cohort.test.y, curve.flipped)
            .ok()
            .map(|c| auc(&c));
        rows.push(ThresholdRow {
            feature: name.clone(),
            auc: metrics.auc,
            threshold: y.threshold,
            flipped: curve.flipped,
            j: y.j,
            metrics,
        });
    }
    write_threshold_report(out, &rows)?;
    Ok(rows)
}

pub fn evaluate(model: &Model, data: &Dataset) -> Result<Metrics> {
    let pred = data.x.iter().map(|r| model.predict(r)).collect::<std::result::Result<Vec<_>, _>>()?;
    let mut m = confusion_metrics(&pred, &data.y)?;
    let scores = predict_score(model, &data.x)?;
    m.auc = roc_curve_oriented(&scores, &data.y, false).ok().map(|c| auc(&c));
    Ok(m)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub snapshot: ModelSnapshot,
    /// `("<kind>/train", …)` then `("<kind>/test", …)`.
    pub report: Vec<(String, Metrics)>,
}

pub fn cmd_train(
    cfg: &Config,
    kind: &str,
    features: &Path,
    labels: &Path,
    model_out: &Path,
    report_out: &Path,
) -> Result<TrainOutcome> {
    let kind: ModelKind = kind.parse().map_err(|_| CliError::UnknownModel(kind.to_string()))?;
    let table = FeatureTable::read(features)?;
    let cohort = join(&table, &read_labels(labels)?)?;
    let model = train(kind, &cohort.train, &cfg.train)?;
    let name = model.name();
    let report = vec![
        (format!("{name}/train"), evaluate(&model, &cohort.train)?),
        (format!("{name}/test"), evaluate(&model, &cohort.test)?),
    ];
    let snapshot = ModelSnapshot::new(table.names.clone(), model);
    std::fs::write(model_out, snapshot.to_json()?).map_err(|e| CliError::io(model_out, e))?;
    write_model_report(report_out, &report)?;
    Ok(TrainOutcome { snapshot, report })
}

pub fn load_snapshot(path: &Path) -> Result<ModelSnapshot> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(ModelSnapshot::from_json(&text)?)
}

#[derive(Debug, Clone, Serialize)]
struct ShapReport<'a> {
    ranking: Vec<&'a str>,
    mean_abs: Vec<(&'a str, f64)>,
}

/// Exact interventional SHAP values for every row of `features`. The
/// background set is `background` when given, otherwise the training rows
/// named by `labels`, otherwise every row.
pub fn cmd_explain(
    model: &Path,
    features: &Path,
    labels: Option<&Path>,
    background: Option<&Path>,
    out: &Path,
) -> Result<ShapSummary> {
    let snap = load_snapshot(model)?;
    let Model::Xgb(ens) = &snap.model else {
        return Err(CliError::Invalid(format!(
            "explanations need an xgb model, got {}",
            snap.model.name()
        )));
    };
    let table = FeatureTable::read(features)?;
    snap.check_features(&table.names)?;
    let bg: Vec<Vec<f64>> = match (background, labels) {
        (Some(p), _) => {
            let t = FeatureTable::read(p)?;
            snap.check_features(&t.names)?;
            t.rows
        }
        (None, Some(l)) => {
            let labels = read_labels(l)?;
            let train: std::collections::HashSet<&str> = labels
                .iter()
                .filter(|r| r.split != Some(Split::Test))
                .map(|r| r.case_id.as_str())
                .collect();
            table
                .ids
                .iter()
                .zip(&table.rows)
                .filter(|(id, _)| train.contains(id.as_str()))
                .map(|(_, r)| r.clone())
                .collect()
        }
        (None, None) => table.rows.clone(),
    };
    let ex = table
        .rows
        .iter()
        .map(|x| explain_shap(ens, x, &bg))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    write_shap(out, &table.names, &table.ids, &ex)?;
    let summary = summarize(&table.rows, ex)?;
    let report = ShapReport {
        ranking: summary.ranking.iter().map(|&j| table.names[j].as_str()).collect(),
        mean_abs: table.names.iter().map(String::as_str).zip(summary.mean_abs.iter().copied()).collect(),
    };
    let sp = out.with_extension("summary.json");
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::parse(&sp, e))?;
    std::fs::write(&sp, text).map_err(|e| CliError::io(&sp, e))?;
    Ok(summary)
}

/// Extract one case and write its overlay bundle to `out`.
pub fn cmd_render(cfg: &Config, manifest: &Path, out: &Path) -> Result<OverlayManifest> {
    let (case, f) = load_and_extract(manifest, cfg, 0)?;
    write_bundle(&case, &f, cfg.render.window, out)
}
