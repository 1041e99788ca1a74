//! Training logs, feature tables and JSON reports.

use std::fs;
use std::path::Path;

use metsk_core::domsim::TransportPlan;
use metsk_core::meta::{IterRecord, StrategyReport};
use metsk_core::numerics::Tensor;
use metsk_core::probe::{ProbeReport, ZeroShotFeatures};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model_io::format_f64;

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), format_f64)
}

/// One line per iteration: `iter phase L_S L_T_inner_last L_T_val`, tab
/// separated. Terms that do not apply are written as `nan`.
pub fn training_log(history: &[IterRecord]) -> String {
    history
        .iter()
        .map(|r| {
            format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.iter,
                r.phase.name(),
                opt(r.source_loss),
                opt(r.inner_last),
                opt(r.target_val)
            )
        })
        .collect()
}

/// Header `subject_id,r<roi>_c<channel>...` then one row per subject.
pub fn features_csv(features: &ZeroShotFeatures) -> String {
    let (p, c) = features.matrix_shape();
    let mut out = String::from("subject_id");
    for r in 0..p {
        for ch in 0..c {
            out.push_str(&format!(",r{r}_c{ch}"));
        }
    }
    out.push('\n');
    for (id, m) in features.subject_ids.iter().zip(&features.matrices) {
        out.push_str(id);
        for v in m.data() {
            out.push(',');
            out.push_str(&format_f64(*v));
        }
        out.push('\n');
    }
    out
}

/// Feature table read back from [`features_csv`] output.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub subject_ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// ROI of each column, from the `r<roi>_c<channel>` header names.
    pub roi_of_column: Vec<usize>,
}

impl FeatureTable {
    pub fn parcels(&self) -> usize {
        self.roi_of_column.iter().copied().max().map_or(0, |m| m + 1)
    }

    /// Per-subject `P x C` matrices, assuming the column order written by
    /// [`features_csv`].
    pub fn matrices(&self) -> Result<Vec<Tensor>> {
        let p = self.parcels();
        let c = self.roi_of_column.len() / p.max(1);
        self.rows.iter().map(|r| Ok(Tensor::new(&[p, c], r.clone())?)).collect()
    }
}

pub fn read_features(path: &Path) -> Result<FeatureTable> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::parse(path, 1, e.to_string()))?.clone();
    if header.get(0) != Some("subject_id") || header.len() < 2 {
        return Err(Error::parse(path, 1, "header must start with `subject_id` and name at least one feature"));
    }
    let roi_of_column = header
        .iter()
        .skip(1)
        .map(|name| {
            name.strip_prefix('r')
                .and_then(|s| s.split_once("_c"))
                .and_then(|(r, _)| r.parse::<usize>().ok())
                .ok_or_else(|| Error::parse(path, 1, format!("feature name `{name}` is not r<roi>_c<channel>")))
        })
        .collect::<Result<Vec<usize>>>()?;
    let mut subject_ids = Vec::new();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(path, e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        subject_ids.push(record[0].to_string());
        rows.push(
            record
                .iter()
                .skip(1)
                .map(|s| s.parse::<f64>().map_err(|_| Error::parse(path, line, format!("bad value `{s}`"))))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    if rows.is_empty() {
        return Err(Error::invalid(path, "no subjects"));
    }
    Ok(FeatureTable { subject_ids, rows, roi_of_column })
}

#[derive(Debug, Serialize)]
struct FoldJson {
    repeat: usize,
    fold: usize,
    auc: f64,
    acc: f64,
}

#[derive(Debug, Serialize)]
struct ProbeJson<'a> {
    classifier: &'a str,
    folds: usize,
    repeats: usize,
    auc_mean: f64,
    auc_std: f64,
    acc_mean: f64,
    acc_std: f64,
    per_fold: Vec<FoldJson>,
}

pub fn probe_report_json(report: &ProbeReport) -> Result<String> {
    let j = ProbeJson {
        classifier: report.classifier,
        folds: report.folds,
        repeats: report.repeats,
        auc_mean: report.auc_mean,
        auc_std: report.auc_std,
        acc_mean: report.acc_mean,
        acc_std: report.acc_std,
        per_fold: report.per_fold.iter().map(|f| FoldJson { repeat: f.repeat, fold: f.fold, auc: f.auc, acc: f.acc }).collect(),
    };
    Ok(serde_json::to_string_pretty(&j)? + "\n")
}

/// `roi_index,importance` rows.
pub fn importance_csv(importance: &[f64]) -> String {
    let mut out = String::from("roi_index,importance\n");
    for (i, v) in importance.iter().enumerate() {
        out.push_str(&format!("{i},{}\n", format_f64(*v)));
    }
    out
}

#[derive(Debug, Serialize)]
struct DomsimJson {
    emd: f64,
    ds: f64,
    gamma: f64,
    bins: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    flow: Option<Vec<Vec<f64>>>,
}

pub fn domsim_report_json(plan: &TransportPlan, ds: f64, gamma: f64, bins: usize, with_flow: bool) -> Result<String> {
    let flow = with_flow.then(|| plan.flow.chunks(plan.cols).map(<[f64]>::to_vec).collect());
    Ok(serde_json::to_string_pretty(&DomsimJson { emd: plan.cost, ds, gamma, bins, flow })? + "\n")
}

#[derive(Debug, Serialize)]
struct SeedJson {
    seed: u64,
    auc_mean: f64,
    auc_std: f64,
    acc_mean: f64,
}

#[derive(Debug, Serialize)]
struct RowJson {
    strategy: &'static str,
    auc_mean: f64,
    auc_std: f64,
    acc_mean: f64,
    acc_std: f64,
    per_seed: Vec<SeedJson>,
}

#[derive(Debug, Serialize)]
struct EvalJson {
    folds: usize,
    seeds: Vec<u64>,
    rows: Vec<RowJson>,
}

/// Strategy comparison table. `results[i]` holds one report per seed for
/// strategy `i`; the row mean and std are taken over per-seed mean AUCs.
pub fn eval_table_json(folds: usize, seeds: &[u64], results: &[Vec<StrategyReport>]) -> Result<String> {
    let rows = results
        .iter()
        .filter(|r| !r.is_empty())
        .map(|reports| {
            let aucs: Vec<f64> = reports.iter().map(|r| r.auc_mean).collect();
            let accs: Vec<f64> = reports.iter().map(|r| r.acc_mean).collect();
            let (auc_mean, auc_std) = metsk_core::probe::mean_std(&aucs);
            let (acc_mean, acc_std) = metsk_core::probe::mean_std(&accs);
            RowJson {
                strategy: reports[0].strategy.name(),
                auc_mean,
                auc_std,
                acc_mean,
                acc_std,
                per_seed: reports
                    .iter()
                    .zip(seeds)
                    .map(|(r, &seed)| SeedJson { seed, auc_mean: r.auc_mean, auc_std: r.auc_std, acc_mean: r.acc_mean })
                    .collect(),
            }
        })
        .collect();
    Ok(serde_json::to_string_pretty(&EvalJson { folds, seeds: seeds.to_vec(), rows })? + "\n")
}
