use alloc::vec::Vec;

use super::batches::Cohort;
use super::trainer::{train, window_logits};
use super::{MetaConfig, Strategy};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::probe::{accuracy, auc, complement, mean_std, stratified_folds};
use crate::rng::{derive, seeded};
use crate::stgcn::{vote, ModelParams};

const STREAM_PREDICT: u64 = 0x20;
const STREAM_FOLDS: u64 = 0x21;
const STREAM_FOLD_SEED: u64 = 0x22;

/// Voted class probabilities `[p0, p1]` per subject, from
/// `windows_per_subject` windows each. Windows are drawn from a stream
/// derived from `seed` and the subject position, so the result for one
/// subject does not depend on the others.
pub fn predict_probabilities(model: &ModelParams, dataset: &Dataset, config: &MetaConfig, seed: u64) -> Result<Vec<[f64; 2]>> {
    let cohort = Cohort::new(dataset)?;
    (0..cohort.len())
        .map(|s| {
            let mut rng = seeded(derive(derive(seed, STREAM_PREDICT), s as u64));
            let windows = cohort.windows(s, config.window, config.windows_per_subject, &mut rng)?;
            let logits = window_logits(model, &cohort, s, &windows)?;
            Ok(vote(&logits)?.0)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub fold: usize,
    pub auc: f64,
    pub acc: f64,
}

/// Cross-validated scores of one strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyReport {
    pub strategy: Strategy,
    pub per_fold: Vec<FoldOutcome>,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub acc_mean: f64,
    pub acc_std: f64,
}

impl StrategyReport {
    pub fn from_folds(strategy: Strategy, per_fold: Vec<FoldOutcome>) -> Self {
        let (auc_mean, auc_std) = mean_std(&per_fold.iter().map(|f| f.auc).collect::<Vec<_>>());
        let (acc_mean, acc_std) = mean_std(&per_fold.iter().map(|f| f.acc).collect::<Vec<_>>());
        StrategyReport { strategy, per_fold, auc_mean, auc_std, acc_mean, acc_std }
    }
}

/// Stratified `folds`-fold cross-validation of `strategy` on the target
/// cohort. The source cohort, when used, is shared by every fold. Each fold
/// trains with its own seed derived from `config.seed`.
pub fn cross_validate_strategy(
    strategy: Strategy,
    source: Option<&Dataset>,
    target: &Dataset,
    folds: usize,
    config: &MetaConfig,
) -> Result<StrategyReport> {
    let labels = target.labels().ok_or(Error::MissingDataset { strategy: strategy.name(), which: "labeled target" })?;
    let assignment = stratified_folds(&labels, folds, &mut seeded(derive(config.seed, STREAM_FOLDS)))?;
    let mut per_fold = Vec::with_capacity(folds);
    for (f, test_idx) in assignment.iter().enumerate() {
        let train_idx = complement(labels.len(), test_idx);
        let train_set = target.subset(&train_idx);
        let test_set = target.subset(test_idx);
        let cfg = MetaConfig { seed: derive(derive(config.seed, STREAM_FOLD_SEED), f as u64), ..config.clone() };
        let state = train(strategy, source, Some(&train_set), &cfg)?;
        let probs = predict_probabilities(&state.model, &test_set, &cfg, cfg.seed)?;
        let test_labels: Vec<u8> = test_idx.iter().map(|&i| labels[i]).collect();
        let scores: Vec<f64> = probs.iter().map(|p| p[1]).collect();
        let predicted: Vec<u8> = probs.iter().map(|p| u8::from(p[1] > p[0])).collect();
        per_fold.push(FoldOutcome { fold: f, auc: auc(&scores, &test_labels)?, acc: accuracy(&predicted, &test_labels)? });
    }
    Ok(StrategyReport::from_folds(strategy, per_fold))
}
