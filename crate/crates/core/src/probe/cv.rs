use alloc::format;
use alloc::vec::Vec;

use super::metrics::{accuracy, auc, complement, mean_std, stratified_folds};
use super::mlp::{train_mlp, MlpConfig};
use super::pca::{default_components, Pca, Standardizer};
use super::svm::train_linear_svm;
use crate::error::{Error, Result};
use crate::rng::{derive, seeded};

#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Svm { c: f64, iters: usize },
    Mlp(MlpConfig),
}

impl Classifier {
    pub fn name(&self) -> &'static str {
        match self {
            Classifier::Svm { .. } => "svm",
            Classifier::Mlp(_) => "mlp",
        }
    }

    pub fn svm() -> Self {
        Classifier::Svm { c: 1.0, iters: 2000 }
    }
}

/// Probe pipeline: optional z-scoring, PCA fitted on each training fold,
/// then the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSpec {
    pub classifier: Classifier,
    pub folds: usize,
    pub repeats: usize,
    /// `Some(0)` disables PCA; `None` uses `min(N_train - 1, 16)`.
    pub pca_components: Option<usize>,
    pub standardize: bool,
    pub seed: u64,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        ProbeSpec { classifier: Classifier::svm(), folds: 5, repeats: 1, pca_components: None, standardize: true, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeFold {
    pub repeat: usize,
    pub fold: usize,
    pub auc: f64,
    pub acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub classifier: &'static str,
    pub folds: usize,
    pub repeats: usize,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub per_fold: Vec<ProbeFold>,
}

/// Fits the pipeline on `(x_train, y_train)` and scores `x_test`; higher
/// scores mean class 1.
pub fn fit_and_score(spec: &ProbeSpec, x_train: &[Vec<f64>], y_train: &[u8], x_test: &[Vec<f64>], seed: u64) -> Result<Vec<f64>> {
    let (mut tr, mut te) = (x_train.to_vec(), x_test.to_vec());
    if spec.standardize {
        let s = Standardizer::fit(&tr)?;
        tr = s.transform(&tr);
        te = s.transform(&te);
    }
    let k = match spec.pca_components {
        Some(0) => 0,
        Some(k) => k.min(tr.len().saturating_sub(1)).min(tr[0].len()),
        None => default_components(tr.len()).min(tr[0].len()),
    };
    if k > 0 {
        let pca = Pca::fit(&tr, k)?;
        tr = pca.transform(&tr)?;
        te = pca.transform(&te)?;
    }
    match &spec.classifier {
        Classifier::Svm { c, iters } => {
            let svm = train_linear_svm(&tr, y_train, *c, *iters)?;
            Ok(te.iter().map(|r| svm.decision(r)).collect())
        }
        Classifier::Mlp(cfg) => train_mlp(&tr, y_train, &MlpConfig { seed, ..cfg.clone() })?.scores(&te),
    }
}

/// Stratified `folds`-fold cross-validation, repeated with derived seeds.
pub fn evaluate_cv(x: &[Vec<f64>], labels: &[u8], spec: &ProbeSpec) -> Result<ProbeReport> {
    if x.len() != labels.len() || x.is_empty() {
        return Err(Error::shape("evaluate_cv", format!("{} rows for {} labels", x.len(), labels.len())));
    }
    if spec.repeats == 0 {
        return Err(Error::invalid("repeats", "must be at least 1"));
    }
    let threshold = match spec.classifier {
        Classifier::Svm { .. } => 0.0,
        Classifier::Mlp(_) => 0.5,
    };
    let mut per_fold = Vec::with_capacity(spec.folds * spec.repeats);
    for repeat in 0..spec.repeats {
        let rs = derive(spec.seed, repeat as u64);
        let folds = stratified_folds(labels, spec.folds, &mut seeded(rs))?;
        for (f, test) in folds.iter().enumerate() {
            let train = complement(labels.len(), test);
            let pick = |idx: &[usize]| idx.iter().map(|&i| x[i].clone()).collect::<Vec<_>>();
            let y_train: Vec<u8> = train.iter().map(|&i| labels[i]).collect();
            let y_test: Vec<u8> = test.iter().map(|&i| labels[i]).collect();
            let scores = fit_and_score(spec, &pick(&train), &y_train, &pick(test), derive(rs, f as u64))?;
            let predicted: Vec<u8> = scores.iter().map(|&s| u8::from(s > threshold)).collect();
            per_fold.push(ProbeFold { repeat, fold: f, auc: auc(&scores, &y_test)?, acc: accuracy(&predicted, &y_test)? });
        }
    }
    let (auc_mean, auc_std) = mean_std(&per_fold.iter().map(|p| p.auc).collect::<Vec<_>>());
    let (acc_mean, acc_std) = mean_std(&per_fold.iter().map(|p| p.acc).collect::<Vec<_>>());
    Ok(ProbeReport {
        classifier: spec.classifier.name(),
        folds: spec.folds,
        repeats: spec.repeats,
        auc_mean,
        auc_std,
        acc_mean,
        acc_std,
        per_fold,
    })
}
