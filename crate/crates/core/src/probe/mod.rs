//! Zero-shot features, PCA, linear probes and cross-validated scoring.

mod cv;
mod features;
mod metrics;
mod mlp;
mod pca;
mod svm;

pub use cv::{evaluate_cv, fit_and_score, Classifier, ProbeFold, ProbeReport, ProbeSpec};
pub use features::{extract_features, ExtractConfig, ZeroShotFeatures};
pub use metrics::{accuracy, auc, complement, mean_std, stratified_folds};
pub use mlp::{train_mlp, Mlp, MlpConfig};
pub use pca::{default_components, pca_reduce, Pca, Standardizer};
pub use svm::{roi_layout, svm_feature_importance, train_linear_svm, LinearSvm};
