//! Bi-level meta-transfer trainer and the comparison strategies.
//!
//! Each outer iteration of `metsk` re-initializes the target head, draws a
//! fresh stratified meta-train / meta-validation split of the target cohort,
//! adapts the target head alone with `k` SGD steps on the meta-train split,
//! and finally takes one Adam step on the extractor and source head against
//! the source loss plus `lambda` times the target loss of the adapted head
//! on the meta-validation split. The adapted head is held fixed in that
//! step (first-order meta-gradient). A warm-up trains on the source loss
//! alone for the first `floor(warmup_fraction * M)` iterations.

mod batches;
mod evaluate;
mod trainer;

use alloc::format;
use alloc::vec::Vec;

pub use batches::{BalancedSampler, Cohort};
pub use evaluate::{cross_validate_strategy, predict_probabilities, FoldOutcome, StrategyReport};
pub use trainer::{
    fit_target_head, inner_loop, outer_gradients, outer_step, source_loss_on_tape, target_loss_on_tape, train,
    train_with_observer, FeaturePool, InnerOutcome, OuterOptimizer, SourceBatch, TargetBatch,
};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::numerics::AdamState;
use crate::rng::Rng;
use crate::stgcn::{ModelConfig, ModelParams};

/// Training strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Warm-up, then bi-level meta-transfer from source to target.
    Metsk,
    /// Supervised training on the target cohort only.
    Baseline,
    /// Source pre-training, then supervised fine-tuning on the target.
    Ft,
    /// Warm-up, then one loop over source loss plus `lambda` target loss.
    Mtl,
    /// Bi-level training on the target only, without source head or loss.
    Mel,
    /// Source pre-training only.
    Ssl,
}

impl Strategy {
    pub const ALL: [Strategy; 6] =
        [Strategy::Metsk, Strategy::Baseline, Strategy::Ft, Strategy::Mtl, Strategy::Mel, Strategy::Ssl];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Metsk => "metsk",
            Strategy::Baseline => "baseline",
            Strategy::Ft => "ft",
            Strategy::Mtl => "mtl",
            Strategy::Mel => "mel",
            Strategy::Ssl => "ssl",
        }
    }

    pub fn parse(s: &str) -> Option<Strategy> {
        Strategy::ALL.into_iter().find(|st| st.name() == s)
    }

    pub fn needs_source(self) -> bool {
        matches!(self, Strategy::Metsk | Strategy::Ft | Strategy::Mtl | Strategy::Ssl)
    }

    pub fn needs_target(self) -> bool {
        matches!(self, Strategy::Metsk | Strategy::Baseline | Strategy::Ft | Strategy::Mtl | Strategy::Mel)
    }

    /// Strategies whose final target head is fitted by the inner-loop
    /// procedure rather than trained jointly.
    pub fn adapts_head_at_end(self) -> bool {
        matches!(self, Strategy::Metsk | Strategy::Mel | Strategy::Ssl)
    }
}

/// What the source head is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceTask {
    /// Graph contrastive loss between two windows of each subject.
    Contrastive,
    /// Cross-entropy on binary source labels through a 2-logit head.
    Supervised,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaConfig {
    /// Inner-loop SGD rate.
    pub alpha: f64,
    /// Outer-loop Adam rate.
    pub beta: f64,
    /// Inner-loop steps per outer iteration.
    pub inner_steps: usize,
    /// Weight of the target loss in the outer objective.
    pub lambda: f64,
    /// Contrastive temperature.
    pub tau: f64,
    /// Total iterations `M`, warm-up included.
    pub outer_iters: usize,
    /// Subjects per batch.
    pub batch_size: usize,
    pub warmup_fraction: f64,
    /// Share of the target cohort held out as meta-validation each
    /// iteration; ignored when `meta_val_count` is set.
    pub meta_val_fraction: f64,
    pub meta_val_count: Option<usize>,
    pub model: ModelConfig,
    /// Window length `L`.
    pub window: usize,
    /// Windows per subject `R` used for voting, feature extraction and the
    /// inner-loop feature pool.
    pub windows_per_subject: usize,
    pub source_task: SourceTask,
    /// Also apply the contrastive loss to the target cohort in `ssl`.
    pub ssl_include_target: bool,
    /// Fine-tune only the target head in `ft`.
    pub ft_freeze_extractor: bool,
    /// Inner-loop steps used to fit the final target head of `metsk`,
    /// `mel` and `ssl`; defaults to `inner_steps`.
    pub final_adapt_steps: Option<usize>,
    pub seed: u64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            alpha: 0.01,
            beta: 0.001,
            inner_steps: 25,
            lambda: 30.0,
            tau: 30.0,
            outer_iters: 200,
            batch_size: 32,
            warmup_fraction: 0.5,
            meta_val_fraction: 0.2,
            meta_val_count: None,
            model: ModelConfig::default(),
            window: 64,
            windows_per_subject: 8,
            source_task: SourceTask::Contrastive,
            ssl_include_target: false,
            ft_freeze_extractor: false,
            final_adapt_steps: None,
            seed: 0,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.alpha) || !pos(self.beta) {
            return Err(Error::invalid("learning rate", format!("alpha {} and beta {} must be > 0", self.alpha, self.beta)));
        }
        if !pos(self.tau) {
            return Err(Error::invalid("tau", format!("{} must be > 0", self.tau)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda", format!("{} must be >= 0", self.lambda)));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::invalid("warmup_fraction", format!("{} not in [0, 1)", self.warmup_fraction)));
        }
        if !(self.meta_val_fraction > 0.0 && self.meta_val_fraction < 1.0) {
            return Err(Error::invalid("meta_val_fraction", format!("{} not in (0, 1)", self.meta_val_fraction)));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid("batch_size", "need at least 2 subjects per batch"));
        }
        if self.window == 0 || self.windows_per_subject == 0 {
            return Err(Error::invalid("windows", "length and count must be positive"));
        }
        self.model.validate()?;
        if self.source_task == SourceTask::Supervised && self.model.source_out != 2 {
            return Err(Error::invalid("source head", "a supervised source task needs source_out = 2"));
        }
        Ok(())
    }

    pub fn warmup_iters(&self) -> usize {
        libm::floor(self.warmup_fraction * self.outer_iters as f64) as usize
    }

    /// `(n_tr, n_val)` for a target cohort of `n` subjects.
    pub fn meta_split_sizes(&self, n: usize) -> (usize, usize) {
        let val = self
            .meta_val_count
            .unwrap_or_else(|| libm::round(self.meta_val_fraction * n as f64) as usize)
            .clamp(2.min(n), n.saturating_sub(2));
        (n - val, val)
    }

    pub fn final_steps(&self) -> usize {
        self.final_adapt_steps.unwrap_or(self.inner_steps)
    }
}

/// Phase of one training iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Source loss only, before meta-training.
    Warmup,
    /// Inner loop plus outer step.
    Meta,
    /// Source pre-training (`ssl`, first half of `ft`).
    Pretrain,
    /// Supervised target training (`baseline`, second half of `ft`).
    Supervised,
    /// Joint source and target step (`mtl`).
    MultiTask,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Warmup => "warmup",
            Phase::Meta => "meta",
            Phase::Pretrain => "pretrain",
            Phase::Supervised => "supervised",
            Phase::MultiTask => "multitask",
        }
    }
}

/// Losses recorded for one iteration; `None` where a term does not apply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub phase: Phase,
    pub source_loss: Option<f64>,
    pub inner_last: Option<f64>,
    pub target_val: Option<f64>,
}

/// Model, optimizer state and history of a run.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: ModelParams,
    pub outer: OuterOptimizer,
    /// Adam state of `theta_t` for strategies that train it jointly.
    pub target_adam: Option<AdamState>,
    pub iteration: usize,
    pub history: Vec<IterRecord>,
    /// Target windows pushed through the model, per iteration.
    pub target_windows_seen: Vec<usize>,
}

/// Parameter fingerprints around one phase of an outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseAudit {
    pub iter: usize,
    pub extractor: (u64, u64),
    pub source_head: (u64, u64),
    pub target_head: (u64, u64),
}

/// Hooks into the training loop, for auditing.
pub trait Observer {
    fn on_split(&mut self, _iter: usize, _train: &[usize], _val: &[usize], _cohort_size: usize) {}
    fn on_inner(&mut self, _audit: PhaseAudit) {}
    fn on_outer(&mut self, _audit: PhaseAudit) {}
}

/// Observer that ignores everything.
pub struct NoObserver;

impl Observer for NoObserver {}

/// Stratified disjoint split of a labeled cohort into `n_tr` meta-train and
/// `n_val` meta-validation subjects, each side holding both classes.
pub fn split_meta(labels: &[u8], n_tr: usize, n_val: usize, rng: &mut Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = labels.len();
    if n_tr + n_val != n {
        return Err(Error::invalid("meta split", format!("{n_tr} + {n_val} != {n} subjects")));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        if l > 1 {
            return Err(Error::invalid("label", format!("{l} not in {{0, 1}}")));
        }
        by_class[usize::from(l)].push(i);
    }
    // Validation quota per class proportional to class size, then repaired
    // so both sides see both classes.
    let n1 = by_class[1].len();
    let mut val1 = libm::round(n_val as f64 * n1 as f64 / n.max(1) as f64) as usize;
    let val_min1 = n_val.saturating_sub(by_class[0].len().saturating_sub(1)).max(1);
    let val_max1 = n1.saturating_sub(1).min(n_val.saturating_sub(1));
    if val_min1 > val_max1 {
        return Err(Error::degenerate(
            "meta split",
            format!("class sizes {} / {n1} cannot fill {n_tr} / {n_val} with both classes on each side", by_class[0].len()),
        ));
    }
    val1 = val1.clamp(val_min1, val_max1);
    let val0 = n_val - val1;
    let mut train = Vec::with_capacity(n_tr);
    let mut val = Vec::with_capacity(n_val);
    for (class, quota) in [(0usize, val0), (1, val1)] {
        let members = &mut by_class[class];
        members.shuffle(rng);
        val.extend_from_slice(&members[..quota]);
        train.extend_from_slice(&members[quota..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}
