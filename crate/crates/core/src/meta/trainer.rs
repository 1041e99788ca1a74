use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::batches::{BalancedSampler, Cohort};
use super::{split_meta, IterRecord, MetaConfig, NoObserver, Observer, Phase, PhaseAudit, SourceTask, Strategy, TrainState};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{sgd_step, AdamState, Tape, Tensor, Var};
use crate::objectives::{contrastive_on_tape, cross_entropy_on_tape};
use crate::rng::{derive, seeded, Rng};
use crate::stgcn::{attach, extract, extractor_forward, head_forward, HeadParams, InputBatch, ModelParams};

const STREAM_MODEL: u64 = 0x10;
const STREAM_SOURCE: u64 = 0x11;
const STREAM_TARGET: u64 = 0x12;
const STREAM_SPLIT: u64 = 0x13;
const STREAM_HEAD: u64 = 0x14;
const STREAM_INNER: u64 = 0x15;
const STREAM_FINAL: u64 = 0x16;
const STREAM_SOURCE_TARGET: u64 = 0x17;

/// Windows per extractor pass when filling a feature pool.
const EXTRACT_CHUNK: usize = 32;

fn stream(seed: u64, which: u64, iter: usize) -> Rng {
    seeded(derive(derive(seed, which), iter as u64))
}

/// Adam state of the outer-loop parameters. It is created once per run and
/// carries over from warm-up into meta-training.
#[derive(Debug, Clone)]
pub struct OuterOptimizer {
    pub extractor: AdamState,
    pub source_head: Option<AdamState>,
}

impl OuterOptimizer {
    pub fn new(model: &ModelParams) -> Self {
        OuterOptimizer {
            extractor: AdamState::new(model.extractor.tensors()),
            source_head: model.source_head.as_ref().map(|h| AdamState::new(h.tensors())),
        }
    }
}

/// Inputs of one source-loss term.
#[derive(Debug, Clone)]
pub enum SourceBatch {
    /// `inputs` holds the first window of every subject, then the second
    /// window of every subject in the same order.
    Contrastive { inputs: InputBatch },
    Supervised { inputs: InputBatch, labels: Vec<u8> },
}

impl SourceBatch {
    /// Random subjects of `cohort`, two independent windows each for the
    /// contrastive task or one labeled window for the supervised task.
    pub fn draw(cohort: &Cohort, task: SourceTask, config: &MetaConfig, rng: &mut Rng) -> Result<Self> {
        let subjects = cohort.random_subjects(config.batch_size, rng);
        match task {
            SourceTask::Contrastive => {
                if subjects.len() < 2 {
                    return Err(Error::invalid("contrastive batch", "need at least two subjects"));
                }
                let mut first = Vec::with_capacity(subjects.len());
                let mut second = Vec::with_capacity(subjects.len());
                for &s in &subjects {
                    let mut w = cohort.windows(s, config.window, 2, rng)?;
                    second.push(w.pop().expect("two windows"));
                    first.push(w.pop().expect("two windows"));
                }
                first.extend(second);
                let both: Vec<usize> = subjects.iter().chain(&subjects).copied().collect();
                Ok(SourceBatch::Contrastive { inputs: cohort.assemble(&both, &first)? })
            }
            SourceTask::Supervised => {
                let all = cohort.labels()?;
                let labels = subjects.iter().map(|&s| all[s]).collect();
                Ok(SourceBatch::Supervised { inputs: cohort.batch(&subjects, config.window, rng)?, labels })
            }
        }
    }

    pub fn inputs(&self) -> &InputBatch {
        match self {
            SourceBatch::Contrastive { inputs } | SourceBatch::Supervised { inputs, .. } => inputs,
        }
    }
}

/// Labeled target windows.
#[derive(Debug, Clone)]
pub struct TargetBatch {
    pub inputs: InputBatch,
    pub labels: Vec<u8>,
}

impl TargetBatch {
    pub fn draw(cohort: &Cohort, sampler: &mut BalancedSampler, size: usize, window: usize, rng: &mut Rng) -> Result<Self> {
        let picked = sampler.next_batch(size, rng);
        let subjects: Vec<usize> = picked.iter().map(|p| p.0).collect();
        let labels = picked.iter().map(|p| p.1).collect();
        Ok(TargetBatch { inputs: cohort.batch(&subjects, window, rng)?, labels })
    }
}

/// Source loss through the extractor and source head.
pub fn source_loss_on_tape(tape: &mut Tape, phi: &[Var], theta_s: &[Var], batch: &SourceBatch, tau: f64) -> Result<Var> {
    let inputs = batch.inputs();
    let x = tape.constant(inputs.x.clone());
    let g = tape.constant(inputs.graphs.clone());
    let features = extractor_forward(tape, x, g, phi)?;
    let out = head_forward(tape, features, g, theta_s)?;
    match batch {
        SourceBatch::Contrastive { .. } => {
            let n = inputs.len() / 2;
            let v1 = tape.slice_rows(out, 0, n)?;
            let v2 = tape.slice_rows(out, n, 2 * n)?;
            contrastive_on_tape(tape, v1, v2, tau)
        }
        SourceBatch::Supervised { labels, .. } => cross_entropy_on_tape(tape, out, labels),
    }
}

/// Cross-entropy of the target head on a target batch.
pub fn target_loss_on_tape(tape: &mut Tape, phi: &[Var], theta_t: &[Var], batch: &TargetBatch) -> Result<Var> {
    let x = tape.constant(batch.inputs.x.clone());
    let g = tape.constant(batch.inputs.graphs.clone());
    let features = extractor_forward(tape, x, g, phi)?;
    let logits = head_forward(tape, features, g, theta_t)?;
    cross_entropy_on_tape(tape, logits, &batch.labels)
}

/// Which parameter groups receive gradients.
#[derive(Debug, Clone, Copy)]
struct Trainable {
    phi: bool,
    theta_t: bool,
}

#[derive(Debug, Clone)]
struct Evaluation {
    source_loss: Option<f64>,
    target_loss: Option<f64>,
    phi: Vec<Tensor>,
    theta_s: Option<Vec<Tensor>>,
    theta_t: Option<Vec<Tensor>>,
}

/// `sum(L_S) + weight * L_T` with gradients for the trainable groups. The
/// source head is trainable whenever a source term is present.
fn evaluate(
    model: &ModelParams,
    sources: &[SourceBatch],
    target: Option<&TargetBatch>,
    weight: f64,
    tau: f64,
    trainable: Trainable,
) -> Result<Evaluation> {
    if sources.is_empty() && target.is_none() {
        return Err(Error::invalid("training step", "no loss terms"));
    }
    let mut tape = Tape::new();
    let phi = attach(&mut tape, model.extractor.tensors(), trainable.phi);
    let theta_s = match (sources.is_empty(), &model.source_head) {
        (true, _) => None,
        (false, Some(h)) => Some(attach(&mut tape, h.tensors(), true)),
        (false, None) => return Err(Error::invalid("source loss", "model has no source head")),
    };
    let mut total: Option<Var> = None;
    let mut source_var: Option<Var> = None;
    for batch in sources {
        let l = source_loss_on_tape(&mut tape, &phi, theta_s.as_deref().unwrap_or(&[]), batch, tau)?;
        source_var = Some(match source_var {
            Some(s) => tape.add(s, l)?,
            None => l,
        });
    }
    if let Some(s) = source_var {
        total = Some(s);
    }
    let mut target_var = None;
    let mut theta_t = Vec::new();
    if let Some(batch) = target {
        theta_t = attach(&mut tape, model.target_head.tensors(), trainable.theta_t);
        let l = target_loss_on_tape(&mut tape, &phi, &theta_t, batch)?;
        target_var = Some(l);
        let scaled = tape.scale(l, weight);
        total = Some(match total {
            Some(t) => tape.add(t, scaled)?,
            None => scaled,
        });
    }
    let total = total.expect("at least one term");
    let grads = tape.backward(total)?;
    let collect = |vars: &[Var]| vars.iter().map(|&v| grads.get(v)).collect::<Vec<_>>();
    Ok(Evaluation {
        source_loss: source_var.map(|v| tape.value(v).item()),
        target_loss: target_var.map(|v| tape.value(v).item()),
        phi: collect(&phi),
        theta_s: theta_s.as_deref().map(collect),
        theta_t: (target.is_some() && trainable.theta_t).then(|| collect(&theta_t)),
    })
}

/// Gradients of the outer objective `L_S + lambda * L_T` with respect to
/// the extractor and the source head; the target head enters as a constant.
///
/// Returns `(L_S, L_T, d/d phi, d/d theta_s)`.
pub fn outer_gradients(
    model: &ModelParams,
    source: Option<&SourceBatch>,
    target: Option<&TargetBatch>,
    config: &MetaConfig,
) -> Result<(Option<f64>, Option<f64>, Vec<Tensor>, Option<Vec<Tensor>>)> {
    let sources: Vec<SourceBatch> = source.into_iter().cloned().collect();
    let e = evaluate(model, &sources, target, config.lambda, config.tau, Trainable { phi: true, theta_t: false })?;
    Ok((e.source_loss, e.target_loss, e.phi, e.theta_s))
}

/// One Adam step at rate `beta` on the extractor and source head. The target
/// head is read but never written.
pub fn outer_step(
    model: &mut ModelParams,
    optimizer: &mut OuterOptimizer,
    source: Option<&SourceBatch>,
    target: Option<&TargetBatch>,
    config: &MetaConfig,
) -> Result<(Option<f64>, Option<f64>)> {
    let sources: Vec<SourceBatch> = source.into_iter().cloned().collect();
    outer_step_multi(model, optimizer, &sources, target, config)
}

fn outer_step_multi(
    model: &mut ModelParams,
    optimizer: &mut OuterOptimizer,
    sources: &[SourceBatch],
    target: Option<&TargetBatch>,
    config: &MetaConfig,
) -> Result<(Option<f64>, Option<f64>)> {
    let e = evaluate(model, sources, target, config.lambda, config.tau, Trainable { phi: true, theta_t: false })?;
    optimizer.extractor.step(model.extractor.tensors_mut(), &e.phi, config.beta)?;
    if let Some(g) = &e.theta_s {
        let (head, adam) = match (model.source_head.as_mut(), optimizer.source_head.as_mut()) {
            (Some(h), Some(a)) => (h, a),
            _ => return Err(Error::invalid("outer step", "source head without optimizer state")),
        };
        adam.step(head.tensors_mut(), g, config.beta)?;
    }
    Ok((e.source_loss, e.target_loss))
}

/// Extractor outputs for `R` windows of each listed subject, computed once
/// with the extractor frozen.
#[derive(Debug, Clone)]
pub struct FeaturePool {
    /// Indexed by cohort subject; `None` for subjects outside the pool.
    features: Vec<Option<Vec<Tensor>>>,
    subjects: Vec<usize>,
    labels: Vec<u8>,
    graphs: Vec<Tensor>,
}

impl FeaturePool {
    pub fn build(
        model: &ModelParams,
        cohort: &Cohort,
        subjects: &[usize],
        config: &MetaConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        let labels = cohort.labels()?;
        let r = config.windows_per_subject;
        let mut windows = Vec::with_capacity(subjects.len() * r);
        let mut owners = Vec::with_capacity(subjects.len() * r);
        for &s in subjects {
            windows.extend(cohort.windows(s, config.window, r, rng)?);
            owners.extend(core::iter::repeat_n(s, r));
        }
        let mut features: Vec<Option<Vec<Tensor>>> = vec![None; cohort.len()];
        for (w, o) in windows.chunks(EXTRACT_CHUNK).zip(owners.chunks(EXTRACT_CHUNK)) {
            let batch = cohort.assemble(o, w)?;
            let out = extract(&batch, &model.extractor)?;
            let per = out.len() / o.len();
            let shape = out.shape()[1..].to_vec();
            for (i, &s) in o.iter().enumerate() {
                let t = Tensor::new(&shape, out.data()[i * per..(i + 1) * per].to_vec())?;
                features[s].get_or_insert_with(Vec::new).push(t);
            }
        }
        Ok(FeaturePool { features, subjects: subjects.to_vec(), labels, graphs: cohort.graphs.clone() })
    }

    pub fn windows_built(&self) -> usize {
        self.features.iter().flatten().map(Vec::len).sum()
    }

    fn stack(&self, picks: &[(usize, usize)]) -> Result<(Tensor, Tensor, Vec<u8>)> {
        let feats: Vec<Tensor> = picks
            .iter()
            .map(|&(s, w)| self.features[s].as_ref().expect("pooled subject")[w].clone())
            .collect();
        let graphs: Vec<Tensor> = picks.iter().map(|&(s, _)| self.graphs[s].clone()).collect();
        let labels = picks.iter().map(|&(s, _)| self.labels[s]).collect();
        Ok((Tensor::stack(&feats)?, Tensor::stack(&graphs)?, labels))
    }

    /// Mean cross-entropy of `head` over every pooled window.
    pub fn loss(&self, head: &HeadParams) -> Result<f64> {
        let picks: Vec<(usize, usize)> = self
            .subjects
            .iter()
            .flat_map(|&s| (0..self.features[s].as_ref().map_or(0, Vec::len)).map(move |w| (s, w)))
            .collect();
        let (f, g, labels) = self.stack(&picks)?;
        let mut tape = Tape::new();
        let f = tape.constant(f);
        let g = tape.constant(g);
        let h = attach(&mut tape, head.tensors(), false);
        let logits = head_forward(&mut tape, f, g, &h)?;
        let l = cross_entropy_on_tape(&mut tape, logits, &labels)?;
        Ok(tape.value(l).item())
    }

    /// One SGD step on `head` over class-balanced picks; returns the loss
    /// before the step.
    fn sgd(&self, head: &mut HeadParams, picks: &[(usize, usize)], alpha: f64) -> Result<f64> {
        let (f, g, labels) = self.stack(picks)?;
        let mut tape = Tape::new();
        let f = tape.constant(f);
        let g = tape.constant(g);
        let h = attach(&mut tape, head.tensors(), true);
        let logits = head_forward(&mut tape, f, g, &h)?;
        let l = cross_entropy_on_tape(&mut tape, logits, &labels)?;
        let grads = tape.backward(l)?;
        let gs: Vec<Tensor> = h.iter().map(|&v| grads.get(v)).collect();
        head.set_tensors(sgd_step(head.tensors(), &gs, alpha)?);
        Ok(tape.value(l).item())
    }
}

/// Result of an inner loop.
#[derive(Debug, Clone)]
pub struct InnerOutcome {
    pub head: HeadParams,
    /// Batch loss before each step.
    pub losses: Vec<f64>,
    /// Target windows pushed through the extractor.
    pub windows: usize,
}

/// `config.inner_steps` SGD steps at rate `alpha` on the target head over
/// class-balanced batches of `subjects`, starting from `model.target_head`.
/// The extractor is frozen, so its window features are computed once.
pub fn inner_loop(
    model: &ModelParams,
    cohort: &Cohort,
    subjects: &[usize],
    config: &MetaConfig,
    rng: &mut Rng,
) -> Result<InnerOutcome> {
    let mut head = model.target_head.clone();
    if config.inner_steps == 0 {
        return Ok(InnerOutcome { head, losses: Vec::new(), windows: 0 });
    }
    let labels = cohort.labels()?;
    let mut sampler = BalancedSampler::new(subjects, &labels)?;
    let pool = FeaturePool::build(model, cohort, subjects, config, rng)?;
    let size = config.batch_size.min(subjects.len());
    let r = config.windows_per_subject;
    let mut losses = Vec::with_capacity(config.inner_steps);
    for _ in 0..config.inner_steps {
        let picks: Vec<(usize, usize)> = sampler
            .next_batch(size, rng)
            .into_iter()
            .map(|(s, _)| (s, rand::Rng::random_range(rng, 0..r)))
            .collect();
        losses.push(pool.sgd(&mut head, &picks, config.alpha)?);
    }
    Ok(InnerOutcome { head, losses, windows: pool.windows_built() })
}

fn audit(iter: usize, before: &ModelParams, after: &ModelParams) -> PhaseAudit {
    PhaseAudit {
        iter,
        extractor: (before.fingerprint_extractor(), after.fingerprint_extractor()),
        source_head: (before.fingerprint_source_head(), after.fingerprint_source_head()),
        target_head: (before.fingerprint_target_head(), after.fingerprint_target_head()),
    }
}

fn phase_of(strategy: Strategy, iter: usize, warmup: usize) -> Phase {
    match strategy {
        Strategy::Metsk if iter < warmup => Phase::Warmup,
        Strategy::Metsk | Strategy::Mel => Phase::Meta,
        Strategy::Ssl => Phase::Pretrain,
        Strategy::Ft if iter < warmup => Phase::Pretrain,
        Strategy::Ft | Strategy::Baseline => Phase::Supervised,
        Strategy::Mtl if iter < warmup => Phase::Warmup,
        Strategy::Mtl => Phase::MultiTask,
    }
}

fn require(strategy: Strategy, source: Option<&Dataset>, target: Option<&Dataset>, config: &MetaConfig) -> Result<()> {
    let missing = |which: &'static str| Error::MissingDataset { strategy: strategy.name(), which };
    if strategy.needs_source() && source.is_none() {
        return Err(missing("source"));
    }
    if strategy.needs_target() {
        match target {
            None => return Err(missing("target")),
            Some(t) if !t.is_labeled() => return Err(missing("labeled target")),
            Some(_) => {}
        }
    }
    if strategy == Strategy::Ssl && config.ssl_include_target && target.is_none() {
        return Err(missing("target"));
    }
    if strategy.needs_source() && config.source_task == SourceTask::Supervised {
        if let Some(s) = source {
            if !s.is_labeled() {
                return Err(missing("labeled source"));
            }
        }
    }
    Ok(())
}

/// Runs `strategy` for `config.outer_iters` iterations.
pub fn train(strategy: Strategy, source: Option<&Dataset>, target: Option<&Dataset>, config: &MetaConfig) -> Result<TrainState> {
    train_with_observer(strategy, source, target, config, &mut NoObserver)
}

pub fn train_with_observer(
    strategy: Strategy,
    source: Option<&Dataset>,
    target: Option<&Dataset>,
    config: &MetaConfig,
    observer: &mut dyn Observer,
) -> Result<TrainState> {
    config.validate()?;
    require(strategy, source, target, config)?;
    let seed = config.seed;
    let source_cohort = match source {
        Some(s) if strategy.needs_source() => Some(Cohort::new(s)?),
        _ => None,
    };
    // Built on first use so source-only phases never touch the target.
    let mut target_cohort: Option<Cohort> = None;

    let mut model = ModelParams::init(&config.model, derive(seed, STREAM_MODEL))?;
    if !strategy.needs_source() {
        model.source_head = None;
    }
    let outer = OuterOptimizer::new(&model);
    let target_adam = matches!(strategy, Strategy::Baseline | Strategy::Ft | Strategy::Mtl)
        .then(|| AdamState::new(model.target_head.tensors()));
    let mut state = TrainState { model, outer, target_adam, iteration: 0, history: Vec::new(), target_windows_seen: Vec::new() };
    let warmup = config.warmup_iters();
    let mut full_sampler: Option<BalancedSampler> = None;

    for iter in 0..config.outer_iters {
        let phase = phase_of(strategy, iter, warmup);
        let mut record = IterRecord { iter, phase, source_loss: None, inner_last: None, target_val: None };
        let mut seen = 0usize;
        let uses_target = matches!(phase, Phase::Meta | Phase::Supervised | Phase::MultiTask)
            || (strategy == Strategy::Ssl && config.ssl_include_target);
        if uses_target && target_cohort.is_none() {
            let t = target.expect("checked by require");
            target_cohort = Some(Cohort::new(t)?);
            seen += t.len();
        }
        let mut sources = Vec::new();
        if matches!(phase, Phase::Warmup | Phase::Pretrain | Phase::Meta | Phase::MultiTask) {
            if let Some(sc) = &source_cohort {
                sources.push(SourceBatch::draw(sc, config.source_task, config, &mut stream(seed, STREAM_SOURCE, iter))?);
            }
            if strategy == Strategy::Ssl && config.ssl_include_target {
                let tc = target_cohort.as_ref().expect("built above");
                let b = SourceBatch::draw(tc, SourceTask::Contrastive, config, &mut stream(seed, STREAM_SOURCE_TARGET, iter))?;
                seen += b.inputs().len();
                sources.push(b);
            }
        }
        match phase {
            Phase::Warmup | Phase::Pretrain => {
                let (ls, _) = outer_step_multi(&mut state.model, &mut state.outer, &sources, None, config)?;
                record.source_loss = ls;
            }
            Phase::Meta => {
                let tc = target_cohort.as_ref().expect("built above");
                let labels = tc.labels()?;
                let (n_tr, n_val) = config.meta_split_sizes(tc.len());
                let (train_idx, val_idx) = split_meta(&labels, n_tr, n_val, &mut stream(seed, STREAM_SPLIT, iter))?;
                observer.on_split(iter, &train_idx, &val_idx, tc.len());

                state.model.reinit_target_head(&config.model, derive(derive(seed, STREAM_HEAD), iter as u64));
                let before = state.model.clone();
                let inner = inner_loop(&state.model, tc, &train_idx, config, &mut stream(seed, STREAM_INNER, iter))?;
                seen += inner.windows;
                record.inner_last = inner.losses.last().copied();
                state.model.target_head = inner.head;
                observer.on_inner(audit(iter, &before, &state.model));

                let mut val_sampler = BalancedSampler::new(&val_idx, &labels)?;
                let mut rng = stream(seed, STREAM_TARGET, iter);
                let val = TargetBatch::draw(tc, &mut val_sampler, config.batch_size.min(n_val), config.window, &mut rng)?;
                seen += val.inputs.len();
                let before = state.model.clone();
                let (ls, lt) = outer_step_multi(&mut state.model, &mut state.outer, &sources, Some(&val), config)?;
                observer.on_outer(audit(iter, &before, &state.model));
                record.source_loss = ls;
                record.target_val = lt;
            }
            Phase::Supervised | Phase::MultiTask => {
                let tc = target_cohort.as_ref().expect("built above");
                if full_sampler.is_none() {
                    let all: Vec<usize> = (0..tc.len()).collect();
                    full_sampler = Some(BalancedSampler::new(&all, &tc.labels()?)?);
                }
                let sampler = full_sampler.as_mut().expect("set above");
                let mut rng = stream(seed, STREAM_TARGET, iter);
                let batch = TargetBatch::draw(tc, sampler, config.batch_size.min(tc.len()), config.window, &mut rng)?;
                seen += batch.inputs.len();
                let multi = phase == Phase::MultiTask;
                let freeze = strategy == Strategy::Ft && config.ft_freeze_extractor;
                let weight = if multi { config.lambda } else { 1.0 };
                let srcs: &[SourceBatch] = if multi { &sources } else { &[] };
                let e = evaluate(&state.model, srcs, Some(&batch), weight, config.tau, Trainable { phi: !freeze, theta_t: true })?;
                if !freeze {
                    state.outer.extractor.step(state.model.extractor.tensors_mut(), &e.phi, config.beta)?;
                }
                if let (Some(g), Some(h), Some(a)) = (&e.theta_s, state.model.source_head.as_mut(), state.outer.source_head.as_mut()) {
                    a.step(h.tensors_mut(), g, config.beta)?;
                }
                let adam = state.target_adam.as_mut().expect("joint strategies keep target state");
                adam.step(state.model.target_head.tensors_mut(), e.theta_t.as_deref().expect("trainable"), config.beta)?;
                record.source_loss = e.source_loss;
                record.target_val = e.target_loss;
            }
        }
        state.history.push(record);
        state.target_windows_seen.push(seen);
        state.iteration = iter + 1;
    }

    if strategy.adapts_head_at_end() {
        if let Some(t) = target.filter(|t| t.is_labeled()) {
            if target_cohort.is_none() {
                target_cohort = Some(Cohort::new(t)?);
            }
            let tc = target_cohort.as_ref().expect("built above");
            fit_target_head(&mut state.model, tc, config)?;
        }
    }
    Ok(state)
}

/// Fresh target head adapted on every subject of `cohort` with
/// `final_steps` inner-loop steps.
pub fn fit_target_head(model: &mut ModelParams, cohort: &Cohort, config: &MetaConfig) -> Result<()> {
    model.reinit_target_head(&config.model, derive(config.seed, STREAM_FINAL));
    let all: Vec<usize> = (0..cohort.len()).collect();
    let cfg = MetaConfig { inner_steps: config.final_steps(), ..config.clone() };
    let out = inner_loop(model, cohort, &all, &cfg, &mut stream(config.seed, STREAM_FINAL, 0))?;
    model.target_head = out.head;
    Ok(())
}

/// Logits for `windows` of one subject, `[R, 2]` as rows.
pub(crate) fn window_logits(model: &ModelParams, cohort: &Cohort, subject: usize, windows: &[Tensor]) -> Result<Vec<[f64; 2]>> {
    let subjects = vec![subject; windows.len()];
    let batch = cohort.assemble(&subjects, windows)?;
    let feats = extract(&batch, &model.extractor)?;
    let logits = crate::stgcn::head_outputs(&feats, &batch.graphs, &model.target_head)?;
    if logits.shape()[1] != 2 {
        return Err(Error::shape("target head", format!("{:?}", logits.shape())));
    }
    Ok(logits.data().chunks(2).map(|c| [c[0], c[1]]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SynthSpec};
    use crate::stgcn::ModelConfig;

    fn tiny() -> (Dataset, Dataset, MetaConfig) {
        let spec = SynthSpec {
            parcels: 4,
            time_points: 24,
            n_source: 6,
            n_target_per_class: 4,
            modules: 2,
            effect_size: 1.5,
            ..SynthSpec::default()
        };
        let (s, t) = generate_synthetic(&spec, 11).unwrap();
        let config = MetaConfig {
            model: ModelConfig { channels: [1, 3, 3, 3], temporal_kernel: 3, source_out: 4 },
            window: 8,
            windows_per_subject: 2,
            batch_size: 4,
            outer_iters: 2,
            inner_steps: 1,
            meta_val_count: Some(4),
            seed: 5,
            ..MetaConfig::default()
        };
        (s, t, config)
    }

    #[test]
    fn metsk_smoke_run() {
        let (s, t, config) = tiny();
        let state = train(Strategy::Metsk, Some(&s), Some(&t), &config).unwrap();
        assert_eq!(state.history.len(), 2);
        assert_eq!(state.history[0].phase, Phase::Warmup);
        assert_eq!(state.history[1].phase, Phase::Meta);
        assert_eq!(state.target_windows_seen[0], 0);
        assert!(state.history[1].target_val.unwrap().is_finite());
    }

    #[test]
    fn missing_datasets_rejected() {
        let (s, t, config) = tiny();
        assert!(matches!(
            train(Strategy::Baseline, Some(&s), None, &config),
            Err(Error::MissingDataset { strategy: "baseline", .. })
        ));
        assert!(train(Strategy::Ssl, None, Some(&t), &config).is_err());
        assert!(train(Strategy::Metsk, Some(&s), Some(&s), &config).is_err());
    }

    #[test]
    fn inner_loop_with_zero_steps_is_identity() {
        let (_, t, config) = tiny();
        let model = ModelParams::init(&config.model, 1).unwrap();
        let c = Cohort::new(&t).unwrap();
        let cfg = MetaConfig { inner_steps: 0, ..config };
        let out = inner_loop(&model, &c, &[0, 1, 2, 3], &cfg, &mut seeded(0)).unwrap();
        assert_eq!(out.head, model.target_head);
        assert_eq!(out.windows, 0);
    }
}
