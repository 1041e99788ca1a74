use std::collections::BTreeSet;

use metsk_core::data::{generate_synthetic, Dataset, SynthSpec};
use metsk_core::meta::{
    outer_gradients, source_loss_on_tape, target_loss_on_tape, train, train_with_observer, BalancedSampler, Cohort, MetaConfig,
    Observer, PhaseAudit, SourceBatch, Strategy, TargetBatch,
};
use metsk_core::numerics::{finite_diff_check, grad};
use metsk_core::rng::seeded;
use metsk_core::stgcn::{ModelConfig, ModelParams};

fn four_node_data() -> (Dataset, Dataset) {
    let spec = SynthSpec {
        parcels: 4,
        time_points: 24,
        n_source: 6,
        n_target_per_class: 6,
        modules: 2,
        effect_size: 1.5,
        ..SynthSpec::default()
    };
    generate_synthetic(&spec, 3).unwrap()
}

fn small_config() -> MetaConfig {
    MetaConfig {
        model: ModelConfig { channels: [1, 3, 3, 3], temporal_kernel: 3, source_out: 4 },
        window: 8,
        windows_per_subject: 2,
        batch_size: 4,
        inner_steps: 3,
        alpha: 0.1,
        meta_val_count: Some(4),
        ..MetaConfig::default()
    }
}

/// Biases start at zero, which leaves source embeddings with tiny norms
/// where the cosine is sharply curved; a random bias draw gives a generic
/// point for the finite-difference comparison.
fn generic_biases(params: &mut [metsk_core::numerics::Tensor], seed: u64) {
    use rand::Rng as _;
    let mut rng = seeded(seed);
    for p in params.iter_mut().filter(|p| p.data().iter().all(|&v| v == 0.0)) {
        p.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
    }
}

#[test]
fn full_objective_matches_finite_differences() {
    let (source, target) = four_node_data();
    let config = small_config();
    let model = ModelParams::init(&config.model, 5).unwrap();
    let (sc, tc) = (Cohort::new(&source).unwrap(), Cohort::new(&target).unwrap());
    let mut rng = seeded(9);
    let sb = SourceBatch::draw(&sc, config.source_task, &config, &mut rng).unwrap();
    let mut sampler = BalancedSampler::new(&(0..tc.len()).collect::<Vec<_>>(), &tc.labels().unwrap()).unwrap();
    let tb = TargetBatch::draw(&tc, &mut sampler, 4, config.window, &mut rng).unwrap();

    let phi = model.extractor.tensors().to_vec();
    let theta_s = model.source_head.as_ref().unwrap().tensors().to_vec();
    let theta_t = model.target_head.tensors().to_vec();
    let (np, ns) = (phi.len(), theta_s.len());
    let mut params: Vec<_> = phi.iter().chain(&theta_s).chain(&theta_t).cloned().collect();
    generic_biases(&mut params, 17);
    let lambda = config.lambda;
    let tau = config.tau;
    let objective = |tape: &mut metsk_core::numerics::Tape, v: &[metsk_core::numerics::Var]| {
        let ls = source_loss_on_tape(tape, &v[..np], &v[np..np + ns], &sb, tau)?;
        let lt = target_loss_on_tape(tape, &v[..np], &v[np + ns..], &tb)?;
        let scaled = tape.scale(lt, lambda);
        Ok(tape.add(ls, scaled)?)
    };
    let report = finite_diff_check(objective, &params, 1e-6).unwrap();
    assert!(report.checked > params.iter().map(|p| p.len()).sum::<usize>() / 2, "{report:?}");
    assert!(report.max_rel_error < 1e-4, "{report:?}");

    // The trainer's first-order outer gradient is the same derivative with
    // the target head held fixed.
    let (_, full) = grad(&params, objective).unwrap();
    let mut model = model;
    model.extractor.set_tensors(params[..np].to_vec());
    model.source_head.as_mut().unwrap().set_tensors(params[np..np + ns].to_vec());
    model.target_head.set_tensors(params[np + ns..].to_vec());
    let (_, _, g_phi, g_s) = outer_gradients(&model, Some(&sb), Some(&tb), &config).unwrap();
    let g_s = g_s.unwrap();
    for (a, b) in full[..np].iter().chain(&full[np..np + ns]).zip(g_phi.iter().chain(&g_s)) {
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= 1e-10 * (1.0 + x.abs()), "{x} vs {y}");
        }
    }
}

#[derive(Default)]
struct Audit {
    splits: Vec<(usize, Vec<usize>, Vec<usize>, usize)>,
    inner: Vec<PhaseAudit>,
    outer: Vec<PhaseAudit>,
}

impl Observer for Audit {
    fn on_split(&mut self, iter: usize, train: &[usize], val: &[usize], n: usize) {
        self.splits.push((iter, train.to_vec(), val.to_vec(), n));
    }
    fn on_inner(&mut self, a: PhaseAudit) {
        self.inner.push(a);
    }
    fn on_outer(&mut self, a: PhaseAudit) {
        self.outer.push(a);
    }
}

#[test]
fn inner_and_outer_steps_touch_disjoint_parameters() {
    let (source, target) = four_node_data();
    let config = MetaConfig { outer_iters: 10, warmup_fraction: 0.0, ..small_config() };
    let mut audit = Audit::default();
    train_with_observer(Strategy::Metsk, Some(&source), Some(&target), &config, &mut audit).unwrap();
    assert_eq!(audit.inner.len(), 10);
    assert_eq!(audit.outer.len(), 10);
    assert_eq!(audit.splits.len(), 10);
    let mut inits = BTreeSet::new();
    for a in &audit.inner {
        assert_eq!(a.extractor.0, a.extractor.1, "inner step moved the extractor at {}", a.iter);
        assert_eq!(a.source_head.0, a.source_head.1, "inner step moved the source head at {}", a.iter);
        assert_ne!(a.target_head.0, a.target_head.1, "inner step left the target head at {}", a.iter);
        inits.insert(a.target_head.0);
    }
    // Step 1 draws a fresh target head every iteration.
    assert_eq!(inits.len(), 10);
    for a in &audit.outer {
        assert_ne!(a.extractor.0, a.extractor.1, "outer step left the extractor at {}", a.iter);
        assert_ne!(a.source_head.0, a.source_head.1, "outer step left the source head at {}", a.iter);
        assert_eq!(a.target_head.0, a.target_head.1, "outer step moved the target head at {}", a.iter);
    }
    for (_, tr, val, n) in &audit.splits {
        let a: BTreeSet<_> = tr.iter().copied().collect();
        let b: BTreeSet<_> = val.iter().copied().collect();
        assert!(a.is_disjoint(&b));
        assert_eq!(a.len() + b.len(), *n);
        assert_eq!(a.union(&b).copied().collect::<Vec<_>>(), (0..*n).collect::<Vec<_>>());
    }
}

#[test]
fn metsk_without_target_signal_equals_ssl() {
    // lambda = 0 and k = 0 leave only the source loss, as in SSL
    // pretraining with the same seeds.
    let (source, target) = four_node_data();
    let base = MetaConfig { outer_iters: 6, warmup_fraction: 0.0, lambda: 0.0, inner_steps: 0, ..small_config() };
    let m = train(Strategy::Metsk, Some(&source), Some(&target), &base).unwrap();
    let s = train(Strategy::Ssl, Some(&source), Some(&target), &base).unwrap();
    assert_eq!(m.model.fingerprint_extractor(), s.model.fingerprint_extractor());
    assert_eq!(m.model.fingerprint_source_head(), s.model.fingerprint_source_head());
}

#[test]
fn training_is_deterministic_per_seed() {
    let (source, target) = four_node_data();
    let config = MetaConfig { outer_iters: 4, ..small_config() };
    for strategy in Strategy::ALL {
        let a = train(strategy, Some(&source), Some(&target), &config).unwrap();
        let b = train(strategy, Some(&source), Some(&target), &config).unwrap();
        assert_eq!(a.model, b.model, "{}", strategy.name());
        let c = train(strategy, Some(&source), Some(&target), &MetaConfig { seed: 1, ..config.clone() }).unwrap();
        assert_ne!(a.model, c.model, "{}", strategy.name());
    }
}
