//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line to
//! stderr (uncaptured) and then asserts.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use metsk::cli::dispatch;
use metsk::model_io::{model_from_str, model_to_string};
use metsk_core::data::{generate_synthetic, Dataset, SynthSpec};
use metsk_core::domsim::{build_histograms, emd, mean_flatten_features, similarity_from_emd, solve_transport, FeatureHistogram};
use metsk_core::meta::{
    cross_validate_strategy, source_loss_on_tape, target_loss_on_tape, train, train_with_observer, BalancedSampler, Cohort,
    MetaConfig, Observer, PhaseAudit, SourceBatch, SourceTask, Strategy, StrategyReport, TargetBatch,
};
use metsk_core::numerics::{finite_diff_check, Tape, Var};
use metsk_core::objectives::{contrastive_loss, ContrastiveBatch};
use metsk_core::probe::{accuracy, auc, extract_features, pca_reduce, ExtractConfig, Pca};
use metsk_core::numerics::Tensor;
use metsk_core::rng::seeded;
use metsk_core::stgcn::{vote, ModelConfig, ModelParams};
use rand::seq::SliceRandom;
use rand::Rng as _;

fn report(n: usize, ok: bool, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {n}: {verdict} | {detail}");
}

// ---------------------------------------------------------------- 1 ----

fn tiny_cohorts() -> (Dataset, Dataset) {
    let spec = SynthSpec { parcels: 4, time_points: 24, n_source: 6, n_target_per_class: 6, modules: 2, effect_size: 1.5, ..SynthSpec::default() };
    generate_synthetic(&spec, 3).unwrap()
}

fn tiny_config() -> MetaConfig {
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

#[test]
fn criterion_1_gradient_correctness() {
    let start = Instant::now();
    let (source, target) = tiny_cohorts();
    let config = tiny_config();
    let (sc, tc) = (Cohort::new(&source).unwrap(), Cohort::new(&target).unwrap());
    let mut worst = 0.0f64;
    let mut checked = 0;
    for seed in 0..3u64 {
        let model = ModelParams::init(&config.model, seed).unwrap();
        let mut rng = seeded(100 + seed);
        let sb = SourceBatch::draw(&sc, SourceTask::Contrastive, &config, &mut rng).unwrap();
        let all: Vec<usize> = (0..tc.len()).collect();
        let mut sampler = BalancedSampler::new(&all, &tc.labels().unwrap()).unwrap();
        let tb = TargetBatch::draw(&tc, &mut sampler, 4, config.window, &mut rng).unwrap();
        let phi = model.extractor.tensors().to_vec();
        let ts = model.source_head.as_ref().unwrap().tensors().to_vec();
        let tt = model.target_head.tensors().to_vec();
        let (np, ns) = (phi.len(), ts.len());
        let mut params: Vec<Tensor> = phi.into_iter().chain(ts).chain(tt).collect();
        // Zero-initialized biases give near-zero embedding norms where the
        // cosine is sharply curved; evaluate at a generic point instead.
        let mut brng = seeded(500 + seed);
        for p in params.iter_mut().filter(|p| p.data().iter().all(|&v| v == 0.0)) {
            p.data_mut().iter_mut().for_each(|v| *v = brng.random_range(-0.5..0.5));
        }
        let (lambda, tau) = (config.lambda, config.tau);
        let objective = |tape: &mut Tape, v: &[Var]| {
            let ls = source_loss_on_tape(tape, &v[..np], &v[np..np + ns], &sb, tau)?;
            let lt = target_loss_on_tape(tape, &v[..np], &v[np + ns..], &tb)?;
            let scaled = tape.scale(lt, lambda);
            tape.add(ls, scaled)
        };
        let r = finite_diff_check(objective, &params, 1e-6).unwrap();
        worst = worst.max(r.max_rel_error);
        checked += r.checked;
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = worst < 1e-4 && checked > 0 && secs < 60.0;
    report(1, ok, &format!("max relative error {worst:.2e} over {checked} coordinates in {secs:.1}s"));
    assert!(ok);
}

// ---------------------------------------------------------------- 2 ----

#[derive(Default)]
struct Audit {
    splits: Vec<(Vec<usize>, Vec<usize>, usize)>,
    inner: Vec<PhaseAudit>,
    outer: Vec<PhaseAudit>,
}

impl Observer for Audit {
    fn on_split(&mut self, _iter: usize, train: &[usize], val: &[usize], n: usize) {
        self.splits.push((train.to_vec(), val.to_vec(), n));
    }
    fn on_inner(&mut self, a: PhaseAudit) {
        self.inner.push(a);
    }
    fn on_outer(&mut self, a: PhaseAudit) {
        self.outer.push(a);
    }
}

#[test]
fn criterion_2_bilevel_isolation() {
    let (source, target) = tiny_cohorts();
    let config = MetaConfig { outer_iters: 10, warmup_fraction: 0.0, ..tiny_config() };
    let mut audit = Audit::default();
    train_with_observer(Strategy::Metsk, Some(&source), Some(&target), &config, &mut audit).unwrap();
    let inner_ok = audit.inner.len() == 10
        && audit.inner.iter().all(|a| a.extractor.0 == a.extractor.1 && a.source_head.0 == a.source_head.1 && a.target_head.0 != a.target_head.1);
    let outer_ok = audit.outer.len() == 10
        && audit.outer.iter().all(|a| a.extractor.0 != a.extractor.1 && a.source_head.0 != a.source_head.1 && a.target_head.0 == a.target_head.1);
    let split_ok = audit.splits.len() == 10
        && audit.splits.iter().all(|(tr, val, n)| {
            let a: BTreeSet<usize> = tr.iter().copied().collect();
            let b: BTreeSet<usize> = val.iter().copied().collect();
            a.is_disjoint(&b) && a.len() == tr.len() && b.len() == val.len() && a.union(&b).copied().eq(0..*n)
        });
    let ok = inner_ok && outer_ok && split_ok;
    report(2, ok, &format!("inner isolated {inner_ok}, outer isolated {outer_ok}, splits partition {split_ok} over 10 iterations"));
    assert!(ok);
}

// ---------------------------------------------------------------- 3 ----

fn brute_force(supply: &[u32], demand: &[u32], cost: &[f64]) -> f64 {
    fn go(cell: usize, n: usize, rows: &mut [u32], cols: &mut [u32], cost: &[f64], acc: f64, best: &mut f64) {
        if cell == rows.len() * n {
            if cols.iter().all(|&c| c == 0) {
                *best = best.min(acc);
            }
            return;
        }
        let (i, j) = (cell / n, cell % n);
        let cap = rows[i].min(cols[j]);
        let lo = if j == n - 1 { rows[i] } else { 0 };
        for f in lo..=cap {
            rows[i] -= f;
            cols[j] -= f;
            go(cell + 1, n, rows, cols, cost, acc + f64::from(f) / 8.0 * cost[cell], best);
            rows[i] += f;
            cols[j] += f;
        }
    }
    let mut best = f64::INFINITY;
    go(0, demand.len(), &mut supply.to_vec(), &mut demand.to_vec(), cost, 0.0, &mut best);
    best
}

fn eighths(rng: &mut impl rand::Rng, parts: usize) -> Vec<u32> {
    let mut v = vec![0u32; parts];
    for _ in 0..8 {
        v[rng.random_range(0..parts)] += 1;
    }
    v
}

fn point_histogram(masses: Vec<f64>, mut means: Vec<f64>) -> FeatureHistogram {
    means.sort_by(f64::total_cmp);
    let b = masses.len();
    let (lo, hi) = (means[0] - 1.0, means[b - 1] + 1.0);
    FeatureHistogram {
        bin_edges: (0..=b).map(|i| lo + (hi - lo) * i as f64 / b as f64).collect(),
        masses,
        bin_means: means,
        degenerate: false,
    }
}

fn cdf_distance(a: &FeatureHistogram, b: &FeatureHistogram) -> f64 {
    let mut ev: Vec<(f64, f64)> = a.bin_means.iter().zip(&a.masses).map(|(&x, &w)| (x, w)).collect();
    ev.extend(b.bin_means.iter().zip(&b.masses).map(|(&x, &w)| (x, -w)));
    ev.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut diff = 0.0;
    ev.windows(2)
        .map(|w| {
            diff += w[0].1;
            diff.abs() * (w[1].0 - w[0].0)
        })
        .sum()
}

#[test]
fn criterion_3_emd_exactness() {
    let mut rng = seeded(31);
    let mut lp_worst = 0.0f64;
    let mut lp_cases = 0;
    for m in 1..=4 {
        for n in 1..=4 {
            for _ in 0..25 {
                let (s, d) = (eighths(&mut rng, m), eighths(&mut rng, n));
                let cost: Vec<f64> = (0..m * n).map(|_| rng.random_range(0.0..5.0)).collect();
                let sf: Vec<f64> = s.iter().map(|&v| f64::from(v) / 8.0).collect();
                let df: Vec<f64> = d.iter().map(|&v| f64::from(v) / 8.0).collect();
                let plan = solve_transport(&sf, &df, &cost).unwrap();
                lp_worst = lp_worst.max((plan.cost - brute_force(&s, &d, &cost)).abs());
                lp_cases += 1;
            }
        }
    }
    let mut cdf_worst = 0.0f64;
    let mut ds_worst = 0.0f64;
    for _ in 0..200 {
        let b = rng.random_range(1..=32);
        let masses = |rng: &mut rand_chacha::ChaCha8Rng| {
            let raw: Vec<f64> = (0..b).map(|_| rng.random_range(0.0..1.0)).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|v| v / s).collect::<Vec<f64>>()
        };
        let means = |rng: &mut rand_chacha::ChaCha8Rng| (0..b).map(|_| rng.random_range(-4.0..4.0)).collect::<Vec<f64>>();
        let hs = point_histogram(masses(&mut rng), means(&mut rng));
        let ht = point_histogram(masses(&mut rng), means(&mut rng));
        let e = emd(&hs, &ht).unwrap();
        cdf_worst = cdf_worst.max((e - cdf_distance(&hs, &ht)).abs());
        ds_worst = ds_worst.max((similarity_from_emd(e, 0.01).unwrap() - (-0.01 * e).exp()).abs());
    }
    let ok = lp_worst < 1e-9 && cdf_worst < 1e-9 && ds_worst < 1e-12;
    report(
        3,
        ok,
        &format!("{lp_cases} LP instances max gap {lp_worst:.1e}; 200 CDF instances max gap {cdf_worst:.1e}; DS gap {ds_worst:.1e}"),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 4 ----

#[test]
fn criterion_4_contrastive_hand_values() {
    let batch = |v1: &[f64], v2: &[f64], tau: f64| ContrastiveBatch {
        view1: Tensor::new(&[2, 2], v1.to_vec()).unwrap(),
        view2: Tensor::new(&[2, 2], v2.to_vec()).unwrap(),
        tau,
    };
    let same = contrastive_loss(&batch(&[0.3, 0.7, 0.3, 0.7], &[0.3, 0.7, 0.3, 0.7], 30.0)).unwrap();
    let t1 = contrastive_loss(&batch(&[1.0, 0.0, 0.0, 1.0], &[1.0, 0.0, 0.0, 1.0], 1.0)).unwrap();
    let t30 = contrastive_loss(&batch(&[1.0, 0.0, 0.0, 1.0], &[1.0, 0.0, 0.0, 1.0], 30.0)).unwrap();
    let ok = same.abs() < 1e-9 && (t1 + 1.0).abs() < 1e-9 && (t30 + 1.0 / 30.0).abs() < 1e-9;
    report(4, ok, &format!("identical {same:.3e}, tau=1 {t1:.12}, tau=30 {t30:.12}"));
    assert!(ok);
}

// ------------------------------------------------------------ 5, 6 ----

/// Settings of the synthetic ordering experiment.
fn ordering_spec() -> SynthSpec {
    SynthSpec { parcels: 16, time_points: 128, n_source: 200, n_target_per_class: 20, effect_size: 0.8, source_spread: 3.0, ..SynthSpec::default() }
}

fn ordering_config(seed: u64) -> MetaConfig {
    MetaConfig {
        model: ModelConfig { channels: [1, 8, 8, 8], temporal_kernel: 5, source_out: 16 },
        window: 32,
        windows_per_subject: 4,
        batch_size: 16,
        outer_iters: 40,
        inner_steps: 10,
        alpha: 0.1,
        final_adapt_steps: Some(200),
        seed,
        ..MetaConfig::default()
    }
}

const ORDERING_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const ORDERING_STRATEGIES: [Strategy; 4] = [Strategy::Baseline, Strategy::Metsk, Strategy::Mtl, Strategy::Mel];

struct Ordering {
    /// Per strategy of `ORDERING_STRATEGIES`, one report per seed.
    reports: Vec<Vec<StrategyReport>>,
    seconds: f64,
}

impl Ordering {
    fn mean(&self, s: Strategy) -> f64 {
        let i = ORDERING_STRATEGIES.iter().position(|&x| x == s).unwrap();
        self.reports[i].iter().map(|r| r.auc_mean).sum::<f64>() / self.reports[i].len() as f64
    }
}

fn ordering() -> &'static Ordering {
    static CELL: OnceLock<Ordering> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let data: Vec<(Dataset, Dataset)> = ORDERING_SEEDS.iter().map(|&s| generate_synthetic(&ordering_spec(), 100 + s).unwrap()).collect();
        let reports = ORDERING_STRATEGIES
            .iter()
            .map(|&strategy| {
                ORDERING_SEEDS
                    .iter()
                    .zip(&data)
                    .map(|(&seed, (s, t))| cross_validate_strategy(strategy, Some(s), t, 5, &ordering_config(seed)).unwrap())
                    .collect()
            })
            .collect();
        Ordering { reports, seconds: start.elapsed().as_secs_f64() }
    })
}

#[test]
fn criterion_5_strategy_ordering() {
    let o = ordering();
    let (base, metsk, mtl) = (o.mean(Strategy::Baseline), o.mean(Strategy::Metsk), o.mean(Strategy::Mtl));
    let ok = metsk - base >= 0.03 && metsk >= mtl && o.seconds < 1800.0;
    report(
        5,
        ok,
        &format!("mean AUC over 5 seeds: metsk {metsk:.4}, mtl {mtl:.4}, baseline {base:.4}; experiment {:.0}s", o.seconds),
    );
    assert!(ok);
}

#[test]
fn criterion_6_mel_vs_baseline() {
    let o = ordering();
    let (base, mel) = (o.mean(Strategy::Baseline), o.mean(Strategy::Mel));
    let ok = mel >= base;
    report(6, ok, &format!("mean AUC over 5 seeds: mel {mel:.4}, baseline {base:.4}"));
    assert!(ok);
}

// ---------------------------------------------------------------- 7 ----

fn ds_config(seed: u64, task: SourceTask) -> MetaConfig {
    let source_out = if task == SourceTask::Supervised { 2 } else { 16 };
    MetaConfig {
        model: ModelConfig { channels: [1, 8, 8, 8], temporal_kernel: 5, source_out },
        window: 32,
        windows_per_subject: 4,
        batch_size: 16,
        outer_iters: 40,
        source_task: task,
        seed,
        ..MetaConfig::default()
    }
}

fn mean_features(model: &ModelParams, data: &Dataset, seed: u64) -> Vec<f64> {
    let f = extract_features(model, data, &ExtractConfig { window: 32, windows_per_subject: 4, seed }).unwrap();
    mean_flatten_features(&f.matrices).unwrap()
}

fn ds(a: &[f64], b: &[f64]) -> f64 {
    let (ha, hb) = build_histograms(a, b, 32).unwrap();
    similarity_from_emd(emd(&ha, &hb).unwrap(), 0.01).unwrap()
}

#[test]
fn criterion_7_domain_similarity_ordering() {
    let spec = SynthSpec { source_label_effect: Some(1.0), ..ordering_spec() };
    let mut lines = Vec::new();
    let mut all = true;
    for seed in 0..3u64 {
        let (source, target) = generate_synthetic(&spec, 300 + seed).unwrap();
        // Target classification features from a baseline on all target data.
        let cls_t = train(Strategy::Baseline, None, Some(&target), &ds_config(seed, SourceTask::Contrastive)).unwrap();
        let x_t = mean_features(&cls_t.model, &target, seed);
        let ssl = train(Strategy::Ssl, Some(&source), None, &ds_config(seed, SourceTask::Contrastive)).unwrap();
        let sup = train(Strategy::Ssl, Some(&source), None, &ds_config(seed, SourceTask::Supervised)).unwrap();
        let d_ssl = ds(&mean_features(&ssl.model, &source, seed), &x_t);
        let d_sup = ds(&mean_features(&sup.model, &source, seed), &x_t);
        all &= d_ssl > d_sup;
        lines.push(format!("seed {seed}: ssl {d_ssl:.6} vs supervised {d_sup:.6}"));
    }
    report(7, all, &lines.join("; "));
    assert!(all);
}

// ---------------------------------------------------------------- 8 ----

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["metsk"];
    argv.extend_from_slice(args);
    dispatch(argv)
}

fn probe_auc(report_path: &Path) -> f64 {
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(report_path).unwrap()).unwrap();
    v["auc_mean"].as_f64().unwrap()
}

const PROBE_SPEC: &str = "parcels = 16\ntime_points = 128\nn_source = 200\nn_target_per_class = 20\neffect_size = 1.5\nsource_spread = 3\n";
const PROBE_RUN: &str = "channels = 8,8,8\ntemporal_kernel = 5\nembedding_dim = 16\nwindow = 32\nwindows_per_subject = 4\n\
batch_size = 16\nouter_iters = 40\nrepeats = 10\n";

/// Runs synth, SSL training, extraction and the probe in `dir`. Returns the
/// probe AUC, the shuffled-label AUC and every output file.
fn zero_shot_pipeline(dir: &Path, seed: u64) -> (f64, f64, Vec<Vec<u8>>) {
    let seed_s = seed.to_string();
    let (spec, cfg) = (dir.join("spec.ini"), dir.join("run.cfg"));
    fs::write(&spec, PROBE_SPEC).unwrap();
    fs::write(&cfg, PROBE_RUN).unwrap();
    let p = |name: &str| dir.join(name).to_str().unwrap().to_string();
    let common = ["--seed", seed_s.as_str(), "--config", cfg.to_str().unwrap()];
    fn join<'a>(args: &[&'a str], common: &[&'a str]) -> Vec<&'a str> {
        [args, common].concat()
    }
    let with = |args: &[&str]| run(&join(args, &common));
    assert_eq!(with(&["synth", "--spec", spec.to_str().unwrap(), "--out", &p("data")]), 0);
    assert_eq!(with(&["train", "--strategy", "ssl", "--source", &p("data/source"), "--out", &p("model")]), 0);
    assert_eq!(with(&["extract", "--model", &p("model/model.txt"), "--data", &p("data/target"), "--out", &p("feat")]), 0);
    assert_eq!(
        with(&["probe", "--features", &p("feat/features.csv"), "--labels", &p("data/target/labels.csv"), "--out", &p("probe")]),
        0
    );
    // Shuffled-label control on the same features.
    let labels = fs::read_to_string(dir.join("data/target/labels.csv")).unwrap();
    let mut rows: Vec<(String, String)> =
        labels.lines().skip(1).map(|l| l.split_once(',').map(|(a, b)| (a.to_string(), b.to_string())).unwrap()).collect();
    let mut values: Vec<String> = rows.iter().map(|r| r.1.clone()).collect();
    values.shuffle(&mut seeded(seed ^ 0xABCD));
    for (r, v) in rows.iter_mut().zip(values) {
        r.1 = v;
    }
    let shuffled: String = std::iter::once("subject_id,label".to_string()).chain(rows.iter().map(|r| format!("{},{}", r.0, r.1))).collect::<Vec<_>>().join("\n") + "\n";
    fs::write(dir.join("shuffled.csv"), shuffled).unwrap();
    assert_eq!(with(&["probe", "--features", &p("feat/features.csv"), "--labels", &p("shuffled.csv"), "--out", &p("null")]), 0);
    let files = ["model/model.txt", "model/train.log", "feat/features.csv", "probe/report.json", "null/report.json"]
        .iter()
        .map(|f| fs::read(dir.join(f)).unwrap())
        .collect();
    (probe_auc(&dir.join("probe/report.json")), probe_auc(&dir.join("null/report.json")), files)
}

#[test]
fn criterion_8_zero_shot_probe() {
    let mut aucs = Vec::new();
    let mut nulls = Vec::new();
    let mut identical = true;
    for seed in 0..3u64 {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let (auc1, null1, files1) = zero_shot_pipeline(a.path(), seed);
        let (auc2, null2, files2) = zero_shot_pipeline(b.path(), seed);
        identical &= files1 == files2 && auc1.to_bits() == auc2.to_bits() && null1.to_bits() == null2.to_bits();
        aucs.push(auc1);
        nulls.push(null1);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (m, n) = (mean(&aucs), mean(&nulls));
    let ok = m > 0.6 && (0.4..=0.6).contains(&n) && identical;
    report(8, ok, &format!("probe AUC {m:.4} {aucs:.3?}; shuffled control {n:.4} {nulls:.3?}; byte-identical reruns {identical}"));
    assert!(ok);
}

// ---------------------------------------------------------------- 9 ----

/// Jacobi eigen-decomposition of a symmetric matrix; eigenpairs sorted by
/// decreasing eigenvalue.
fn jacobi(mut a: Vec<Vec<f64>>) -> Vec<(f64, Vec<f64>)> {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n).map(|j| (a[j][j], v.iter().map(|r| r[j]).collect())).collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    for (_, vec) in pairs.iter_mut() {
        let big = vec.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if big < 0.0 {
            vec.iter_mut().for_each(|x| *x = -*x);
        }
    }
    pairs
}

fn unit_examples() -> Vec<(&'static str, bool)> {
    let mut out = Vec::new();
    let a = |pos: &[f64], neg: &[f64]| {
        let scores: Vec<f64> = pos.iter().chain(neg).copied().collect();
        let labels: Vec<u8> = pos.iter().map(|_| 1).chain(neg.iter().map(|_| 0)).collect();
        auc(&scores, &labels).unwrap()
    };
    out.push(("auc perfect", a(&[0.9, 0.8], &[0.1, 0.2]) == 1.0));
    out.push(("auc 3 of 4", (a(&[0.9, 0.3], &[0.5, 0.1]) - 0.75).abs() < 1e-12));
    out.push(("auc ties", a(&[0.4, 0.4], &[0.4, 0.4]) == 0.5));
    out.push(("auc single class rejected", auc(&[0.1, 0.2], &[1, 1]).is_err()));
    out.push(("acc", (accuracy(&[1, 0, 1, 1], &[1, 0, 0, 1]).unwrap() - 0.75).abs() < 1e-12));
    let logit = |p: f64| [0.0, (1.0 - p).ln() - p.ln()];
    let (probs, class) = vote(&[logit(0.6), logit(0.8)]).unwrap();
    out.push(("vote mean", (probs[0] - 0.7).abs() < 1e-12 && (probs[1] - 0.3).abs() < 1e-12 && class == 0));
    let (p1, _) = vote(&[[0.3, -0.2]]).unwrap();
    let z = 0.3f64.exp() + (-0.2f64).exp();
    out.push(("vote single", (p1[0] - 0.3f64.exp() / z).abs() < 1e-15));
    let (pa, _) = vote(&[[0.1, 0.4], [2.0, -1.0], [0.3, 0.3]]).unwrap();
    let (pb, _) = vote(&[[0.3, 0.3], [0.1, 0.4], [2.0, -1.0]]).unwrap();
    out.push(("vote permutation", pa == pb));
    out.push(("vote empty rejected", vote(&[]).is_err()));
    out.push(("vote tie to class 0", vote(&[[0.0, 0.0]]).unwrap().1 == 0));

    let line: Vec<Vec<f64>> = (0..6).map(|i| vec![f64::from(i) - 2.5, 0.0, 0.0]).collect();
    let (_, ratio) = pca_reduce(&line, 1).unwrap();
    let pca = Pca::fit(&line, 1).unwrap();
    out.push((
        "pca one axis",
        (ratio[0] - 1.0).abs() < 1e-12 && (pca.components[0][0] - 1.0).abs() < 1e-12 && pca.components[0][1].abs() < 1e-12,
    ));
    let mut rng = seeded(5);
    let x: Vec<Vec<f64>> = (0..20).map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let full = Pca::fit(&x, 5).unwrap();
    let back = full.inverse(&full.transform(&x).unwrap());
    let recon = x.iter().flatten().zip(back.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    out.push(("pca full reconstruction", recon < 1e-9));
    let mean: Vec<f64> = (0..5).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / 20.0).collect();
    let cov: Vec<Vec<f64>> =
        (0..5).map(|i| (0..5).map(|j| x.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / 19.0).collect()).collect();
    let oracle = jacobi(cov);
    let (proj, _) = pca_reduce(&x, 3).unwrap();
    let mut worst = 0.0f64;
    for (row, p) in x.iter().zip(&proj) {
        for (k, (_, dir)) in oracle.iter().take(3).enumerate() {
            let want: f64 = row.iter().zip(&mean).zip(dir).map(|((v, m), d)| (v - m) * d).sum();
            worst = worst.max((want - p[k]).abs());
        }
    }
    out.push(("pca vs jacobi oracle", worst < 1e-8));
    out
}

fn round_trip_models() -> Vec<(String, bool)> {
    let (source, target) = tiny_cohorts();
    let mut out = Vec::new();
    let mut add = |name: String, model: &ModelParams| {
        let text = model_to_string(model);
        let back = model_from_str(&text, Path::new("mem")).unwrap();
        let bits = |m: &ModelParams| m.named_tensors().iter().flat_map(|(n, t)| t.data().iter().map(|v| (n.clone(), v.to_bits())).collect::<Vec<_>>()).collect::<Vec<_>>();
        out.push((name, bits(model) == bits(&back) && model_to_string(&back) == text));
    };
    for strategy in Strategy::ALL {
        let state = train(strategy, Some(&source), Some(&target), &MetaConfig { outer_iters: 2, ..tiny_config() }).unwrap();
        add(format!("model {}", strategy.name()), &state.model);
    }
    let sup = MetaConfig {
        outer_iters: 2,
        source_task: SourceTask::Supervised,
        model: ModelConfig { source_out: 2, ..tiny_config().model },
        ..tiny_config()
    };
    let labeled = generate_synthetic(&SynthSpec { parcels: 4, time_points: 24, n_source: 6, n_target_per_class: 6, modules: 2, source_label_effect: Some(1.0), ..SynthSpec::default() }, 4).unwrap().0;
    let state = train(Strategy::Ssl, Some(&labeled), None, &sup).unwrap();
    add("model supervised source".into(), &state.model);
    let mut extreme = ModelParams::init(&tiny_config().model, 1).unwrap();
    let specials = [f64::MIN_POSITIVE, -0.0, 1e308, -1e-308, 5e-324, std::f64::consts::PI, 0.1 + 0.2];
    for (v, s) in extreme.extractor.tensors_mut()[0].data_mut().iter_mut().zip(specials) {
        *v = s;
    }
    add("model extreme values".into(), &extreme);
    out
}

#[test]
fn criterion_9_round_trips_and_unit_examples() {
    let mut failed: Vec<String> = Vec::new();
    let mut total = 0;
    for (name, ok) in round_trip_models() {
        total += 1;
        if !ok {
            failed.push(name);
        }
    }
    for (name, ok) in unit_examples() {
        total += 1;
        if !ok {
            failed.push(name.to_string());
        }
    }
    let ok = failed.is_empty();
    report(9, ok, &format!("{total} checks, failed: {failed:?}"));
    assert!(ok);
}
