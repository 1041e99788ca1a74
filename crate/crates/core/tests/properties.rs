use metsk_core::data::{generate_synthetic, pearson_adjacency, SynthSpec};
use metsk_core::domsim::similarity_from_emd;
use metsk_core::numerics::Tensor;
use metsk_core::objectives::{contrastive_loss, cross_entropy, ContrastiveBatch};
use metsk_core::probe::{auc, evaluate_cv, train_linear_svm, Pca, ProbeSpec};
use metsk_core::rng::seeded;
use proptest::prelude::*;
use rand::Rng as _;

fn matrix(rng: &mut impl rand::Rng, rows: usize, cols: usize) -> Vec<f64> {
    (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn batch(v1: Vec<f64>, v2: Vec<f64>, n: usize, e: usize, tau: f64) -> ContrastiveBatch {
    ContrastiveBatch { view1: Tensor::new(&[n, e], v1).unwrap(), view2: Tensor::new(&[n, e], v2).unwrap(), tau }
}

proptest! {
    #[test]
    fn pearson_is_symmetric_bounded_and_affine_invariant(
        seed in any::<u64>(), p in 2usize..7, t in 8usize..40, row in 0usize..7,
        scale in 0.1f64..10.0, shift in -5.0f64..5.0,
    ) {
        let mut rng = seeded(seed);
        let data = matrix(&mut rng, p, t);
        let (a, _) = pearson_adjacency(&Tensor::new(&[p, t], data.clone()).unwrap()).unwrap();
        for i in 0..p {
            prop_assert_eq!(a.at2(i, i), 0.0);
            for j in 0..p {
                prop_assert_eq!(a.at2(i, j), a.at2(j, i));
                prop_assert!((0.0..=1.0).contains(&a.at2(i, j)));
            }
        }
        let r = row % p;
        let mut moved = data;
        moved[r * t..(r + 1) * t].iter_mut().for_each(|v| *v = scale * *v + shift);
        let (b, _) = pearson_adjacency(&Tensor::new(&[p, t], moved).unwrap()).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn contrastive_ignores_subject_order_and_row_scale(
        seed in any::<u64>(), n in 2usize..7, e in 2usize..6, tau in 0.5f64..40.0, scale in 0.01f64..100.0,
    ) {
        let mut rng = seeded(seed);
        let (v1, v2) = (matrix(&mut rng, n, e), matrix(&mut rng, n, e));
        let base = contrastive_loss(&batch(v1.clone(), v2.clone(), n, e, tau)).unwrap();

        let mut order: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng);
        let permute = |v: &[f64]| order.iter().flat_map(|&i| v[i * e..(i + 1) * e].to_vec()).collect::<Vec<_>>();
        let permuted = contrastive_loss(&batch(permute(&v1), permute(&v2), n, e, tau)).unwrap();
        prop_assert!((base - permuted).abs() < 1e-12);

        let row = rng.random_range(0..n);
        let mut scaled = v2.clone();
        scaled[row * e..(row + 1) * e].iter_mut().for_each(|v| *v *= scale);
        let rescaled = contrastive_loss(&batch(v1, scaled, n, e, tau)).unwrap();
        prop_assert!((base - rescaled).abs() < 1e-9);
    }

    #[test]
    fn contrastive_grows_as_the_positive_pair_separates(a in 0.0f64..3.1, gap in 0.01f64..1.0, tau in 0.5f64..40.0) {
        // view2 row 0 rotates out of the plane of every other embedding, so
        // only the positive similarity of subject 0 changes.
        let loss = |theta: f64| {
            let v1 = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
            let v2 = vec![theta.cos(), 0.0, theta.sin(), 0.3, 0.8, 0.0];
            contrastive_loss(&batch(v1, v2, 2, 3, tau)).unwrap()
        };
        let b = (a + gap).min(std::f64::consts::PI);
        prop_assert!(loss(b) > loss(a));
    }

    #[test]
    fn cross_entropy_is_non_negative(seed in any::<u64>(), n in 1usize..8) {
        let mut rng = seeded(seed);
        let logits = Tensor::new(&[n, 2], (0..2 * n).map(|_| rng.random_range(-30.0..30.0)).collect()).unwrap();
        let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
        prop_assert!(cross_entropy(&logits, &labels).unwrap() >= 0.0);
    }

    #[test]
    fn auc_depends_only_on_score_order(seed in any::<u64>(), n in 2usize..30) {
        let mut rng = seeded(seed);
        let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
        labels[0] = 0;
        labels[1] = 1;
        // Integer scores so that ties occur.
        let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(-5..5i32))).collect();
        let base = auc(&scores, &labels).unwrap();
        for f in [|x: f64| 3.0 * x + 7.0, |x: f64| x.exp(), |x: f64| x * x * x + x] {
            let moved: Vec<f64> = scores.iter().map(|&x| f(x)).collect();
            prop_assert_eq!(auc(&moved, &labels).unwrap(), base);
        }
    }

    #[test]
    fn pca_scores_are_uncorrelated(seed in any::<u64>(), n in 8usize..30, d in 2usize..6) {
        let mut rng = seeded(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|j| rng.random_range(-1.0..1.0) * (j + 1) as f64).collect()).collect();
        let k = d.min(n);
        let z = Pca::fit(&x, k).unwrap().transform(&x).unwrap();
        let mean: Vec<f64> = (0..k).map(|j| z.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        for a in 0..k {
            for b in a + 1..k {
                let cov: f64 = z.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / (n - 1) as f64;
                prop_assert!(cov.abs() < 1e-8, "cov({a},{b}) = {cov}");
            }
        }
    }

    #[test]
    fn similarity_strictly_decreases_with_emd(a in 0.0f64..1000.0, gap in 1e-3f64..1000.0) {
        prop_assert!(similarity_from_emd(a, 0.01).unwrap() > similarity_from_emd(a + gap, 0.01).unwrap());
    }
}

#[test]
fn svm_predictions_survive_feature_scaling_with_rescaled_c() {
    // Scaling features by s and C by 1/s^2 rescales the primal objective, so
    // the minimizer predicts the same classes.
    let mut rng = seeded(31);
    let mut checked = 0;
    for _ in 0..20 {
        let x: Vec<Vec<f64>> = (0..24)
            .map(|i| {
                let shift = if i % 2 == 0 { 0.8 } else { -0.8 };
                (0..3).map(|_| rng.random_range(-1.0..1.0) + shift).collect()
            })
            .collect();
        let y: Vec<u8> = (0..24).map(|i| u8::from(i % 2 == 0)).collect();
        let s = rng.random_range(0.5..2.0);
        let xs: Vec<Vec<f64>> = x.iter().map(|r| r.iter().map(|v| v * s).collect()).collect();
        let a = train_linear_svm(&x, &y, 1.0, 20_000).unwrap();
        let b = train_linear_svm(&xs, &y, 1.0 / (s * s), 20_000).unwrap();
        for (r, rs) in x.iter().zip(&xs) {
            // Points on the decision boundary are left out: both solvers
            // stop short of the exact minimizer.
            if a.decision(r).abs() > 0.05 {
                assert_eq!(a.predict(r), b.predict(rs));
                checked += 1;
            }
        }
    }
    assert!(checked > 400);
}

#[test]
fn zero_effect_gives_chance_level_auc() {
    let spec = SynthSpec { effect_size: 0.0, n_source: 1, ..SynthSpec::default() };
    let mut aucs = Vec::new();
    for seed in 0..5 {
        let (_, target) = generate_synthetic(&spec, seed).unwrap();
        let x: Vec<Vec<f64>> = target
            .records()
            .iter()
            .map(|r| {
                let (a, _) = pearson_adjacency(&r.timeseries).unwrap();
                let p = a.shape()[0];
                (0..p).flat_map(|i| (i + 1..p).map(move |j| (i, j))).map(|(i, j)| a.at2(i, j)).collect()
            })
            .collect();
        let spec = ProbeSpec { seed, ..ProbeSpec::default() };
        aucs.push(evaluate_cv(&x, &target.labels().unwrap(), &spec).unwrap().auc_mean);
    }
    let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
    assert!((0.35..=0.65).contains(&mean), "{mean} {aucs:?}");
}
