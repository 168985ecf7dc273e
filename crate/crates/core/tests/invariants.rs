//! Property tests for the algebraic and structural invariants the library
//! promises, over randomly drawn models, inputs and metric arguments.

use jemlab::autodiff::{logsumexp, Tape};
use jemlab::energy::{marginal_energy_from_logits, posterior_from_logits, residual_from_logits};
use jemlab::metrics::{kappa, layer_distances, mean_human_entropy, shape_bias, soft_label_ce, soft_label_kl, ShapeBiasMode};
use jemlab::oracle::{exact_density, exact_ml_gradient, partition_function, DensityField, Grid};
use jemlab::sampler::{refine, sample_chain, NoiseCoupling, Quadratic, SgldConfig, StepDecay};
use jemlab::synthdata::{gen_cue_conflict, gen_mixture2d, gen_soft_labels};
use jemlab::trainer::{cd_loss_and_grads, disc_loss_and_grads, global_norm, grad_balance};
use jemlab::{Checkpoint, EnergyModel, NetworkSpec, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mlp(seed: u64) -> EnergyModel {
    EnergyModel::build(NetworkSpec::mlp(2, &[6, 5], 3, 0.2), seed).unwrap()
}

fn batch(rows: &[(f64, f64)]) -> Tensor {
    Tensor::new(vec![rows.len(), 2], rows.iter().flat_map(|&(a, b)| [a, b]).collect()).unwrap()
}

fn points() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-4.0..4.0f64, -4.0..4.0f64), 1..6)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn logsumexp_shifts(v in prop::collection::vec(-30.0..30.0f64, 1..8), c in -30.0..30.0f64) {
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        prop_assert!((logsumexp(&shifted) - (logsumexp(&v) + c)).abs() < 1e-12);
    }

    #[test]
    fn backward_is_linear_over_rows(seed in 0u64..1000, xs in points()) {
        let model = mlp(seed);
        let x = batch(&xs);
        let grads_of = |x: &Tensor| {
            let mut tape = Tape::new();
            let params = model.bind(&mut tape, true);
            let xv = tape.constant(x.clone());
            let logits = model.record(&mut tape, &params, xv, None).unwrap();
            let total = tape.sum(logits).unwrap();
            let mut g = tape.backward(total).unwrap();
            params.iter().map(|&p| g.take(p).unwrap()).collect::<Vec<_>>()
        };
        let whole = grads_of(&x);
        let mut parts: Vec<Tensor> = whole.iter().map(|g| Tensor::zeros(g.shape())).collect();
        for r in 0..x.rows() {
            for (acc, g) in parts.iter_mut().zip(grads_of(&x.select_rows(&[r]))) {
                *acc = acc.zip_map(&g, |a, b| a + b).unwrap();
            }
        }
        for (w, p) in whole.iter().zip(&parts) {
            for (a, b) in w.data().iter().zip(p.data()) {
                prop_assert!(close(*a, *b, 1e-12), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn forward_is_deterministic_and_matches_last_feature(seed in 0u64..1000, xs in points()) {
        let model = mlp(seed);
        let x = batch(&xs);
        let a = model.forward(&x).unwrap();
        let b = model.forward(&x).unwrap();
        prop_assert_eq!(a.data(), b.data());
        let last = model.num_layers() - 1;
        let f = model.features(&x, &[last]).unwrap().remove(0);
        prop_assert_eq!(f.data(), a.data());
    }

    #[test]
    fn checkpoint_bytes_round_trip(seed in 0u64..1000, alpha in 0.0..=1.0f64, step in 0u64..100_000) {
        let ck = Checkpoint { alpha, step, model: mlp(seed), moments: None };
        let bytes = ck.to_bytes();
        prop_assert_eq!(Checkpoint::from_bytes(&bytes).unwrap().to_bytes(), bytes);
    }

    #[test]
    fn energy_decomposition(logits in prop::collection::vec(-40.0..40.0f64, 1..10), pick in 0usize..10) {
        let y = pick % logits.len();
        prop_assert!(residual_from_logits(&logits, y).unwrap().abs() < 1e-10);
    }

    #[test]
    fn posterior_ignores_uniform_shift(logits in prop::collection::vec(-20.0..20.0f64, 2..8), c in -50.0..50.0f64) {
        let p = posterior_from_logits(&logits);
        let shifted: Vec<f64> = logits.iter().map(|v| v + c).collect();
        let q = posterior_from_logits(&shifted);
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let argmax = |v: &[f64]| v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        prop_assert_eq!(argmax(&p), argmax(&q));
    }

    #[test]
    fn marginal_energy_falls_when_a_logit_rises(
        logits in prop::collection::vec(-20.0..20.0f64, 1..8),
        pick in 0usize..8,
        bump in 1e-3..5.0f64,
    ) {
        let i = pick % logits.len();
        let mut up = logits.clone();
        up[i] += bump;
        // E is convex with gradient -p, so the drop sits between bump*p_i before and after.
        // A strict `<` is not testable: far below the max the drop is under one ulp.
        let (before, after) = (marginal_energy_from_logits(&logits), marginal_energy_from_logits(&up));
        let drop = before - after;
        let tol = 4.0 * f64::EPSILON * (1.0 + before.abs());
        let lo = bump * posterior_from_logits(&logits)[i];
        let hi = bump * posterior_from_logits(&up)[i];
        prop_assert!(drop >= lo - tol && drop <= hi + tol, "drop {drop} outside [{lo}, {hi}]");
    }

    #[test]
    fn chains_repeat_under_seed_and_respect_clip(seed in 0u64..1000, xs in points(), step in 0.0..2.0f64) {
        let model = mlp(seed);
        let x = batch(&xs).map(|v| v.clamp(-1.0, 1.0));
        let cfg = SgldConfig { steps: 8, step_size: step, noise: 0.3, clip: Some((-1.0, 1.0)), ..SgldConfig::default() };
        let a = refine(&model, &x, 8, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let b = refine(&model, &x, 8, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        for (s, t) in a.iter().zip(&b) {
            prop_assert_eq!(s.data(), t.data());
            prop_assert!(s.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn balance_ratio_is_finite_and_scales_generative_norm(seed in 0u64..1000, xs in points(), alpha in 0.01..0.99f64) {
        let model = mlp(seed);
        let x = batch(&xs);
        let labels: Vec<usize> = (0..x.rows()).map(|i| i % 3).collect();
        let neg = x.map(|v| -0.5 * v + 0.3);
        let (_, gd) = disc_loss_and_grads(&model, &x, &labels, 0.0, None).unwrap();
        let (_, gg) = cd_loss_and_grads(&model, &x, &neg).unwrap();
        let (nd, ng) = (global_norm(&gd), global_norm(&gg));
        let c = grad_balance(nd, ng, 0.0);
        prop_assume!(ng > 0.0 && nd > 0.0);
        prop_assert!(c.is_finite() && c >= 0.0);
        let scaled: Vec<Tensor> = gg.iter().map(|g| g.map(|v| alpha * c * v)).collect();
        prop_assert!(close(global_norm(&scaled), alpha * nd, 1e-9));
    }

    #[test]
    fn grid_density_is_normalized_and_z_grows_with_a_logit(seed in 0u64..1000, class in 0usize..3, bump in 0.01..2.0f64) {
        let model = mlp(seed);
        let grid = Grid::square(2, -3.0, 3.0, 24).unwrap();
        let mass = exact_density(&model, &grid).unwrap().total_mass();
        prop_assert!((mass - 1.0).abs() < 1e-9);
        let mut raised = model.clone();
        let last = raised.params().len() - 1;
        raised.params_mut()[last].data_mut()[class] += bump;
        prop_assert!(partition_function(&raised, &grid).unwrap() > partition_function(&model, &grid).unwrap());
    }

    #[test]
    fn kappa_is_bounded(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..40)) {
        let (a, b): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
        let k = kappa(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&k));
    }

    #[test]
    fn cross_entropy_bounds_human_entropy(
        rows in prop::collection::vec((prop::collection::vec(0u64..20, 3), prop::collection::vec(0.01..1.0f64, 3)), 1..6),
    ) {
        let counts: Vec<Vec<u64>> = rows.iter().map(|(c, _)| {
            let mut c = c.clone();
            if c.iter().all(|&v| v == 0) { c[0] = 1; }
            c
        }).collect();
        let probs: Vec<Vec<f64>> = rows.iter().map(|(_, p)| {
            let s: f64 = p.iter().sum();
            p.iter().map(|v| v / s).collect()
        }).collect();
        let model = Tensor::from_rows(&probs).unwrap();
        let ce = soft_label_ce(&model, &counts).unwrap();
        let h = mean_human_entropy(&counts).unwrap();
        let kl = soft_label_kl(&model, &counts).unwrap();
        prop_assert!(ce >= h - 1e-12);
        prop_assert!((kl - (ce - h)).abs() < 1e-12);

        // equality when the model reports the human distribution
        let human: Vec<Vec<f64>> = counts.iter().map(|c| {
            let s = c.iter().sum::<u64>() as f64;
            c.iter().map(|&v| v as f64 / s).collect()
        }).collect();
        let same = Tensor::from_rows(&human).unwrap();
        prop_assert!((soft_label_ce(&same, &counts).unwrap() - h).abs() < 1e-9);
    }

    #[test]
    fn perceptual_distance_is_a_pseudometric(
        a in prop::collection::vec(-3.0..3.0f64, 12),
        b in prop::collection::vec(-3.0..3.0f64, 12),
    ) {
        // one sample, 3 channels, 2x2 positions
        let ta = Tensor::new(vec![1, 3, 2, 2], a).unwrap();
        let tb = Tensor::new(vec![1, 3, 2, 2], b).unwrap();
        let ab = layer_distances(&ta, &tb).unwrap()[0];
        let ba = layer_distances(&tb, &ta).unwrap()[0];
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert_eq!(layer_distances(&ta, &ta).unwrap()[0], 0.0);
    }

    #[test]
    fn shape_bias_ignores_row_order(
        rows in prop::collection::vec((0usize..3, 0usize..3, 1usize..3), 1..30),
        rotate in 0usize..30,
    ) {
        let preds: Vec<usize> = rows.iter().map(|r| r.0).collect();
        let shape: Vec<usize> = rows.iter().map(|r| r.1).collect();
        let texture: Vec<usize> = rows.iter().map(|r| (r.1 + r.2) % 3).collect();
        let k = rotate % rows.len();
        let rot = |v: &[usize]| [&v[k..], &v[..k]].concat();
        let a = shape_bias(&preds, &shape, &texture, ShapeBiasMode::CueDecisions).ok();
        let b = shape_bias(&rot(&preds), &rot(&shape), &rot(&texture), ShapeBiasMode::CueDecisions).ok();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn generators_are_pure(seed in 0u64..500) {
        let a = gen_mixture2d(3, 120, 3.0, seed).unwrap();
        let b = gen_mixture2d(3, 120, 3.0, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.labels.iter().all(|&y| y < 3));
        let soft = gen_soft_labels(&a, 7, seed).unwrap();
        prop_assert!(soft.counts.iter().all(|row| row.iter().sum::<u64>() == 7));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn cue_conflict_images_stay_in_range(seed in 0u64..100) {
        let set = gen_cue_conflict(3, 16, 6, 6, seed).unwrap();
        prop_assert_eq!(&set, &gen_cue_conflict(3, 16, 6, 6, seed).unwrap());
        prop_assert!(set.images.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        prop_assert!(set.shape_labels.iter().chain(&set.texture_labels).all(|&y| y < 3));
    }
}

#[test]
fn halving_cells_barely_moves_z_tv_and_gradient() {
    let model = EnergyModel::build(NetworkSpec::points2d(3), 1).unwrap();
    let pts = gen_mixture2d(3, 500, 3.0, 2).unwrap();
    let coarse = Grid::square(2, -7.0, 7.0, 100).unwrap();
    let fine = coarse.refined().unwrap();
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs();

    let (zc, zf) = (partition_function(&model, &coarse).unwrap(), partition_function(&model, &fine).unwrap());
    assert!(rel(zc, zf) < 1e-3, "Z {zc} vs {zf}");

    let spec = pts.spec.clone();
    let tv = |grid: &Grid| {
        let truth = DensityField::from_log_density(grid.clone(), |x| spec.log_density(x)).unwrap();
        exact_density(&model, grid).unwrap().tv(&truth).unwrap()
    };
    let (tc, tf) = (tv(&coarse), tv(&fine));
    assert!(rel(tc, tf) < 1e-3, "TV {tc} vs {tf}");

    let (gc, gf) = (
        exact_ml_gradient(&model, &coarse, &pts.points).unwrap().norm(),
        exact_ml_gradient(&model, &fine, &pts.points).unwrap().norm(),
    );
    assert!(rel(gc, gf) < 1e-3, "gradient norm {gc} vs {gf}");
}

#[test]
fn quadratic_chain_without_noise_descends() {
    let x = Tensor::new(vec![1, 2], vec![2.0, -1.5]).unwrap();
    let cfg = SgldConfig {
        steps: 200,
        step_size: 0.05,
        noise: 0.0,
        clip: None,
        decay: StepDecay::Constant,
        coupling: NoiseCoupling::Decoupled,
    };
    let y = sample_chain(&Quadratic::default(), &x, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(y.sq_norm() < x.sq_norm());
}
