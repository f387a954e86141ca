mod common;

use flowscope::dataset::{Dataset, PointSet};
use flowscope::diagnostics::{model_loss_sweep, target_mse_sweep};
use flowscope::model::{FieldTag, FnField};
use flowscope::oracle::{
    conditional_velocity, interpolate, log_sum_exp, oracle_velocity, posterior_weights, OracleField,
};
use flowscope::sampler::{guided_velocity, mixed_sample, prior_sample, GuidanceConfig, MixedConfig};
use flowscope::schedule::TimeGrid;
use proptest::prelude::*;

use common::*;

fn small_dataset() -> impl Strategy<Value = Dataset> {
    (1usize..=16, 1usize..=8, 0u64..10_000, 0.1f64..4.0).prop_map(|(n, d, seed, scale)| {
        let base = Dataset::gen_gaussian(n, d, seed).unwrap();
        Dataset::new(base.points().iter().map(|v| v * scale).collect(), d, None, "p").unwrap()
    })
}

fn labeled_dataset() -> impl Strategy<Value = Dataset> {
    (1usize..=4, 1usize..=5, 0u64..10_000).prop_map(|(k, npc, seed)| {
        Dataset::gen_mixture(&Dataset::ring_centers(k, 3.0), 0.7, npc, seed).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coefficients_follow_from_path_rates(t in 0.0f64..1.0) {
        let e = rf().eval(t).unwrap();
        prop_assert!(e.t <= 1.0 - 1e-3);
        let a = e.alpha_dot - e.alpha * e.sigma_dot / e.sigma;
        let b = e.sigma_dot / e.sigma;
        prop_assert!((e.coeff_a - a).abs() <= 1e-12 * a.abs());
        prop_assert!((e.coeff_b - b).abs() <= 1e-12 * b.abs());
        prop_assert!((e.coeff_a + e.coeff_b).abs() <= 1e-12 * e.coeff_a);
    }

    #[test]
    fn unit_shift_grid_is_uniform(n in 2usize..200) {
        let a = TimeGrid::shifted(n, 1.0).unwrap();
        let b = TimeGrid::uniform(n).unwrap();
        for (x, y) in a.times().iter().zip(b.times()) {
            prop_assert!((x - y).abs() <= 1e-15);
        }
    }

    #[test]
    fn generators_are_deterministic(n in 1usize..30, d in 1usize..6, seed in 0u64..1000) {
        prop_assert_eq!(Dataset::gen_gaussian(n, d, seed).unwrap(), Dataset::gen_gaussian(n, d, seed).unwrap());
    }

    #[test]
    fn normalize_is_idempotent(data in small_dataset()) {
        prop_assume!(data.len() >= 2);
        let once = data.normalize().unwrap();
        let twice = once.normalize().unwrap();
        for (a, b) in once.points().iter().zip(twice.points()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn class_views_cover_every_row(data in labeled_dataset()) {
        let total: usize = data.class_views().iter().map(|v| v.len()).sum();
        prop_assert_eq!(total, data.len());
    }

    #[test]
    fn weights_are_a_distribution(data in small_dataset(), t in 0.0f64..=1.0, seed in 0u64..1000) {
        let xt = prior_sample(data.dim(), seed, 0);
        let w = posterior_weights(&xt, t, &data, &rf()).unwrap();
        prop_assert!(w.weights.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!((w.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!((log_sum_exp(&w.log_weights)).abs() <= 1e-12);
        prop_assert_eq!(w.top1_weight, w.weights[w.top1_index]);
    }

    #[test]
    fn weights_match_direct_densities(data in small_dataset(), t in 0.0f64..0.95, seed in 0u64..1000) {
        let x0 = prior_sample(data.dim(), seed, 0);
        let xt = interpolate(&x0, data.row(seed as usize % data.len()), t, &rf()).unwrap();
        let got = posterior_weights(&xt, t, &data, &rf()).unwrap().weights;
        let want = brute_force_weights(&xt, t, &data);
        for (a, b) in got.iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
        let v = oracle_velocity(&xt, t, &data, &rf()).unwrap();
        let vb = brute_force_oracle(&xt, t, &data);
        for (a, b) in v.iter().zip(&vb) {
            prop_assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0));
        }
    }

    #[test]
    fn log_sum_exp_commutes_with_shifts(xs in prop::collection::vec(-800.0f64..800.0, 1..20), c in -1e3f64..1e3) {
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        let (a, b) = (log_sum_exp(&xs) + c, log_sum_exp(&shifted));
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn saturated_oracle_equals_conditional_target(data in small_dataset(), t in 0.3f64..0.99, seed in 0u64..1000) {
        let i = seed as usize % data.len();
        let x0 = prior_sample(data.dim(), seed, 1);
        let xt = interpolate(&x0, data.row(i), t, &rf()).unwrap();
        let w = posterior_weights(&xt, t, &data, &rf()).unwrap();
        prop_assume!(w.top1_index == i && w.top1_weight > 1.0 - 1e-9);
        let oracle = oracle_velocity(&xt, t, &data, &rf()).unwrap();
        let cond = conditional_velocity(&x0, data.row(i), t, &rf()).unwrap();
        let norm = cond.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(dist(&oracle, &cond) <= 1e-6 * norm.max(1e-12));
    }

    #[test]
    fn class_view_oracle_matches_standalone_subset(data in labeled_dataset(), t in 0.0f64..0.99, seed in 0u64..1000) {
        let xt = prior_sample(data.dim(), seed, 0);
        for view in data.class_views() {
            let standalone = view.to_dataset();
            prop_assert_eq!(
                oracle_velocity(&xt, t, &view, &rf()).unwrap(),
                oracle_velocity(&xt, t, &standalone, &rf()).unwrap()
            );
        }
    }

    #[test]
    fn trajectories_are_tagged_and_reproducible(data in labeled_dataset(), n in 2usize..40, seed in 0u64..1000, ts in 0.0f64..=1.0) {
        let oracle = OracleField::new(&data, rf());
        let model = FnField::new(2, FieldTag::Model, |xt: &[f64], _, _| xt.iter().map(|x| -0.5 * x).collect());
        let grid = TimeGrid::uniform(n).unwrap();
        let x0 = prior_sample(2, seed, 0);
        let cfg = MixedConfig { t_switch: ts, grid: grid.clone(), class: Some(0) };
        let tr = mixed_sample(&oracle, &model, &cfg, &x0).unwrap();
        prop_assert_eq!(tr.times.len(), tr.states.len());
        prop_assert_eq!(tr.field_tags.len(), tr.states.len() - 1);
        prop_assert!(tr.states.iter().flatten().all(|v| v.is_finite()));
        prop_assert!(tr.field_tags.windows(2).filter(|w| w[0] != w[1]).count() <= 1);
        prop_assert!(tr.field_tags.windows(2).all(|w| !(w[0] == FieldTag::Model && w[1] == FieldTag::Oracle)));
        prop_assert_eq!(&tr, &mixed_sample(&oracle, &model, &cfg, &x0).unwrap());
    }

    #[test]
    fn neutral_guidance_is_bitwise_conditional(t in 0.0f64..1.0, seed in 0u64..1000, lo in 0.0f64..0.5, hi in 0.5f64..1.0) {
        let field = FnField::new(3, FieldTag::Model, |xt: &[f64], t: f64, c: Option<u32>| {
            let k = c.map_or(0.3, |c| 1.0 + c as f64);
            xt.iter().map(|x| k * x.sin() + t).collect()
        });
        let xt = prior_sample(3, seed, 0);
        let cond = field_eval(&field, &xt, t, Some(2));
        prop_assert_eq!(&guided_velocity(&field, &xt, t, Some(2), &GuidanceConfig::new(1.0, lo, hi).unwrap()).unwrap(), &cond);
        prop_assert_eq!(&guided_velocity(&field, &xt, t, Some(2), &GuidanceConfig::disabled()).unwrap(), &cond);
    }
}

fn field_eval<F: flowscope::model::VelocityField>(f: &F, xt: &[f64], t: f64, c: Option<u32>) -> Vec<f64> {
    f.evaluate(xt, t, c).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn loss_sweep_shares_samples_with_target_sweep(data in small_dataset(), seed in 0u64..1000) {
        let times = [0.0, 0.1, 0.5, 0.9];
        let oracle = OracleField::new(&data, rf());
        let (cond, star) = model_loss_sweep(&oracle, &data, &rf(), &times, 16, seed, false).unwrap();
        let gap = target_mse_sweep(&data, &rf(), &times, 16, seed).unwrap();
        prop_assert!(star.mean.iter().all(|&m| m == 0.0));
        for (a, b) in cond.mean.iter().zip(&gap.mean) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(b.abs()) + 1e-20);
        }
    }
}
