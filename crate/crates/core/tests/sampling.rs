mod common;

use flowscope::dataset::{Dataset, PointSet};
use flowscope::model::{FieldTag, MlpVelocityModel};
use flowscope::oracle::{oracle_velocity, OracleField};
use flowscope::sampler::{
    euler_sample, intermediate_prediction, mixed_sample, prior_sample, resume_sample, GuidanceConfig, GuidedField,
    MixedConfig, ResumeConfig,
};
use flowscope::schedule::TimeGrid;

use common::*;

fn toy() -> (Dataset, MlpVelocityModel) {
    let data = ring_toy();
    let model = trained_toy_model(&data, 8);
    (data, model)
}

#[test]
fn oracle_with_one_point_reaches_it() {
    let x1 = vec![3.0, -1.0, 0.5, 2.0];
    let data = Dataset::new(x1.clone(), 4, None, "one").unwrap();
    let oracle = OracleField::new(&data, rf());
    let tr = euler_sample(&oracle, &TimeGrid::uniform(500).unwrap(), &prior_sample(4, 3, 0), None).unwrap();
    let norm = x1.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(dist(tr.terminal(), &x1) <= 1e-2 * norm);
}

#[test]
fn oracle_intermediate_prediction_with_one_point_is_exact() {
    let x1 = vec![1.5, -0.25];
    let data = Dataset::new(x1.clone(), 2, None, "one").unwrap();
    for (k, t) in [0.0, 0.3, 0.9].into_iter().enumerate() {
        let x0 = prior_sample(2, 9, k as u64);
        let xt: Vec<f64> = x0.iter().zip(&x1).map(|(a, b)| (1.0 - t) * a + t * b).collect();
        let v = oracle_velocity(&xt, t, &data, &rf()).unwrap();
        let pred = intermediate_prediction(&xt, t, &v).unwrap();
        assert!(dist(&pred, &x1) <= 1e-9);
    }
}

#[test]
fn euler_refinement_converges_on_trained_model() {
    let (data, model) = toy();
    let coarse = TimeGrid::uniform(100).unwrap();
    let fine = TimeGrid::uniform(1000).unwrap();
    for k in 0..8u64 {
        let x0 = prior_sample(2, 17, k);
        let class = Some((k % 8) as u32);
        let a = euler_sample(&model, &coarse, &x0, class).unwrap();
        let b = euler_sample(&model, &fine, &x0, class).unwrap();
        let scale = data.rms_norm();
        assert!(dist(a.terminal(), b.terminal()) <= 0.02 * scale, "seed {k}");
    }
}

#[test]
fn oracle_euler_refinement_retrieves_the_same_point() {
    let (mut differ, runs) = (0, 1000u64);
    for seed in 0..runs {
        let data = Dataset::gen_gaussian(20, 3, seed).unwrap();
        let oracle = OracleField::new(&data, rf());
        let x0 = prior_sample(3, seed, 7);
        let a = euler_sample(&oracle, &TimeGrid::uniform(100).unwrap(), &x0, None).unwrap();
        let b = euler_sample(&oracle, &TimeGrid::uniform(1000).unwrap(), &x0, None).unwrap();
        for end in [a.terminal(), b.terminal()] {
            assert!(data.memorization_distance(end).unwrap() <= 1e-6, "seed {seed}");
        }
        let norm = b.terminal().iter().map(|v| v * v).sum::<f64>().sqrt();
        if dist(a.terminal(), b.terminal()) >= 0.02 * norm {
            differ += 1;
        }
    }
    // Priors near a basin boundary may be sent to a neighboring point by the coarse grid.
    eprintln!("100 vs 1000 steps: {differ}/{runs} priors retrieve different points");
    assert!(differ * 100 <= 3 * runs, "{differ}/{runs}");
}

#[test]
fn mixed_sampling_endpoints_match_pure_samplers() {
    let (data, model) = toy();
    let oracle = OracleField::new(&data, rf());
    let grid = TimeGrid::shifted(40, 0.5).unwrap();
    let x0 = prior_sample(2, 5, 2);
    let class = Some(3);
    let pure_model = euler_sample(&model, &grid, &x0, class).unwrap();
    let pure_oracle = euler_sample(&oracle, &grid, &x0, class).unwrap();
    let at = |ts| mixed_sample(&oracle, &model, &MixedConfig { t_switch: ts, grid: grid.clone(), class }, &x0).unwrap();
    assert_eq!(at(0.0).states, pure_model.states);
    let all_oracle = at(1.0);
    assert_eq!(all_oracle.states, pure_oracle.states);
    assert!(data.memorization_distance(all_oracle.terminal()).unwrap() <= 0.05);

    let mid = at(0.3);
    let switches = mid.field_tags.windows(2).filter(|w| w[0] != w[1]).count();
    assert_eq!(switches, 1);
    assert_eq!(mid.field_tags.first(), Some(&FieldTag::Oracle));
    assert_eq!(mid.field_tags.last(), Some(&FieldTag::Model));
}

#[test]
fn resume_from_prior_is_sampling_from_scratch() {
    let (_, model) = toy();
    let grid = TimeGrid::uniform(50).unwrap();
    let cfg = ResumeConfig { t_resume: 0.0, reference: vec![7.0, 7.0], seed: 12, class: Some(1) };
    let resumed = resume_sample(&model, &cfg, &grid, &rf()).unwrap();
    let scratch = euler_sample(&model, &grid, &prior_sample(2, 12, 0), Some(1)).unwrap();
    assert_eq!(resumed.states, scratch.states);
}

fn resume_runs(model: &MlpVelocityModel, t_resume: f64, runs: usize) -> Vec<(Vec<f64>, u32, Vec<f64>)> {
    let held_out = Dataset::gen_mixture(&Dataset::ring_centers(8, 8.0), 1.0, 4, 99).unwrap();
    let grid = TimeGrid::uniform(100).unwrap();
    (0..runs)
        .map(|k| {
            let row = k % held_out.len();
            let reference = held_out.row(row).to_vec();
            let cfg = ResumeConfig { t_resume, reference: reference.clone(), seed: 1000 + k as u64, class: None };
            let tr = resume_sample(model, &cfg, &grid, &rf()).unwrap();
            (reference, held_out.label(row).unwrap(), tr.terminal().to_vec())
        })
        .collect()
}

#[test]
fn resume_keeps_reference_cluster() {
    let (data, model) = toy();
    let kept = |t_resume| {
        resume_runs(&model, t_resume, 100)
            .iter()
            .filter(|(_, label, end)| data.label(data.nearest_neighbor(end).unwrap().0) == Some(*label))
            .count()
    };
    let (early, late) = (kept(0.3), kept(0.6));
    assert!(late >= early && late >= 80, "kept cluster: {early}/100 at t = 0.3, {late}/100 at t = 0.6");
}

#[test]
#[ignore = "needs structured high-dimensional data; an exact Gaussian flow reaches at most ~50% at D = 64"]
fn resume_lands_closer_to_reference_than_training_rows() {
    let (data, model) = toy();
    let runs = resume_runs(&model, 0.3, 100);
    let closer = runs
        .iter()
        .filter(|(reference, _, end)| dist(end, reference) < data.nearest_neighbor(end).unwrap().1)
        .count();
    assert!(closer >= 80, "{closer}/100 terminals closer to the reference than to any training row");
}

#[test]
fn unit_guidance_matches_conditional_sampling() {
    let (_, model) = toy();
    let grid = TimeGrid::uniform(30).unwrap();
    let x0 = prior_sample(2, 8, 0);
    let plain = euler_sample(&model, &grid, &x0, Some(2)).unwrap();
    let unit = GuidedField::new(&model, GuidanceConfig::new(1.0, 0.0, 1.0).unwrap());
    assert_eq!(euler_sample(&unit, &grid, &x0, Some(2)).unwrap().states, plain.states);

    let strong = GuidedField::new(&model, GuidanceConfig::new(3.0, 0.2, 0.8).unwrap());
    let guided = euler_sample(&strong, &grid, &x0, Some(2)).unwrap();
    assert_ne!(guided.states, plain.states);
    assert!(euler_sample(&strong, &grid, &x0, None).is_err());
}
