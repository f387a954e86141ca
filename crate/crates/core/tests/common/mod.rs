//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use flowscope::dataset::{Dataset, PointSet};
use flowscope::model::{MlpConfig, MlpVelocityModel, TrainConfig};
use flowscope::schedule::Schedule;

/// Posterior weights from explicit Gaussian densities
/// `N(xt; t x_i, (1 - t)^2 I)`, normalized by their plain sum.
pub fn brute_force_weights(xt: &[f64], t: f64, data: &Dataset) -> Vec<f64> {
    let d = data.dim() as f64;
    let sigma = 1.0 - t;
    let norm = (2.0 * std::f64::consts::PI * sigma * sigma).powf(-d / 2.0);
    let dens: Vec<f64> = (0..data.len())
        .map(|i| {
            let row = &data.points()[i * data.dim()..(i + 1) * data.dim()];
            let d2: f64 = row.iter().zip(xt).map(|(x1, x)| (x - t * x1).powi(2)).sum();
            norm * (-d2 / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = dens.iter().sum();
    dens.iter().map(|p| p / total).collect()
}

/// Rectified-flow oracle from brute-force weights: `(E[x1 | xt] - xt) / (1 - t)`.
pub fn brute_force_oracle(xt: &[f64], t: f64, data: &Dataset) -> Vec<f64> {
    let w = brute_force_weights(xt, t, data);
    let d = data.dim();
    let mut mean = vec![0.0; d];
    for (i, wi) in w.iter().enumerate() {
        for (m, x) in mean.iter_mut().zip(&data.points()[i * d..(i + 1) * d]) {
            *m += wi * x;
        }
    }
    mean.iter().zip(xt).map(|(m, x)| (m - x) / (1.0 - t)).collect()
}

pub fn rf() -> Schedule {
    Schedule::rectified()
}

/// Eight-class ring of radius 8 with four points per class.
pub fn ring_toy() -> Dataset {
    Dataset::gen_mixture(&Dataset::ring_centers(8, 8.0), 1.0, 4, 1).unwrap()
}

pub fn unlabeled(data: &Dataset) -> Dataset {
    Dataset::new(data.points().to_vec(), data.dim(), None, "unlabeled").unwrap()
}

pub fn toy_config(dim: usize, num_classes: usize) -> MlpConfig {
    MlpConfig {
        dim,
        hidden: 64,
        time_dim: 16,
        class_dim: 8,
        num_classes,
    }
}

pub fn toy_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        steps: 3000,
        batch_size: 256,
        learning_rate: 2e-3,
        seed,
        ..TrainConfig::default()
    }
}

pub fn trained_toy_model(data: &Dataset, num_classes: usize) -> MlpVelocityModel {
    let mut model = MlpVelocityModel::new(toy_config(data.dim(), num_classes), 1).unwrap();
    flowscope::model::train(&mut model, data, &toy_train_config(3), &rf()).unwrap();
    model
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}
