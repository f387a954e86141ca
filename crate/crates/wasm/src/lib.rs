//! Browser bindings for three flowscope operations: shifted step grids,
//! posterior top-1 saturation and closed-form oracle trajectories in 2-D.

use flowscope::dataset::{Dataset, PointSet};
use flowscope::diagnostics::{default_sweep_times, top1_sweep};
use flowscope::oracle::OracleField;
use flowscope::sampler::{euler_sample, prior_sample};
use flowscope::schedule::{Schedule, TimeGrid};
use wasm_bindgen::prelude::*;

fn js(e: flowscope::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Left endpoints of the shifted grid; the last element is the fraction of
/// steps at or below `threshold`.
#[wasm_bindgen]
pub fn shift_schedule(steps: usize, shift: f64, threshold: f64) -> Result<Vec<f64>, JsError> {
    let grid = TimeGrid::shifted(steps, shift).map_err(js)?;
    let mut out = grid.times().to_vec();
    out.push(grid.fraction_below(threshold));
    Ok(out)
}

/// Mean top-1 posterior weight on unit-Gaussian data, interleaved as
/// `[t0, mean0, t1, mean1, ..]` over the default sweep times.
#[wasm_bindgen]
pub fn posterior_top1_curve(n: usize, d: usize, n_mc: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    let data = Dataset::gen_gaussian(n, d, seed).map_err(js)?;
    let times = default_sweep_times();
    let s = top1_sweep(&data, &Schedule::rectified(), &times, n_mc, seed).map_err(js)?;
    Ok(times.iter().zip(&s.mean).flat_map(|(&t, &m)| [t, m]).collect())
}

/// Ring mixture and pure-oracle Euler paths from independent priors.
#[wasm_bindgen]
pub struct OracleTrajectories {
    points: Vec<f64>,
    paths: Vec<f64>,
    path_len: usize,
}

#[wasm_bindgen]
impl OracleTrajectories {
    /// Training points as `[x0, y0, x1, y1, ..]`.
    #[wasm_bindgen(getter)]
    pub fn points(&self) -> Vec<f64> {
        self.points.clone()
    }

    /// Paths back to back, each `path_len` states of two coordinates.
    #[wasm_bindgen(getter)]
    pub fn paths(&self) -> Vec<f64> {
        self.paths.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn path_len(&self) -> usize {
        self.path_len
    }
}

#[wasm_bindgen]
pub fn oracle_trajectories_2d(
    clusters: usize,
    per_cluster: usize,
    steps: usize,
    shift: f64,
    n_paths: usize,
    seed: u64,
) -> Result<OracleTrajectories, JsError> {
    let data = Dataset::gen_mixture(&Dataset::ring_centers(clusters, 4.0), 0.6, per_cluster, seed).map_err(js)?;
    let oracle = OracleField::new(&data, Schedule::rectified()).unconditional();
    let grid = TimeGrid::shifted(steps, shift).map_err(js)?;
    let mut paths = Vec::with_capacity(n_paths * (steps + 1) * 2);
    for k in 0..n_paths {
        let tr = euler_sample(&oracle, &grid, &prior_sample(2, seed, k as u64), None).map_err(js)?;
        paths.extend(tr.states.iter().flatten());
    }
    Ok(OracleTrajectories {
        points: (0..data.len()).flat_map(|i| data.row(i).to_vec()).collect(),
        paths,
        path_len: steps + 1,
    })
}
