//! Monte Carlo sweeps over time (or switch points) returning mean ± std series.
//!
//! Path samples come from the analytic path marginal: replicate `k` draws
//! `x0 ~ N(0, I)` and a uniform row from `stream_rng(seed, k)`, and the same
//! replicate is reused at every `t` (common random numbers).

use rand::Rng;
use serde_json::json;

use crate::dataset::{Dataset, PointSet};
use crate::error::{Error, Result};
use crate::model::{MlpVelocityModel, VelocityField};
use crate::oracle::{
    conditional_velocity, interpolate, mse, posterior_weights, standard_normal, target_gap, OracleField,
};
use crate::par::{mean_std, stream_rng, try_map_indexed};
use crate::sampler::{mixed_sample, prior_sample, MixedConfig};
use crate::schedule::{Schedule, TimeGrid};

/// One named statistic over an axis, with Monte Carlo spread.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSeries {
    pub name: String,
    /// JSON object text describing the sweep parameters.
    pub params: String,
    pub axis: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub n_mc: usize,
    pub seed: u64,
}

pub const CSV_HEADER: [&str; 7] = ["sweep_name", "param_json", "t", "mean", "std", "n_mc", "seed"];

impl SweepSeries {
    pub fn len(&self) -> usize {
        self.axis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axis.is_empty()
    }

    /// Mean at the axis value closest to `t`.
    pub fn at(&self, t: f64) -> f64 {
        let k = self
            .axis
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(k, _)| k)
            .expect("non-empty series");
        self.mean[k]
    }
}

/// Writes every series as rows of one CSV table.
pub fn series_to_csv(series: &[SweepSeries]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("write to memory");
    for s in series {
        for k in 0..s.len() {
            w.write_record([
                s.name.clone(),
                s.params.clone(),
                s.axis[k].to_string(),
                s.mean[k].to_string(),
                s.std[k].to_string(),
                s.n_mc.to_string(),
                s.seed.to_string(),
            ])
            .expect("write to memory");
        }
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is UTF-8")
}

/// 50 uniform points on [0, 0.98] merged with 0.01..=0.15 in steps of 0.01.
pub fn default_sweep_times() -> Vec<f64> {
    let mut ts: Vec<f64> = (0..50).map(|i| 0.98 * i as f64 / 49.0).collect();
    ts.extend((1..=15).map(|i| i as f64 / 100.0));
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    ts
}

fn check_sweep(times: &[f64], n_mc: usize) -> Result<()> {
    if times.is_empty() {
        return Err(Error::invalid("sweep needs at least one time"));
    }
    if n_mc == 0 {
        return Err(Error::invalid("sweep needs n_mc >= 1"));
    }
    if let Some(t) = times.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::invalid(format!("sweep time {t} outside [0, 1]")));
    }
    Ok(())
}

/// Replicate `k`: prior draw and row index.
fn replicate<P: PointSet + ?Sized>(data: &P, seed: u64, k: usize) -> (Vec<f64>, usize) {
    let mut rng = stream_rng(seed, k as u64);
    let x0 = standard_normal(&mut rng, data.dim());
    let i = rng.random_range(0..data.len());
    (x0, i)
}

/// Evaluates `stat(t, k)` on every (time, replicate) cell; reduces per time.
/// Times are clamped to `t_max` so path points and targets share one time.
fn cells<F>(times: &[f64], n_mc: usize, t_max: f64, stat: F) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(f64, usize) -> Result<f64> + Sync + Send,
{
    let values = try_map_indexed(times.len() * n_mc, |c| stat(times[c / n_mc].min(t_max), c % n_mc))?;
    Ok(values.chunks(n_mc).map(mean_std).unzip())
}

fn series(name: &str, params: serde_json::Value, axis: &[f64], stats: (Vec<f64>, Vec<f64>), n_mc: usize, seed: u64) -> SweepSeries {
    SweepSeries {
        name: name.to_string(),
        params: params.to_string(),
        axis: axis.to_vec(),
        mean: stats.0,
        std: stats.1,
        n_mc,
        seed,
    }
}

fn data_params<P: PointSet + ?Sized>(data: &P) -> serde_json::Value {
    json!({ "n": data.len(), "d": data.dim() })
}

/// Per-dimension MSE between oracle and conditional targets.
pub fn target_mse_sweep<P: PointSet + ?Sized>(
    data: &P,
    schedule: &Schedule,
    times: &[f64],
    n_mc: usize,
    seed: u64,
) -> Result<SweepSeries> {
    check_sweep(times, n_mc)?;
    let stats = cells(times, n_mc, schedule.t_max(), |t, k| {
        let (x0, i) = replicate(data, seed, k);
        target_gap(&x0, i, t, data, schedule)
    })?;
    Ok(series("target_mse", data_params(data), times, stats, n_mc, seed))
}

/// Largest posterior weight.
pub fn top1_sweep<P: PointSet + ?Sized>(
    data: &P,
    schedule: &Schedule,
    times: &[f64],
    n_mc: usize,
    seed: u64,
) -> Result<SweepSeries> {
    check_sweep(times, n_mc)?;
    let stats = cells(times, n_mc, schedule.t_max(), |t, k| {
        let (x0, i) = replicate(data, seed, k);
        let xt = interpolate(&x0, data.row(i), t, schedule)?;
        Ok(posterior_weights(&xt, t, data, schedule)?.top1_weight)
    })?;
    Ok(series("top1", data_params(data), times, stats, n_mc, seed))
}

/// One top-1 sweep per `(D, N)` pair on fresh unit-Gaussian data generated
/// with `seed`. Output order is dims-major.
pub fn dim_size_sweep(
    dims: &[usize],
    sizes: &[usize],
    schedule: &Schedule,
    times: &[f64],
    n_mc: usize,
    seed: u64,
) -> Result<Vec<SweepSeries>> {
    if dims.is_empty() || sizes.is_empty() {
        return Err(Error::invalid("dimension and size lists must be non-empty"));
    }
    let mut out = Vec::with_capacity(dims.len() * sizes.len());
    for &d in dims {
        for &n in sizes {
            let data = Dataset::gen_gaussian(n, d, seed)?;
            let mut s = top1_sweep(&data, schedule, times, n_mc, seed)?;
            s.name = "dim_size_top1".to_string();
            out.push(s);
        }
    }
    Ok(out)
}

/// Model MSE against the conditional and oracle targets on shared samples.
/// With `conditional`, the model sees the sampled row's label and the oracle
/// is restricted to that class.
pub fn model_loss_sweep<F: VelocityField + ?Sized>(
    model: &F,
    data: &Dataset,
    schedule: &Schedule,
    times: &[f64],
    n_mc: usize,
    seed: u64,
    conditional: bool,
) -> Result<(SweepSeries, SweepSeries)> {
    check_sweep(times, n_mc)?;
    if conditional && data.labels().is_none() {
        return Err(Error::invalid("conditional loss sweep needs labeled data"));
    }
    let oracle = OracleField::new(data, *schedule);
    let pairs = try_map_indexed(times.len() * n_mc, |c| -> Result<(f64, f64)> {
        let t = times[c / n_mc].min(schedule.t_max());
        let (x0, i) = replicate(data, seed, c % n_mc);
        let class = if conditional { data.label(i) } else { None };
        let x1 = data.row(i);
        let xt = interpolate(&x0, x1, t, schedule)?;
        let v = model.evaluate(&xt, t, class)?;
        let cond = conditional_velocity(&x0, x1, t, schedule)?;
        let star = oracle.evaluate(&xt, t, class)?;
        Ok((mse(&v, &cond), mse(&v, &star)))
    })?;
    let (cond, star): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let reduce = |v: Vec<f64>| -> (Vec<f64>, Vec<f64>) { v.chunks(n_mc).map(mean_std).unzip() };
    let params = json!({ "n": data.len(), "d": data.dim(), "conditional": conditional });
    Ok((
        series("model_loss_conditional", params.clone(), times, reduce(cond), n_mc, seed),
        series("model_loss_oracle", params, times, reduce(star), n_mc, seed),
    ))
}

/// Mean L2 norm of the field's unconditional output at path samples.
pub fn velocity_norm_sweep<F: VelocityField + ?Sized>(
    field: &F,
    data: &Dataset,
    schedule: &Schedule,
    times: &[f64],
    n_mc: usize,
    seed: u64,
) -> Result<SweepSeries> {
    check_sweep(times, n_mc)?;
    let stats = cells(times, n_mc, schedule.t_max(), |t, k| {
        let (x0, i) = replicate(data, seed, k);
        let xt = interpolate(&x0, data.row(i), t, schedule)?;
        let v = field.evaluate(&xt, t, None)?;
        Ok(v.iter().map(|x| x * x).sum::<f64>().sqrt())
    })?;
    Ok(series("velocity_norm", data_params(data), times, stats, n_mc, seed))
}

/// Mean L2 distance between the labeled and null-class predictions.
pub fn cond_uncond_divergence(
    model: &MlpVelocityModel,
    data: &Dataset,
    schedule: &Schedule,
    times: &[f64],
    n_mc: usize,
    seed: u64,
) -> Result<SweepSeries> {
    check_sweep(times, n_mc)?;
    if model.config().num_classes == 0 {
        return Err(Error::invalid("model has no class embeddings"));
    }
    if data.labels().is_none() {
        return Err(Error::invalid("conditional/unconditional divergence needs labeled data"));
    }
    let stats = cells(times, n_mc, schedule.t_max(), |t, k| {
        let (x0, i) = replicate(data, seed, k);
        let xt = interpolate(&x0, data.row(i), t, schedule)?;
        let vc = model.forward(&xt, t, data.label(i))?;
        let vu = model.forward(&xt, t, None)?;
        Ok(vc.iter().zip(&vu).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
    })?;
    Ok(series("cond_uncond_divergence", data_params(data), times, stats, n_mc, seed))
}

/// Terminal nearest-neighbor distance over `rms_norm` for every
/// `(t_switch, seed)` pair, indexed `[switch][seed]`. Seed `k` starts from
/// `prior_sample(D, seed, k)` at every switch time, so rows are paired; with
/// `conditional`, it samples class `k mod K`.
#[allow(clippy::too_many_arguments)]
pub fn memorization_distances<O, M>(
    oracle: &O,
    model: &M,
    data: &Dataset,
    t_switches: &[f64],
    n_seeds: usize,
    grid: &TimeGrid,
    seed: u64,
    conditional: bool,
) -> Result<Vec<Vec<f64>>>
where
    O: VelocityField + ?Sized,
    M: VelocityField + ?Sized,
{
    check_sweep(t_switches, n_seeds)?;
    let k_classes = data.num_classes();
    if conditional && k_classes == 0 {
        return Err(Error::invalid("conditional memorization curve needs labeled data"));
    }
    let values = try_map_indexed(t_switches.len() * n_seeds, |c| {
        let (ts, k) = (t_switches[c / n_seeds], c % n_seeds);
        let class = conditional.then(|| (k % k_classes) as u32);
        let x0 = prior_sample(data.dim(), seed, k as u64);
        let cfg = MixedConfig { t_switch: ts, grid: grid.clone(), class };
        let tr = mixed_sample(oracle, model, &cfg, &x0)?;
        data.memorization_distance(tr.terminal())
    })?;
    Ok(values.chunks(n_seeds).map(<[f64]>::to_vec).collect())
}

/// Mean and std over seeds of [`memorization_distances`], per switch time.
#[allow(clippy::too_many_arguments)]
pub fn memorization_curve<O, M>(
    oracle: &O,
    model: &M,
    data: &Dataset,
    t_switches: &[f64],
    n_seeds: usize,
    grid: &TimeGrid,
    seed: u64,
    conditional: bool,
) -> Result<SweepSeries>
where
    O: VelocityField + ?Sized,
    M: VelocityField + ?Sized,
{
    let rows = memorization_distances(oracle, model, data, t_switches, n_seeds, grid, seed, conditional)?;
    let stats = rows.iter().map(|r| mean_std(r)).unzip();
    let params = json!({ "n": data.len(), "d": data.dim(), "steps": grid.len(), "conditional": conditional });
    Ok(series("memorization", params, t_switches, stats, n_seeds, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FieldTag, FnField, MlpConfig};

    fn rf() -> Schedule {
        Schedule::rectified()
    }

    #[test]
    fn default_times_are_sorted_and_dense_early() {
        let ts = default_sweep_times();
        assert!(ts.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(ts[0], 0.0);
        assert!((ts.last().unwrap() - 0.98).abs() < 1e-12);
        for i in 1..=15 {
            assert!(ts.iter().any(|t| (t - i as f64 / 100.0).abs() < 1e-12));
        }
    }

    #[test]
    fn single_point_sweeps() {
        let data = Dataset::new(vec![1.0, 2.0, 3.0], 3, None, "one").unwrap();
        let ts = [0.0, 0.3, 0.9, 1.0];
        let gap = target_mse_sweep(&data, &rf(), &ts, 8, 1).unwrap();
        assert!(gap.mean.iter().all(|m| *m == 0.0), "{:?}", gap.mean);
        let top = top1_sweep(&data, &rf(), &ts, 8, 1).unwrap();
        assert!(top.mean.iter().all(|m| *m == 1.0));
        assert!(top.std.iter().all(|s| *s == 0.0));
    }

    #[test]
    fn top1_at_prior_is_uniform() {
        let data = Dataset::gen_gaussian(37, 5, 2).unwrap();
        let s = top1_sweep(&data, &rf(), &[0.0, 0.5], 16, 3).unwrap();
        assert_eq!(s.mean[0], 1.0 / 37.0);
        assert_eq!(s.std[0], 0.0);
        assert!(s.mean[1] > s.mean[0]);
    }

    #[test]
    fn sweeps_validate_inputs() {
        let data = Dataset::gen_gaussian(4, 2, 1).unwrap();
        assert!(top1_sweep(&data, &rf(), &[], 4, 1).is_err());
        assert!(top1_sweep(&data, &rf(), &[0.5], 0, 1).is_err());
        assert!(target_mse_sweep(&data, &rf(), &[1.5], 4, 1).is_err());
        assert!(dim_size_sweep(&[], &[4], &rf(), &[0.5], 4, 1).is_err());
    }

    #[test]
    fn sweeps_are_deterministic() {
        let data = Dataset::gen_gaussian(20, 3, 5).unwrap();
        let a = target_mse_sweep(&data, &rf(), &[0.1, 0.5], 32, 9).unwrap();
        let b = target_mse_sweep(&data, &rf(), &[0.1, 0.5], 32, 9).unwrap();
        assert_eq!(series_to_csv(std::slice::from_ref(&a)), series_to_csv(&[b]));
        let c = target_mse_sweep(&data, &rf(), &[0.1, 0.5], 32, 10).unwrap();
        assert_ne!(a.mean, c.mean);
    }

    #[test]
    fn zero_model_oracle_loss_at_prior() {
        // At t = 0 the oracle target is mean(data) - x0.
        let data = Dataset::gen_gaussian(9, 4, 1).unwrap();
        let zero = FnField::new(4, FieldTag::Model, |_, _, _| vec![0.0; 4]);
        let (_, star) = model_loss_sweep(&zero, &data, &rf(), &[0.0], 64, 2, false).unwrap();
        let mean = data.mean();
        let want: Vec<f64> = (0..64)
            .map(|k| {
                let (x0, _) = replicate(&data, 2, k);
                mean.iter().zip(&x0).map(|(m, x)| (m - x) * (m - x)).sum::<f64>() / 4.0
            })
            .collect();
        let (m, _) = mean_std(&want);
        assert!((star.mean[0] - m).abs() < 1e-12);
    }

    #[test]
    fn oracle_as_model_has_zero_oracle_loss() {
        let data = Dataset::gen_mixture(&[vec![3.0, 0.0], vec![-3.0, 0.0]], 0.4, 8, 1).unwrap();
        let oracle = OracleField::new(&data, rf());
        let (_, star) = model_loss_sweep(&oracle, &data, &rf(), &[0.02, 0.5, 0.9], 32, 1, true).unwrap();
        assert!(star.mean.iter().all(|m| *m < 1e-20));
        let oracle = oracle.unconditional();
        let (cond, star) = model_loss_sweep(&oracle, &data, &rf(), &[0.02, 0.5, 0.9], 32, 1, false).unwrap();
        assert!(star.mean.iter().all(|m| *m < 1e-20));
        assert!(cond.mean[0] > cond.mean[1]);
    }

    #[test]
    fn zero_field_has_zero_norm() {
        let data = Dataset::gen_gaussian(5, 3, 1).unwrap();
        let zero = FnField::new(3, FieldTag::Model, |_, _, _| vec![0.0; 3]);
        let s = velocity_norm_sweep(&zero, &data, &rf(), &[0.0, 0.5], 8, 1).unwrap();
        assert!(s.mean.iter().all(|m| *m == 0.0));
    }

    #[test]
    fn zeroed_class_embeddings_give_zero_divergence() {
        let data = Dataset::gen_mixture(&[vec![3.0, 0.0], vec![-3.0, 0.0]], 0.4, 8, 1).unwrap();
        let mut model = MlpVelocityModel::new(MlpConfig { dim: 2, hidden: 8, time_dim: 4, class_dim: 3, num_classes: 2 }, 1).unwrap();
        model.reinit_output(3);
        let s = cond_uncond_divergence(&model, &data, &rf(), &[0.1, 0.5], 8, 1).unwrap();
        assert!(s.mean.iter().all(|m| *m > 0.0));
        model.zero_class_embeddings();
        let s = cond_uncond_divergence(&model, &data, &rf(), &[0.1, 0.5], 8, 1).unwrap();
        assert!(s.mean.iter().all(|m| *m == 0.0));
    }

    #[test]
    fn memorization_with_oracle_everywhere_retrieves() {
        let data = Dataset::gen_mixture(&[vec![3.0, 0.0], vec![-3.0, 0.0]], 0.4, 8, 1).unwrap();
        let oracle = OracleField::new(&data, rf());
        let drift = FnField::new(2, FieldTag::Model, |_, _, _| vec![0.0, 0.0]);
        let grid = TimeGrid::uniform(200).unwrap();
        let s = memorization_curve(&oracle, &drift, &data, &[0.0, 1.0], 6, &grid, 4, true).unwrap();
        assert!(s.mean[1] < 1e-6, "{:?}", s.mean);
        assert!(s.mean[0] > s.mean[1]);
    }

    #[test]
    fn csv_quotes_json_params() {
        let data = Dataset::gen_gaussian(3, 2, 1).unwrap();
        let s = top1_sweep(&data, &rf(), &[0.0], 2, 5).unwrap();
        let csv = series_to_csv(&[s]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "sweep_name,param_json,t,mean,std,n_mc,seed");
        assert_eq!(lines.next().unwrap(), "top1,\"{\"\"d\"\":2,\"\"n\"\":3}\",0,0.3333333333333333,0,2,5");
    }
}
