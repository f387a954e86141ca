//! Closed-form marginal velocity over a finite dataset.
//!
//! With a standard-normal prior and the empirical mixture over `x1^(i)`, the
//! path marginal at time `t` is a Gaussian mixture with components
//! `N(alpha_t x1^(i), sigma_t^2 I)`. The posterior over components is a
//! softmax of `-|x_t - alpha_t x1^(i)|^2 / (2 sigma_t^2)`, its mean is the
//! Nadaraya-Watson estimate of `E[x1 | x_t]`, and the marginal velocity is
//!
//! ```text
//! u*(x_t, t) = coeff_a(t) * E[x1 | x_t] + coeff_b(t) * x_t
//! ```
//!
//! The exponents grow linearly with the dimension (hundreds to thousands at
//! D = 4096), so every weight is computed in the log domain.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::{ClassView, Dataset, PointSet};
use crate::error::{check_dim, Error, Result};
use crate::model::{FieldTag, VelocityField};
use crate::schedule::Schedule;

/// Normalized posterior weights over the rows of a point set.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorWeights {
    /// Log-weights, shifted so that their log-sum-exp is 0.
    pub log_weights: Vec<f64>,
    pub weights: Vec<f64>,
    pub top1_index: usize,
    pub top1_weight: f64,
}

/// One draw from the interpolation path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub x0: Vec<f64>,
    pub x1_index: usize,
    pub t: f64,
    pub xt: Vec<f64>,
}

impl PathSample {
    /// Draws `x0 ~ N(0, I)` and a uniform row, then interpolates at `t`.
    pub fn draw<R: Rng + ?Sized, P: PointSet + ?Sized>(
        rng: &mut R,
        data: &P,
        t: f64,
        schedule: &Schedule,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("cannot sample a path from empty data"));
        }
        let x0 = standard_normal(rng, data.dim());
        let x1_index = rng.random_range(0..data.len());
        Self::from_parts(x0, x1_index, t, data, schedule)
    }

    pub fn from_parts<P: PointSet + ?Sized>(
        x0: Vec<f64>,
        x1_index: usize,
        t: f64,
        data: &P,
        schedule: &Schedule,
    ) -> Result<Self> {
        check_row(data, x1_index)?;
        let xt = interpolate(&x0, data.row(x1_index), t, schedule)?;
        Ok(PathSample {
            x0,
            x1_index,
            t,
            xt,
        })
    }
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

/// `log(sum(exp(xs)))` with max-shift; `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn check_t(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("t must lie in [0, 1], got {t}")));
    }
    Ok(())
}

fn check_row<P: PointSet + ?Sized>(data: &P, i: usize) -> Result<()> {
    if i >= data.len() {
        return Err(Error::invalid(format!(
            "row index {i} out of range for {} rows",
            data.len()
        )));
    }
    Ok(())
}

/// `alpha_t * x1 + sigma_t * x0`, unclamped.
pub fn interpolate(x0: &[f64], x1: &[f64], t: f64, schedule: &Schedule) -> Result<Vec<f64>> {
    check_dim(x0.len(), x1.len(), "interpolate")?;
    check_t(t)?;
    let p = schedule.path(t);
    Ok(x0.iter().zip(x1).map(|(a, b)| p.alpha * b + p.sigma * a).collect())
}

/// `alpha_dot_t * x1 + sigma_dot_t * x0`; for rectified flow, `x1 - x0`.
pub fn conditional_velocity(x0: &[f64], x1: &[f64], t: f64, schedule: &Schedule) -> Result<Vec<f64>> {
    check_dim(x0.len(), x1.len(), "conditional_velocity")?;
    check_t(t)?;
    let p = schedule.path(t);
    Ok(x0.iter().zip(x1).map(|(a, b)| p.alpha_dot * b + p.sigma_dot * a).collect())
}

/// Per-row exponents `-|xt - alpha x_i|^2 / (2 sigma^2)` at the clamped time.
fn log_kernels<P: PointSet + ?Sized>(xt: &[f64], t: f64, data: &P, schedule: &Schedule) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::invalid("posterior over empty data"));
    }
    check_dim(data.dim(), xt.len(), "query point")?;
    check_t(t)?;
    let e = schedule.eval(t)?;
    let scale = -0.5 / (e.sigma * e.sigma);
    Ok((0..data.len())
        .map(|i| {
            let d2: f64 = data
                .row(i)
                .iter()
                .zip(xt)
                .map(|(x1, x)| {
                    let r = x - e.alpha * x1;
                    r * r
                })
                .sum();
            scale * d2
        })
        .collect())
}

pub fn posterior_weights<P: PointSet + ?Sized>(
    xt: &[f64],
    t: f64,
    data: &P,
    schedule: &Schedule,
) -> Result<PosteriorWeights> {
    let mut log_weights = log_kernels(xt, t, data, schedule)?;
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    log_weights.iter_mut().for_each(|l| *l -= max);
    let mut weights: Vec<f64> = log_weights.iter().map(|l| l.exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let log_total = total.ln();
    log_weights.iter_mut().for_each(|l| *l -= log_total);
    let mut top1_index = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w > weights[top1_index] {
            top1_index = i;
        }
    }
    Ok(PosteriorWeights {
        top1_weight: weights[top1_index],
        top1_index,
        log_weights,
        weights,
    })
}

fn weighted_rows<P: PointSet + ?Sized>(weights: &[f64], data: &P) -> Vec<f64> {
    let mut out = vec![0.0; data.dim()];
    for (i, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (o, x) in out.iter_mut().zip(data.row(i)) {
            *o += w * x;
        }
    }
    out
}

/// Posterior mean `E[x1 | x_t]`.
pub fn posterior_mean<P: PointSet + ?Sized>(xt: &[f64], t: f64, data: &P, schedule: &Schedule) -> Result<Vec<f64>> {
    let w = posterior_weights(xt, t, data, schedule)?;
    Ok(weighted_rows(&w.weights, data))
}

pub fn oracle_velocity<P: PointSet + ?Sized>(xt: &[f64], t: f64, data: &P, schedule: &Schedule) -> Result<Vec<f64>> {
    let mean = posterior_mean(xt, t, data, schedule)?;
    let e = schedule.eval(t)?;
    Ok(mean
        .iter()
        .zip(xt)
        .map(|(m, x)| e.coeff_a * m + e.coeff_b * x)
        .collect())
}

/// Log-density of the path marginal `(1/N) sum_i N(xt; alpha x_i, sigma^2 I)`.
pub fn mixture_log_density<P: PointSet + ?Sized>(xt: &[f64], t: f64, data: &P, schedule: &Schedule) -> Result<f64> {
    let k = log_kernels(xt, t, data, schedule)?;
    let e = schedule.eval(t)?;
    let d = data.dim() as f64;
    let log_norm = -0.5 * d * (2.0 * std::f64::consts::PI * e.sigma * e.sigma).ln();
    Ok(log_sum_exp(&k) - (data.len() as f64).ln() + log_norm)
}

/// Per-dimension squared distance between the oracle and conditional
/// targets at the path point built from `x0` and row `x1_index`, computed as
/// `A_t^2 |E[x1 | xt] - x1|^2 / D` (the two targets differ by exactly
/// `A_t (E[x1 | xt] - x1)` on any schedule).
pub fn target_gap<P: PointSet + ?Sized>(
    x0: &[f64],
    x1_index: usize,
    t: f64,
    data: &P,
    schedule: &Schedule,
) -> Result<f64> {
    check_row(data, x1_index)?;
    check_t(t)?;
    let t = t.min(schedule.t_max());
    let x1 = data.row(x1_index);
    let xt = interpolate(x0, x1, t, schedule)?;
    let mean = posterior_mean(&xt, t, data, schedule)?;
    let a = schedule.eval(t)?.coeff_a;
    Ok(a * a * mse(&mean, x1))
}

pub(crate) fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Oracle velocities for a row-major batch of queries, one time per query.
pub fn oracle_velocity_batch<P: PointSet + ?Sized>(
    queries: &[f64],
    ts: &[f64],
    data: &P,
    schedule: &Schedule,
) -> Result<Vec<f64>> {
    let d = data.dim();
    if queries.len() != ts.len() * d {
        return Err(Error::invalid(format!(
            "batch of {} times needs {} query values, got {}",
            ts.len(),
            ts.len() * d,
            queries.len()
        )));
    }
    let rows = crate::par::try_map_indexed(ts.len(), |q| {
        oracle_velocity(&queries[q * d..(q + 1) * d], ts[q], data, schedule)
    })?;
    Ok(rows.concat())
}

/// Oracle velocity as a [`VelocityField`], optionally conditioned on class
/// by restricting the mixture to that class's rows.
#[derive(Debug, Clone)]
pub struct OracleField<'a> {
    data: &'a Dataset,
    views: Vec<ClassView<'a>>,
    schedule: Schedule,
    class_conditional: bool,
}

impl<'a> OracleField<'a> {
    /// Class-conditional whenever the data is labeled.
    pub fn new(data: &'a Dataset, schedule: Schedule) -> Self {
        OracleField {
            views: data.class_views(),
            class_conditional: data.labels().is_some(),
            data,
            schedule,
        }
    }

    /// Ignores class ids and uses the full dataset.
    pub fn unconditional(mut self) -> Self {
        self.class_conditional = false;
        self
    }

    pub fn is_class_conditional(&self) -> bool {
        self.class_conditional
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }
}

impl VelocityField for OracleField<'_> {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn tag(&self) -> FieldTag {
        FieldTag::Oracle
    }

    fn evaluate(&self, xt: &[f64], t: f64, class: Option<u32>) -> Result<Vec<f64>> {
        let t = t.clamp(0.0, 1.0);
        match class {
            Some(y) if self.class_conditional => {
                let view = self.views.get(y as usize).ok_or_else(|| {
                    Error::invalid(format!("class {y} out of range ({} classes)", self.views.len()))
                })?;
                oracle_velocity(xt, t, view, &self.schedule)
            }
            _ => oracle_velocity(xt, t, self.data, &self.schedule),
        }
    }
}
