//! Velocity fields and a small trainable MLP velocity model.
//!
//! The MLP maps `[x_t, time features, class embedding] -> H -> H -> D` with
//! SiLU activations. Gradients are accumulated by hand (no autograd) and
//! parameters are updated with Adam.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;

use crate::dataset::{Dataset, PointSet};
use crate::error::{check_dim, Error, Result};
use crate::oracle::{conditional_velocity, interpolate, standard_normal, OracleField};
use crate::par::{pairwise_sum, stream_rng};
use crate::schedule::Schedule;

const CHECKPOINT_MAGIC: &[u8; 4] = b"FSMD";
const CHECKPOINT_VERSION: u8 = 1;
/// Highest angular frequency of the sinusoidal time features.
const TIME_MAX_FREQUENCY: f64 = 100.0;
/// Examples per gradient chunk; fixed so reductions do not depend on threads.
const GRAD_CHUNK: usize = 32;

/// Which kind of field produced an Euler step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldTag {
    Oracle,
    Model,
    GuidedModel,
}

impl FieldTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            FieldTag::Oracle => "oracle",
            FieldTag::Model => "model",
            FieldTag::GuidedModel => "guided-model",
        }
    }
}

/// A time-dependent velocity field `v(x_t, t | class)`.
pub trait VelocityField: Sync {
    fn dim(&self) -> usize;
    fn tag(&self) -> FieldTag;
    fn evaluate(&self, xt: &[f64], t: f64, class: Option<u32>) -> Result<Vec<f64>>;
}

impl<V: VelocityField + ?Sized> VelocityField for &V {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn tag(&self) -> FieldTag {
        (**self).tag()
    }

    fn evaluate(&self, xt: &[f64], t: f64, class: Option<u32>) -> Result<Vec<f64>> {
        (**self).evaluate(xt, t, class)
    }
}

/// Closure-backed field, mostly for tests and analytic stand-ins.
pub struct FnField<F> {
    dim: usize,
    tag: FieldTag,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64], f64, Option<u32>) -> Vec<f64> + Sync,
{
    pub fn new(dim: usize, tag: FieldTag, f: F) -> Self {
        FnField { dim, tag, f }
    }
}

impl<F> VelocityField for FnField<F>
where
    F: Fn(&[f64], f64, Option<u32>) -> Vec<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn tag(&self) -> FieldTag {
        self.tag
    }

    fn evaluate(&self, xt: &[f64], t: f64, class: Option<u32>) -> Result<Vec<f64>> {
        check_dim(self.dim, xt.len(), "field input")?;
        Ok((self.f)(xt, t, class))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpConfig {
    pub dim: usize,
    pub hidden: usize,
    /// Number of sinusoidal time features (even).
    pub time_dim: usize,
    pub class_dim: usize,
    /// Number of real classes; the embedding table has one extra null row.
    pub num_classes: usize,
}

impl MlpConfig {
    pub fn new(dim: usize, num_classes: usize) -> Self {
        MlpConfig {
            dim,
            hidden: 256,
            time_dim: 64,
            class_dim: 16,
            num_classes,
        }
    }

    pub fn with_hidden(mut self, hidden: usize) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.dim + self.time_dim + self.class_dim
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.hidden == 0 {
            return Err(Error::invalid("model dimension and hidden width must be positive"));
        }
        if self.time_dim < 2 || !self.time_dim.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "time feature count must be even and >= 2, got {}",
                self.time_dim
            )));
        }
        Ok(())
    }
}

/// Parameter tensors in declaration order. Also used for gradients and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
    pub class_emb: Vec<f64>,
}

pub const TENSOR_NAMES: [&str; 7] = ["w1", "b1", "w2", "b2", "w3", "b3", "class_emb"];

impl MlpParams {
    fn zeros(c: &MlpConfig) -> Self {
        let h = c.hidden;
        MlpParams {
            w1: vec![0.0; h * c.input_dim()],
            b1: vec![0.0; h],
            w2: vec![0.0; h * h],
            b2: vec![0.0; h],
            w3: vec![0.0; c.dim * h],
            b3: vec![0.0; c.dim],
            class_emb: vec![0.0; (c.num_classes + 1) * c.class_dim],
        }
    }

    pub fn tensors(&self) -> [&[f64]; 7] {
        [&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3, &self.class_emb]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 7] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
            &mut self.class_emb,
        ]
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    fn add_assign(&mut self, other: &MlpParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn norm(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn silu(z: f64) -> f64 {
    z / (1.0 + (-z).exp())
}

fn silu_grad(z: f64) -> f64 {
    let s = 1.0 / (1.0 + (-z).exp());
    s * (1.0 + z * (1.0 - s))
}

/// `out[r] = b[r] + sum_c w[r, c] x[c]` for a row-major `rows x x.len()` matrix.
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        *o = b[r] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
    }
}

struct Activations {
    input: Vec<f64>,
    z1: Vec<f64>,
    h1: Vec<f64>,
    z2: Vec<f64>,
    h2: Vec<f64>,
    out: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpVelocityModel {
    config: MlpConfig,
    params: MlpParams,
}

impl MlpVelocityModel {
    /// Fan-in uniform hidden layers, standard-normal class embeddings, and a
    /// zero output layer (the initial field is identically zero).
    pub fn new(config: MlpConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = MlpParams::zeros(&config);
        let fan_in = |w: &mut [f64], fan: usize, rng: &mut ChaCha8Rng| {
            let bound = 1.0 / (fan as f64).sqrt();
            w.iter_mut().for_each(|v| *v = rng.random_range(-bound..bound));
        };
        fan_in(&mut params.w1, config.input_dim(), &mut rng);
        fan_in(&mut params.b1, config.input_dim(), &mut rng);
        fan_in(&mut params.w2, config.hidden, &mut rng);
        fan_in(&mut params.b2, config.hidden, &mut rng);
        params
            .class_emb
            .iter_mut()
            .for_each(|v| *v = rng.sample(StandardNormal));
        Ok(MlpVelocityModel { config, params })
    }

    /// Re-draws the output layer with fan-in uniform values.
    pub fn reinit_output(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (self.config.hidden as f64).sqrt();
        for v in self.params.w3.iter_mut().chain(self.params.b3.iter_mut()) {
            *v = rng.random_range(-bound..bound);
        }
    }

    /// Sets every class embedding row, including the null row, to zero.
    pub fn zero_class_embeddings(&mut self) {
        self.params.class_emb.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn params(&self) -> &MlpParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut MlpParams {
        &mut self.params
    }

    pub fn null_class(&self) -> u32 {
        self.config.num_classes as u32
    }

    fn time_features(&self, t: f64, out: &mut [f64]) {
        let half = self.config.time_dim / 2;
        for k in 0..half {
            let frac = if half > 1 { k as f64 / (half - 1) as f64 } else { 0.0 };
            let w = TIME_MAX_FREQUENCY.powf(frac);
            out[k] = (w * t).sin();
            out[half + k] = (w * t).cos();
        }
    }

    fn class_row(&self, class: Option<u32>) -> Result<usize> {
        match class {
            None => Ok(self.config.num_classes),
            Some(y) if (y as usize) < self.config.num_classes => Ok(y as usize),
            Some(y) => Err(Error::invalid(format!(
                "class {y} out of range for a model with {} classes",
                self.config.num_classes
            ))),
        }
    }

    fn activations(&self, xt: &[f64], t: f64, class: Option<u32>) -> Result<(Activations, usize)> {
        let c = &self.config;
        check_dim(c.dim, xt.len(), "model input")?;
        let row = self.class_row(class)?;
        let mut input = vec![0.0; c.input_dim()];
        input[..c.dim].copy_from_slice(xt);
        self.time_features(t, &mut input[c.dim..c.dim + c.time_dim]);
        input[c.dim + c.time_dim..]
            .copy_from_slice(&self.params.class_emb[row * c.class_dim..(row + 1) * c.class_dim]);
        let p = &self.params;
        let mut z1 = vec![0.0; c.hidden];
        affine(&p.w1, &p.b1, &input, &mut z1);
        let h1: Vec<f64> = z1.iter().map(|&z| silu(z)).collect();
        let mut z2 = vec![0.0; c.hidden];
        affine(&p.w2, &p.b2, &h1, &mut z2);
        let h2: Vec<f64> = z2.iter().map(|&z| silu(z)).collect();
        let mut out = vec![0.0; c.dim];
        affine(&p.w3, &p.b3, &h2, &mut out);
        Ok((Activations { input, z1, h1, z2, h2, out }, row))
    }

    /// Velocity prediction; `class = None` selects the null-class embedding.
    pub fn forward(&self, xt: &[f64], t: f64, class: Option<u32>) -> Result<Vec<f64>> {
        Ok(self.activations(xt, t, class)?.0.out)
    }

    /// Accumulates `d loss / d params` for one example given `d loss / d out`.
    fn backward(&self, act: &Activations, class_row: usize, g_out: &[f64], grad: &mut MlpParams) {
        let c = &self.config;
        let p = &self.params;
        let (h, input_dim) = (c.hidden, c.input_dim());

        let mut dh2 = vec![0.0; h];
        for (o, &g) in g_out.iter().enumerate() {
            grad.b3[o] += g;
            let w_row = &p.w3[o * h..(o + 1) * h];
            let gw_row = &mut grad.w3[o * h..(o + 1) * h];
            for k in 0..h {
                gw_row[k] += g * act.h2[k];
                dh2[k] += g * w_row[k];
            }
        }
        let dz2: Vec<f64> = dh2.iter().zip(&act.z2).map(|(d, &z)| d * silu_grad(z)).collect();

        let mut dh1 = vec![0.0; h];
        for (r, &g) in dz2.iter().enumerate() {
            grad.b2[r] += g;
            let w_row = &p.w2[r * h..(r + 1) * h];
            let gw_row = &mut grad.w2[r * h..(r + 1) * h];
            for k in 0..h {
                gw_row[k] += g * act.h1[k];
                dh1[k] += g * w_row[k];
            }
        }
        let dz1: Vec<f64> = dh1.iter().zip(&act.z1).map(|(d, &z)| d * silu_grad(z)).collect();

        let emb_start = c.dim + c.time_dim;
        let mut d_emb = vec![0.0; c.class_dim];
        for (r, &g) in dz1.iter().enumerate() {
            grad.b1[r] += g;
            let w_row = &p.w1[r * input_dim..(r + 1) * input_dim];
            let gw_row = &mut grad.w1[r * input_dim..(r + 1) * input_dim];
            for k in 0..input_dim {
                gw_row[k] += g * act.input[k];
            }
            for (e, w) in d_emb.iter_mut().zip(&w_row[emb_start..]) {
                *e += g * w;
            }
        }
        let emb = &mut grad.class_emb[class_row * c.class_dim..(class_row + 1) * c.class_dim];
        emb.iter_mut().zip(&d_emb).for_each(|(a, b)| *a += b);
    }

    /// Mean squared error over batch and dimensions.
    pub fn loss(&self, batch: &Batch) -> Result<f64> {
        batch.validate(self.config.dim)?;
        let d = self.config.dim;
        let per = (0..batch.len())
            .map(|i| {
                let out = self.forward(batch.xt(i, d), batch.t[i], batch.class[i])?;
                Ok(out
                    .iter()
                    .zip(batch.target(i, d))
                    .map(|(o, y)| (o - y) * (o - y))
                    .sum::<f64>())
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(pairwise_sum(&per) / (batch.len() * d) as f64)
    }

    /// Loss and its gradient with respect to every parameter tensor.
    pub fn loss_and_grad(&self, batch: &Batch) -> Result<(f64, MlpParams)> {
        batch.validate(self.config.dim)?;
        let d = self.config.dim;
        let scale = 2.0 / (batch.len() * d) as f64;
        let n_chunks = batch.len().div_ceil(GRAD_CHUNK);
        let chunks = crate::par::try_map_indexed(n_chunks, |ci| -> Result<(f64, MlpParams)> {
            let mut grad = MlpParams::zeros(&self.config);
            let mut sq = 0.0;
            for i in ci * GRAD_CHUNK..((ci + 1) * GRAD_CHUNK).min(batch.len()) {
                let (act, row) = self.activations(batch.xt(i, d), batch.t[i], batch.class[i])?;
                let g: Vec<f64> = act
                    .out
                    .iter()
                    .zip(batch.target(i, d))
                    .map(|(o, y)| {
                        sq += (o - y) * (o - y);
                        scale * (o - y)
                    })
                    .collect();
                self.backward(&act, row, &g, &mut grad);
            }
            Ok((sq, grad))
        })?;
        let mut total = MlpParams::zeros(&self.config);
        let mut sq = Vec::with_capacity(chunks.len());
        for (s, g) in &chunks {
            sq.push(*s);
            total.add_assign(g);
        }
        Ok((pairwise_sum(&sq) / (batch.len() * d) as f64, total))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let c = &self.config;
        let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
            w.write_all(CHECKPOINT_MAGIC)?;
            w.write_all(&[CHECKPOINT_VERSION])?;
            for v in [c.dim, c.hidden, c.time_dim, c.class_dim, c.num_classes] {
                w.write_all(&(v as u64).to_le_bytes())?;
            }
            for t in self.params.tensors() {
                for v in t {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            w.flush()
        };
        write(&mut w).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let header_len = 4 + 1 + 5 * 8;
        if bytes.len() < header_len || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::format(path, "not a model checkpoint (bad magic or short header)"));
        }
        if bytes[4] != CHECKPOINT_VERSION {
            return Err(Error::format(path, format!("unsupported checkpoint version {}", bytes[4])));
        }
        let field = |k: usize| u64::from_le_bytes(bytes[5 + 8 * k..13 + 8 * k].try_into().unwrap()) as usize;
        let config = MlpConfig {
            dim: field(0),
            hidden: field(1),
            time_dim: field(2),
            class_dim: field(3),
            num_classes: field(4),
        };
        config.validate().map_err(|e| Error::format(path, e.to_string()))?;
        let mut params = MlpParams::zeros(&config);
        let expected = header_len + 8 * params.count();
        if bytes.len() != expected {
            return Err(Error::format(
                path,
                format!("checkpoint is {} bytes, header implies {expected}", bytes.len()),
            ));
        }
        let mut values = bytes[header_len..]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()));
        for (name, t) in TENSOR_NAMES.iter().zip(params.tensors_mut()) {
            for v in t.iter_mut() {
                *v = values.next().unwrap();
                if !v.is_finite() {
                    return Err(Error::format(path, format!("non-finite value in tensor {name}")));
                }
            }
        }
        Ok(MlpVelocityModel { config, params })
    }
}

impl VelocityField for MlpVelocityModel {
    fn dim(&self) -> usize {
        self.config.dim
    }

    fn tag(&self) -> FieldTag {
        FieldTag::Model
    }

    fn evaluate(&self, xt: &[f64], t: f64, class: Option<u32>) -> Result<Vec<f64>> {
        self.forward(xt, t, class)
    }
}

/// Training examples in struct-of-arrays layout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Batch {
    /// Row-major `len x D`.
    pub xt: Vec<f64>,
    pub t: Vec<f64>,
    pub class: Vec<Option<u32>>,
    /// Row-major `len x D`.
    pub target: Vec<f64>,
}

impl Batch {
    pub fn push(&mut self, xt: &[f64], t: f64, class: Option<u32>, target: &[f64]) {
        self.xt.extend_from_slice(xt);
        self.t.push(t);
        self.class.push(class);
        self.target.extend_from_slice(target);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn xt(&self, i: usize, d: usize) -> &[f64] {
        &self.xt[i * d..(i + 1) * d]
    }

    fn target(&self, i: usize, d: usize) -> &[f64] {
        &self.target[i * d..(i + 1) * d]
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let n = self.len();
        if self.xt.len() != n * d || self.target.len() != n * d || self.class.len() != n {
            return Err(Error::invalid("batch arrays have inconsistent lengths"));
        }
        if self.target.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("batch contains non-finite targets"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainTarget {
    /// Per-sample conditional velocity `x1 - x0`.
    Cfm,
    /// Closed-form marginal velocity over the (class) dataset.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_betas: (f64, f64),
    pub class_drop_prob: f64,
    pub target: TrainTarget,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 5000,
            batch_size: 256,
            learning_rate: 1e-4,
            adam_betas: (0.9, 0.995),
            class_drop_prob: 0.1,
            target: TrainTarget::Cfm,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        if !(0.0..=1.0).contains(&self.class_drop_prob) {
            return Err(Error::invalid("class drop probability must lie in [0, 1]"));
        }
        let (b1, b2) = self.adam_betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return Err(Error::invalid("Adam betas must lie in [0, 1)"));
        }
        Ok(())
    }
}

pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: MlpParams,
    v: MlpParams,
}

impl Adam {
    pub fn new(model: &MlpVelocityModel, lr: f64, betas: (f64, f64)) -> Self {
        Adam {
            lr,
            beta1: betas.0,
            beta2: betas.1,
            eps: 1e-8,
            step: 0,
            m: MlpParams::zeros(&model.config),
            v: MlpParams::zeros(&model.config),
        }
    }

    pub fn update(&mut self, model: &mut MlpVelocityModel, grad: &MlpParams) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let params = model.params.tensors_mut();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, m), v), g) in params.into_iter().zip(ms).zip(vs).zip(grad.tensors()) {
            for k in 0..p.len() {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
            }
        }
    }
}

/// Per-step losses from [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct LossHistory {
    pub losses: Vec<f64>,
}

impl LossHistory {
    pub fn mean_over(&self, range: std::ops::Range<usize>) -> f64 {
        let s = &self.losses[range];
        pairwise_sum(s) / s.len() as f64
    }

    /// `step,loss` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            out.push_str(&format!("{i},{l}\n"));
        }
        out
    }
}

/// Builds the training batch for one optimizer step.
fn training_batch(
    model: &MlpVelocityModel,
    data: &Dataset,
    oracle: &OracleField<'_>,
    config: &TrainConfig,
    schedule: &Schedule,
    step: usize,
) -> Result<Batch> {
    let d = data.dim();
    let conditional = model.config.num_classes > 0 && data.labels().is_some();
    let rows = crate::par::try_map_indexed(config.batch_size, |b| -> Result<_> {
        let mut rng = stream_rng(config.seed, ((step as u64) << 24) | b as u64);
        let x0 = standard_normal(&mut rng, d);
        let i = rng.random_range(0..data.len());
        let t: f64 = rng.random();
        let dropped = rng.random::<f64>() < config.class_drop_prob;
        let class = if conditional && !dropped { data.label(i) } else { None };
        let x1 = data.row(i);
        let xt = interpolate(&x0, x1, t, schedule)?;
        let target = match config.target {
            TrainTarget::Cfm => conditional_velocity(&x0, x1, t, schedule)?,
            // A dropped class token asks for the unconditional field, so the
            // target falls back to the full-data oracle. This recomputes the
            // posterior over every row per example, which stops scaling well
            // beyond toy dataset sizes.
            TrainTarget::Oracle => oracle.evaluate(&xt, t, class)?,
        };
        Ok((xt, t, class, target))
    })?;
    let mut batch = Batch::default();
    for (xt, t, class, target) in rows {
        batch.push(&xt, t, class, &target);
    }
    Ok(batch)
}

/// Runs `config.steps` Adam updates on `model` and returns the loss history.
pub fn train(
    model: &mut MlpVelocityModel,
    data: &Dataset,
    config: &TrainConfig,
    schedule: &Schedule,
) -> Result<LossHistory> {
    config.validate()?;
    check_dim(model.config.dim, data.dim(), "training data")?;
    if model.config.num_classes > 0 && data.num_classes() > model.config.num_classes {
        return Err(Error::invalid(format!(
            "data has {} classes but the model embeds {}",
            data.num_classes(),
            model.config.num_classes
        )));
    }
    let oracle = OracleField::new(data, *schedule);
    let mut opt = Adam::new(model, config.learning_rate, config.adam_betas);
    let mut losses = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let batch = training_batch(model, data, &oracle, config, schedule, step)?;
        let (loss, grad) = model.loss_and_grad(&batch)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { step, t: f64::NAN });
        }
        opt.update(model, &grad);
        losses.push(loss);
    }
    Ok(LossHistory { losses })
}

/// Cosine similarity between the batch gradient against conditional targets
/// and the batch gradient against oracle targets, on shared path samples at a
/// fixed `t`. Both estimate the same expected gradient.
pub fn fm_cfm_gradient_check(
    model: &MlpVelocityModel,
    data: &Dataset,
    t: f64,
    n_mc: usize,
    seed: u64,
    schedule: &Schedule,
) -> Result<f64> {
    if n_mc < 2 {
        return Err(Error::invalid("gradient check needs n_mc >= 2"));
    }
    check_dim(model.config.dim, data.dim(), "gradient check data")?;
    let d = data.dim();
    let samples = crate::par::try_map_indexed(n_mc, |k| -> Result<_> {
        let mut rng = stream_rng(seed, k as u64);
        let x0 = standard_normal(&mut rng, d);
        let i = rng.random_range(0..data.len());
        let x1 = data.row(i);
        let xt = interpolate(&x0, x1, t, schedule)?;
        let cond = conditional_velocity(&x0, x1, t, schedule)?;
        let oracle = crate::oracle::oracle_velocity(&xt, t, data, schedule)?;
        Ok((xt, cond, oracle))
    })?;
    let mut cfm = Batch::default();
    let mut fm = Batch::default();
    for (xt, cond, oracle) in &samples {
        cfm.push(xt, t, None, cond);
        fm.push(xt, t, None, oracle);
    }
    let (_, g_cfm) = model.loss_and_grad(&cfm)?;
    let (_, g_fm) = model.loss_and_grad(&fm)?;
    Ok(cosine(&g_cfm.flatten(), &g_fm.flatten()))
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Evaluates `model` on many inputs; results in input order.
pub fn forward_many(model: &MlpVelocityModel, xs: &[Vec<f64>], t: f64, class: Option<u32>) -> Result<Vec<Vec<f64>>> {
    crate::par::try_map_indexed(xs.len(), |i| model.forward(&xs[i], t, class))
}
