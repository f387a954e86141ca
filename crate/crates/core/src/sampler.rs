//! Explicit Euler integration over velocity fields, CFG interval gating,
//! mixed oracle/model sampling and resume-from-reference sampling.

use crate::error::{check_dim, check_finite, Error, Result};
use crate::model::{FieldTag, VelocityField};
use crate::oracle::{interpolate, standard_normal};
use crate::par::stream_rng;
use crate::schedule::{Schedule, TimeGrid};

/// Classifier-free guidance with an optional time interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidanceConfig {
    pub scale: f64,
    pub lo: f64,
    pub hi: f64,
    pub enabled: bool,
}

impl GuidanceConfig {
    pub fn new(scale: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::invalid(format!("guidance scale must be finite and >= 0, got {scale}")));
        }
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::invalid(format!("guidance interval [{lo}, {hi}] must satisfy 0 <= lo <= hi <= 1")));
        }
        Ok(GuidanceConfig { scale, lo, hi, enabled: true })
    }

    /// Guidance over the whole time range.
    pub fn everywhere(scale: f64) -> Result<Self> {
        Self::new(scale, 0.0, 1.0)
    }

    pub fn disabled() -> Self {
        GuidanceConfig { scale: 1.0, lo: 0.0, hi: 1.0, enabled: false }
    }

    pub fn is_active(&self, t: f64) -> bool {
        self.enabled && self.scale != 1.0 && t >= self.lo && t <= self.hi
    }
}

/// `v_u + scale (v_c - v_u)` inside the interval, the conditional prediction elsewhere.
pub fn guided_velocity<F: VelocityField + ?Sized>(
    model: &F,
    xt: &[f64],
    t: f64,
    class: Option<u32>,
    guidance: &GuidanceConfig,
) -> Result<Vec<f64>> {
    if guidance.enabled && class.is_none() {
        return Err(Error::invalid("guidance is enabled but no class id was given"));
    }
    let v_c = model.evaluate(xt, t, class)?;
    if !guidance.is_active(t) {
        return Ok(v_c);
    }
    let v_u = model.evaluate(xt, t, None)?;
    Ok(v_u
        .iter()
        .zip(&v_c)
        .map(|(u, c)| u + guidance.scale * (c - u))
        .collect())
}

/// Wraps a class-aware field with interval-gated guidance.
pub struct GuidedField<F> {
    inner: F,
    guidance: GuidanceConfig,
}

impl<F: VelocityField> GuidedField<F> {
    pub fn new(inner: F, guidance: GuidanceConfig) -> Self {
        GuidedField { inner, guidance }
    }
}

impl<F: VelocityField> VelocityField for GuidedField<F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn tag(&self) -> FieldTag {
        if self.guidance.enabled {
            FieldTag::GuidedModel
        } else {
            self.inner.tag()
        }
    }

    fn evaluate(&self, xt: &[f64], t: f64, class: Option<u32>) -> Result<Vec<f64>> {
        guided_velocity(&self.inner, xt, t, class, &self.guidance)
    }
}

/// Times and states of one Euler rollout. `field_tags[k]` produced the step
/// from `states[k]` to `states[k + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub field_tags: Vec<FieldTag>,
}

impl Trajectory {
    pub fn terminal(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `step,t,field_tag,dim_0..`; row 0 is tagged `init`.
    pub fn to_csv(&self) -> String {
        let d = self.states.first().map_or(0, |s| s.len());
        let mut out = String::from("step,t,field_tag");
        for j in 0..d {
            out.push_str(&format!(",dim_{j}"));
        }
        out.push('\n');
        for (k, (t, x)) in self.times.iter().zip(&self.states).enumerate() {
            let tag = if k == 0 { "init" } else { self.field_tags[k - 1].as_str() };
            out.push_str(&format!("{k},{t},{tag}"));
            for v in x {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// `seed,dim_0..` rows holding only terminal states.
pub fn terminal_states_csv(seeds: &[u64], trajectories: &[Trajectory]) -> String {
    let d = trajectories.first().map_or(0, |t| t.terminal().len());
    let mut out = String::from("seed");
    for j in 0..d {
        out.push_str(&format!(",dim_{j}"));
    }
    out.push('\n');
    for (s, tr) in seeds.iter().zip(trajectories) {
        out.push_str(&s.to_string());
        for v in tr.terminal() {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// Standard-normal prior draw for replicate `stream`.
pub fn prior_sample(d: usize, seed: u64, stream: u64) -> Vec<f64> {
    standard_normal(&mut stream_rng(seed, stream), d)
}

/// Euler over `times` (which already include the terminal time); `pick`
/// chooses the field for the step starting at each left endpoint.
fn integrate<'f>(
    times: Vec<f64>,
    x0: &[f64],
    class: Option<u32>,
    pick: impl Fn(f64) -> &'f dyn VelocityField,
) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(times.len());
    let mut tags = Vec::with_capacity(times.len().saturating_sub(1));
    states.push(x0.to_vec());
    for k in 0..times.len() - 1 {
        let (t, t_next) = (times[k], times[k + 1]);
        let field = pick(t);
        let v = field.evaluate(&states[k], t, class)?;
        let dt = t_next - t;
        let next: Vec<f64> = states[k].iter().zip(&v).map(|(x, v)| x + dt * v).collect();
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::Divergence { step: k, t });
        }
        states.push(next);
        tags.push(field.tag());
    }
    Ok(Trajectory { times, states, field_tags: tags })
}

pub fn euler_sample<F: VelocityField + ?Sized>(
    field: &F,
    grid: &TimeGrid,
    x0: &[f64],
    class: Option<u32>,
) -> Result<Trajectory> {
    check_dim(field.dim(), x0.len(), "initial state")?;
    let dyn_field: &dyn VelocityField = &DynRef(field);
    integrate(grid.with_terminal(), x0, class, |_| dyn_field)
}

/// Adapter so unsized fields can be used as trait objects.
struct DynRef<'a, F: ?Sized>(&'a F);

impl<F: VelocityField + ?Sized> VelocityField for DynRef<'_, F> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn tag(&self) -> FieldTag {
        self.0.tag()
    }

    fn evaluate(&self, xt: &[f64], t: f64, class: Option<u32>) -> Result<Vec<f64>> {
        self.0.evaluate(xt, t, class)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedConfig {
    pub t_switch: f64,
    pub grid: TimeGrid,
    pub class: Option<u32>,
}

/// Oracle steps while the left endpoint is below `t_switch`, model steps after.
pub fn mixed_sample<O, M>(oracle: &O, model: &M, config: &MixedConfig, x0: &[f64]) -> Result<Trajectory>
where
    O: VelocityField + ?Sized,
    M: VelocityField + ?Sized,
{
    check_finite(config.t_switch, "t_switch")?;
    if !(0.0..=1.0).contains(&config.t_switch) {
        return Err(Error::invalid(format!("t_switch must lie in [0, 1], got {}", config.t_switch)));
    }
    if oracle.dim() != model.dim() {
        return Err(Error::invalid(format!(
            "oracle dimension {} differs from model dimension {}",
            oracle.dim(),
            model.dim()
        )));
    }
    check_dim(model.dim(), x0.len(), "initial state")?;
    let (o, m) = (DynRef(oracle), DynRef(model));
    let (o, m): (&dyn VelocityField, &dyn VelocityField) = (&o, &m);
    integrate(config.grid.with_terminal(), x0, config.class, |t| {
        if t < config.t_switch {
            o
        } else {
            m
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResumeConfig {
    pub t_resume: f64,
    pub reference: Vec<f64>,
    pub seed: u64,
    pub class: Option<u32>,
}

/// Re-noises `reference` to `t_resume` with a fresh prior draw and integrates
/// to 1. The rollout starts exactly at `t_resume` and continues over the grid
/// times strictly after it.
pub fn resume_sample<F: VelocityField + ?Sized>(
    field: &F,
    config: &ResumeConfig,
    grid: &TimeGrid,
    schedule: &Schedule,
) -> Result<Trajectory> {
    let tr = config.t_resume;
    check_finite(tr, "t_resume")?;
    if !(0.0..=1.0).contains(&tr) {
        return Err(Error::invalid(format!("t_resume must lie in [0, 1], got {tr}")));
    }
    check_dim(field.dim(), config.reference.len(), "reference point")?;
    if tr == 1.0 {
        return Ok(Trajectory {
            times: vec![1.0],
            states: vec![config.reference.clone()],
            field_tags: Vec::new(),
        });
    }
    let x0 = prior_sample(field.dim(), config.seed, 0);
    let start = interpolate(&x0, &config.reference, tr, schedule)?;
    let mut times = vec![tr];
    times.extend(grid.times().iter().copied().filter(|&t| t > tr));
    times.push(1.0);
    let f = DynRef(field);
    let f: &dyn VelocityField = &f;
    integrate(times, &start, config.class, |_| f)
}

/// One Euler step from `t` straight to 1: `xt + (1 - t) v`.
pub fn intermediate_prediction(xt: &[f64], t: f64, v: &[f64]) -> Result<Vec<f64>> {
    check_finite(t, "t")?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("t must lie in [0, 1], got {t}")));
    }
    check_dim(xt.len(), v.len(), "velocity")?;
    let out: Vec<f64> = xt.iter().zip(v).map(|(x, v)| x + (1.0 - t) * v).collect();
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("non-finite intermediate prediction"));
    }
    Ok(out)
}
