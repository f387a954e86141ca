//! Interpolation schedules and sampling time grids.
//!
//! The interpolation path is `x_t = alpha_t * x1 + sigma_t * x0`, with `t = 0`
//! at the Gaussian prior and `t = 1` at the data. The oracle coefficients
//! `coeff_a = alpha_dot - alpha * sigma_dot / sigma` and
//! `coeff_b = sigma_dot / sigma` are singular at `t = 1`, so oracle-side
//! evaluation clamps `t` to `1 - eps_clamp`.

use std::fmt::Write as _;

use crate::error::{check_finite, Error, Result};

pub const DEFAULT_EPS_CLAMP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    /// `(alpha_t, sigma_t) = (t, 1 - t)`.
    RectifiedFlow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    kind: ScheduleKind,
    eps_clamp: f64,
}

/// Path scales and rates at a single time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathCoeffs {
    pub alpha: f64,
    pub sigma: f64,
    pub alpha_dot: f64,
    pub sigma_dot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleEval {
    /// Time after clamping.
    pub t: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub alpha_dot: f64,
    pub sigma_dot: f64,
    pub coeff_a: f64,
    pub coeff_b: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::rectified()
    }
}

impl Schedule {
    pub fn rectified() -> Self {
        Schedule {
            kind: ScheduleKind::RectifiedFlow,
            eps_clamp: DEFAULT_EPS_CLAMP,
        }
    }

    pub fn new(kind: ScheduleKind, eps_clamp: f64) -> Result<Self> {
        if !(eps_clamp > 0.0 && eps_clamp < 0.1) {
            return Err(Error::invalid(format!(
                "eps_clamp must lie in (0, 0.1), got {eps_clamp}"
            )));
        }
        Ok(Schedule { kind, eps_clamp })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn eps_clamp(&self) -> f64 {
        self.eps_clamp
    }

    /// Largest time at which oracle coefficients are evaluated.
    pub fn t_max(&self) -> f64 {
        1.0 - self.eps_clamp
    }

    /// Unclamped path coefficients; valid on the closed interval `[0, 1]`.
    pub fn path(&self, t: f64) -> PathCoeffs {
        match self.kind {
            ScheduleKind::RectifiedFlow => PathCoeffs {
                alpha: t,
                sigma: 1.0 - t,
                alpha_dot: 1.0,
                sigma_dot: -1.0,
            },
        }
    }

    pub fn eval(&self, t: f64) -> Result<ScheduleEval> {
        check_finite(t, "t")?;
        let t = t.min(self.t_max());
        let p = self.path(t);
        Ok(ScheduleEval {
            t,
            alpha: p.alpha,
            sigma: p.sigma,
            alpha_dot: p.alpha_dot,
            sigma_dot: p.sigma_dot,
            coeff_a: p.alpha_dot - p.alpha * p.sigma_dot / p.sigma,
            coeff_b: p.sigma_dot / p.sigma,
        })
    }
}

/// Shift mapping `t -> s t / (1 + (s - 1) t)`.
pub fn shift_time(t: f64, shift: f64) -> f64 {
    if t == 1.0 {
        return 1.0;
    }
    shift * t / (1.0 + (shift - 1.0) * t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridKind {
    Uniform,
    Shifted { shift: f64 },
    Stagewise { t_split: f64, n1: usize, n2: usize },
    Custom,
}

/// Left endpoints of the Euler intervals; the terminal time 1 is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
    kind: GridKind,
}

impl TimeGrid {
    /// Builds a grid from explicit left endpoints.
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        Self::checked(times, GridKind::Custom)
    }

    fn checked(times: Vec<f64>, kind: GridKind) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::invalid("time grid needs at least 2 points"));
        }
        if times[0] != 0.0 {
            return Err(Error::invalid("time grid must start at 0"));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("time grid contains non-finite values"));
        }
        if let Some(w) = times.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "time grid must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if *times.last().unwrap() > 1.0 {
            return Err(Error::invalid("time grid exceeds 1"));
        }
        Ok(TimeGrid { times, kind })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("uniform grid needs n >= 2, got {n}")));
        }
        let times = (0..n).map(|i| i as f64 / n as f64).collect();
        Self::checked(times, GridKind::Uniform)
    }

    pub fn shifted(n: usize, shift: f64) -> Result<Self> {
        if !(shift > 0.0 && shift.is_finite()) {
            return Err(Error::invalid(format!("shift must be positive, got {shift}")));
        }
        let base = Self::uniform(n)?;
        let times = if shift == 1.0 {
            base.times
        } else {
            base.times.iter().map(|&t| shift_time(t, shift)).collect()
        };
        Self::checked(times, GridKind::Shifted { shift })
    }

    pub fn stagewise(n1: usize, n2: usize, t_split: f64) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::invalid("stage-wise grid needs at least one step per stage"));
        }
        if !(t_split > 0.0 && t_split < 1.0) {
            return Err(Error::invalid(format!(
                "stage split must lie in (0, 1), got {t_split}"
            )));
        }
        let first = (0..n1).map(|i| t_split * i as f64 / n1 as f64);
        let second = (0..n2).map(|i| t_split + (1.0 - t_split) * i as f64 / n2 as f64);
        Self::checked(
            first.chain(second).collect(),
            GridKind::Stagewise { t_split, n1, n2 },
        )
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Left endpoints followed by the terminal time 1.
    pub fn with_terminal(&self) -> Vec<f64> {
        let mut out = self.times.clone();
        out.push(1.0);
        out
    }

    /// Fraction of grid times in the closed interval `[0, threshold]`.
    pub fn fraction_below(&self, threshold: f64) -> f64 {
        let count = self.times.iter().filter(|&&t| t <= threshold).count();
        count as f64 / self.times.len() as f64
    }

    /// One time per row after a `t` header, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t\n");
        for t in &self.times {
            let _ = writeln!(out, "{t:.16e}");
        }
        out
    }
}
