use crate::{Error, Result};

/// Step sizes `alpha_t` of the protocol.
#[derive(Debug, Clone, PartialEq)]
pub enum StepSize {
    Constant(f64),
    /// `alpha_t = scale / (t + offset)`.
    Harmonic {
        scale: f64,
        offset: f64,
    },
    /// Listed values; the last one repeats past the end.
    Explicit(Vec<f64>),
}

impl StepSize {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidArgument(what));
        match self {
            StepSize::Constant(a) if !(a.is_finite() && *a > 0.0) => bad(format!("step size {a} must be positive")),
            StepSize::Harmonic { scale, offset } if !(scale.is_finite() && *scale > 0.0) || !(*offset >= 1.0) => {
                bad(format!("harmonic schedule needs scale > 0 and offset >= 1, got {scale}, {offset}"))
            }
            StepSize::Explicit(v) if v.is_empty() => bad("explicit schedule is empty".into()),
            StepSize::Explicit(v) => match v.iter().position(|a| !(a.is_finite() && *a > 0.0)) {
                Some(k) => bad(format!("explicit step size #{k} = {} must be positive", v[k])),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn alpha(&self, t: u64) -> f64 {
        match self {
            StepSize::Constant(a) => *a,
            StepSize::Harmonic { scale, offset } => scale / (t as f64 + offset),
            StepSize::Explicit(v) => v[(t as usize).min(v.len() - 1)],
        }
    }

    /// `max_{0 <= t < horizon} alpha_t`.
    pub fn alpha_bar(&self, horizon: u64) -> f64 {
        match self {
            StepSize::Constant(a) => *a,
            StepSize::Harmonic { .. } => self.alpha(0),
            StepSize::Explicit(_) => (0..horizon.max(1)).map(|t| self.alpha(t)).fold(0.0, f64::max),
        }
    }

    /// `min_{1 <= t <= horizon} alpha_t`.
    pub fn alpha_underbar(&self, horizon: u64) -> f64 {
        match self {
            StepSize::Constant(a) => *a,
            StepSize::Harmonic { .. } => self.alpha(horizon.max(1)),
            StepSize::Explicit(_) => (1..=horizon.max(1)).map(|t| self.alpha(t)).fold(f64::INFINITY, f64::min),
        }
    }

    /// `tau_t = alpha_0 + ... + alpha_{t-1}`.
    pub fn tau(&self, t: u64) -> f64 {
        match self {
            StepSize::Constant(a) => a * t as f64,
            _ => (0..t).map(|s| self.alpha(s)).sum(),
        }
    }

    /// `[tau_0, ..., tau_horizon]`.
    pub fn tau_grid(&self, horizon: u64) -> Vec<f64> {
        let mut acc = 0.0;
        let mut grid = Vec::with_capacity(horizon as usize + 1);
        grid.push(0.0);
        for t in 0..horizon {
            acc += self.alpha(t);
            grid.push(acc);
        }
        grid
    }

    /// Smallest horizon `T` with `tau_T >= tau` (up to rounding of the
    /// partial sums), if reachable within `limit` steps.
    pub fn steps_to_reach(&self, tau: f64, limit: u64) -> Option<u64> {
        let target = tau * (1.0 - 1e-12);
        let mut acc = 0.0;
        for t in 0..=limit {
            if acc >= target {
                return Some(t);
            }
            acc += self.alpha(t);
        }
        None
    }
}
