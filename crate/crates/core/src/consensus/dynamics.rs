use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::rng::{stream, StreamKind};
use crate::{Error, Result};

/// Constants of `|f(x,u) - f(x',u')| <= l1 (lx |x-x'| + |u-u'|)` and
/// `|f(x,u)|^2 <= l2 (lc + lx |x|^2 + |u|^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lipschitz {
    pub l1: f64,
    pub lx: f64,
    pub l2: f64,
    pub lc: f64,
}

impl Lipschitz {
    pub fn validate(&self) -> Result<()> {
        let all = [("l1", self.l1), ("lx", self.lx), ("l2", self.l2), ("lc", self.lc)];
        match all.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            Some((name, v)) => Err(Error::InvalidArgument(format!("Lipschitz constant {name} = {v}"))),
            None => Ok(()),
        }
    }
}

pub type AgentMap = Arc<dyn Fn(usize, f64, f64) -> f64 + Send + Sync>;

/// Per-agent state transition `x_{t+1} = x_t + f^i(x_t, u_t)`.
#[derive(Clone)]
pub enum Dynamics {
    /// `f(x, u) = u`.
    IdentityControl,
    /// `f(x, u) = gain * u`.
    ScaledControl {
        gain: f64,
    },
    /// `f(x, u) = -1 + u`: one unit of load served per step. Arrivals enter
    /// through the load-balancing simulator, not here.
    LoadBalance,
    Custom {
        name: String,
        f: AgentMap,
        lipschitz: Lipschitz,
        control_only: bool,
    },
}

impl fmt::Debug for Dynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dynamics::IdentityControl => write!(f, "IdentityControl"),
            Dynamics::ScaledControl { gain } => write!(f, "ScaledControl({gain})"),
            Dynamics::LoadBalance => write!(f, "LoadBalance"),
            Dynamics::Custom { name, lipschitz, control_only, .. } => f
                .debug_struct("Custom")
                .field("name", name)
                .field("lipschitz", lipschitz)
                .field("control_only", control_only)
                .finish(),
        }
    }
}

impl Dynamics {
    pub fn name(&self) -> &str {
        match self {
            Dynamics::IdentityControl => "identity-control",
            Dynamics::ScaledControl { .. } => "scaled-control",
            Dynamics::LoadBalance => "load-balance",
            Dynamics::Custom { name, .. } => name,
        }
    }

    #[inline]
    pub fn apply(&self, agent: usize, x: f64, u: f64) -> f64 {
        match self {
            Dynamics::IdentityControl => u,
            Dynamics::ScaledControl { gain } => gain * u,
            Dynamics::LoadBalance => u - 1.0,
            Dynamics::Custom { f, .. } => f(agent, x, u),
        }
    }

    pub fn lipschitz(&self) -> Lipschitz {
        match self {
            Dynamics::IdentityControl => Lipschitz { l1: 1.0, lx: 0.0, l2: 1.0, lc: 0.0 },
            Dynamics::ScaledControl { gain } => Lipschitz { l1: gain.abs(), lx: 0.0, l2: gain * gain, lc: 0.0 },
            Dynamics::LoadBalance => Lipschitz { l1: 1.0, lx: 0.0, l2: 2.0, lc: 1.0 },
            Dynamics::Custom { lipschitz, .. } => *lipschitz,
        }
    }

    /// Declared `f(x, 0) = 0` for every `x`.
    pub fn control_only(&self) -> bool {
        match self {
            Dynamics::IdentityControl | Dynamics::ScaledControl { .. } => true,
            Dynamics::LoadBalance => false,
            Dynamics::Custom { control_only, .. } => *control_only,
        }
    }

    /// `f = u` exactly, which the averaged discrete map and several constants assume.
    pub fn is_identity(&self) -> bool {
        matches!(self, Dynamics::IdentityControl) || matches!(self, Dynamics::ScaledControl { gain } if *gain == 1.0)
    }

    /// Spot-check the declared constants and the control-only flag on random
    /// probe points in `[-scale, scale]`.
    pub fn probe(&self, n: usize, probes: usize, scale: f64, seed: u64) -> Result<()> {
        let lip = self.lipschitz();
        lip.validate()?;
        let mut rng = stream(seed, 0, StreamKind::Probe, 0);
        let slack = |v: f64| 1e-9 * (1.0 + v.abs());
        for k in 0..probes {
            let i = k % n.max(1);
            let [x, u, x2, u2]: [f64; 4] = std::array::from_fn(|_| rng.random_range(-scale..=scale));
            let (a, b) = (self.apply(i, x, u), self.apply(i, x2, u2));
            if !(a.is_finite() && b.is_finite()) {
                return Err(Error::InvalidArgument(format!("{}: non-finite value at x={x}, u={u}", self.name())));
            }
            let rhs = lip.l1 * (lip.lx * (x - x2).abs() + (u - u2).abs());
            if (a - b).abs() > rhs + slack(rhs) {
                return Err(Error::InvalidArgument(format!(
                    "{}: Lipschitz bound violated for agent {i} at (x, u) = ({x}, {u}), ({x2}, {u2})",
                    self.name()
                )));
            }
            let growth = lip.l2 * (lip.lc + lip.lx * x * x + u * u);
            if a * a > growth + slack(growth) {
                return Err(Error::InvalidArgument(format!(
                    "{}: growth bound violated for agent {i} at (x, u) = ({x}, {u})",
                    self.name()
                )));
            }
            if self.control_only() && self.apply(i, x, 0.0) != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "{}: declared control-only but f({x}, 0) = {}",
                    self.name(),
                    self.apply(i, x, 0.0)
                )));
            }
        }
        Ok(())
    }
}
