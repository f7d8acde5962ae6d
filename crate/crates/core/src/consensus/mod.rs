//! Stochastic closed loop: noisy delayed observations, the local voting
//! protocol and the agents' state update.

mod dynamics;
mod schedule;
mod trace;

pub use dynamics::{AgentMap, Dynamics, Lipschitz};
pub use schedule::StepSize;
pub use trace::{fmt_f64 as trace_fmt, SimTrace};

use crate::topology::{Topology, TopologyDraw};
use crate::{Error, Result};

/// What the window holds before the first step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PreHistory {
    /// `x_t = 0` for `t < 0`.
    #[default]
    Zero,
    /// `x_t = x_0` for `t < 0`.
    Clamp,
}

/// `[x_t, x_{t-1}, ..., x_{t-d_bar}]` stored block after block.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedState {
    n: usize,
    t: u64,
    window: Vec<f64>,
}

impl ExtendedState {
    pub fn new(x0: &[f64], d_bar: usize, pre: PreHistory) -> Self {
        let n = x0.len();
        let mut window = vec![0.0; n * (d_bar + 1)];
        window[..n].copy_from_slice(x0);
        if pre == PreHistory::Clamp {
            for block in window.chunks_exact_mut(n.max(1)).skip(1) {
                block.copy_from_slice(x0);
            }
        }
        Self { n, t: 0, window }
    }

    pub fn from_window(n: usize, t: u64, window: Vec<f64>) -> Result<Self> {
        if n == 0 || !window.len().is_multiple_of(n) {
            return Err(Error::InvalidArgument(format!(
                "window of length {} is not a multiple of n = {n}",
                window.len()
            )));
        }
        Ok(Self { n, t, window })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn d_bar(&self) -> usize {
        self.window.len() / self.n - 1
    }
    pub fn t(&self) -> u64 {
        self.t
    }

    /// `x_t`.
    pub fn current(&self) -> &[f64] {
        &self.window[..self.n]
    }

    /// `x_{t-k}`.
    pub fn block(&self, k: usize) -> &[f64] {
        &self.window[k * self.n..(k + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.window
    }

    /// Shift every block one slot back and put `x_next` in front.
    pub fn push(&mut self, x_next: &[f64]) {
        assert_eq!(x_next.len(), self.n, "state length");
        let len = self.window.len();
        self.window.copy_within(..len - self.n, self.n);
        self.window[..self.n].copy_from_slice(x_next);
        self.t += 1;
    }
}

/// Readings of one step. `neighbor[k]` belongs to `draw.edges[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    pub own: Vec<f64>,
    pub neighbor: Vec<f64>,
}

/// `y^{i,i} = x_t^i + w^{i,i}` and `y^{i,j} = x^j_{t - d^{i,j}} + w^{i,j}`.
pub fn observe(window: &ExtendedState, draw: &TopologyDraw) -> Observations {
    let own = window.current().iter().zip(&draw.self_noise).map(|(x, w)| x + w).collect();
    let neighbor = draw
        .edges
        .iter()
        .map(|e| {
            assert!(e.delay <= window.d_bar(), "delay {} exceeds the window", e.delay);
            window.block(e.delay)[e.from] + e.noise
        })
        .collect();
    Observations { own, neighbor }
}

/// `u^i = alpha sum_j b^{i,j} (y^{i,j} - y^{i,i})` over the active neighbors of `i`.
pub fn local_voting_control(obs: &Observations, draw: &TopologyDraw, alpha: f64) -> Vec<f64> {
    let mut u = vec![0.0; obs.own.len()];
    for (e, y) in draw.edges.iter().zip(&obs.neighbor) {
        u[e.to] += e.weight * (y - obs.own[e.to]);
    }
    u.iter_mut().for_each(|v| *v *= alpha);
    u
}

/// Per-step record kept alongside the states.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub u: Vec<f64>,
    pub y_self: Vec<f64>,
}

/// One synchronous update: controls come from the step-`t` snapshot, then
/// `x_{t+1}^i = x_t^i + f^i(x_t^i, u_t^i)` and the window shifts.
pub fn step_stochastic(
    state: &mut ExtendedState,
    dynamics: &Dynamics,
    schedule: &StepSize,
    draw: &TopologyDraw,
) -> Result<StepRecord> {
    let obs = observe(state, draw);
    let u = local_voting_control(&obs, draw, schedule.alpha(state.t()));
    let next: Vec<f64> =
        state.current().iter().zip(&u).enumerate().map(|(i, (x, ui))| x + dynamics.apply(i, *x, *ui)).collect();
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { t: state.t() });
    }
    state.push(&next);
    Ok(StepRecord { u, y_self: obs.own })
}

/// Everything needed to simulate the stochastic closed loop.
#[derive(Debug, Clone)]
pub struct ConsensusScenario {
    pub topology: Topology,
    pub dynamics: Dynamics,
    pub schedule: StepSize,
    pub x0: Vec<f64>,
    pub pre_history: PreHistory,
}

impl ConsensusScenario {
    pub fn validate(&self) -> Result<()> {
        if self.x0.len() != self.topology.n() {
            return Err(Error::InvalidArgument(format!(
                "initial state has {} entries for {} agents",
                self.x0.len(),
                self.topology.n()
            )));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("initial state must be finite".into()));
        }
        self.schedule.validate()?;
        self.dynamics.lipschitz().validate()
    }

    pub fn initial_state(&self) -> ExtendedState {
        ExtendedState::new(&self.x0, self.topology.d_bar(), self.pre_history)
    }
}

/// Simulate `horizon` steps with all randomness keyed by `seed`.
pub fn run(scenario: &ConsensusScenario, seed: u64, horizon: u64) -> Result<SimTrace> {
    scenario.validate()?;
    let mut state = scenario.initial_state();
    let mut trace = SimTrace::start(state.current());
    for t in 0..horizon {
        let draw = scenario.topology.sample(seed, t);
        let record = step_stochastic(&mut state, &scenario.dynamics, &scenario.schedule, &draw)?;
        trace.record(record, state.current());
    }
    Ok(trace)
}

/// Like [`run`] but keeps only the extended states, which is what the
/// deviation estimators compare.
pub fn run_windows(scenario: &ConsensusScenario, seed: u64, horizon: u64) -> Result<Vec<ExtendedState>> {
    scenario.validate()?;
    let mut state = scenario.initial_state();
    let mut out = Vec::with_capacity(horizon as usize + 1);
    out.push(state.clone());
    for t in 0..horizon {
        let draw = scenario.topology.sample(seed, t);
        step_stochastic(&mut state, &scenario.dynamics, &scenario.schedule, &draw)?;
        out.push(state.clone());
    }
    Ok(out)
}
