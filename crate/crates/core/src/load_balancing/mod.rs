//! Load balancing over the consensus machinery: each agent's state is its
//! load `x = q / p`, queue length over productivity.

mod arrivals;
mod trace;

pub use arrivals::ArrivalProcess;
pub use trace::{write_metrics_csv, LbMetrics, LbTrace};

use rand::Rng;

use crate::consensus::{observe, ExtendedState, Observations, PreHistory, StepSize};
use crate::rng::{stream, StreamKind};
use crate::topology::{StochasticTopologySpec, Topology, TopologyDraw};
use crate::{Error, Result};

/// How protocol output becomes queue changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LbMode {
    /// The protocol increment applied to each agent's own load, as written.
    /// Total work is not conserved when productivities differ.
    State,
    /// Antisymmetric pairwise job transfers; total work is conserved.
    #[default]
    Transfer,
}

impl LbMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LbMode::State => "state",
            LbMode::Transfer => "transfer",
        }
    }
}

/// `q' = max(0, q - p + z + u)` per agent, with the clamped-off amount
/// returned as idle capacity.
pub fn queue_step(q: &[f64], p: &[f64], z: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    q.iter()
        .zip(p)
        .zip(z)
        .zip(u)
        .map(|(((q, p), z), u)| {
            let raw = q - p + z + u;
            (raw.max(0.0), (-raw).max(0.0))
        })
        .unzip()
}

/// Loads `q / p`.
pub fn loads(q: &[f64], p: &[f64]) -> Vec<f64> {
    q.iter().zip(p).map(|(q, p)| q / p).collect()
}

fn check_productivity(p: &[f64]) -> Result<()> {
    match p.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        Some(i) => Err(Error::InvalidArgument(format!("productivity of agent {} is {}", i + 1, p[i]))),
        None => Ok(()),
    }
}

/// Queue-unit contribution of each active edge: agent `to` moves
/// `alpha w (p_from / p_to)(y_{to,from} / p_from - y_{to,to} / p_to) * p_to`.
fn edge_terms<'a>(
    obs: &'a Observations,
    p: &'a [f64],
    draw: &'a TopologyDraw,
    alpha: f64,
) -> impl Iterator<Item = (usize, usize, f64)> + 'a {
    draw.edges.iter().zip(&obs.neighbor).map(move |(e, y)| {
        let (i, j) = (e.to, e.from);
        let b = e.weight * p[j] / p[i];
        (i, j, alpha * b * (y / p[j] - obs.own[i] / p[i]) * p[i])
    })
}

/// Per-agent increment of the load-balancing protocol in queue units. The
/// load-unit increment is this divided by `p`.
pub fn lb_protocol(obs: &Observations, p: &[f64], draw: &TopologyDraw, alpha: f64) -> Result<Vec<f64>> {
    check_productivity(p)?;
    let mut u = vec![0.0; p.len()];
    for (i, _, v) in edge_terms(obs, p, draw, alpha) {
        u[i] += v;
    }
    Ok(u)
}

/// Pairwise transfers: the flow into `i` from `j` is half of `i`'s term for
/// `j` minus half of `j`'s term for `i` (a missing link contributes 0).
/// Each agent's total outflow is then scaled down to what it holds (`avail`).
pub fn transfer_flows(
    obs: &Observations,
    p: &[f64],
    draw: &TopologyDraw,
    alpha: f64,
    avail: &[f64],
) -> Result<Vec<f64>> {
    check_productivity(p)?;
    let n = p.len();
    let mut pairs: Vec<((usize, usize), f64)> = Vec::with_capacity(draw.edges.len());
    for (i, j, v) in edge_terms(obs, p, draw, alpha) {
        // orient every pair as (low, high) with flow into `low`
        let (key, signed) = if i < j { ((i, j), v) } else { ((j, i), -v) };
        pairs.push((key, 0.5 * signed));
    }
    pairs.sort_by_key(|(k, _)| *k);
    let mut flows: Vec<((usize, usize), f64)> = Vec::with_capacity(pairs.len());
    for (key, v) in pairs {
        match flows.last_mut() {
            Some((k, acc)) if *k == key => *acc += v,
            _ => flows.push((key, v)),
        }
    }
    let mut outflow = vec![0.0; n];
    for &((a, b), f) in &flows {
        if f > 0.0 {
            outflow[b] += f;
        } else {
            outflow[a] -= f;
        }
    }
    let scale: Vec<f64> = outflow.iter().zip(avail).map(|(o, a)| if *o > *a { a.max(0.0) / o } else { 1.0 }).collect();
    let mut u = vec![0.0; n];
    for ((a, b), f) in flows {
        let f = if f > 0.0 { f * scale[b] } else { f * scale[a] };
        u[a] += f;
        u[b] -= f;
    }
    Ok(u)
}

/// Equal-load allocation and its completion time `sum q / sum p`.
pub fn optimal_redistribution(q: &[f64], p: &[f64]) -> Result<(Vec<f64>, f64)> {
    check_productivity(p)?;
    let total: f64 = q.iter().sum();
    if total < 0.0 {
        return Err(Error::InvalidArgument("total queue must be nonnegative".into()));
    }
    let t_min = total / p.iter().sum::<f64>();
    Ok((vec![t_min; p.len()], t_min))
}

/// `T = max_i q_i / p_i`.
pub fn completion_time(q: &[f64], p: &[f64]) -> f64 {
    q.iter().zip(p).map(|(q, p)| q / p).fold(0.0, f64::max)
}

/// Residual, spread and completion time of one configuration.
/// `x_star = None` measures the residual against the current mean load.
pub fn metrics(q: &[f64], p: &[f64], x_star: Option<f64>) -> LbMetrics {
    let x = loads(q, p);
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let target = x_star.unwrap_or(mean);
    LbMetrics {
        err: (x.iter().map(|v| (v - target).powi(2)).sum::<f64>() / n).sqrt(),
        d_abs: x.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max),
        completion: completion_time(q, p),
    }
}

/// Copy of `spec` whose mean weights carry the productivity ratio
/// `p_from / p_to`, giving the averaged matrix of the load dynamics.
pub fn productivity_weighted(spec: &StochasticTopologySpec, p: &[f64]) -> Result<StochasticTopologySpec> {
    check_productivity(p)?;
    if p.len() != spec.n() {
        return Err(Error::InvalidArgument(format!("{} productivities for {} agents", p.len(), spec.n())));
    }
    let edges = spec
        .edges()
        .iter()
        .map(|e| {
            let r = p[e.from] / p[e.to];
            let mut e = e.clone();
            e.weight_mean *= r;
            e.weight_var *= r * r;
            e
        })
        .collect();
    Ok(StochasticTopologySpec::new(spec.n(), spec.d_bar(), spec.noise_var(), edges, spec.groups().to_vec())?
        .with_noise_family(spec.noise_family())
        .with_weight_family(spec.weight_family()))
}

#[derive(Debug, Clone)]
pub struct LbScenario {
    pub topology: Topology,
    pub schedule: StepSize,
    pub q0: Vec<f64>,
    /// Mean productivity of each agent.
    pub productivity: Vec<f64>,
    /// Per-step productivity is `p (1 + jitter * U[-1, 1])`.
    pub jitter: f64,
    pub mode: LbMode,
    pub arrivals: ArrivalProcess,
    pub pre_history: PreHistory,
}

impl LbScenario {
    pub fn n(&self) -> usize {
        self.q0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.topology.n();
        if self.q0.len() != n || self.productivity.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{} queues and {} productivities for {n} agents",
                self.q0.len(),
                self.productivity.len()
            )));
        }
        if self.q0.iter().any(|q| !(*q >= 0.0 && q.is_finite())) {
            return Err(Error::InvalidArgument("queues must be nonnegative".into()));
        }
        check_productivity(&self.productivity)?;
        if !(0.0..1.0).contains(&self.jitter) {
            return Err(Error::InvalidArgument(format!("productivity jitter {} outside [0, 1)", self.jitter)));
        }
        self.schedule.validate()?;
        self.arrivals.validate(n)
    }

    fn productivity_at(&self, seed: u64, t: u64) -> Vec<f64> {
        if self.jitter == 0.0 {
            return self.productivity.clone();
        }
        self.productivity
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let u: f64 = stream(seed, t, StreamKind::Productivity, i as u64).random_range(-1.0..=1.0);
                p * (1.0 + self.jitter * u)
            })
            .collect()
    }
}

const CONSERVATION_TOL: f64 = 1e-9;

fn simulate(scenario: &LbScenario, seed: u64, horizon: u64, redistribute: bool) -> Result<LbTrace> {
    scenario.validate()?;
    let n = scenario.n();
    let mut window = ExtendedState::new(&scenario.q0, scenario.topology.d_bar(), scenario.pre_history);
    let mut trace = LbTrace::new(scenario.mode, redistribute, scenario.q0.clone());
    for t in 0..horizon {
        let p = scenario.productivity_at(seed, t);
        let z = scenario.arrivals.sample(n, seed, t);
        let q = window.current().to_vec();
        let u = if redistribute {
            let draw = scenario.topology.sample(seed, t);
            let obs = observe(&window, &draw);
            let alpha = scenario.schedule.alpha(t);
            match scenario.mode {
                LbMode::State => lb_protocol(&obs, &p, &draw, alpha)?,
                LbMode::Transfer => {
                    let avail: Vec<f64> = q.iter().zip(&z).map(|(q, z)| q + z).collect();
                    transfer_flows(&obs, &p, &draw, alpha, &avail)?
                }
            }
        } else {
            vec![0.0; n]
        };
        let (next, idle) = queue_step(&q, &p, &z, &u);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t });
        }
        if scenario.mode == LbMode::Transfer {
            let done: f64 = p.iter().zip(&idle).map(|(p, i)| p - i).sum();
            let before: f64 = q.iter().sum::<f64>() + z.iter().sum::<f64>();
            let imbalance = next.iter().sum::<f64>() - (before - done);
            if imbalance.abs() > CONSERVATION_TOL * before.max(1.0) {
                return Err(Error::Conservation { t, imbalance });
            }
        }
        window.push(&next);
        trace.push(p, z, u, idle, next);
    }
    Ok(trace)
}

/// Simulate the balanced system for `horizon` steps.
pub fn run_lb(scenario: &LbScenario, seed: u64, horizon: u64) -> Result<LbTrace> {
    simulate(scenario, seed, horizon, true)
}

/// With and without redistribution, fed identical arrivals and productivities.
pub fn run_comparison(scenario: &LbScenario, seed: u64, horizon: u64) -> Result<(LbTrace, LbTrace)> {
    Ok((simulate(scenario, seed, horizon, true)?, simulate(scenario, seed, horizon, false)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::local_voting_control;
    use crate::graph::WeightedDigraph;
    use crate::topology::{ActiveEdge, RingTopology};

    fn draw(edges: &[(usize, usize)], n: usize) -> TopologyDraw {
        TopologyDraw {
            t: 0,
            edges: edges.iter().map(|&(to, from)| ActiveEdge { to, from, weight: 1.0, delay: 0, noise: 0.0 }).collect(),
            self_noise: vec![0.0; n],
        }
    }

    #[test]
    fn queue_step_cases() {
        assert_eq!(queue_step(&[10.0], &[2.0], &[0.0], &[0.0]).0, vec![8.0]);
        let (q, idle) = queue_step(&[1.0], &[2.0], &[0.0], &[0.0]);
        assert_eq!((q, idle), (vec![0.0], vec![1.0]));
        let (q, _) = queue_step(&[10.0, 0.0], &[0.0, 0.0], &[0.0, 0.0], &[-3.0, 3.0]);
        assert_eq!(q.iter().sum::<f64>(), 10.0);
    }

    #[test]
    fn two_agent_protocol() {
        let d = draw(&[(0, 1), (1, 0)], 2);
        let state = ExtendedState::new(&[4.0, 0.0], 0, PreHistory::Zero);
        let u = lb_protocol(&observe(&state, &d), &[1.0, 1.0], &d, 0.25).unwrap();
        assert_eq!(u, vec![-1.0, 1.0]);
        let u = transfer_flows(&observe(&state, &d), &[1.0, 1.0], &d, 0.25, &[4.0, 0.0]).unwrap();
        assert_eq!(u, vec![-1.0, 1.0]);
        let equal = ExtendedState::new(&[3.0, 3.0], 0, PreHistory::Zero);
        assert_eq!(lb_protocol(&observe(&equal, &d), &[1.0, 1.0], &d, 0.25).unwrap(), vec![0.0, 0.0]);
        assert!(lb_protocol(&observe(&equal, &d), &[1.0, 0.0], &d, 0.25).is_err());
    }

    #[test]
    fn unit_productivity_reduces_to_voting() {
        let d = draw(&[(0, 1), (0, 2), (1, 2), (2, 0)], 3);
        let state = ExtendedState::new(&[4.0, 1.5, -2.0], 0, PreHistory::Zero);
        let obs = observe(&state, &d);
        let a = lb_protocol(&obs, &[1.0; 3], &d, 0.3).unwrap();
        let b = local_voting_control(&obs, &d, 0.3);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn transfers_are_antisymmetric_and_capped() {
        let d = draw(&[(0, 1), (1, 0), (2, 1)], 3);
        let state = ExtendedState::new(&[0.5, 10.0, 0.0], 0, PreHistory::Zero);
        let obs = observe(&state, &d);
        let p = [1.0, 2.0, 0.5];
        let u = transfer_flows(&obs, &p, &d, 0.4, &[0.5, 10.0, 0.0]).unwrap();
        assert!(u.iter().sum::<f64>().abs() < 1e-12);
        assert!(u[1] < 0.0 && u[0] > 0.0 && u[2] > 0.0);
        let tight = transfer_flows(&obs, &p, &d, 0.4, &[0.5, 0.1, 0.0]).unwrap();
        assert!((tight[1] + 0.1).abs() < 1e-12, "{tight:?}");
    }

    #[test]
    fn lemma6_small_cases() {
        let (loads, t) = optimal_redistribution(&[8.0, 0.0], &[2.0, 2.0]).unwrap();
        assert_eq!((loads, t), (vec![2.0, 2.0], 2.0));
        assert_eq!(completion_time(&[6.0, 2.0], &[2.0, 2.0]), 3.0);
    }

    #[test]
    fn metric_cases() {
        let m = metrics(&[0.0, 2.0], &[1.0, 1.0], Some(1.0));
        assert_eq!((m.err, m.d_abs), (1.0, 1.0));
        let m = metrics(&[3.0, 6.0], &[1.0, 2.0], None);
        assert_eq!((m.err, m.d_abs, m.completion), (0.0, 0.0, 3.0));
    }

    fn ring_scenario(mode: LbMode) -> LbScenario {
        LbScenario {
            topology: Topology::Ring(RingTopology::new(16, 16).unwrap()),
            schedule: StepSize::Constant(0.1),
            q0: vec![0.0; 16],
            productivity: (0..16).map(|i| 0.5 + (i % 4) as f64 * 0.25).collect(),
            jitter: 0.1,
            mode,
            arrivals: ArrivalProcess::Stream { jobs: 1000, start: 1, end: 60, complexity_mean: 1.0 },
            pre_history: PreHistory::Clamp,
        }
    }

    #[test]
    fn transfer_mode_conserves_work() {
        let s = ring_scenario(LbMode::Transfer);
        let tr = run_lb(&s, 3, 120).unwrap();
        for t in 0..120 {
            let done: f64 = tr.p[t].iter().zip(&tr.idle[t]).map(|(p, i)| p - i).sum();
            let lhs: f64 = tr.q[t + 1].iter().sum();
            let rhs = tr.q[t].iter().sum::<f64>() + tr.z[t].iter().sum::<f64>() - done;
            assert!((lhs - rhs).abs() < 1e-9 * rhs.max(1.0));
            assert!(tr.q[t + 1].iter().all(|q| *q >= 0.0));
        }
    }

    #[test]
    fn comparison_arms_share_arrivals() {
        let s = ring_scenario(LbMode::State);
        let (with, without) = run_comparison(&s, 8, 80).unwrap();
        assert_eq!(with.z, without.z);
        assert_eq!(with.p, without.p);
        assert!(without.u.iter().flatten().all(|u| *u == 0.0));
        assert_ne!(with.q, without.q);
    }

    #[test]
    fn balanced_start_without_arrivals_stays_balanced() {
        let g = WeightedDigraph::complete(4).unwrap();
        let s = LbScenario {
            topology: Topology::Stochastic(StochasticTopologySpec::deterministic(&g)),
            schedule: StepSize::Constant(0.1),
            q0: vec![20.0; 4],
            productivity: vec![1.0; 4],
            jitter: 0.0,
            mode: LbMode::Transfer,
            arrivals: ArrivalProcess::None,
            pre_history: PreHistory::Clamp,
        };
        let (with, without) = run_comparison(&s, 0, 30).unwrap();
        assert_eq!(with.q, without.q);
    }

    #[test]
    fn productivity_weighted_averaged_matrix() {
        let g = WeightedDigraph::from_edges(2, [(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let spec = productivity_weighted(&StochasticTopologySpec::deterministic(&g), &[1.0, 3.0]).unwrap();
        assert_eq!(spec.edge(0, 1).unwrap().weight_mean, 3.0);
        assert_eq!(spec.edge(1, 0).unwrap().weight_mean, 1.0 / 3.0);
    }
}
