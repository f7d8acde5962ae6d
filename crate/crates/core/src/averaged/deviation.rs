use nalgebra::DVector;
use rayon::prelude::*;

use super::{default_ode_step, integrate_ode, AveragedDiscreteModel, AveragedOdeModel};
use crate::consensus::{self, ConsensusScenario};
use crate::topology::build_a_max;
use crate::{Error, Result};

/// Which averaged trajectory the stochastic runs are compared with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    /// `max_{t <= T} ||X_t - Z_t||^2` over the extended state.
    Discrete,
    /// `max_{t <= T} ||x_t - x(tau_t)||^2` over the real agents.
    Ode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// One maximum per seed, in the order the seeds were given.
    pub per_seed: Vec<f64>,
}

impl DeviationEstimate {
    pub fn from_samples(per_seed: Vec<f64>) -> Self {
        let m = per_seed.len() as f64;
        let mean = per_seed.iter().sum::<f64>() / m;
        let stderr = if per_seed.len() > 1 {
            (per_seed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr, per_seed }
    }
}

fn averaged_path(scenario: &ConsensusScenario, horizon: u64, comparison: Comparison) -> Result<Vec<DVector<f64>>> {
    let spec = scenario.topology.as_stochastic().ok_or_else(|| {
        Error::InvalidArgument("averaged models need a topology with declared link probabilities".into())
    })?;
    let topo = build_a_max(spec);
    match comparison {
        Comparison::Discrete => {
            let model = AveragedDiscreteModel::new(topo, scenario.dynamics.clone());
            Ok(model.run(&scenario.initial_state(), &scenario.schedule, horizon))
        }
        Comparison::Ode => {
            let alpha_bar = scenario.schedule.alpha_bar(horizon);
            let model = AveragedOdeModel::new(&topo, scenario.dynamics.clone(), alpha_bar)?;
            let grid = scenario.schedule.tau_grid(horizon);
            integrate_ode(&model, &scenario.x0, &grid, default_ode_step(alpha_bar))
        }
    }
}

/// Monte-Carlo estimate of the largest squared gap between the stochastic
/// system and its averaged model over `t = 0..=horizon`. Seeds run in
/// parallel on the current rayon pool; the reduction is in seed order.
pub fn deviation_estimate(
    scenario: &ConsensusScenario,
    seeds: &[u64],
    horizon: u64,
    comparison: Comparison,
) -> Result<DeviationEstimate> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("need at least one seed".into()));
    }
    let reference = averaged_path(scenario, horizon, comparison)?;
    let n = scenario.x0.len();
    let per_seed = seeds
        .par_iter()
        .map(|&seed| {
            let windows = consensus::run_windows(scenario, seed, horizon)
                .map_err(|e| Error::Run { seed, source: Box::new(e) })?;
            let worst = windows
                .iter()
                .zip(&reference)
                .map(|(x, z)| {
                    let x = match comparison {
                        Comparison::Discrete => x.as_slice(),
                        Comparison::Ode => &x.as_slice()[..n],
                    };
                    x.iter().zip(z.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
                })
                .fold(0.0, f64::max);
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(DeviationEstimate::from_samples(per_seed))
}

/// `E (x_t^i - x*)^2` estimated over `seeds`, indexed `[t][agent]`.
pub fn mean_square_error_profile(
    scenario: &ConsensusScenario,
    seeds: &[u64],
    horizon: u64,
    x_star: f64,
) -> Result<Vec<Vec<f64>>> {
    let runs = seeds
        .par_iter()
        .map(|&seed| consensus::run(scenario, seed, horizon).map_err(|e| Error::Run { seed, source: Box::new(e) }))
        .collect::<Result<Vec<_>>>()?;
    let m = seeds.len() as f64;
    let n = scenario.x0.len();
    let mut profile = vec![vec![0.0; n]; horizon as usize + 1];
    for run in &runs {
        for (row, x) in profile.iter_mut().zip(&run.states) {
            for (acc, v) in row.iter_mut().zip(x) {
                *acc += (v - x_star).powi(2);
            }
        }
    }
    profile.iter_mut().flatten().for_each(|v| *v /= m);
    Ok(profile)
}

/// Smallest `(C1, C2)` of the form `dev <= C1 e^{C2 tau} alpha` that covers
/// every calibration point `(tau, alpha, dev)`: `C2` is the steepest
/// log-slope of the per-`tau` envelope, `C1` the matching intercept.
pub fn fit_envelope(points: &[(f64, f64, f64)]) -> Option<(f64, f64)> {
    let mut taus: Vec<f64> = points.iter().map(|p| p.0).collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    let envelope: Vec<(f64, f64)> = taus
        .iter()
        .map(|&tau| {
            let r = points.iter().filter(|p| p.0 == tau).map(|p| p.2 / p.1).fold(0.0, f64::max);
            (tau, r)
        })
        .collect();
    if envelope.iter().any(|(_, r)| !(*r > 0.0 && r.is_finite())) || envelope.is_empty() {
        return None;
    }
    let mut c2: f64 = 0.0;
    for (a, b) in envelope.iter().zip(envelope.iter().skip(1)) {
        c2 = c2.max((b.1.ln() - a.1.ln()) / (b.0 - a.0));
    }
    let c1 = envelope.iter().map(|(tau, r)| r * (-c2 * tau).exp()).fold(0.0, f64::max);
    Some((c1, c2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::{Dynamics, PreHistory, StepSize};
    use crate::graph::WeightedDigraph;
    use crate::topology::{StochasticTopologySpec, Topology};

    #[test]
    fn deterministic_system_has_zero_deviation() {
        let g = WeightedDigraph::from_edges(3, [(1, 0, 1.0), (2, 1, 1.0), (0, 2, 1.0)]).unwrap();
        let scenario = ConsensusScenario {
            topology: Topology::Stochastic(StochasticTopologySpec::deterministic(&g)),
            dynamics: Dynamics::IdentityControl,
            schedule: StepSize::Constant(0.1),
            x0: vec![1.0, 0.0, -1.0],
            pre_history: PreHistory::Zero,
        };
        let est = deviation_estimate(&scenario, &[1, 2, 3], 50, Comparison::Discrete).unwrap();
        assert_eq!(est.per_seed, vec![0.0; 3]);
        assert_eq!((est.mean, est.stderr), (0.0, 0.0));
    }

    #[test]
    fn sample_statistics() {
        let est = DeviationEstimate::from_samples(vec![1.0, 3.0]);
        assert_eq!(est.mean, 2.0);
        assert!((est.stderr - 1.0).abs() < 1e-15);
    }

    #[test]
    fn envelope_covers_points() {
        let pts = [(1.0, 0.1, 0.02), (1.0, 0.05, 0.012), (2.0, 0.1, 0.05), (4.0, 0.1, 0.08)];
        let (c1, c2) = fit_envelope(&pts).unwrap();
        for (tau, alpha, dev) in pts {
            assert!(dev <= c1 * (c2 * tau).exp() * alpha * (1.0 + 1e-12));
        }
        assert!(fit_envelope(&[(1.0, 0.1, 0.0)]).is_none());
    }
}
