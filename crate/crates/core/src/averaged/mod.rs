//! Deterministic averaged models of the stochastic closed loop and the
//! quantities derived from them.

mod constants;
mod deviation;
mod eps;

pub use constants::{
    constant_step_certificate, deviation_bound, load_balancing_certificate, max_step_for_eps, DeviationBound,
    StepCertificate,
};
pub use deviation::{deviation_estimate, fit_envelope, mean_square_error_profile, Comparison, DeviationEstimate};
pub use eps::{consensus_value, dist0_sq, dist0_sq_from_anchor, time_to_eps_consensus};

use nalgebra::{DMatrix, DVector};

use crate::consensus::{Dynamics, ExtendedState, StepSize};
use crate::linalg;
use crate::topology::AveragedTopology;
use crate::{Error, Result};

/// `dx/dtau = R(alpha, x)` with `R_i = f^i(x_i, alpha s_i(x)) / alpha` and
/// `s = -L x`, where `L` is the Laplacian of `A_max` with its delay blocks summed.
#[derive(Debug, Clone)]
pub struct AveragedOdeModel {
    pub laplacian: DMatrix<f64>,
    pub dynamics: Dynamics,
    pub alpha: f64,
}

impl AveragedOdeModel {
    pub fn new(topo: &AveragedTopology, dynamics: Dynamics, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha = {alpha} must be positive")));
        }
        Ok(Self { laplacian: linalg::laplacian_of(&topo.collapsed()), dynamics, alpha })
    }

    pub fn rhs(&self, x: &DVector<f64>) -> DVector<f64> {
        let s = -(&self.laplacian * x);
        match self.dynamics {
            Dynamics::IdentityControl => s,
            _ => DVector::from_fn(x.len(), |i, _| self.dynamics.apply(i, x[i], self.alpha * s[i]) / self.alpha),
        }
    }
}

/// Classical RK4 with steps of at most `h`, sampled at each point of `tau_grid`
/// (nondecreasing, starting at 0). Each grid interval is split evenly so the
/// samples land exactly on the grid.
pub fn integrate_ode(model: &AveragedOdeModel, x0: &[f64], tau_grid: &[f64], h: f64) -> Result<Vec<DVector<f64>>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("integration step h = {h} must be positive")));
    }
    if tau_grid.first().is_some_and(|t| *t != 0.0) || tau_grid.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::InvalidArgument("tau grid must start at 0 and be nondecreasing".into()));
    }
    let mut x = DVector::from_column_slice(x0);
    let mut out = Vec::with_capacity(tau_grid.len());
    if tau_grid.is_empty() {
        return Ok(out);
    }
    out.push(x.clone());
    for w in tau_grid.windows(2) {
        let span = w[1] - w[0];
        let pieces = (span / h).ceil().max(1.0) as usize;
        let dt = span / pieces as f64;
        for k in 0..pieces {
            if span == 0.0 {
                break;
            }
            let k1 = model.rhs(&x);
            let k2 = model.rhs(&(&x + &k1 * (dt / 2.0)));
            let k3 = model.rhs(&(&x + &k2 * (dt / 2.0)));
            let k4 = model.rhs(&(&x + &k3 * dt));
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteRhs { tau: w[0] + dt * (k + 1) as f64 });
            }
        }
        out.push(x.clone());
    }
    Ok(out)
}

/// Step `h = min(0.01, alpha_bar / 10)`.
pub fn default_ode_step(alpha_bar: f64) -> f64 {
    (alpha_bar / 10.0).min(0.01)
}

/// `Z_{t+1} = U Z_t + G(alpha_t, Z_t)`, with `G_i = f^i(z_i, alpha s_i(Z))` on
/// the first `n` rows and `s = -L(A_max) Z`.
#[derive(Debug, Clone)]
pub struct AveragedDiscreteModel {
    pub topo: AveragedTopology,
    pub dynamics: Dynamics,
}

impl AveragedDiscreteModel {
    pub fn new(topo: AveragedTopology, dynamics: Dynamics) -> Self {
        Self { topo, dynamics }
    }

    pub fn step(&self, z: &DVector<f64>, alpha: f64) -> DVector<f64> {
        let n = self.topo.n;
        let ls = &self.topo.laplacian_max * z;
        let mut next = &self.topo.shift * z;
        for i in 0..n {
            next[i] += self.dynamics.apply(i, z[i], -alpha * ls[i]);
        }
        next
    }

    /// For `f = u`: the one-step map `U - L(alpha A_max)`.
    pub fn one_step_matrix(&self, alpha: f64) -> DMatrix<f64> {
        &self.topo.shift - &self.topo.laplacian_max * alpha
    }

    /// `[Z_0, ..., Z_T]` with `Z_0 = X_0`.
    pub fn run(&self, x0: &ExtendedState, schedule: &StepSize, horizon: u64) -> Vec<DVector<f64>> {
        let mut z = DVector::from_column_slice(x0.as_slice());
        let mut out = Vec::with_capacity(horizon as usize + 1);
        out.push(z.clone());
        for t in 0..horizon {
            z = self.step(&z, schedule.alpha(t));
            out.push(z.clone());
        }
        out
    }

    /// Limit `w^T Z_0 / w^T 1` of the `f = u` map with constant `alpha`, where
    /// `w` is its left eigenvector for eigenvalue 1.
    pub fn consensus_value(&self, alpha: f64, z0: &[f64]) -> Result<f64> {
        let n_bar = self.topo.n_bar();
        let m = DMatrix::identity(n_bar, n_bar) - self.one_step_matrix(alpha);
        let w = linalg::left_null_vector(&m)?;
        Ok(w.dot(&DVector::from_column_slice(z0)) / w.sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::PreHistory;
    use crate::graph::WeightedDigraph;
    use crate::topology::{build_a_max, EdgeSpec, ExclusiveGroup, StochasticTopologySpec};

    fn six_node_delayed() -> StochasticTopologySpec {
        let half = vec![0.5, 0.5];
        let e = |to, from, p| EdgeSpec {
            to,
            from,
            appear_prob: p,
            weight_mean: 1.0,
            weight_var: 0.0,
            delay_pmf: half.clone(),
        };
        StochasticTopologySpec::new(
            6,
            1,
            0.0,
            vec![e(0, 1, 0.5), e(0, 2, 0.5), e(1, 3, 1.0), e(2, 4, 1.0), e(3, 4, 1.0), e(4, 5, 1.0), e(5, 0, 1.0)],
            vec![ExclusiveGroup { to: 0, members: vec![(1, 0.5), (2, 0.5)] }],
        )
        .unwrap()
    }

    #[test]
    fn six_node_delayed_block_form() {
        let topo = build_a_max(&six_node_delayed());
        #[rustfmt::skip]
        let h = DMatrix::from_row_slice(6, 6, &[
            0., 0.5, 0.5, 0., 0., 0.,
            0., 0., 0., 1., 0., 0.,
            0., 0., 0., 0., 1., 0.,
            0., 0., 0., 0., 1., 0.,
            0., 0., 0., 0., 0., 1.,
            1., 0., 0., 0., 0., 0.,
        ]);
        assert_eq!(topo.a_max.view((0, 0), (6, 6)), &h * 0.5);
        assert_eq!(topo.a_max.view((0, 6), (6, 6)), &h * 0.5);
        assert!(topo.a_max.rows(6, 6).iter().all(|v| *v == 0.0));
        assert!(topo.check_link_support());
    }

    #[test]
    fn ode_rhs_is_minus_laplacian_for_identity() {
        let topo = build_a_max(&six_node_delayed());
        let m1 = AveragedOdeModel::new(&topo, Dynamics::IdentityControl, 0.1).unwrap();
        let m2 = AveragedOdeModel::new(&topo, Dynamics::ScaledControl { gain: 1.0 }, 0.37).unwrap();
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5, 4.0, 0.0, 3.0]);
        assert!((m1.rhs(&x) - m2.rhs(&x)).amax() < 1e-12);
        assert_eq!(m1.rhs(&DVector::from_element(6, 2.5)).amax(), 0.0);
    }

    #[test]
    fn ode_matches_matrix_exponential() {
        let topo = build_a_max(&six_node_delayed());
        let model = AveragedOdeModel::new(&topo, Dynamics::IdentityControl, 0.1).unwrap();
        let x0 = [3.0, -1.0, 2.0, 0.0, 5.0, 1.0];
        let grid: Vec<f64> = (0..=100).map(|k| k as f64 * 0.1).collect();
        let traj = integrate_ode(&model, &x0, &grid, default_ode_step(0.1)).unwrap();
        let exact = (&model.laplacian * -10.0).exp() * DVector::from_column_slice(&x0);
        assert!((&traj[100] - exact).amax() < 1e-8);
    }

    #[test]
    fn ode_conserves_sum_on_balanced_graph() {
        let g = WeightedDigraph::from_edges(
            4,
            [(1, 0, 1.0), (2, 1, 1.0), (3, 2, 1.0), (0, 3, 1.0), (2, 0, 0.5), (0, 2, 0.5)],
        )
        .unwrap();
        let topo = build_a_max(&StochasticTopologySpec::deterministic(&g));
        let model = AveragedOdeModel::new(&topo, Dynamics::IdentityControl, 0.05).unwrap();
        let x0 = [1.0, 7.0, -3.0, 2.0];
        let grid: Vec<f64> = (0..=20).map(f64::from).collect();
        for x in integrate_ode(&model, &x0, &grid, 0.005).unwrap() {
            assert!((x.sum() - 7.0).abs() < 1e-9);
        }
    }

    #[test]
    fn ode_rejects_bad_inputs() {
        let topo = build_a_max(&six_node_delayed());
        let model = AveragedOdeModel::new(&topo, Dynamics::IdentityControl, 0.1).unwrap();
        assert!(integrate_ode(&model, &[0.0; 6], &[0.0, 1.0], 0.0).is_err());
        assert!(integrate_ode(&model, &[0.0; 6], &[0.5, 1.0], 0.1).is_err());
        let blowup = AveragedOdeModel {
            laplacian: DMatrix::from_element(1, 1, -1e3),
            dynamics: Dynamics::IdentityControl,
            alpha: 1.0,
        };
        assert!(matches!(integrate_ode(&blowup, &[1.0], &[0.0, 10.0], 0.01), Err(Error::NonFiniteRhs { .. })));
    }

    #[test]
    fn discrete_map_rows_sum_to_one_and_fix_consensus() {
        let model = AveragedDiscreteModel::new(build_a_max(&six_node_delayed()), Dynamics::IdentityControl);
        let m = model.one_step_matrix(0.1);
        for r in 0..12 {
            assert!((m.row(r).sum() - 1.0).abs() < 1e-15);
        }
        let z = DVector::from_element(12, -4.0);
        assert_eq!(model.step(&z, 0.1), z);
        let z = DVector::from_fn(12, |i, _| (i as f64).sin());
        assert!((model.step(&z, 0.1) - &m * &z).amax() < 1e-15);
    }

    #[test]
    fn discrete_reduces_to_flat_step_without_delay() {
        let g = WeightedDigraph::from_edges(3, [(1, 0, 1.0), (2, 1, 2.0), (0, 2, 0.5)]).unwrap();
        let model = AveragedDiscreteModel::new(
            build_a_max(&StochasticTopologySpec::deterministic(&g)),
            Dynamics::IdentityControl,
        );
        let x = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        assert!((model.step(&x, 0.2) - g.perron_matrix(0.2) * &x).amax() < 1e-15);
    }

    #[test]
    fn delayed_six_node_converges_to_predicted_value() {
        let model = AveragedDiscreteModel::new(build_a_max(&six_node_delayed()), Dynamics::IdentityControl);
        assert!(0.1 * model.topo.d_max() < 1.0);
        let x0 = ExtendedState::new(&[3.0, -1.0, 2.0, 0.0, 5.0, 1.0], 1, PreHistory::Zero);
        let traj = model.run(&x0, &StepSize::Constant(0.1), 4000);
        let target = model.consensus_value(0.1, x0.as_slice()).unwrap();
        assert!(traj[4000].iter().all(|v| (v - target).abs() < 1e-8), "{target} vs {}", traj[4000]);
    }
}
