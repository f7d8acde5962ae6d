use crate::consensus::{Lipschitz, StepSize};
use crate::linalg::frobenius_norm;
use crate::topology::{build_a_max, StochasticTopologySpec};
use crate::{Error, Result};

/// Constants of the bound `E max_t ||X_t - Z_t||^2 <= c1 tau_T e^{c2 tau_T^2} alpha_bar`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationBound {
    pub n: usize,
    pub d_bar: usize,
    pub d_tilde: f64,
    pub horizon: u64,
    pub b_bar: f64,
    pub sigma_w_sq: f64,
    /// Frobenius norm of `L(A_max)`.
    pub norm_l: f64,
    pub alpha_bar: f64,
    pub alpha_underbar: f64,
    /// `2^{d_bar} (alpha_0 + ... + alpha_{T-1})`.
    pub tau_t: f64,
    pub c_tilde: f64,
    pub c_hat: f64,
    pub c_prime: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub bound: f64,
}

fn d_tilde(d_bar: usize) -> f64 {
    if d_bar == 0 {
        0.0
    } else {
        1.0
    }
}

fn sq_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// `factor * e^{T ln(c3 + 1)}` that stays 0 when `factor` is 0 even if the exponential overflows.
fn grow(factor: f64, c3: f64, horizon: u64) -> f64 {
    if factor == 0.0 {
        0.0
    } else {
        factor * (horizon as f64 * (c3 + 1.0).ln()).exp()
    }
}

/// Evaluate every constant literally for a schedule over `horizon` steps,
/// starting from the extended state `x0_ext`.
pub fn deviation_bound(
    spec: &StochasticTopologySpec,
    lip: Lipschitz,
    schedule: &StepSize,
    horizon: u64,
    x0_ext: &[f64],
) -> Result<DeviationBound> {
    lip.validate()?;
    schedule.validate()?;
    let topo = build_a_max(spec);
    if x0_ext.len() != topo.n_bar() {
        return Err(Error::InvalidArgument(format!(
            "extended state has {} entries, expected {}",
            x0_ext.len(),
            topo.n_bar()
        )));
    }
    let n = spec.n() as f64;
    let d_bar = spec.d_bar();
    let dt = d_tilde(d_bar);
    let b_bar = spec.b_bar();
    let sigma_w_sq = spec.noise_var();
    let norm_l = frobenius_norm(&topo.laplacian_max);
    let alpha_bar = schedule.alpha_bar(horizon);
    let alpha_underbar = schedule.alpha_underbar(horizon);
    let tau_t = 2f64.powi(d_bar as i32) * schedule.tau(horizon);
    let Lipschitz { l1, lx, l2, lc } = lip;

    let c_tilde = n * l1 * l1 * sigma_w_sq * b_bar;
    let c_hat = 2.0 * l1 * l1 * n * b_bar;
    let boost = 2f64.powf(1.0 + dt / 2.0);
    let c_prime = boost * l1 * norm_l + alpha_bar * (l2 * norm_l * norm_l + c_hat);
    let c3 = dt + lx * (boost * l1 + l2) + alpha_bar * c_prime;
    let x_drift = if lx == 0.0 {
        0.0
    } else if alpha_underbar > 0.0 {
        lx / alpha_underbar
    } else {
        return Err(Error::Undefined("c2 needs a positive minimum step size when Lx > 0".into()));
    };
    let c2 = 2f64.powi(1 - d_bar as i32) * l1 * l1 * (x_drift + 2.0 * alpha_bar * alpha_bar * norm_l * norm_l);
    let inner = (n * l2 * lc + alpha_bar * alpha_bar * c_tilde) / c3 + sq_norm(x0_ext);
    let c1 = 8.0 * n * (c_tilde + grow(c_hat * inner, c3, horizon));
    let bound = if c1 == 0.0 || tau_t == 0.0 { 0.0 } else { c1 * tau_t * (c2 * tau_t * tau_t).exp() * alpha_bar };
    Ok(DeviationBound {
        n: spec.n(),
        d_bar,
        d_tilde: dt,
        horizon,
        b_bar,
        sigma_w_sq,
        norm_l,
        alpha_bar,
        alpha_underbar,
        tau_t,
        c_tilde,
        c_hat,
        c_prime,
        c1,
        c2,
        c3,
        bound,
    })
}

/// Constants of the constant-step, `f = u` certificate `C1_bar e^{C2_bar} alpha <= eps / 4`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCertificate {
    pub alpha: f64,
    pub horizon: u64,
    /// `alpha T`.
    pub tau: f64,
    pub d_tilde: f64,
    pub b_bar: f64,
    pub norm_l: f64,
    pub c_tilde: f64,
    pub c_hat: f64,
    pub c3: f64,
    pub c1_bar: f64,
    pub c2_bar: f64,
}

impl StepCertificate {
    /// `C1_bar e^{C2_bar} alpha`.
    pub fn lhs(&self) -> f64 {
        if self.c1_bar == 0.0 {
            0.0
        } else {
            self.c1_bar * self.c2_bar.exp() * self.alpha
        }
    }

    pub fn certifies(&self, eps: f64) -> bool {
        self.lhs() <= eps / 4.0
    }
}

fn constant_step_common(spec: &StochasticTopologySpec, alpha: f64, x0_ext: &[f64]) -> Result<(f64, f64, f64, f64)> {
    let topo = build_a_max(spec);
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} must be positive")));
    }
    let d_max = topo.d_max();
    if alpha * d_max >= 1.0 {
        return Err(Error::StepSizeTooLarge { alpha, limit: 1.0 / d_max });
    }
    if x0_ext.len() != topo.n_bar() {
        return Err(Error::InvalidArgument(format!(
            "extended state has {} entries, expected {}",
            x0_ext.len(),
            topo.n_bar()
        )));
    }
    Ok((spec.n() as f64, d_tilde(spec.d_bar()), spec.b_bar(), frobenius_norm(&topo.laplacian_max)))
}

fn assemble(
    spec: &StochasticTopologySpec,
    alpha: f64,
    horizon: u64,
    x0_ext: &[f64],
    c_tilde: f64,
    c_hat: f64,
    (n, dt, b_bar, norm_l): (f64, f64, f64, f64),
) -> StepCertificate {
    let tau = alpha * horizon as f64;
    let c3 = 2f64.powf(1.0 + dt) + 2.0 * alpha * alpha * (norm_l * norm_l + c_hat);
    let inner = alpha * alpha * c_tilde / c3 + sq_norm(x0_ext);
    let c1_bar = 8.0 * n * (c_tilde + grow(c_hat * inner, c3, horizon)) * tau;
    let c2_bar = 2f64.powi(2 - spec.d_bar() as i32) * alpha * alpha * norm_l * norm_l;
    StepCertificate { alpha, horizon, tau, d_tilde: dt, b_bar, norm_l, c_tilde, c_hat, c3, c1_bar, c2_bar }
}

/// `f = u`, constant `alpha < 1 / d_max(A_max)`, horizon `T`.
pub fn constant_step_certificate(
    spec: &StochasticTopologySpec,
    alpha: f64,
    horizon: u64,
    x0_ext: &[f64],
) -> Result<StepCertificate> {
    let common = constant_step_common(spec, alpha, x0_ext)?;
    let (n, _, b_bar, _) = common;
    let tau = alpha * horizon as f64;
    let c_tilde = n * n * b_bar * b_bar * spec.noise_var();
    let c_hat = 2.0 * n * (n - 1.0) * b_bar * b_bar * tau * tau;
    Ok(assemble(spec, alpha, horizon, x0_ext, c_tilde, c_hat, common))
}

/// Load-balancing variant: noise is measured in queue units and scaled by
/// the smallest mean productivity.
pub fn load_balancing_certificate(
    spec: &StochasticTopologySpec,
    alpha: f64,
    horizon: u64,
    x0_ext: &[f64],
    mean_productivity: &[f64],
) -> Result<StepCertificate> {
    let p_min = mean_productivity.iter().copied().fold(f64::INFINITY, f64::min);
    if mean_productivity.len() != spec.n() || !(p_min > 0.0) {
        return Err(Error::InvalidArgument("mean productivities must be positive, one per agent".into()));
    }
    let common = constant_step_common(spec, alpha, x0_ext)?;
    let (n, _, b_bar, _) = common;
    let c_tilde = n * spec.noise_var() / (p_min * p_min) * b_bar;
    let c_hat = 2.0 * n * b_bar * alpha * horizon as f64;
    Ok(assemble(spec, alpha, horizon, x0_ext, c_tilde, c_hat, common))
}

/// Largest step with `C1 e^{C2 tau_max} alpha <= eps / 4`.
pub fn max_step_for_eps(c1: f64, c2: f64, tau_max: f64, eps: f64) -> f64 {
    eps / (4.0 * c1 * (c2 * tau_max).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::WeightedDigraph;
    use crate::topology::EdgeSpec;

    fn cycle3() -> StochasticTopologySpec {
        StochasticTopologySpec::deterministic(&WeightedDigraph::directed_cycle(3).unwrap())
    }

    const IDENTITY: Lipschitz = Lipschitz { l1: 1.0, lx: 0.0, l2: 1.0, lc: 0.0 };

    #[test]
    fn deviation_bound_by_hand_without_delay() {
        // cycle of 3: L has 1 on the diagonal and -1 once per row, ||L||_F^2 = 6, b_bar = 1
        let alpha = 0.1;
        let k = deviation_bound(&cycle3(), IDENTITY, &StepSize::Constant(alpha), 10, &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(k.b_bar, 1.0);
        assert!((k.norm_l * k.norm_l - 6.0).abs() < 1e-12);
        assert_eq!(k.c_tilde, 0.0);
        assert_eq!(k.c_hat, 6.0);
        let c_prime = 2.0 * 6f64.sqrt() + alpha * (6.0 + 6.0);
        assert!((k.c_prime - c_prime).abs() < 1e-12);
        assert!((k.c3 - alpha * c_prime).abs() < 1e-12);
        assert!((k.c2 - 4.0 * alpha * alpha * 6.0).abs() < 1e-12);
        let c1 = 8.0 * 3.0 * 6.0 * (1.0 + alpha * c_prime).powi(10);
        assert!((k.c1 / c1 - 1.0).abs() < 1e-12);
        assert!((k.tau_t - 1.0).abs() < 1e-12);
        assert!((k.bound / (c1 * (k.c2).exp() * alpha) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deviation_bound_delay_doubles_tau() {
        let spec = StochasticTopologySpec::new(
            2,
            1,
            0.5,
            vec![
                EdgeSpec {
                    to: 0,
                    from: 1,
                    appear_prob: 1.0,
                    weight_mean: 1.0,
                    weight_var: 0.0,
                    delay_pmf: vec![0.5, 0.5],
                },
                EdgeSpec::fixed(1, 0, 1.0).with_pmf(vec![1.0, 0.0]),
            ],
            vec![],
        )
        .unwrap();
        let k = deviation_bound(&spec, IDENTITY, &StepSize::Constant(0.1), 5, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(k.d_tilde, 1.0);
        assert!((k.tau_t - 1.0).abs() < 1e-12);
        assert!((k.c_tilde - 2.0 * 0.5 * 1.0).abs() < 1e-12);
        assert!(k.c2 > 0.0 && k.c1 > 0.0 && k.bound > 0.0);
    }

    #[test]
    fn deviation_bound_linear_in_alpha_bar_at_fixed_tau() {
        let spec = cycle3();
        let x0 = [1.0, 0.0, 0.0];
        let a = deviation_bound(&spec, IDENTITY, &StepSize::Constant(0.1), 10, &x0).unwrap();
        let b = deviation_bound(&spec, IDENTITY, &StepSize::Constant(0.05), 20, &x0).unwrap();
        assert!((a.tau_t - b.tau_t).abs() < 1e-12);
        // c1 and c2 move with alpha too, so halving alpha cannot do better than halving the bound
        assert!(b.bound <= a.bound / 2.0, "{} vs {}", b.bound, a.bound);
    }

    #[test]
    fn deviation_bound_needs_positive_min_step_when_state_coupled() {
        let lip = Lipschitz { l1: 1.0, lx: 0.5, l2: 1.0, lc: 0.0 };
        let k = deviation_bound(&cycle3(), lip, &StepSize::Harmonic { scale: 1.0, offset: 1.0 }, 4, &[0.0; 3]).unwrap();
        assert!((k.alpha_underbar - 0.2).abs() < 1e-15);
    }

    #[test]
    fn step_certificate_without_delay_and_noise() {
        let alpha = 0.2;
        let k = constant_step_certificate(&cycle3(), alpha, 10, &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(k.c_tilde, 0.0);
        assert_eq!(k.d_tilde, 0.0);
        let tau = 2.0;
        let c_hat = 2.0 * 3.0 * 2.0 * tau * tau;
        assert!((k.c_hat - c_hat).abs() < 1e-12);
        assert!((k.c3 - (2.0 + 2.0 * alpha * alpha * (6.0 + c_hat))).abs() < 1e-12);
        assert!((k.c2_bar - 4.0 * alpha * alpha * 6.0).abs() < 1e-12);
        assert!(k.lhs() > 0.0);
        assert!(!k.certifies(0.5));
    }

    #[test]
    fn step_certificate_precondition() {
        let err = constant_step_certificate(&cycle3(), 1.0, 10, &[0.0; 3]).unwrap_err();
        assert!(matches!(err, Error::StepSizeTooLarge { .. }));
    }

    #[test]
    fn load_balancing_certificate_scales_noise_by_productivity() {
        let spec = cycle3().with_noise_var(0.4).unwrap();
        let k = load_balancing_certificate(&spec, 0.1, 10, &[0.0; 3], &[2.0, 4.0, 1.0]).unwrap();
        assert!((k.c_tilde - 3.0 * 0.4).abs() < 1e-12);
        assert!((k.c_hat - 2.0 * 3.0 * 1.0).abs() < 1e-12);
        assert!(load_balancing_certificate(&spec, 0.1, 10, &[0.0; 3], &[1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn step_cap_meets_its_own_inequality() {
        let cap = max_step_for_eps(3.0, 0.2, 5.0, 0.5);
        assert!((3.0 * (0.2f64 * 5.0).exp() * cap - 0.125).abs() < 1e-15);
    }
}
