use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};

use crate::rng::{stream, StreamKind};
use crate::{Error, Result};

/// How new work reaches the agents. Every job goes to a uniformly chosen
/// agent and carries an exponential amount of work.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ArrivalProcess {
    #[default]
    None,
    /// `jobs` jobs at `t = 0`.
    Batch { jobs: u64, complexity_mean: f64 },
    /// Poisson number of jobs per step with rate `jobs / (end - start + 1)`
    /// on steps `start..=end`: the per-step embedding of exponential gaps.
    Stream { jobs: u64, start: u64, end: u64, complexity_mean: f64 },
    /// Fixed amounts `(t, agent, work)`.
    Events(Vec<(u64, usize, f64)>),
}

impl ArrivalProcess {
    pub fn validate(&self, n: usize) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{what} = {v} must be positive")))
            }
        };
        match self {
            ArrivalProcess::None => Ok(()),
            ArrivalProcess::Batch { complexity_mean, .. } => positive(*complexity_mean, "complexity mean"),
            ArrivalProcess::Stream { start, end, complexity_mean, .. } => {
                if end < start {
                    return Err(Error::InvalidArgument(format!("arrival window {start}..={end} is empty")));
                }
                positive(*complexity_mean, "complexity mean")
            }
            ArrivalProcess::Events(events) => {
                for &(t, agent, work) in events {
                    if agent >= n {
                        return Err(Error::InvalidArgument(format!("arrival at t={t} targets agent {}", agent + 1)));
                    }
                    if !(work >= 0.0 && work.is_finite()) {
                        return Err(Error::InvalidArgument(format!("arrival at t={t} has work {work}")));
                    }
                }
                Ok(())
            }
        }
    }

    /// Work `z_t^i` arriving at step `t`. Depends only on `(seed, t)`, so
    /// runs that differ in anything else see identical arrivals.
    pub fn sample(&self, n: usize, seed: u64, t: u64) -> Vec<f64> {
        let mut z = vec![0.0; n];
        let mut spread = |count: u64, mean: f64| {
            let mut rng = stream(seed, t, StreamKind::Arrivals, 0);
            let exp = Exp::new(1.0 / mean).expect("positive mean");
            for _ in 0..count {
                let agent = rng.random_range(0..n);
                z[agent] += exp.sample(&mut rng);
            }
        };
        match self {
            ArrivalProcess::None => {}
            ArrivalProcess::Batch { jobs, complexity_mean } => {
                if t == 0 {
                    spread(*jobs, *complexity_mean);
                }
            }
            ArrivalProcess::Stream { jobs, start, end, complexity_mean } => {
                if (*start..=*end).contains(&t) && *jobs > 0 {
                    let rate = *jobs as f64 / (end - start + 1) as f64;
                    let count = Poisson::new(rate).expect("positive rate").sample(&mut stream(
                        seed,
                        t,
                        StreamKind::Arrivals,
                        1,
                    )) as u64;
                    spread(count, *complexity_mean);
                }
            }
            ArrivalProcess::Events(events) => {
                for &(te, agent, work) in events {
                    if te == t {
                        z[agent] += work;
                    }
                }
            }
        }
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_arrives_once() {
        let a = ArrivalProcess::Batch { jobs: 1000, complexity_mean: 1.0 };
        let z0: f64 = a.sample(8, 1, 0).iter().sum();
        assert!((z0 - 1000.0).abs() < 150.0, "{z0}");
        assert!(a.sample(8, 1, 1).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn stream_rate_matches_jobs() {
        let a = ArrivalProcess::Stream { jobs: 20_000, start: 1, end: 100, complexity_mean: 1.0 };
        let total: f64 = (0..=120).map(|t| a.sample(16, 5, t).iter().sum::<f64>()).sum();
        assert!((total - 20_000.0).abs() < 600.0, "{total}");
        assert!(a.sample(16, 5, 0).iter().all(|v| *v == 0.0));
        assert!(a.sample(16, 5, 101).iter().all(|v| *v == 0.0));
        assert_eq!(a.sample(16, 5, 50), a.sample(16, 5, 50));
    }

    #[test]
    fn events_and_validation() {
        let a = ArrivalProcess::Events(vec![(3, 1, 2.5), (3, 1, 0.5), (4, 0, 1.0)]);
        assert_eq!(a.sample(2, 0, 3), vec![0.0, 3.0]);
        assert!(a.validate(2).is_ok());
        assert!(a.validate(1).is_err());
        assert!(ArrivalProcess::Stream { jobs: 1, start: 5, end: 4, complexity_mean: 1.0 }.validate(2).is_err());
    }
}
