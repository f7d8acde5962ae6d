//! Scenario files, seeded replication, step-size sweeps and CSV artifacts.

mod config;
mod reproduce;

pub use config::{parse_scenario, DynamicsConfig, Family, LbConfig, MetricsConfig, ScenarioConfig};
pub use reproduce::{
    analysis_artifacts, averaged_artifact, bundled_scenario, reproduce, write_queue_csv, ReproduceOptions, BUNDLED,
};

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::averaged::{
    consensus_value, constant_step_certificate, deviation_bound, dist0_sq, dist0_sq_from_anchor,
    load_balancing_certificate, time_to_eps_consensus, DeviationBound, StepCertificate,
};
use crate::consensus::{self, trace_fmt as fmt_f64, StepSize};
use crate::linalg;
use crate::load_balancing::{self, productivity_weighted};
use crate::topology::{build_a_max, Topology};
use crate::{Error, Result};

/// Run `f` on a dedicated pool of `threads` workers (rayon's default when `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    let pool = builder.build().map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Consensus value used for residuals: the configured one, else the
/// averaged continuous model's prediction, else the initial mean.
pub fn consensus_target(cfg: &ScenarioConfig) -> Result<f64> {
    if let Some(x) = cfg.metrics.x_star {
        return Ok(x);
    }
    match &cfg.topology {
        Topology::Stochastic(spec) => {
            let collapsed = build_a_max(spec).collapsed();
            consensus_value(&linalg::laplacian_of(&collapsed), &cfg.x0)
        }
        Topology::Ring(_) => Ok(cfg.x0.iter().sum::<f64>() / cfg.x0.len() as f64),
    }
}

/// Spectral and bound summary of a scenario.
#[derive(Debug, Clone)]
pub struct AnalysisReport {
    pub eigenvalues: Vec<Complex64>,
    pub lambda2_computed: Complex64,
    /// Value entering `T(eps)`: the configured override or the computed real part.
    pub lambda2_re: f64,
    pub d_max: f64,
    pub spanning_tree: bool,
    pub balanced: bool,
    pub link_support: bool,
    pub x_star: f64,
    pub dist0_sq: f64,
    pub teps: Vec<(f64, f64)>,
    pub deviation_bound: DeviationBound,
    pub certificate: std::result::Result<StepCertificate, String>,
}

/// Spectrum of the averaged Laplacian, `T(eps)` table and bound constants.
pub fn analyze(cfg: &ScenarioConfig) -> Result<AnalysisReport> {
    let spec = cfg
        .topology
        .as_stochastic()
        .ok_or_else(|| Error::InvalidArgument("analysis needs a topology with declared link probabilities".into()))?;
    let lb = cfg.dynamics.family == Family::LoadBalance;
    let weighted = if lb { productivity_weighted(spec, &cfg.lb.productivity)? } else { spec.clone() };
    let topo = build_a_max(&weighted);
    let graph = crate::graph::WeightedDigraph::new(topo.collapsed())?;
    let spectral = graph.spectral_report(1e-9)?;
    let lambda2_computed = spectral.lambda2;
    let lambda2_re = cfg.metrics.lambda2.unwrap_or(lambda2_computed.re);
    let x_star = consensus_target(cfg)?;
    let n = cfg.n();
    let d0 = match cfg.metrics.anchor {
        Some((time, eps)) => dist0_sq_from_anchor(lambda2_re, n, time, eps),
        None => dist0_sq(&cfg.x0, x_star),
    };
    let teps = cfg
        .metrics
        .eps
        .iter()
        .map(|&e| time_to_eps_consensus(lambda2_re, n, d0, e).map(|t| (e, t)))
        .collect::<Result<Vec<_>>>()?;
    let x0_ext = consensus::ExtendedState::new(&cfg.x0, spec.d_bar(), cfg.pre_history);
    let deviation_bound =
        deviation_bound(&weighted, cfg.dynamics.lipschitz, &cfg.schedule, cfg.horizon, x0_ext.as_slice())?;
    let alpha = match cfg.schedule {
        StepSize::Constant(a) => Ok(a),
        _ => Err("needs a constant step size".to_string()),
    };
    let certificate = alpha.and_then(|a| {
        if lb {
            load_balancing_certificate(&weighted, a, cfg.horizon, x0_ext.as_slice(), &cfg.lb.productivity)
        } else {
            constant_step_certificate(&weighted, a, cfg.horizon, x0_ext.as_slice())
        }
        .map_err(|e| e.to_string())
    });
    Ok(AnalysisReport {
        eigenvalues: spectral.eigenvalues,
        lambda2_computed,
        lambda2_re,
        d_max: topo.d_max(),
        spanning_tree: spectral.spanning_tree,
        balanced: spectral.balanced,
        link_support: topo.check_link_support(),
        x_star,
        dist0_sq: d0,
        teps,
        deviation_bound,
        certificate,
    })
}

impl AnalysisReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let c = &self.deviation_bound;
        let mut line = |k: &str, v: String| s.push_str(&format!("{k:<28}{v}\n"));
        line(
            "eigenvalues",
            self.eigenvalues.iter().map(|z| format!("{:.6}{:+.6}i", z.re, z.im)).collect::<Vec<_>>().join(" "),
        );
        line("lambda2 (computed)", format!("{:.6}{:+.6}i", self.lambda2_computed.re, self.lambda2_computed.im));
        line("Re lambda2 (used)", format!("{}", self.lambda2_re));
        line("d_max(A_max)", format!("{}", self.d_max));
        line("spanning tree", self.spanning_tree.to_string());
        line("balanced", self.balanced.to_string());
        line("link support ok", self.link_support.to_string());
        line("x*", format!("{}", self.x_star));
        line("||x0 - x* 1||^2", format!("{}", self.dist0_sq));
        for (e, t) in &self.teps {
            line(&format!("T({e})"), format!("{t:.4}"));
        }
        line("matrix norm of L(A_max)", format!("frobenius = {}", c.norm_l));
        for (k, v) in self.bound_rows() {
            line(&k, format!("{v:e}"));
        }
        match &self.certificate {
            Ok(k) => {
                for (name, v) in [
                    ("C1_bar", k.c1_bar),
                    ("C2_bar", k.c2_bar),
                    ("c3 (constant step)", k.c3),
                    ("C1_bar e^C2_bar alpha", k.lhs()),
                ] {
                    line(name, format!("{v:e}"));
                }
            }
            Err(e) => line("constant-step certificate", format!("unavailable: {e}")),
        }
        s
    }

    pub fn bound_rows(&self) -> Vec<(String, f64)> {
        let c = &self.deviation_bound;
        [
            ("b_bar", c.b_bar),
            ("tau_T", c.tau_t),
            ("d_tilde", c.d_tilde),
            ("c_tilde", c.c_tilde),
            ("c_hat", c.c_hat),
            ("c_prime", c.c_prime),
            ("c1", c.c1),
            ("c2", c.c2),
            ("c3", c.c3),
            ("deviation bound", c.bound),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// Residual curve of one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedSummary {
    pub seed: u64,
    pub err: Vec<f64>,
    /// `max_i (x_T^i - x*)^2`.
    pub final_max_sq: f64,
    pub steps_to_threshold: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationReport {
    pub x_star: f64,
    pub rows: Vec<std::result::Result<SeedSummary, (u64, String)>>,
    pub mean_err: Vec<f64>,
    pub mean_final_err: f64,
    pub stderr_final_err: f64,
    /// `(eps, mean over seeds of max_i (x_T^i - x*)^2 <= eps)`.
    pub eps_pass: Vec<(f64, bool)>,
}

/// First index at or after `from` where `curve <= threshold`.
pub fn first_at_or_below(curve: &[f64], threshold: f64, from: usize) -> Option<usize> {
    curve.iter().enumerate().skip(from).find(|(_, v)| **v <= threshold).map(|(t, _)| t)
}

/// Residual curve of one run. Load-balancing scenarios measure against the
/// current mean load, the others against `x_star`.
fn residual_curve(cfg: &ScenarioConfig, schedule: &StepSize, seed: u64, x_star: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if cfg.dynamics.family == Family::LoadBalance {
        let mut scenario = cfg.lb_scenario();
        scenario.schedule = schedule.clone();
        let trace = load_balancing::run_lb(&scenario, seed, cfg.horizon)?;
        let last = trace.q.last().expect("initial row");
        let p = trace.p.last().unwrap_or(&cfg.lb.productivity);
        let loads = load_balancing::loads(last, p);
        Ok((trace.metrics(None).iter().map(|m| m.err).collect(), loads))
    } else {
        let mut scenario = cfg.consensus_scenario();
        scenario.schedule = schedule.clone();
        let trace = consensus::run(&scenario, seed, cfg.horizon)?;
        Ok((trace.residuals(x_star), trace.final_state().to_vec()))
    }
}

/// Run seeds `base_seed .. base_seed + n_seeds` on the current pool.
/// Failed seeds are reported in their row without stopping the others.
pub fn replicate(cfg: &ScenarioConfig, n_seeds: usize, base_seed: u64) -> Result<ReplicationReport> {
    if n_seeds == 0 {
        return Err(Error::InvalidArgument("need at least one seed".into()));
    }
    let x_star = consensus_target(cfg)?;
    let seeds: Vec<u64> = (0..n_seeds as u64).map(|k| base_seed + k).collect();
    let rows: Vec<_> = seeds
        .par_iter()
        .map(|&seed| {
            residual_curve(cfg, &cfg.schedule, seed, x_star)
                .map(|(err, last)| {
                    let centre = if cfg.dynamics.family == Family::LoadBalance {
                        last.iter().sum::<f64>() / last.len() as f64
                    } else {
                        x_star
                    };
                    SeedSummary {
                        seed,
                        steps_to_threshold: first_at_or_below(&err, cfg.metrics.threshold, 0).map(|t| t as u64),
                        final_max_sq: last.iter().map(|v| (v - centre).powi(2)).fold(0.0, f64::max),
                        err,
                    }
                })
                .map_err(|e| (seed, e.to_string()))
        })
        .collect();
    let ok: Vec<&SeedSummary> = rows.iter().filter_map(|r| r.as_ref().ok()).collect();
    let m = ok.len() as f64;
    let mut mean_err = vec![0.0; cfg.horizon as usize + 1];
    for s in &ok {
        for (acc, v) in mean_err.iter_mut().zip(&s.err) {
            *acc += v / m;
        }
    }
    let finals: Vec<f64> = ok.iter().map(|s| *s.err.last().expect("nonempty")).collect();
    let mean_final_err = finals.iter().sum::<f64>() / m;
    let stderr_final_err = if finals.len() > 1 {
        (finals.iter().map(|v| (v - mean_final_err).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt()
    } else {
        0.0
    };
    let mean_sq = ok.iter().map(|s| s.final_max_sq).sum::<f64>() / m;
    let eps_pass = cfg.metrics.eps.iter().map(|&e| (e, !ok.is_empty() && mean_sq <= e)).collect();
    Ok(ReplicationReport { x_star, rows, mean_err, mean_final_err, stderr_final_err, eps_pass })
}

impl ReplicationReport {
    /// Per-seed table `seed,final_err,final_max_sq,steps_to_threshold,error`.
    pub fn write_seeds_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["seed", "final_err", "final_max_sq", "steps_to_threshold", "error"])?;
        for row in &self.rows {
            match row {
                Ok(s) => out.write_record([
                    s.seed.to_string(),
                    fmt_f64(*s.err.last().expect("nonempty")),
                    fmt_f64(s.final_max_sq),
                    s.steps_to_threshold.map_or(String::new(), |t| t.to_string()),
                    String::new(),
                ])?,
                Err((seed, e)) => out.write_record([seed.to_string().as_str(), "", "", "", e.as_str()])?,
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// One schedule's averaged residual curve.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepArm {
    pub label: String,
    pub schedule: StepSize,
    pub per_seed: Vec<Vec<f64>>,
    pub mean_err: Vec<f64>,
}

/// Residual curves of the same scenario under several step-size schedules.
pub fn step_size_sweep(cfg: &ScenarioConfig, schedules: &[(String, StepSize)], seeds: &[u64]) -> Result<Vec<SweepArm>> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("need at least one seed".into()));
    }
    let x_star = consensus_target(cfg)?;
    schedules
        .iter()
        .map(|(label, schedule)| {
            schedule.validate()?;
            let per_seed = seeds
                .par_iter()
                .map(|&seed| {
                    residual_curve(cfg, schedule, seed, x_star)
                        .map(|r| r.0)
                        .map_err(|e| Error::Run { seed, source: Box::new(e) })
                })
                .collect::<Result<Vec<_>>>()?;
            let m = per_seed.len() as f64;
            let mut mean_err = vec![0.0; cfg.horizon as usize + 1];
            for curve in &per_seed {
                for (acc, v) in mean_err.iter_mut().zip(curve) {
                    *acc += v / m;
                }
            }
            Ok(SweepArm { label: label.clone(), schedule: schedule.clone(), per_seed, mean_err })
        })
        .collect()
}

/// Long-format CSV `t,arm,mean_err` of a sweep.
pub fn write_sweep_csv<W: Write>(w: W, arms: &[SweepArm]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "arm", "mean_err"])?;
    for arm in arms {
        for (t, v) in arm.mean_err.iter().enumerate() {
            out.write_record([t.to_string(), arm.label.clone(), fmt_f64(*v)])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Output directory that records every file it writes and ends with a
/// manifest listing them next to the config hash.
#[derive(Debug)]
pub struct ArtifactDir {
    root: PathBuf,
    artifacts: Vec<String>,
}

impl ArtifactDir {
    pub fn create(root: impl AsRef<Path>) -> Result<Self> {
        fs::create_dir_all(root.as_ref())?;
        Ok(Self { root: root.as_ref().to_path_buf(), artifacts: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<PathBuf> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut w = BufWriter::new(fs::File::create(&path)?);
        body(&mut w)?;
        w.flush()?;
        self.artifacts.push(name.to_string());
        Ok(path)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        self.write(name, |w| Ok(w.write_all(text.as_bytes())?))
    }

    /// Writes `manifest.txt` and returns its path.
    pub fn finish(self, config_hash: &str) -> Result<PathBuf> {
        let mut text = format!("config_hash {config_hash}\n");
        for a in &self.artifacts {
            text.push_str(&format!("artifact {a}\n"));
        }
        let path = self.root.join("manifest.txt");
        fs::write(&path, text)?;
        Ok(path)
    }
}
