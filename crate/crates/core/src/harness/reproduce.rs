use std::io::Write;
use std::path::{Path, PathBuf};

use super::{analyze, parse_scenario, step_size_sweep, write_sweep_csv, AnalysisReport, ArtifactDir, ScenarioConfig};
use crate::averaged::{default_ode_step, integrate_ode, AveragedDiscreteModel, AveragedOdeModel};
use crate::consensus::{self, trace_fmt as fmt_f64, StepSize};
use crate::load_balancing::{run_comparison, run_lb, write_metrics_csv, ArrivalProcess, LbScenario, LbTrace};
use crate::topology::{build_a_max, RingTopology, Topology};
use crate::{Error, Result};

/// Shipped scenarios by name.
pub const BUNDLED: [(&str, &str); 3] = [
    ("six-node", include_str!("../../scenarios/six-node.cfg")),
    ("six-node-delayed", include_str!("../../scenarios/six-node-delayed.cfg")),
    ("ring", include_str!("../../scenarios/ring.cfg")),
];

pub fn bundled_scenario(name: &str) -> Result<ScenarioConfig> {
    let text = BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t).ok_or_else(|| {
        Error::InvalidArgument(format!("unknown scenario {name:?}; known: six-node, six-node-delayed, ring"))
    })?;
    parse_scenario(text)
}

#[derive(Debug, Clone)]
pub struct ReproduceOptions {
    pub seeds: usize,
    pub base_seed: u64,
    /// Ring only: the full 1024-agent, 10^6-job run.
    pub full: bool,
}

impl Default for ReproduceOptions {
    fn default() -> Self {
        Self { seeds: 20, base_seed: 0, full: false }
    }
}

/// Write the artifact bundle for a shipped scenario under `out`. Returns the manifest path.
pub fn reproduce(name: &str, out: &Path, opts: &ReproduceOptions) -> Result<PathBuf> {
    let mut cfg = bundled_scenario(name)?;
    if name == "ring" {
        if opts.full {
            scale_ring_to_full(&mut cfg)?;
        }
        cfg.seed = opts.base_seed;
        let mut dir = ArtifactDir::create(out)?;
        dir.write_text("config.cfg", &cfg.echo())?;
        ring_bundle(&cfg, &mut dir)?;
        return dir.finish(&cfg.hash());
    }
    cfg.seed = opts.base_seed;
    let mut dir = ArtifactDir::create(out)?;
    dir.write_text("config.cfg", &cfg.echo())?;
    six_node_bundle(&cfg, opts, &mut dir)?;
    dir.finish(&cfg.hash())
}

fn scale_ring_to_full(cfg: &mut ScenarioConfig) -> Result<()> {
    let n = 1024;
    let mut ring = RingTopology::new(n, n)?;
    if let Topology::Ring(r) = &cfg.topology {
        ring.noise_var = r.noise_var;
        ring.noise_family = r.noise_family;
    }
    cfg.topology = Topology::Ring(ring);
    cfg.x0 = vec![0.0; n];
    cfg.lb.productivity = vec![cfg.lb.productivity[0]; n];
    cfg.lb.q0 = None;
    cfg.arrivals = ArrivalProcess::Stream { jobs: 1_000_000, start: 1, end: 2000, complexity_mean: 1.0 };
    cfg.horizon = 3000;
    Ok(())
}

fn write_rows<W: Write + ?Sized>(w: &mut W, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    for r in rows {
        out.write_record(r)?;
    }
    out.flush()?;
    Ok(())
}

/// `analysis.txt`, `eigenvalues.csv`, `teps.csv` and `constants.csv`.
pub fn analysis_artifacts(cfg: &ScenarioConfig, dir: &mut ArtifactDir) -> Result<AnalysisReport> {
    let report = analyze(cfg)?;
    dir.write_text("analysis.txt", &report.to_text())?;
    dir.write("eigenvalues.csv", |w| {
        write_rows(
            w,
            &["k", "re", "im"],
            report.eigenvalues.iter().enumerate().map(|(k, z)| vec![k.to_string(), fmt_f64(z.re), fmt_f64(z.im)]),
        )
    })?;
    dir.write("teps.csv", |w| {
        write_rows(w, &["eps", "t_eps"], report.teps.iter().map(|(e, t)| vec![fmt_f64(*e), fmt_f64(*t)]))
    })?;
    dir.write("constants.csv", |w| {
        let mut rows: Vec<(String, f64)> = report.bound_rows();
        if let Ok(k) = &report.certificate {
            rows.extend([
                ("C1_bar".to_string(), k.c1_bar),
                ("C2_bar".to_string(), k.c2_bar),
                ("c3_constant_step".to_string(), k.c3),
                ("certificate_lhs".to_string(), k.lhs()),
            ]);
        }
        write_rows(w, &["name", "value"], rows.into_iter().map(|(k, v)| vec![k, fmt_f64(v)]))
    })?;
    Ok(report)
}

/// `averaged.csv`: one stochastic run next to the discrete averaged model
/// and the ODE sampled at `tau_t`, long format `t,tau,agent,stochastic,discrete,ode`.
pub fn averaged_artifact(cfg: &ScenarioConfig, dir: &mut ArtifactDir) -> Result<()> {
    let scenario = cfg.consensus_scenario();
    let spec = cfg.topology.as_stochastic().ok_or_else(|| {
        Error::InvalidArgument("averaged models need a topology with declared link probabilities".into())
    })?;
    let trace = consensus::run(&scenario, cfg.seed, cfg.horizon)?;
    let topo = build_a_max(spec);
    let discrete = AveragedDiscreteModel::new(topo.clone(), scenario.dynamics.clone()).run(
        &scenario.initial_state(),
        &cfg.schedule,
        cfg.horizon,
    );
    let alpha_bar = cfg.schedule.alpha_bar(cfg.horizon);
    let grid = cfg.schedule.tau_grid(cfg.horizon);
    let ode = integrate_ode(
        &AveragedOdeModel::new(&topo, scenario.dynamics.clone(), alpha_bar)?,
        &cfg.x0,
        &grid,
        default_ode_step(alpha_bar),
    )?;
    dir.write("averaged.csv", |w| {
        let rows = (0..=cfg.horizon as usize).flat_map(|t| {
            let (x, z, o, tau) = (&trace.states[t], &discrete[t], &ode[t], grid[t]);
            (0..cfg.n()).map(move |i| {
                vec![t.to_string(), fmt_f64(tau), i.to_string(), fmt_f64(x[i]), fmt_f64(z[i]), fmt_f64(o[i])]
            })
        });
        write_rows(w, &["t", "tau", "agent", "stochastic", "discrete", "ode"], rows)
    })?;
    Ok(())
}

/// Analysis, stochastic trace, averaged trajectories, arrivals case and step-size sweep.
fn six_node_bundle(cfg: &ScenarioConfig, opts: &ReproduceOptions, dir: &mut ArtifactDir) -> Result<()> {
    analysis_artifacts(cfg, dir)?;
    let trace = consensus::run(&cfg.consensus_scenario(), cfg.seed, cfg.horizon)?;
    dir.write("trace.csv", |w| trace.write_csv(w))?;
    averaged_artifact(cfg, dir)?;

    let general = run_lb(&cfg.lb_scenario(), cfg.seed, cfg.horizon)?;
    dir.write("lb_trace.csv", |w| general.write_csv(w))?;
    dir.write("metrics.csv", |w| write_metrics_csv(w, &[("with", &general.metrics(None))]))?;

    let mut batch = cfg.clone();
    batch.arrivals = ArrivalProcess::None;
    let special = run_lb(&batch.lb_scenario(), cfg.seed, cfg.horizon)?;
    dir.write("lb_special_trace.csv", |w| special.write_csv(w))?;

    let schedules: Vec<(String, StepSize)> = [0.05, 0.1, 0.2, 0.5]
        .into_iter()
        .map(|a| (format!("alpha={a}"), StepSize::Constant(a)))
        .chain([("alpha=1/t".to_string(), StepSize::Harmonic { scale: 1.0, offset: 1.0 })])
        .collect();
    let seeds: Vec<u64> = (0..opts.seeds as u64).map(|k| opts.base_seed + k).collect();
    let mut lb_cfg = cfg.clone();
    lb_cfg.dynamics.family = super::Family::LoadBalance;
    let arms = step_size_sweep(&lb_cfg, &schedules, &seeds)?;
    dir.write("sweep.csv", |w| write_sweep_csv(w, &arms))?;
    Ok(())
}

/// `t,arm,mean_queue,d_abs` for each arm.
pub fn write_queue_csv<W: Write + ?Sized>(w: &mut W, arms: &[(&str, &LbTrace)]) -> Result<()> {
    let rows = arms.iter().flat_map(|(arm, tr)| {
        let metrics = tr.metrics(None);
        tr.mean_queue()
            .into_iter()
            .zip(metrics)
            .enumerate()
            .map(move |(t, (q, m))| vec![t.to_string(), arm.to_string(), fmt_f64(q), fmt_f64(m.d_abs)])
    });
    write_rows(w, &["t", "arm", "mean_queue", "d_abs"], rows)
}

/// Batch and streaming arrivals, each with and without redistribution.
fn ring_bundle(cfg: &ScenarioConfig, dir: &mut ArtifactDir) -> Result<()> {
    let stream: LbScenario = cfg.lb_scenario();
    let jobs = match stream.arrivals {
        ArrivalProcess::Stream { jobs, .. } | ArrivalProcess::Batch { jobs, .. } => jobs,
        _ => 0,
    };
    let mut batch = stream.clone();
    batch.arrivals = ArrivalProcess::Batch { jobs, complexity_mean: 1.0 };

    let (with, without) = run_comparison(&batch, cfg.seed, cfg.horizon)?;
    dir.write("batch_queue.csv", |w| write_queue_csv(w, &[("with", &with), ("without", &without)]))?;

    let (with, without) = run_comparison(&stream, cfg.seed, cfg.horizon)?;
    dir.write("stream_queue.csv", |w| write_queue_csv(w, &[("with", &with), ("without", &without)]))?;
    dir.write("metrics.csv", |w| {
        write_metrics_csv(w, &[("with", &with.metrics(None)), ("without", &without.metrics(None))])
    })?;
    dir.write("lb_trace.csv", |w| with.write_csv(w))?;
    Ok(())
}
