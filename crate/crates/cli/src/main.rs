use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use local_voting::averaged::{deviation_estimate, Comparison};
use local_voting::consensus::{self, StepSize};
use local_voting::graph::parse_edge_list;
use local_voting::harness::{
    analysis_artifacts, averaged_artifact, bundled_scenario, parse_scenario, replicate, reproduce, step_size_sweep,
    with_threads, write_queue_csv, write_sweep_csv, ArtifactDir, ReproduceOptions, ScenarioConfig,
};
use local_voting::load_balancing::{run_comparison, run_lb, write_metrics_csv};
use local_voting::{Error, Result};

#[derive(Parser)]
#[command(name = "lvp", version, about = "Local voting protocol: consensus and load balancing over random networks")]
struct Cli {
    /// Seed of the first run (overrides the scenario).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of Monte-Carlo replications (overrides the scenario).
    #[arg(long, global = true)]
    seeds: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads for replications; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Spectrum, T(eps) table and bound constants of an edge list or scenario.
    Analyze {
        input: PathBuf,
        /// Comma-separated eps values for the T(eps) table.
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
        /// Use this Re(lambda2) instead of the computed one.
        #[arg(long)]
        lambda2: Option<f64>,
        /// `TIME,EPS`: back-solve the initial distance from a known crossing time.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        anchor: Option<Vec<f64>>,
    },
    /// Stochastic runs: one trace plus per-seed residual summaries.
    Simulate { config: PathBuf },
    /// Stochastic run next to both averaged models.
    Averaged { config: PathBuf },
    /// Monte-Carlo deviation from the averaged models against the literal bound.
    Deviation { config: PathBuf },
    /// Load-balancing run with redistribution.
    Lb { config: PathBuf },
    /// Load balancing with and without redistribution on common random numbers.
    Compare { config: PathBuf },
    /// Residual curves over constant step sizes and a 1/t schedule.
    Sweep {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.2")]
        alphas: Vec<f64>,
        /// Skip the 1/(t + 1) arm.
        #[arg(long)]
        no_harmonic: bool,
    },
    /// Regenerate a shipped experiment: six-node, six-node-delayed or ring.
    Reproduce {
        name: String,
        /// Ring only: 1024 agents and 10^6 jobs (slow).
        #[arg(long)]
        full: bool,
    },
}

fn load_config(path: &Path, cli: &Cli) -> Result<ScenarioConfig> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = parse_scenario(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(seeds) = cli.seeds {
        cfg.seeds = seeds;
    }
    Ok(cfg)
}

/// Scenario text wrapping a bare edge list as a deterministic topology.
fn edge_list_scenario(text: &str) -> Result<String> {
    let g = parse_edge_list(text)?;
    let w = g.weights();
    let mut cfg = format!("[topology]\nn = {}\n", g.n());
    for i in 0..g.n() {
        for j in 0..g.n() {
            if w[(i, j)] != 0.0 {
                cfg.push_str(&format!("edge {} {} 1 {} 0\n", i + 1, j + 1, w[(i, j)]));
            }
        }
    }
    Ok(cfg)
}

fn seed_list(cfg: &ScenarioConfig) -> Vec<u64> {
    (0..cfg.seeds.max(1) as u64).map(|k| cfg.seed + k).collect()
}

/// Load and override the scenario before anything is written.
fn scenario_for(cli: &Cli) -> Result<ScenarioConfig> {
    match &cli.command {
        Command::Analyze { input, eps, lambda2, anchor } => {
            let text = fs::read_to_string(input)
                .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", input.display())))?;
            let is_cfg = input.extension().is_some_and(|e| e == "cfg");
            let mut cfg = parse_scenario(&if is_cfg { text } else { edge_list_scenario(&text)? })?;
            if let Some(eps) = eps {
                cfg.metrics.eps = eps.clone();
            }
            if lambda2.is_some() {
                cfg.metrics.lambda2 = *lambda2;
            }
            if let Some(a) = anchor {
                cfg.metrics.anchor = Some((a[0], a[1]));
            }
            Ok(cfg)
        }
        Command::Simulate { config }
        | Command::Averaged { config }
        | Command::Deviation { config }
        | Command::Lb { config }
        | Command::Compare { config }
        | Command::Sweep { config, .. } => load_config(config, cli),
        Command::Reproduce { name, .. } => bundled_scenario(name),
    }
}

fn run(cli: &Cli) -> Result<PathBuf> {
    if let Command::Reproduce { name, full } = &cli.command {
        let opts = ReproduceOptions {
            seeds: cli.seeds.unwrap_or(ReproduceOptions::default().seeds),
            base_seed: cli.seed.unwrap_or(0),
            full: *full,
        };
        return reproduce(name, &cli.out_dir, &opts);
    }
    let cfg = scenario_for(cli)?;
    let mut dir = ArtifactDir::create(&cli.out_dir)?;
    match &cli.command {
        Command::Reproduce { .. } => unreachable!("handled above"),
        Command::Analyze { .. } => {
            let report = analysis_artifacts(&cfg, &mut dir)?;
            print!("{}", report.to_text());
        }
        Command::Simulate { .. } => {
            let trace = consensus::run(&cfg.consensus_scenario(), cfg.seed, cfg.horizon)?;
            dir.write("trace.csv", |w| trace.write_csv(w))?;
            let rep = replicate(&cfg, cfg.seeds.max(1), cfg.seed)?;
            dir.write("seeds.csv", |w| rep.write_seeds_csv(w))?;
            let mut summary = format!(
                "x* {}\nmean final err {:e} (stderr {:e})\n",
                rep.x_star, rep.mean_final_err, rep.stderr_final_err
            );
            for (e, ok) in &rep.eps_pass {
                summary.push_str(&format!("eps-consensus at {e}: {ok}\n"));
            }
            print!("{summary}");
            dir.write_text("summary.txt", &summary)?;
        }
        Command::Averaged { .. } => {
            averaged_artifact(&cfg, &mut dir)?;
        }
        Command::Deviation { .. } => {
            let seeds = seed_list(&cfg);
            let scenario = cfg.consensus_scenario();
            let discrete = deviation_estimate(&scenario, &seeds, cfg.horizon, Comparison::Discrete)?;
            let ode = deviation_estimate(&scenario, &seeds, cfg.horizon, Comparison::Ode)?;
            let report = analysis_artifacts(&cfg, &mut dir)?;
            let text = format!(
                "seeds {}\ndiscrete E max dev {:e} (stderr {:e})\node E max dev {:e} (stderr {:e})\nbound {:e}\n",
                seeds.len(),
                discrete.mean,
                discrete.stderr,
                ode.mean,
                ode.stderr,
                report.deviation_bound.bound
            );
            print!("{text}");
            dir.write_text("deviation.txt", &text)?;
            let mut table = String::from("seed,discrete,ode\n");
            for ((s, d), o) in seeds.iter().zip(&discrete.per_seed).zip(&ode.per_seed) {
                table.push_str(&format!("{s},{},{}\n", consensus::trace_fmt(*d), consensus::trace_fmt(*o)));
            }
            dir.write_text("deviation.csv", &table)?;
        }
        Command::Lb { .. } => {
            let trace = run_lb(&cfg.lb_scenario(), cfg.seed, cfg.horizon)?;
            dir.write("lb_trace.csv", |w| trace.write_csv(w))?;
            dir.write("metrics.csv", |w| write_metrics_csv(w, &[("with", &trace.metrics(None))]))?;
        }
        Command::Compare { .. } => {
            let (with, without) = run_comparison(&cfg.lb_scenario(), cfg.seed, cfg.horizon)?;
            dir.write("lb_trace.csv", |w| with.write_csv(w))?;
            dir.write("lb_trace_without.csv", |w| without.write_csv(w))?;
            dir.write("metrics.csv", |w| {
                write_metrics_csv(w, &[("with", &with.metrics(None)), ("without", &without.metrics(None))])
            })?;
            dir.write("queue.csv", |w| write_queue_csv(w, &[("with", &with), ("without", &without)]))?;
        }
        Command::Sweep { alphas, no_harmonic, .. } => {
            let mut schedules: Vec<(String, StepSize)> =
                alphas.iter().map(|&a| (format!("alpha={a}"), StepSize::Constant(a))).collect();
            if !no_harmonic {
                schedules.push(("alpha=1/t".into(), StepSize::Harmonic { scale: 1.0, offset: 1.0 }));
            }
            let arms = step_size_sweep(&cfg, &schedules, &seed_list(&cfg))?;
            dir.write("sweep.csv", |w| write_sweep_csv(w, &arms))?;
        }
    }
    dir.write_text("config.cfg", &cfg.echo())?;
    dir.finish(&cfg.hash())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match with_threads(cli.threads, || run(&cli)).and_then(|r| r) {
        Ok(manifest) => {
            eprintln!("wrote {}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
