//! Sectioned `key = value` scenario files.
//!
//! ```text
//! [topology]
//! kind = stochastic          # or ring
//! n = 3
//! d_bar = 0
//! edge 1 2 1 1 0             # agent 1 listens to 2: p_appear b_mean b_var [pmf_0 .. pmf_dbar]
//! group 1 (2 0.5) (3 0.5)    # at most one of these links per step
//!
//! [schedule]
//! kind = constant
//! alpha = 0.1
//! ```
//!
//! Blank lines and text after `#` or `;` are ignored. Every problem found is
//! reported, each with its line number.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::consensus::{ConsensusScenario, Dynamics, Lipschitz, PreHistory, StepSize};
use crate::load_balancing::{ArrivalProcess, LbMode, LbScenario};
use crate::topology::{
    build_a_max, EdgeSpec, ExclusiveGroup, NoiseFamily, RingTopology, StochasticTopologySpec, Topology, WeightFamily,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    IdentityControl,
    ScaledControl,
    LoadBalance,
}

impl Family {
    fn as_str(self) -> &'static str {
        match self {
            Family::IdentityControl => "identity-control",
            Family::ScaledControl => "scaled-control",
            Family::LoadBalance => "load-balance",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsConfig {
    pub family: Family,
    pub gain: f64,
    /// Declared constants, used by the bound calculators.
    pub lipschitz: Lipschitz,
}

impl DynamicsConfig {
    pub fn dynamics(&self) -> Dynamics {
        match self.family {
            Family::IdentityControl => Dynamics::IdentityControl,
            Family::ScaledControl => Dynamics::ScaledControl { gain: self.gain },
            Family::LoadBalance => Dynamics::LoadBalance,
        }
    }

    /// The family's map carrying the declared constants, for probing.
    fn declared(&self) -> Dynamics {
        let inner = self.dynamics();
        let control_only = inner.control_only();
        Dynamics::Custom {
            name: self.family.as_str().to_string(),
            f: Arc::new(move |i, x, u| inner.apply(i, x, u)),
            lipschitz: self.lipschitz,
            control_only,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbConfig {
    pub mode: LbMode,
    pub productivity: Vec<f64>,
    pub jitter: f64,
    /// Initial queues; `x0 * p` when not given.
    pub q0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsConfig {
    pub eps: Vec<f64>,
    pub threshold: f64,
    /// Consensus target; predicted from the averaged model when absent.
    pub x_star: Option<f64>,
    /// Overrides the computed `Re lambda_2` in the `T(eps)` table.
    pub lambda2: Option<f64>,
    /// `(time, eps)`: back-solve the initial distance so that `T(eps) = time`.
    pub anchor: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub topology: Topology,
    pub dynamics: DynamicsConfig,
    pub schedule: StepSize,
    pub x0: Vec<f64>,
    pub pre_history: PreHistory,
    pub horizon: u64,
    pub seed: u64,
    pub seeds: usize,
    pub strict: bool,
    pub lb: LbConfig,
    pub arrivals: ArrivalProcess,
    pub metrics: MetricsConfig,
}

impl ScenarioConfig {
    pub fn n(&self) -> usize {
        self.topology.n()
    }

    pub fn consensus_scenario(&self) -> ConsensusScenario {
        ConsensusScenario {
            topology: self.topology.clone(),
            dynamics: self.dynamics.dynamics(),
            schedule: self.schedule.clone(),
            x0: self.x0.clone(),
            pre_history: self.pre_history,
        }
    }

    pub fn lb_scenario(&self) -> LbScenario {
        let q0 = self
            .lb
            .q0
            .clone()
            .unwrap_or_else(|| self.x0.iter().zip(&self.lb.productivity).map(|(x, p)| (x * p).max(0.0)).collect());
        LbScenario {
            topology: self.topology.clone(),
            schedule: self.schedule.clone(),
            q0,
            productivity: self.lb.productivity.clone(),
            jitter: self.lb.jitter,
            mode: self.lb.mode,
            arrivals: self.arrivals.clone(),
            pre_history: self.pre_history,
        }
    }

    /// Fully defaulted text form; parses back to an equal config.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
        s.push_str("[topology]\n");
        match &self.topology {
            Topology::Stochastic(spec) => {
                let _ = writeln!(s, "kind = stochastic\nn = {}\nd_bar = {}", spec.n(), spec.d_bar());
                let _ = writeln!(s, "noise_var = {}", spec.noise_var());
                let _ = writeln!(s, "noise = {}", noise_name(spec.noise_family()));
                let _ = writeln!(s, "weight_family = {}", weight_name(spec.weight_family()));
                for e in spec.edges() {
                    let _ = writeln!(
                        s,
                        "edge {} {} {} {} {} {}",
                        e.to + 1,
                        e.from + 1,
                        e.appear_prob,
                        e.weight_mean,
                        e.weight_var,
                        list(&e.delay_pmf)
                    );
                }
                for g in spec.groups() {
                    let members: Vec<String> = g.members.iter().map(|(j, p)| format!("({} {p})", j + 1)).collect();
                    let _ = writeln!(s, "group {} {}", g.to + 1, members.join(" "));
                }
            }
            Topology::Ring(r) => {
                let _ = writeln!(s, "kind = ring\nn = {}\nextra_links = {}", r.n, r.extra_links);
                let _ = writeln!(s, "noise_var = {}\nnoise = {}", r.noise_var, noise_name(r.noise_family));
            }
        }
        let Lipschitz { l1, lx, l2, lc } = self.dynamics.lipschitz;
        let _ = writeln!(
            s,
            "\n[dynamics]\nfamily = {}\ngain = {}\nlipschitz = {l1} {lx} {l2} {lc}",
            self.dynamics.family.as_str(),
            self.dynamics.gain
        );
        s.push_str("\n[schedule]\n");
        match &self.schedule {
            StepSize::Constant(a) => {
                let _ = writeln!(s, "kind = constant\nalpha = {a}");
            }
            StepSize::Harmonic { scale, offset } => {
                let _ = writeln!(s, "kind = harmonic\nscale = {scale}\noffset = {offset}");
            }
            StepSize::Explicit(v) => {
                let _ = writeln!(s, "kind = explicit\nvalues = {}", list(v));
            }
        }
        let pre = match self.pre_history {
            PreHistory::Zero => "zero",
            PreHistory::Clamp => "clamp",
        };
        let _ = writeln!(s, "\n[initial]\nx0 = {}\npre_history = {pre}", list(&self.x0));
        let _ = writeln!(
            s,
            "\n[run]\nhorizon = {}\nseed = {}\nseeds = {}\nstrict = {}",
            self.horizon, self.seed, self.seeds, self.strict
        );
        let _ = writeln!(
            s,
            "\n[lb]\nmode = {}\nproductivity = {}\njitter = {}",
            self.lb.mode.as_str(),
            list(&self.lb.productivity),
            self.lb.jitter
        );
        if let Some(q0) = &self.lb.q0 {
            let _ = writeln!(s, "q0 = {}", list(q0));
        }
        s.push_str("\n[arrivals]\n");
        match &self.arrivals {
            ArrivalProcess::None => s.push_str("kind = none\n"),
            ArrivalProcess::Batch { jobs, complexity_mean } => {
                let _ = writeln!(s, "kind = batch\njobs = {jobs}\ncomplexity_mean = {complexity_mean}");
            }
            ArrivalProcess::Stream { jobs, start, end, complexity_mean } => {
                let _ = writeln!(
                    s,
                    "kind = stream\njobs = {jobs}\nstart = {start}\nend = {end}\ncomplexity_mean = {complexity_mean}"
                );
            }
            ArrivalProcess::Events(events) => {
                s.push_str("kind = events\n");
                for (t, i, w) in events {
                    let _ = writeln!(s, "inject {t} {} {w}", i + 1);
                }
            }
        }
        let m = &self.metrics;
        let _ = writeln!(s, "\n[metrics]\neps = {}\nthreshold = {}", list(&m.eps), m.threshold);
        let _ = writeln!(s, "x_star = {}", m.x_star.map_or("auto".to_string(), |v| v.to_string()));
        let _ = writeln!(s, "lambda2 = {}", m.lambda2.map_or("auto".to_string(), |v| v.to_string()));
        if let Some((t, e)) = m.anchor {
            let _ = writeln!(s, "anchor = {t} {e}");
        }
        s
    }

    /// SHA-256 of [`ScenarioConfig::echo`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.echo().as_bytes()))
    }
}

fn noise_name(f: NoiseFamily) -> &'static str {
    match f {
        NoiseFamily::Gaussian => "gaussian",
        NoiseFamily::Uniform => "uniform",
    }
}

fn weight_name(f: WeightFamily) -> &'static str {
    match f {
        WeightFamily::Gamma => "gamma",
        WeightFamily::TruncatedNormal => "truncated-normal",
    }
}

#[derive(Debug, Default)]
struct Section {
    line: usize,
    kv: BTreeMap<String, (usize, String)>,
    directives: Vec<(usize, String, Vec<String>)>,
    used: BTreeSet<String>,
}

const SECTIONS: [&str; 8] = ["topology", "dynamics", "schedule", "initial", "run", "lb", "arrivals", "metrics"];
const DIRECTIVES: [(&str, &str); 3] = [("topology", "edge"), ("topology", "group"), ("arrivals", "inject")];

struct Ctx {
    name: &'static str,
    errors: Vec<String>,
}

impl Ctx {
    fn err(&mut self, line: usize, msg: impl std::fmt::Display) {
        self.errors.push(format!("line {line}: [{}] {msg}", self.name));
    }
}

impl Section {
    fn raw(&mut self, key: &str) -> Option<(usize, String)> {
        self.used.insert(key.to_string());
        self.kv.get(key).cloned()
    }

    fn parsed<T: std::str::FromStr>(&mut self, ctx: &mut Ctx, key: &str, default: T) -> T {
        match self.raw(key) {
            None => default,
            Some((line, v)) => v.parse().unwrap_or_else(|_| {
                ctx.err(line, format!("{key}: cannot parse {v:?}"));
                default
            }),
        }
    }

    fn required<T: std::str::FromStr>(&mut self, ctx: &mut Ctx, key: &str) -> Option<T> {
        match self.raw(key) {
            None => {
                ctx.err(self.line, format!("missing key {key}"));
                None
            }
            Some((line, v)) => v.parse().ok().or_else(|| {
                ctx.err(line, format!("{key}: cannot parse {v:?}"));
                None
            }),
        }
    }

    fn floats(&mut self, ctx: &mut Ctx, key: &str) -> Option<(usize, Vec<f64>)> {
        let (line, v) = self.raw(key)?;
        let parsed: std::result::Result<Vec<f64>, _> = v.split_whitespace().map(str::parse).collect();
        match parsed {
            Ok(list) if !list.is_empty() => Some((line, list)),
            _ => {
                ctx.err(line, format!("{key}: expected a list of numbers, got {v:?}"));
                None
            }
        }
    }

    fn choice<T: Copy>(&mut self, ctx: &mut Ctx, key: &str, options: &[(&str, T)], default: T) -> T {
        match self.raw(key) {
            None => default,
            Some((line, v)) => match options.iter().find(|(name, _)| *name == v) {
                Some((_, t)) => *t,
                None => {
                    let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                    ctx.err(line, format!("{key}: {v:?} is not one of {}", names.join(", ")));
                    default
                }
            },
        }
    }

    /// `auto` or a number.
    fn optional_f64(&mut self, ctx: &mut Ctx, key: &str) -> Option<f64> {
        match self.raw(key) {
            Some((_, v)) if v == "auto" => None,
            Some((line, v)) => v.parse().ok().or_else(|| {
                ctx.err(line, format!("{key}: expected a number or auto, got {v:?}"));
                None
            }),
            None => None,
        }
    }

    fn finish(&self, ctx: &mut Ctx) {
        for (key, (line, _)) in &self.kv {
            if !self.used.contains(key) {
                ctx.err(*line, format!("unknown key {key}"));
            }
        }
    }
}

/// Broadcast a single value to `n` entries or check the length.
fn per_agent(ctx: &mut Ctx, line: usize, key: &str, v: Vec<f64>, n: usize) -> Vec<f64> {
    match v.len() {
        1 => vec![v[0]; n],
        len if len == n => v,
        len => {
            ctx.err(line, format!("{key}: {len} values for {n} agents"));
            vec![v[0]; n]
        }
    }
}

fn strip_comment(line: &str) -> &str {
    let cut = line.find(['#', ';']).unwrap_or(line.len());
    line[..cut].trim()
}

fn split_sections(text: &str, errors: &mut Vec<String>) -> BTreeMap<&'static str, Section> {
    let mut sections: BTreeMap<&'static str, Section> = BTreeMap::new();
    let mut current: Option<&'static str> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = strip_comment(raw);
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
            let name = name.trim();
            match SECTIONS.iter().find(|s| **s == name) {
                Some(&s) if sections.contains_key(s) => {
                    errors.push(format!("line {line}: section [{s}] appears twice"));
                    current = Some(s);
                }
                Some(&s) => {
                    sections.insert(s, Section { line, ..Section::default() });
                    current = Some(s);
                }
                None => {
                    errors.push(format!("line {line}: unknown section [{name}]"));
                    current = None;
                }
            }
            continue;
        }
        let Some(name) = current else {
            errors.push(format!("line {line}: content outside any known section"));
            continue;
        };
        let section = sections.get_mut(name).expect("inserted on header");
        if let Some((key, value)) = body.split_once('=') {
            let key = key.trim().to_string();
            if let Some((first, _)) = section.kv.get(&key) {
                errors.push(format!("line {line}: [{name}] duplicate key {key} (first on line {first})"));
            } else {
                section.kv.insert(key, (line, value.trim().to_string()));
            }
        } else {
            let mut words = body.split_whitespace();
            let head = words.next().unwrap_or_default().to_string();
            if DIRECTIVES.contains(&(name, head.as_str())) {
                section.directives.push((line, head, words.map(String::from).collect()));
            } else {
                errors.push(format!("line {line}: [{name}] expected key = value, got {body:?}"));
            }
        }
    }
    sections
}

fn parse_edge(ctx: &mut Ctx, line: usize, args: &[String], n: usize, d_bar: usize) -> Option<EdgeSpec> {
    let nums: Option<Vec<f64>> = args.iter().map(|a| a.parse().ok()).collect();
    let Some(nums) = nums else {
        ctx.err(line, format!("edge: non-numeric field in {args:?}"));
        return None;
    };
    if nums.len() != 5 && nums.len() != 6 + d_bar {
        ctx.err(line, format!("edge: expected i j p_appear b_mean b_var and {} delay probabilities", d_bar + 1));
        return None;
    }
    let node = |v: f64| (v.fract() == 0.0 && v >= 1.0 && v <= n as f64).then(|| v as usize - 1);
    let (Some(to), Some(from)) = (node(nums[0]), node(nums[1])) else {
        ctx.err(line, format!("edge: node ids must be integers in 1..={n}"));
        return None;
    };
    let delay_pmf = if nums.len() == 5 {
        let mut pmf = vec![0.0; d_bar + 1];
        pmf[0] = 1.0;
        pmf
    } else {
        nums[5..].to_vec()
    };
    Some(EdgeSpec { to, from, appear_prob: nums[2], weight_mean: nums[3], weight_var: nums[4], delay_pmf })
}

fn parse_group(ctx: &mut Ctx, line: usize, args: &[String], n: usize) -> Option<ExclusiveGroup> {
    let joined = args.join(" ");
    let mut parts = joined.splitn(2, char::is_whitespace);
    let to: usize = match parts.next().and_then(|s| s.parse().ok()) {
        Some(v) if (1..=n).contains(&v) => v - 1,
        _ => {
            ctx.err(line, format!("group: receiving node must be in 1..={n}"));
            return None;
        }
    };
    let rest = parts.next().unwrap_or("");
    let mut members = Vec::new();
    for chunk in rest.split(')').map(str::trim).filter(|c| !c.is_empty()) {
        let inner = chunk.strip_prefix('(').map(str::split_whitespace);
        let pair: Option<(usize, f64)> = inner.and_then(|mut w| {
            let j: usize = w.next()?.parse().ok()?;
            let p: f64 = w.next()?.parse().ok()?;
            (w.next().is_none() && (1..=n).contains(&j)).then_some((j - 1, p))
        });
        match pair {
            Some(m) => members.push(m),
            None => {
                ctx.err(line, format!("group: cannot read member {chunk:?}, expected (j p)"));
                return None;
            }
        }
    }
    Some(ExclusiveGroup { to, members })
}

fn parse_topology(s: &mut Section, errors: &mut Vec<String>) -> Option<Topology> {
    let mut ctx = Ctx { name: "topology", errors: Vec::new() };
    let kind = s.choice(&mut ctx, "kind", &[("stochastic", false), ("ring", true)], false);
    let n: Option<usize> = s.required(&mut ctx, "n");
    let noise_var: f64 = s.parsed(&mut ctx, "noise_var", 0.0);
    let noise = s.choice(
        &mut ctx,
        "noise",
        &[("gaussian", NoiseFamily::Gaussian), ("uniform", NoiseFamily::Uniform)],
        NoiseFamily::Gaussian,
    );
    let topology = if kind {
        let extra: Option<usize> = s.raw("extra_links").map(|(line, v)| {
            v.parse().unwrap_or_else(|_| {
                ctx.err(line, format!("extra_links: cannot parse {v:?}"));
                0
            })
        });
        if let Some((line, ..)) = s.directives.first() {
            ctx.err(*line, "edge and group lines need kind = stochastic");
        }
        n.and_then(|n| match RingTopology::new(n, extra.unwrap_or(n)) {
            Ok(mut r) => {
                r.noise_var = noise_var;
                r.noise_family = noise;
                if !(noise_var >= 0.0 && noise_var.is_finite()) {
                    ctx.err(s.line, format!("noise variance {noise_var} must be a nonnegative real"));
                }
                Some(Topology::Ring(r))
            }
            Err(e) => {
                ctx.err(s.line, e);
                None
            }
        })
    } else {
        let d_bar: usize = s.parsed(&mut ctx, "d_bar", 0);
        let weights = s.choice(
            &mut ctx,
            "weight_family",
            &[("gamma", WeightFamily::Gamma), ("truncated-normal", WeightFamily::TruncatedNormal)],
            WeightFamily::Gamma,
        );
        let mut edges = Vec::new();
        let mut groups = Vec::new();
        if let Some(n) = n {
            for (line, head, args) in s.directives.clone() {
                match head.as_str() {
                    "edge" => edges.extend(parse_edge(&mut ctx, line, &args, n, d_bar)),
                    _ => groups.extend(parse_group(&mut ctx, line, &args, n)),
                }
            }
        }
        match n.map(|n| StochasticTopologySpec::new(n, d_bar, noise_var, edges, groups)) {
            Some(Ok(spec)) => Some(Topology::Stochastic(spec.with_noise_family(noise).with_weight_family(weights))),
            Some(Err(Error::Config(list))) => {
                list.into_iter().for_each(|m| ctx.err(s.line, m));
                None
            }
            Some(Err(e)) => {
                ctx.err(s.line, e);
                None
            }
            None => None,
        }
    };
    s.finish(&mut ctx);
    errors.append(&mut ctx.errors);
    topology
}

/// Parse and validate a scenario. All problems are returned together.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let mut errors = Vec::new();
    let mut sections = split_sections(text, &mut errors);
    let mut take = |name: &'static str| sections.remove(name).unwrap_or_default();

    let mut topo_section = take("topology");
    if topo_section.line == 0 && topo_section.kv.is_empty() {
        errors.push("missing section [topology]".into());
    }
    let topology = parse_topology(&mut topo_section, &mut errors);
    let n = topology.as_ref().map_or(1, Topology::n);

    let mut s = take("dynamics");
    let mut ctx = Ctx { name: "dynamics", errors: Vec::new() };
    let family = s.choice(
        &mut ctx,
        "family",
        &[
            ("identity-control", Family::IdentityControl),
            ("scaled-control", Family::ScaledControl),
            ("load-balance", Family::LoadBalance),
        ],
        Family::IdentityControl,
    );
    let gain: f64 = s.parsed(&mut ctx, "gain", 1.0);
    let mut dynamics = DynamicsConfig { family, gain, lipschitz: Lipschitz { l1: 0.0, lx: 0.0, l2: 0.0, lc: 0.0 } };
    dynamics.lipschitz = dynamics.dynamics().lipschitz();
    if let Some((line, v)) = s.floats(&mut ctx, "lipschitz") {
        if let [l1, lx, l2, lc] = v[..] {
            dynamics.lipschitz = Lipschitz { l1, lx, l2, lc };
            if let Err(e) = dynamics.declared().probe(n, 500, 100.0, 0) {
                ctx.err(line, e);
            }
        } else {
            ctx.err(line, "lipschitz: expected four numbers l1 lx l2 lc");
        }
    }
    s.finish(&mut ctx);
    errors.append(&mut ctx.errors);

    let mut s = take("schedule");
    let mut ctx = Ctx { name: "schedule", errors: Vec::new() };
    let kind = s.choice(&mut ctx, "kind", &[("constant", 0), ("harmonic", 1), ("explicit", 2)], 0);
    let schedule = match kind {
        0 => StepSize::Constant(s.parsed(&mut ctx, "alpha", 0.1)),
        1 => StepSize::Harmonic { scale: s.parsed(&mut ctx, "scale", 1.0), offset: s.parsed(&mut ctx, "offset", 1.0) },
        _ => StepSize::Explicit(s.floats(&mut ctx, "values").map(|(_, v)| v).unwrap_or_default()),
    };
    if let Err(e) = schedule.validate() {
        ctx.err(s.line, e);
    }
    s.finish(&mut ctx);
    errors.append(&mut ctx.errors);

    let mut s = take("initial");
    let mut ctx = Ctx { name: "initial", errors: Vec::new() };
    let x0 = match s.floats(&mut ctx, "x0") {
        Some((line, v)) => per_agent(&mut ctx, line, "x0", v, n),
        None => vec![0.0; n],
    };
    if x0.iter().any(|v| !v.is_finite()) {
        ctx.err(s.line, "x0 must be finite");
    }
    let pre_history = s.choice(
        &mut ctx,
        "pre_history",
        &[("zero", PreHistory::Zero), ("clamp", PreHistory::Clamp)],
        PreHistory::Zero,
    );
    s.finish(&mut ctx);
    errors.append(&mut ctx.errors);

    let mut s = take("run");
    let mut ctx = Ctx { name: "run", errors: Vec::new() };
    let horizon: u64 = s.parsed(&mut ctx, "horizon", 100);
    let seed: u64 = s.parsed(&mut ctx, "seed", 0);
    let seeds: usize = s.parsed(&mut ctx, "seeds", 1);
    if seeds == 0 {
        ctx.err(s.line, "seeds must be at least 1");
    }
    let strict: bool = s.parsed(&mut ctx, "strict", false);
    s.finish(&mut ctx);
    errors.append(&mut ctx.errors);

    let mut s = take("lb");
    let mut ctx = Ctx { name: "lb", errors: Vec::new() };
    let mode =
        s.choice(&mut ctx, "mode", &[("state", LbMode::State), ("transfer", LbMode::Transfer)], LbMode::Transfer);
    let productivity = match s.floats(&mut ctx, "productivity") {
        Some((line, v)) => per_agent(&mut ctx, line, "productivity", v, n),
        None => vec![1.0; n],
    };
    if productivity.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
        ctx.err(s.line, "productivities must be positive");
    }
    let jitter: f64 = s.parsed(&mut ctx, "jitter", 0.0);
    if !(0.0..1.0).contains(&jitter) {
        ctx.err(s.line, format!("jitter {jitter} outside [0, 1)"));
    }
    let q0 = s.floats(&mut ctx, "q0").map(|(line, v)| per_agent(&mut ctx, line, "q0", v, n));
    if q0.as_ref().is_some_and(|q| q.iter().any(|v| !(*v >= 0.0))) {
        ctx.err(s.line, "q0 must be nonnegative");
    }
    s.finish(&mut ctx);
    errors.append(&mut ctx.errors);
    let lb = LbConfig { mode, productivity, jitter, q0 };

    let mut s = take("arrivals");
    let mut ctx = Ctx { name: "arrivals", errors: Vec::new() };
    let kind = s.choice(&mut ctx, "kind", &[("none", 0), ("batch", 1), ("stream", 2), ("events", 3)], 0);
    let arrivals = match kind {
        0 => ArrivalProcess::None,
        1 => ArrivalProcess::Batch {
            jobs: s.parsed(&mut ctx, "jobs", 0),
            complexity_mean: s.parsed(&mut ctx, "complexity_mean", 1.0),
        },
        2 => ArrivalProcess::Stream {
            jobs: s.parsed(&mut ctx, "jobs", 0),
            start: s.parsed(&mut ctx, "start", 1),
            end: s.parsed(&mut ctx, "end", 1),
            complexity_mean: s.parsed(&mut ctx, "complexity_mean", 1.0),
        },
        _ => {
            let mut events = Vec::new();
            for (line, _, args) in s.directives.clone() {
                let parsed = match &args[..] {
                    [t, i, w] => match (t.parse::<u64>(), i.parse::<usize>(), w.parse::<f64>()) {
                        (Ok(t), Ok(i), Ok(w)) if (1..=n).contains(&i) => Some((t, i - 1, w)),
                        _ => None,
                    },
                    _ => None,
                };
                match parsed {
                    Some(ev) => events.push(ev),
                    None => ctx.err(line, format!("inject: expected t agent work with agent in 1..={n}")),
                }
            }
            ArrivalProcess::Events(events)
        }
    };
    if kind != 3 {
        if let Some((line, ..)) = s.directives.first() {
            ctx.err(*line, "inject lines need kind = events");
        }
    }
    if let Err(e) = arrivals.validate(n) {
        ctx.err(s.line, e);
    }
    s.finish(&mut ctx);
    errors.append(&mut ctx.errors);

    let mut s = take("metrics");
    let mut ctx = Ctx { name: "metrics", errors: Vec::new() };
    let eps = s.floats(&mut ctx, "eps").map(|(_, v)| v).unwrap_or_else(|| vec![0.1, 1.0]);
    if eps.iter().any(|e| !(*e > 0.0)) {
        ctx.err(s.line, "eps values must be positive");
    }
    let threshold: f64 = s.parsed(&mut ctx, "threshold", 0.5);
    let x_star = s.optional_f64(&mut ctx, "x_star");
    let lambda2 = s.optional_f64(&mut ctx, "lambda2");
    let anchor = s.floats(&mut ctx, "anchor").and_then(|(line, v)| match v[..] {
        [t, e] if t > 0.0 && e > 0.0 => Some((t, e)),
        _ => {
            ctx.err(line, "anchor: expected a positive time and a positive eps");
            None
        }
    });
    s.finish(&mut ctx);
    errors.append(&mut ctx.errors);
    let metrics = MetricsConfig { eps, threshold, x_star, lambda2, anchor };

    if strict && !matches!(dynamics.family, Family::LoadBalance) {
        if let (Some(Topology::Stochastic(spec)), StepSize::Constant(alpha)) = (&topology, &schedule) {
            let d_max = build_a_max(spec).d_max();
            if alpha * d_max >= 1.0 {
                errors.push(format!("[schedule] alpha = {alpha} violates alpha < 1/d_max(A_max) = {}", 1.0 / d_max));
            }
        }
    }

    match topology {
        Some(topology) if errors.is_empty() => Ok(ScenarioConfig {
            topology,
            dynamics,
            schedule,
            x0,
            pre_history,
            horizon,
            seed,
            seeds,
            strict,
            lb,
            arrivals,
            metrics,
        }),
        _ => Err(Error::Config(errors)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[topology]\nn = 2\nedge 1 2 1 1 0\nedge 2 1 1 1 0\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_scenario(MINIMAL).unwrap();
        assert_eq!(c.schedule, StepSize::Constant(0.1));
        assert_eq!(c.x0, vec![0.0, 0.0]);
        assert_eq!(c.horizon, 100);
        assert_eq!(c.dynamics.family, Family::IdentityControl);
        let echo = c.echo();
        assert!(echo.contains("alpha = 0.1"));
        assert!(echo.contains("pre_history = zero"));
        assert_eq!(parse_scenario(&echo).unwrap(), c);
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn all_errors_are_reported() {
        let text = "[topology]\nn = 3\nd_bar = 1\nedge 1 2 1 1 0 0.5 0.6\nedge 2 9 1 1 0 1 0\nbogus = 1\n\
                    [schedule]\nalpha = -1\nalpha = 2\n[mystery]\n";
        let Err(Error::Config(list)) = parse_scenario(text) else { panic!("expected errors") };
        let joined = list.join("\n");
        assert!(joined.contains("edge 1 2") && joined.contains("sums to"), "{joined}");
        assert!(joined.contains("1..=3"), "{joined}");
        assert!(joined.contains("unknown key bogus"), "{joined}");
        assert!(joined.contains("duplicate key alpha"), "{joined}");
        assert!(joined.contains("unknown section [mystery]"), "{joined}");
        assert!(joined.contains("step size -1"), "{joined}");
    }

    #[test]
    fn strict_mode_checks_step_size() {
        let text = format!("{MINIMAL}[schedule]\nalpha = 1.5\n[run]\nstrict = true\n");
        let Err(Error::Config(list)) = parse_scenario(&text) else { panic!() };
        assert!(list[0].contains("1/d_max"));
        assert!(parse_scenario(&text.replace("strict = true", "strict = false")).is_ok());
    }

    #[test]
    fn groups_rings_and_arrivals() {
        let text = "[topology]\nn = 3\nedge 1 2 0.5 1 0\nedge 1 3 0.5 1 0\nedge 2 1 1 1 0\nedge 3 2 1 1 0\n\
                    group 1 (2 0.5) (3 0.5)\n[arrivals]\nkind = events\ninject 5 2 10\n";
        let c = parse_scenario(text).unwrap();
        assert_eq!(c.topology.as_stochastic().unwrap().groups().len(), 1);
        assert_eq!(c.arrivals, ArrivalProcess::Events(vec![(5, 1, 10.0)]));
        assert_eq!(parse_scenario(&c.echo()).unwrap(), c);

        let ring = parse_scenario("[topology]\nkind = ring\nn = 8\n[initial]\nx0 = 3\n").unwrap();
        assert!(matches!(ring.topology, Topology::Ring(RingTopology { extra_links: 8, .. })));
        assert_eq!(ring.x0, vec![3.0; 8]);
        assert_eq!(parse_scenario(&ring.echo()).unwrap(), ring);
    }

    #[test]
    fn declared_lipschitz_is_probed() {
        let bad = format!("{MINIMAL}[dynamics]\nfamily = scaled-control\ngain = 3\nlipschitz = 1 0 9 0\n");
        let Err(Error::Config(list)) = parse_scenario(&bad) else { panic!() };
        assert!(list[0].contains("Lipschitz"), "{list:?}");
        let good = bad.replace("lipschitz = 1 0 9 0", "lipschitz = 3 0 9 0");
        assert_eq!(parse_scenario(&good).unwrap().dynamics.lipschitz.l1, 3.0);
    }

    #[test]
    fn group_probability_must_match_edge() {
        let text = "[topology]\nn = 3\nedge 1 2 0.3 1 0\nedge 1 3 0.5 1 0\ngroup 1 (2 0.5) (3 0.5)\n";
        let Err(Error::Config(list)) = parse_scenario(text) else { panic!() };
        assert!(list.iter().any(|m| m.contains("edge line says 0.3")), "{list:?}");
    }
}
