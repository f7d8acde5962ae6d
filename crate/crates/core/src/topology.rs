//! Random network topology: which links appear, with what protocol weight,
//! after what delay, and with what measurement noise.
//!
//! Sampling is a pure function of `(spec, seed, t)`. Each random element has
//! its own counter-based stream (see [`crate::rng`]):
//!
//! | element               | kind          | id                    |
//! |-----------------------|---------------|-----------------------|
//! | independent edge      | `EdgeAppear`  | `to * n + from`       |
//! | exclusive group       | `Group`       | group index           |
//! | weight of an edge     | `EdgeWeight`  | `to * n + from`       |
//! | delay of an edge      | `EdgeDelay`   | `to * n + from`       |
//! | noise `w^{i,j}`       | `EdgeNoise`   | `to * n + from`       |
//! | noise `w^{i,i}`       | `SelfNoise`   | `i`                   |
//! | ring shortcut links   | `RingLinks`   | 0                     |

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::graph::WeightedDigraph;
use crate::linalg;
use crate::rng::{stream, StreamKind};
use crate::{Error, Result};

const PMF_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightFamily {
    /// Gamma with the configured mean and variance (point mass when the variance is zero).
    #[default]
    Gamma,
    /// Normal with the configured mean and variance, resampled until nonnegative.
    TruncatedNormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseFamily {
    #[default]
    Gaussian,
    /// Uniform on `[-sqrt(3) sigma, sqrt(3) sigma]`.
    Uniform,
}

impl NoiseFamily {
    pub fn sample<R: Rng>(self, variance: f64, rng: &mut R) -> f64 {
        if variance == 0.0 {
            return 0.0;
        }
        let sigma = variance.sqrt();
        match self {
            NoiseFamily::Gaussian => Normal::new(0.0, sigma).expect("finite sigma").sample(rng),
            NoiseFamily::Uniform => {
                let half = 3f64.sqrt() * sigma;
                rng.random_range(-half..=half)
            }
        }
    }
}

/// One directed link `from -> to` of the maximal link set (0-based ids).
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSpec {
    pub to: usize,
    pub from: usize,
    pub appear_prob: f64,
    pub weight_mean: f64,
    pub weight_var: f64,
    /// Probability of delay `k` for `k = 0..=d_bar`.
    pub delay_pmf: Vec<f64>,
}

impl EdgeSpec {
    /// Always-present link with a deterministic weight and no delay.
    pub fn fixed(to: usize, from: usize, weight: f64) -> Self {
        Self { to, from, appear_prob: 1.0, weight_mean: weight, weight_var: 0.0, delay_pmf: vec![1.0] }
    }

    pub fn with_pmf(mut self, delay_pmf: Vec<f64>) -> Self {
        self.delay_pmf = delay_pmf;
        self
    }
}

/// Mutually exclusive links into the same agent: per step at most one of
/// them is active, chosen with the member probabilities (which may leave
/// some mass for "none").
#[derive(Debug, Clone, PartialEq)]
pub struct ExclusiveGroup {
    pub to: usize,
    pub members: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticTopologySpec {
    n: usize,
    d_bar: usize,
    edges: Vec<EdgeSpec>,
    groups: Vec<ExclusiveGroup>,
    noise_var: f64,
    noise_family: NoiseFamily,
    weight_family: WeightFamily,
    /// `edge_index[to * n + from]` is the position in `edges`.
    edge_index: Vec<Option<usize>>,
    /// Group each edge belongs to, if any.
    edge_group: Vec<Option<usize>>,
}

impl StochasticTopologySpec {
    /// Validates and indexes a topology. Every violation is reported, not only the first.
    ///
    /// An edge listed in a group must also be declared as an edge (for its
    /// weight and delay law) with the same appearance probability.
    pub fn new(
        n: usize,
        d_bar: usize,
        noise_var: f64,
        edges: Vec<EdgeSpec>,
        groups: Vec<ExclusiveGroup>,
    ) -> Result<Self> {
        let mut errors = Vec::new();
        if n == 0 {
            errors.push("topology needs at least one agent".to_string());
        }
        if !(noise_var >= 0.0 && noise_var.is_finite()) {
            errors.push(format!("noise variance {noise_var} must be a nonnegative real"));
        }
        let mut edge_index = vec![None; n * n];
        for (k, e) in edges.iter().enumerate() {
            let name = format!("edge {} {}", e.to + 1, e.from + 1);
            if e.to >= n || e.from >= n {
                errors.push(format!("{name}: node id outside 1..={n}"));
                continue;
            }
            if e.to == e.from {
                errors.push(format!("{name}: self-loop"));
            }
            if edge_index[e.to * n + e.from].replace(k).is_some() {
                errors.push(format!("{name}: declared twice"));
            }
            if !(e.appear_prob > 0.0 && e.appear_prob <= 1.0) {
                errors.push(format!("{name}: appearance probability {} outside (0, 1]", e.appear_prob));
            }
            if !(e.weight_mean >= 0.0 && e.weight_mean.is_finite()) {
                errors.push(format!("{name}: weight mean {} must be a nonnegative real", e.weight_mean));
            }
            if !(e.weight_var >= 0.0 && e.weight_var.is_finite()) {
                errors.push(format!("{name}: weight variance {} must be a nonnegative real", e.weight_var));
            }
            if e.weight_mean == 0.0 && e.weight_var > 0.0 {
                errors.push(format!("{name}: positive weight variance needs a positive mean"));
            }
            if e.delay_pmf.len() != d_bar + 1 {
                errors.push(format!(
                    "{name}: delay pmf has {} entries, expected d_bar + 1 = {}",
                    e.delay_pmf.len(),
                    d_bar + 1
                ));
            }
            if e.delay_pmf.iter().any(|p| !(0.0..=1.0).contains(p)) {
                errors.push(format!("{name}: delay probabilities must lie in [0, 1]"));
            }
            let total: f64 = e.delay_pmf.iter().sum();
            if (total - 1.0).abs() > PMF_TOL {
                errors.push(format!("{name}: delay pmf sums to {total}, not 1"));
            }
        }
        let mut edge_group = vec![None; edges.len()];
        for (g, group) in groups.iter().enumerate() {
            let name = format!("group {}", group.to + 1);
            if group.to >= n {
                errors.push(format!("{name}: node id outside 1..={n}"));
                continue;
            }
            if group.members.len() < 2 {
                errors.push(format!("{name}: needs at least two members"));
            }
            let total: f64 = group.members.iter().map(|(_, p)| p).sum();
            if total > 1.0 + PMF_TOL || group.members.iter().any(|(_, p)| !(*p > 0.0 && *p <= 1.0)) {
                errors.push(format!("{name}: member probabilities must be in (0, 1] and sum to at most 1"));
            }
            for &(from, p) in &group.members {
                let Some(k) = (from < n).then(|| edge_index[group.to * n + from]).flatten() else {
                    errors.push(format!("{name}: member {} is not a declared edge", from + 1));
                    continue;
                };
                if edge_group[k].replace(g).is_some() {
                    errors.push(format!("{name}: edge {} {} is in two groups", group.to + 1, from + 1));
                }
                if (edges[k].appear_prob - p).abs() > PMF_TOL {
                    errors.push(format!(
                        "{name}: member {} has probability {p} but its edge line says {}",
                        from + 1,
                        edges[k].appear_prob
                    ));
                }
            }
        }
        if !errors.is_empty() {
            return Err(Error::Config(errors));
        }
        Ok(Self {
            n,
            d_bar,
            edges,
            groups,
            noise_var,
            noise_family: NoiseFamily::default(),
            weight_family: WeightFamily::default(),
            edge_index,
            edge_group,
        })
    }

    /// Deterministic graph with unit appearance, no delay and no noise.
    pub fn deterministic(g: &WeightedDigraph) -> Self {
        let n = g.n();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if g.weight(i, j) > 0.0 {
                    edges.push(EdgeSpec::fixed(i, j, g.weight(i, j)));
                }
            }
        }
        Self::new(n, 0, 0.0, edges, Vec::new()).expect("valid graph gives a valid topology")
    }

    pub fn with_noise_family(mut self, family: NoiseFamily) -> Self {
        self.noise_family = family;
        self
    }

    pub fn with_weight_family(mut self, family: WeightFamily) -> Self {
        self.weight_family = family;
        self
    }

    pub fn with_noise_var(mut self, noise_var: f64) -> Result<Self> {
        if !(noise_var >= 0.0 && noise_var.is_finite()) {
            return Err(Error::InvalidTopology(format!("noise variance {noise_var}")));
        }
        self.noise_var = noise_var;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn d_bar(&self) -> usize {
        self.d_bar
    }
    pub fn edges(&self) -> &[EdgeSpec] {
        &self.edges
    }
    pub fn groups(&self) -> &[ExclusiveGroup] {
        &self.groups
    }
    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }
    pub fn noise_family(&self) -> NoiseFamily {
        self.noise_family
    }
    pub fn weight_family(&self) -> WeightFamily {
        self.weight_family
    }

    pub fn edge(&self, to: usize, from: usize) -> Option<&EdgeSpec> {
        self.edge_index[to * self.n + from].map(|k| &self.edges[k])
    }

    /// `b_bar = max_i sum_j ((b^{i,j})^2 + sigma_b^{i,j})` over declared edges.
    pub fn b_bar(&self) -> f64 {
        let mut rows = vec![0.0; self.n];
        for e in &self.edges {
            rows[e.to] += e.weight_mean * e.weight_mean + e.weight_var;
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    /// The maximal link set as a unit-weight digraph.
    pub fn support(&self) -> WeightedDigraph {
        WeightedDigraph::from_edges(self.n, self.edges.iter().map(|e| (e.to, e.from, 1.0))).expect("validated edges")
    }

    fn sample_weight<R: Rng>(&self, e: &EdgeSpec, rng: &mut R) -> f64 {
        if e.weight_var == 0.0 {
            return e.weight_mean;
        }
        match self.weight_family {
            WeightFamily::Gamma => {
                let shape = e.weight_mean * e.weight_mean / e.weight_var;
                let scale = e.weight_var / e.weight_mean;
                Gamma::new(shape, scale).expect("positive parameters").sample(rng)
            }
            WeightFamily::TruncatedNormal => {
                let normal = Normal::new(e.weight_mean, e.weight_var.sqrt()).expect("finite parameters");
                loop {
                    let w = normal.sample(rng);
                    if w >= 0.0 {
                        return w;
                    }
                }
            }
        }
    }

    /// Realise the topology at step `t`.
    pub fn sample(&self, seed: u64, t: u64) -> TopologyDraw {
        let n = self.n;
        let mut chosen = vec![false; self.edges.len()];
        for (k, e) in self.edges.iter().enumerate() {
            if self.edge_group[k].is_none() {
                let id = (e.to * n + e.from) as u64;
                let u: f64 = stream(seed, t, StreamKind::EdgeAppear, id).random();
                chosen[k] = u < e.appear_prob;
            }
        }
        for (g, group) in self.groups.iter().enumerate() {
            let mut u: f64 = stream(seed, t, StreamKind::Group, g as u64).random();
            for &(from, p) in &group.members {
                if u < p {
                    chosen[self.edge_index[group.to * n + from].expect("validated")] = true;
                    break;
                }
                u -= p;
            }
        }
        let mut edges: Vec<ActiveEdge> = Vec::new();
        for (k, e) in self.edges.iter().enumerate() {
            if !chosen[k] {
                continue;
            }
            let id = (e.to * n + e.from) as u64;
            let weight = self.sample_weight(e, &mut stream(seed, t, StreamKind::EdgeWeight, id));
            let delay = if self.d_bar == 0 {
                0
            } else {
                let mut u: f64 = stream(seed, t, StreamKind::EdgeDelay, id).random();
                let mut d = self.d_bar;
                for (k, p) in e.delay_pmf.iter().enumerate() {
                    if u < *p {
                        d = k;
                        break;
                    }
                    u -= p;
                }
                // guard the pmf tail against rounding
                while e.delay_pmf[d] == 0.0 && d > 0 {
                    d -= 1;
                }
                d
            };
            let noise = self.noise_family.sample(self.noise_var, &mut stream(seed, t, StreamKind::EdgeNoise, id));
            edges.push(ActiveEdge { to: e.to, from: e.from, weight, delay, noise });
        }
        edges.sort_by_key(|e| (e.to, e.from));
        let self_noise = self_noises(n, self.noise_var, self.noise_family, seed, t);
        TopologyDraw { t, edges, self_noise }
    }
}

fn self_noises(n: usize, var: f64, family: NoiseFamily, seed: u64, t: u64) -> Vec<f64> {
    (0..n).map(|i| family.sample(var, &mut stream(seed, t, StreamKind::SelfNoise, i as u64))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveEdge {
    pub to: usize,
    pub from: usize,
    pub weight: f64,
    pub delay: usize,
    /// Noise `w^{to,from}` on the measurement of `from` made by `to`.
    pub noise: f64,
}

/// One realisation of the random topology. Edges are sorted by `(to, from)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyDraw {
    pub t: u64,
    pub edges: Vec<ActiveEdge>,
    /// Noise `w^{i,i}` on each agent's reading of its own state.
    pub self_noise: Vec<f64>,
}

/// Ring of `n` agents plus `extra_links` uniformly random shortcut pairs
/// redrawn every step. All links are bidirectional with unit weight and no delay.
#[derive(Debug, Clone, PartialEq)]
pub struct RingTopology {
    pub n: usize,
    pub extra_links: usize,
    pub noise_var: f64,
    pub noise_family: NoiseFamily,
}

impl RingTopology {
    pub fn new(n: usize, extra_links: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidTopology(format!("ring needs at least 3 agents, got {n}")));
        }
        Ok(Self { n, extra_links, noise_var: 0.0, noise_family: NoiseFamily::Gaussian })
    }

    pub fn sample(&self, seed: u64, t: u64) -> TopologyDraw {
        let n = self.n;
        let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(2 * (n + self.extra_links));
        for i in 0..n {
            let next = (i + 1) % n;
            pairs.push((i, next));
            pairs.push((next, i));
        }
        let mut rng = stream(seed, t, StreamKind::RingLinks, 0);
        for _ in 0..self.extra_links {
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            pairs.push((a, b));
            pairs.push((b, a));
        }
        pairs.sort_unstable();
        pairs.dedup();
        let edges = pairs
            .into_iter()
            .map(|(to, from)| ActiveEdge {
                to,
                from,
                weight: 1.0,
                delay: 0,
                noise: self
                    .noise_family
                    .sample(self.noise_var, &mut stream(seed, t, StreamKind::EdgeNoise, (to * n + from) as u64)),
            })
            .collect();
        TopologyDraw { t, edges, self_noise: self_noises(n, self.noise_var, self.noise_family, seed, t) }
    }
}

/// Anything a simulation can draw its per-step network from.
#[derive(Debug, Clone, PartialEq)]
pub enum Topology {
    Stochastic(StochasticTopologySpec),
    Ring(RingTopology),
}

impl Topology {
    pub fn n(&self) -> usize {
        match self {
            Topology::Stochastic(s) => s.n(),
            Topology::Ring(r) => r.n,
        }
    }

    pub fn d_bar(&self) -> usize {
        match self {
            Topology::Stochastic(s) => s.d_bar(),
            Topology::Ring(_) => 0,
        }
    }

    pub fn sample(&self, seed: u64, t: u64) -> TopologyDraw {
        match self {
            Topology::Stochastic(s) => s.sample(seed, t),
            Topology::Ring(r) => r.sample(seed, t),
        }
    }

    pub fn as_stochastic(&self) -> Option<&StochasticTopologySpec> {
        match self {
            Topology::Stochastic(s) => Some(s),
            Topology::Ring(_) => None,
        }
    }
}

/// Averaged topology over the extended state with `d_bar` delayed copies.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedTopology {
    pub n: usize,
    pub d_bar: usize,
    /// `n_bar x n_bar`; only the first `n` rows are nonzero.
    pub a_max: DMatrix<f64>,
    pub laplacian_max: DMatrix<f64>,
    /// Block shift of the extended state.
    pub shift: DMatrix<f64>,
    /// Declared links as `(to, from)`.
    pub e_max: Vec<(usize, usize)>,
}

/// `a_max(i, j + k n) = p_appear * p_k * b` for every declared link `j -> i`.
pub fn build_a_max(spec: &StochasticTopologySpec) -> AveragedTopology {
    let n = spec.n();
    let d_bar = spec.d_bar();
    let n_bar = n * (d_bar + 1);
    let mut a_max = DMatrix::zeros(n_bar, n_bar);
    for e in spec.edges() {
        for (k, p_k) in e.delay_pmf.iter().enumerate() {
            a_max[(e.to, e.from + k * n)] = e.appear_prob * p_k * e.weight_mean;
        }
    }
    AveragedTopology {
        n,
        d_bar,
        laplacian_max: linalg::laplacian_of(&a_max),
        shift: shift_matrix(n, d_bar),
        e_max: spec.edges().iter().map(|e| (e.to, e.from)).collect(),
        a_max,
    }
}

/// Identity on the first block row and the block subdiagonal.
pub fn shift_matrix(n: usize, d_bar: usize) -> DMatrix<f64> {
    let n_bar = n * (d_bar + 1);
    let mut u = DMatrix::zeros(n_bar, n_bar);
    for i in 0..n {
        u[(i, i)] = 1.0;
        for k in 1..=d_bar {
            u[(k * n + i, (k - 1) * n + i)] = 1.0;
        }
    }
    u
}

impl AveragedTopology {
    pub fn n_bar(&self) -> usize {
        self.a_max.nrows()
    }

    /// Largest weighted in-degree of `a_max`.
    pub fn d_max(&self) -> f64 {
        (0..self.n).map(|i| self.a_max.row(i).iter().sum::<f64>()).fold(0.0, f64::max)
    }

    /// `n x n` adjacency with the delay blocks summed: `sum_k a_max(i, j + k n)`.
    pub fn collapsed(&self) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |i, j| (0..=self.d_bar).map(|k| self.a_max[(i, j + k * n)]).sum())
    }

    /// The maximal link set has a spanning tree and every link carries some
    /// averaged weight in at least one delay slot.
    pub fn check_link_support(&self) -> bool {
        let n = self.n;
        let support = DMatrix::from_fn(n, n, |i, j| if self.e_max.contains(&(i, j)) { 1.0 } else { 0.0 });
        let tree = linalg::spanning_tree_root(&support).is_some();
        tree && self.e_max.iter().all(|&(i, j)| (0..=self.d_bar).any(|k| self.a_max[(i, j + k * n)] != 0.0))
    }
}
