//! Finite-length Monte Carlo of the peeling decoder over the erasure channel.
//!
//! Each trial draws a fresh graph from the ensemble, an erasure pattern and a
//! random peeling order. Trials run on their own counter-keyed random
//! streams and are merged through integer counters, so results do not depend
//! on the number of threads.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::density_evolution::critical_data;
use crate::ensembles::{EnsembleSpec, GraphSampler, TannerGraph};
use crate::error::{Error, Result};
use crate::rng::trial_rng;

/// Default fraction of `ν* n` separating large from small failures.
pub const DEFAULT_GAMMA: f64 = 0.1;
/// Below this many surviving trials a checkpoint estimate is flagged.
pub const MIN_RELIABLE_TRIALS: usize = 100;
/// Largest blocklength for which every peel step re-derives the counters
/// in debug builds.
const DEBUG_CHECK_MAX_N: usize = 256;
const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Channel {
    /// Memoryless erasure channel with erasure probability `ε`.
    Rand(f64),
    /// Exactly `E` erasures placed uniformly.
    Exact(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub enum ChannelKind {
    #[default]
    Rand,
    /// `E = round(nε)` erasures.
    Exact,
}

impl ChannelKind {
    pub fn channel(self, n: usize, eps: f64) -> Channel {
        match self {
            ChannelKind::Rand => Channel::Rand(eps),
            ChannelKind::Exact => Channel::Exact((n as f64 * eps).round() as usize),
        }
    }
}

/// Writes the erased positions into `out` in increasing order.
pub fn erase_into<R: Rng + ?Sized>(n: usize, channel: Channel, rng: &mut R, out: &mut Vec<u32>) -> Result<()> {
    out.clear();
    match channel {
        Channel::Rand(eps) => {
            if !(0.0..=1.0).contains(&eps) {
                return Err(Error::InvalidArgument(format!("erasure probability {eps} outside [0, 1]")));
            }
            out.extend((0..n as u32).filter(|_| rng.random::<f64>() < eps));
        }
        Channel::Exact(e) => {
            if e > n {
                return Err(Error::InvalidArgument(format!("{e} erasures requested for n = {n}")));
            }
            out.extend(rand::seq::index::sample(rng, n, e).into_iter().map(|i| i as u32));
            out.sort_unstable();
        }
    }
    Ok(())
}

pub fn erase<R: Rng + ?Sized>(n: usize, channel: Channel, rng: &mut R) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    erase_into(n, channel, rng, &mut out)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PeelOutcome {
    Success,
    /// No degree-one check left with `residual` variables still erased.
    Stuck { residual: usize },
}

impl PeelOutcome {
    pub fn residual(self) -> usize {
        match self {
            PeelOutcome::Success => 0,
            PeelOutcome::Stuck { residual } => residual,
        }
    }
}

/// Residual decoding state `(v, s, t)`: erased variables, degree-one checks,
/// checks of degree at least two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub v: usize,
    pub s: usize,
    pub t: usize,
}

/// Reusable peeling workspace. Each check stores its residual degree and the
/// XOR of its residual neighbours, so the variable behind a degree-one check
/// is read off directly.
#[derive(Debug, Default, Clone)]
pub struct Peeler {
    degree: Vec<u32>,
    xor: Vec<u32>,
    pool: Vec<u32>,
    pos: Vec<u32>,
    alive: Vec<bool>,
    v: usize,
    t: usize,
}

impl Peeler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn counters(&self) -> Counters {
        Counters { v: self.v, s: self.pool.len(), t: self.t }
    }

    /// Variables still erased after the last call to [`Peeler::peel`].
    pub fn residual_vars(&self) -> Vec<u32> {
        (0..self.alive.len() as u32).filter(|&v| self.alive[v as usize]).collect()
    }

    fn load(&mut self, g: &TannerGraph, erased: &[u32]) {
        let m = g.num_checks();
        self.degree.clear();
        self.degree.resize(m, 0);
        self.xor.clear();
        self.xor.resize(m, 0);
        self.pos.clear();
        self.pos.resize(m, NONE);
        self.pool.clear();
        self.alive.clear();
        self.alive.resize(g.num_vars(), false);
        for &v in erased {
            debug_assert!((v as usize) < g.num_vars());
            self.alive[v as usize] = true;
            for &c in g.var_neighbors(v as usize) {
                self.degree[c as usize] += 1;
                self.xor[c as usize] ^= v;
            }
        }
        self.t = 0;
        for c in 0..m {
            match self.degree[c] {
                0 => {}
                1 => self.push(c as u32),
                _ => self.t += 1,
            }
        }
        self.v = erased.len();
    }

    fn push(&mut self, c: u32) {
        self.pos[c as usize] = self.pool.len() as u32;
        self.pool.push(c);
    }

    fn remove_at(&mut self, k: usize) -> u32 {
        let c = self.pool.swap_remove(k);
        self.pos[c as usize] = NONE;
        if k < self.pool.len() {
            self.pos[self.pool[k] as usize] = k as u32;
        }
        c
    }

    /// Runs the decoder to completion. `observe` sees the counters before
    /// every step and once more at the end.
    pub fn peel_observed<R, F>(&mut self, g: &TannerGraph, erased: &[u32], rng: &mut R, mut observe: F) -> PeelOutcome
    where
        R: Rng + ?Sized,
        F: FnMut(Counters),
    {
        self.load(g, erased);
        let check = cfg!(debug_assertions) && g.num_vars() <= DEBUG_CHECK_MAX_N;
        loop {
            if check {
                self.assert_consistent(g);
            }
            observe(self.counters());
            if self.v == 0 || self.pool.is_empty() {
                break;
            }
            let k = rng.random_range(0..self.pool.len());
            let c = self.remove_at(k);
            let var = self.xor[c as usize];
            self.alive[var as usize] = false;
            self.v -= 1;
            for &d in g.var_neighbors(var as usize) {
                let d = d as usize;
                let old = self.degree[d];
                self.degree[d] = old - 1;
                self.xor[d] ^= var;
                match old {
                    1 => {
                        if self.pos[d] != NONE {
                            self.remove_at(self.pos[d] as usize);
                        }
                    }
                    2 => {
                        self.t -= 1;
                        self.push(d as u32);
                    }
                    _ => {}
                }
            }
        }
        if self.v == 0 {
            PeelOutcome::Success
        } else {
            PeelOutcome::Stuck { residual: self.v }
        }
    }

    pub fn peel<R: Rng + ?Sized>(&mut self, g: &TannerGraph, erased: &[u32], rng: &mut R) -> PeelOutcome {
        self.peel_observed(g, erased, rng, |_| {})
    }

    fn assert_consistent(&self, g: &TannerGraph) {
        let mut deg = vec![0u32; g.num_checks()];
        for v in 0..g.num_vars() {
            if self.alive[v] {
                for &c in g.var_neighbors(v) {
                    deg[c as usize] += 1;
                }
            }
        }
        assert_eq!(deg, self.degree, "residual degrees out of sync");
        let s = deg.iter().filter(|&&d| d == 1).count();
        let t = deg.iter().filter(|&&d| d >= 2).count();
        let v = self.alive.iter().filter(|&&a| a).count();
        assert_eq!(Counters { v, s, t }, self.counters(), "counters out of sync");
    }
}

/// Runs the decoder once with a fresh workspace.
pub fn peel<R: Rng + ?Sized>(g: &TannerGraph, erased: &[u32], rng: &mut R) -> PeelOutcome {
    Peeler::new().peel(g, erased, rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub gamma: f64,
    pub channel: ChannelKind,
    pub seed: u64,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions { gamma: DEFAULT_GAMMA, channel: ChannelKind::Rand, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Tally {
    failures: u64,
    large: u64,
    bits: u64,
    bits_sq: u128,
}

impl Tally {
    fn merge(self, o: Tally) -> Tally {
        Tally {
            failures: self.failures + o.failures,
            large: self.large + o.large,
            bits: self.bits + o.bits,
            bits_sq: self.bits_sq + o.bits_sq,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McRow {
    pub eps: f64,
    pub trials: u64,
    pub failures: u64,
    /// Failures with residual at least the large-failure threshold.
    pub large_failures: u64,
    /// Sum of residual sizes over all trials.
    pub residual_bits: u64,
    pub residual_bits_sq: u128,
    pub n: usize,
}

fn binomial_se(p: f64, trials: u64) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

impl McRow {
    pub fn p_block(&self) -> f64 {
        self.failures as f64 / self.trials as f64
    }

    pub fn p_block_se(&self) -> f64 {
        binomial_se(self.p_block(), self.trials)
    }

    pub fn p_block_gamma(&self) -> f64 {
        self.large_failures as f64 / self.trials as f64
    }

    pub fn p_block_gamma_se(&self) -> f64 {
        binomial_se(self.p_block_gamma(), self.trials)
    }

    /// Mean residual fraction.
    pub fn p_bit(&self) -> f64 {
        self.residual_bits as f64 / (self.trials as f64 * self.n as f64)
    }

    /// Standard error of the mean residual fraction, from its sample
    /// variance (the residual fraction is not a Bernoulli variable).
    pub fn p_bit_se(&self) -> f64 {
        let k = self.trials as f64;
        if k < 2.0 {
            return f64::NAN;
        }
        let n = self.n as f64;
        let mean = self.residual_bits as f64 / k;
        let var = (self.residual_bits_sq as f64 - k * mean * mean) / (k - 1.0);
        (var.max(0.0) / k).sqrt() / n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McCurve {
    pub rows: Vec<McRow>,
    pub gamma: f64,
    /// Residual size from which a failure counts as large; `None` when the
    /// ensemble is marginally stable and every failure counts.
    pub large_threshold: Option<usize>,
    pub channel: ChannelKind,
    pub warnings: Vec<String>,
}

/// `⌈γ ν* n⌉`, or `None` for marginally stable ensembles.
pub fn large_failure_threshold(spec: &EnsembleSpec, gamma: f64) -> Result<Option<usize>> {
    match critical_data(spec) {
        Ok(cd) => Ok(Some((gamma * cd.nu_star * spec.n as f64).ceil() as usize)),
        Err(Error::MarginallyStable) => Ok(None),
        Err(e) => Err(e),
    }
}

struct Workspace {
    graph: TannerGraph,
    erased: Vec<u32>,
    peeler: Peeler,
}

impl Workspace {
    fn new() -> Self {
        Workspace { graph: TannerGraph::default(), erased: Vec::new(), peeler: Peeler::new() }
    }
}

fn draw_graph<R: Rng + ?Sized>(sampler: &GraphSampler, expurgate: bool, rng: &mut R, g: &mut TannerGraph) -> Result<()> {
    if expurgate {
        sampler.sample_expurgated_into(rng, g).map(|_| ())
    } else {
        sampler.sample_into(rng, g);
        Ok(())
    }
}

/// Block and bit erasure estimates on a grid of channel parameters.
pub fn mc_curve(spec: &EnsembleSpec, eps_grid: &[f64], trials: u64, opts: &McOptions) -> Result<McCurve> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    if !(opts.gamma > 0.0 && opts.gamma < 1.0) {
        return Err(Error::InvalidArgument(format!("gamma {} outside (0, 1)", opts.gamma)));
    }
    let sampler = GraphSampler::new(spec)?;
    let mut warnings = Vec::new();
    let expurgate = spec.s > 0 && sampler.expurgation_supported();
    if spec.s > 0 && !expurgate {
        warnings.push(format!(
            "expurgation s = {} is beyond the exact search budget at n = {}; sampling unexpurgated graphs",
            spec.s, spec.n
        ));
    }
    let threshold = large_failure_threshold(spec, opts.gamma)?;
    let n = spec.n;
    let mut rows = Vec::with_capacity(eps_grid.len());
    for (lane, &eps) in eps_grid.iter().enumerate() {
        let channel = opts.channel.channel(n, eps);
        let tally = (0..trials)
            .into_par_iter()
            .map_init(Workspace::new, |ws, trial| -> Result<Tally> {
                let mut rng = trial_rng(opts.seed, lane as u64, trial);
                draw_graph(&sampler, expurgate, &mut rng, &mut ws.graph)?;
                erase_into(n, channel, &mut rng, &mut ws.erased)?;
                let residual = ws.peeler.peel(&ws.graph, &ws.erased, &mut rng).residual();
                let fail = residual > 0;
                let large = fail && threshold.is_none_or(|th| residual >= th);
                Ok(Tally {
                    failures: fail as u64,
                    large: large as u64,
                    bits: residual as u64,
                    bits_sq: (residual as u128) * (residual as u128),
                })
            })
            .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))?;
        rows.push(McRow {
            eps,
            trials,
            failures: tally.failures,
            large_failures: tally.large,
            residual_bits: tally.bits,
            residual_bits_sq: tally.bits_sq,
            n,
        });
    }
    Ok(McCurve { rows, gamma: opts.gamma, large_threshold: threshold, channel: opts.channel, warnings })
}

/// Empirical moments of `(s, t)` at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointStats {
    pub v: usize,
    /// `v / n`.
    pub nu: f64,
    pub survivors: usize,
    pub reliable: bool,
    /// Means of `s/n` and `t/n`.
    pub mean: [f64; 2],
    pub mean_se: [f64; 2],
    /// `n` times the covariance of `(s/n, t/n)`, in the order `ss, st, tt`.
    pub cov: [f64; 3],
    pub cov_se: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryStats {
    pub eps: f64,
    pub erasures: usize,
    pub trials: u64,
    pub checkpoints: Vec<CheckpointStats>,
}

fn moments(samples: &[(u32, u32)], v: usize, n: usize) -> CheckpointStats {
    let k = samples.len();
    let nf = n as f64;
    let nu = v as f64 / nf;
    if k < 2 {
        return CheckpointStats {
            v,
            nu,
            survivors: k,
            reliable: false,
            mean: [f64::NAN; 2],
            mean_se: [f64::NAN; 2],
            cov: [f64::NAN; 3],
            cov_se: [f64::NAN; 3],
        };
    }
    let kf = k as f64;
    let ms = samples.iter().map(|p| p.0 as f64).sum::<f64>() / kf;
    let mt = samples.iter().map(|p| p.1 as f64).sum::<f64>() / kf;
    let (mut css, mut cst, mut ctt) = (0.0, 0.0, 0.0);
    let (mut m4ss, mut m4st, mut m4tt) = (0.0, 0.0, 0.0);
    for &(s, t) in samples {
        let ds = s as f64 - ms;
        let dt = t as f64 - mt;
        css += ds * ds;
        cst += ds * dt;
        ctt += dt * dt;
        m4ss += ds.powi(4);
        m4st += ds * ds * dt * dt;
        m4tt += dt.powi(4);
    }
    let (vs, vst, vt) = (css / (kf - 1.0), cst / (kf - 1.0), ctt / (kf - 1.0));
    let (m4ss, m4st, m4tt) = (m4ss / kf, m4st / kf, m4tt / kf);
    // Var of a sample covariance ≈ (μ22 − c²)/k
    let se = |m4: f64, c: f64| ((m4 - c * c).max(0.0) / kf).sqrt() / nf;
    CheckpointStats {
        v,
        nu,
        survivors: k,
        reliable: k >= MIN_RELIABLE_TRIALS,
        mean: [ms / nf, mt / nf],
        mean_se: [(vs / kf).sqrt() / nf, (vt / kf).sqrt() / nf],
        cov: [vs / nf, vst / nf, vt / nf],
        cov_se: [se(m4ss, vs), se(m4st, vst), se(m4tt, vt)],
    }
}

/// Moments of the decoder state at the given residual sizes under the
/// exact-erasure channel with `round(nε)` erasures. A trial contributes to a
/// checkpoint only if the decoder is still running when `v` reaches it.
pub fn trajectory_stats(spec: &EnsembleSpec, eps: f64, trials: u64, checkpoints: &[usize], seed: u64) -> Result<TrajectoryStats> {
    if checkpoints.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("checkpoints must be strictly decreasing".into()));
    }
    let n = spec.n;
    let erasures = (n as f64 * eps).round() as usize;
    if checkpoints.first().is_some_and(|&c| c > erasures) {
        return Err(Error::InvalidArgument(format!("checkpoint above the {erasures} initial erasures")));
    }
    let sampler = GraphSampler::new(spec)?;
    let channel = Channel::Exact(erasures);
    // Per trial, the state at each checkpoint reached (NONE when not reached).
    let per_trial: Vec<Vec<(u32, u32)>> = (0..trials)
        .into_par_iter()
        .map_init(Workspace::new, |ws, trial| -> Result<Vec<(u32, u32)>> {
            let mut rng = trial_rng(seed, u64::MAX, trial);
            sampler.sample_into(&mut rng, &mut ws.graph);
            erase_into(n, channel, &mut rng, &mut ws.erased)?;
            let mut hits = vec![(NONE, NONE); checkpoints.len()];
            let mut next = 0;
            ws.peeler.peel_observed(&ws.graph, &ws.erased, &mut rng, |c| {
                if next < checkpoints.len() && c.v == checkpoints[next] {
                    hits[next] = (c.s as u32, c.t as u32);
                    next += 1;
                }
            });
            Ok(hits)
        })
        .collect::<Result<_>>()?;
    let stats = checkpoints
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let samples: Vec<(u32, u32)> =
                per_trial.iter().map(|h| h[i]).filter(|p| p.0 != NONE).collect();
            moments(&samples, v, n)
        })
        .collect();
    Ok(TrajectoryStats { eps, erasures, trials, checkpoints: stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::min_stopping_set_leq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn erasure_sets() {
        let mut r = rng(1);
        assert!(erase(20, Channel::Exact(0), &mut r).unwrap().is_empty());
        assert_eq!(erase(20, Channel::Exact(20), &mut r).unwrap(), (0..20).collect::<Vec<u32>>());
        let e = erase(7, Channel::Exact(4), &mut r).unwrap();
        assert_eq!(e.len(), 4);
        assert!(e.windows(2).all(|w| w[0] < w[1]));
        let n = 100_000;
        let k = erase(n, Channel::Rand(0.5), &mut r).unwrap().len() as f64;
        assert!((k - n as f64 / 2.0).abs() < 4.0 * (n as f64 / 4.0).sqrt());
        assert!(erase(5, Channel::Exact(6), &mut r).is_err());
    }

    #[test]
    fn empty_erasure_succeeds() {
        let g = TannerGraph::from_adjacency(2, &[vec![0, 1], vec![0, 1]]).unwrap();
        assert_eq!(peel(&g, &[], &mut rng(0)), PeelOutcome::Success);
    }

    #[test]
    fn cycle_gets_stuck_at_its_length() {
        // variables as edges of a 4-cycle on checks 0..4, plus a pendant edge
        let adj = vec![vec![0, 1], vec![1, 2], vec![2, 3], vec![3, 0], vec![3, 4]];
        let g = TannerGraph::from_adjacency(5, &adj).unwrap();
        let out = peel(&g, &[0, 1, 2, 3, 4], &mut rng(0));
        assert_eq!(out, PeelOutcome::Stuck { residual: 4 });
        assert_eq!(peel(&g, &[0, 1, 2, 4], &mut rng(0)), PeelOutcome::Success);
    }

    /// Largest stopping set inside `erased`: the union of all stopping
    /// subsets, found by brute force.
    fn max_stopping_subset(g: &TannerGraph, erased: u32) -> u32 {
        let mut union = 0u32;
        let mut sub = erased;
        while sub != 0 {
            let mut deg = vec![0u32; g.num_checks()];
            for v in 0..g.num_vars() {
                if sub >> v & 1 == 1 {
                    for &c in g.var_neighbors(v) {
                        deg[c as usize] += 1;
                    }
                }
            }
            if deg.iter().all(|&d| d != 1) {
                union |= sub;
            }
            sub = (sub - 1) & erased;
        }
        union
    }

    fn exhaustive_check(g: &TannerGraph, seed: u64) {
        let n = g.num_vars();
        let mut peeler = Peeler::new();
        let mut r = rng(seed);
        for mask in 0u32..(1 << n) {
            let erased: Vec<u32> = (0..n as u32).filter(|v| mask >> v & 1 == 1).collect();
            let out = peeler.peel(g, &erased, &mut r);
            let stop = max_stopping_subset(g, mask);
            let residual = peeler.residual_vars().iter().fold(0u32, |acc, &v| acc | 1 << v);
            assert_eq!(residual, stop, "mask {mask:b}");
            assert_eq!(out.residual(), stop.count_ones() as usize);
        }
    }

    #[test]
    fn peeling_matches_stopping_set_oracle() {
        let specs = [
            EnsembleSpec::regular(3, 6, 12).unwrap(),
            EnsembleSpec::regular(3, 4, 12).unwrap(),
            EnsembleSpec::regular_poisson(2, 0.5, 12).unwrap(),
            EnsembleSpec::regular_poisson(3, 0.25, 10).unwrap(),
        ];
        for (i, spec) in specs.iter().enumerate() {
            let sampler = GraphSampler::new(spec).unwrap();
            for k in 0..3 {
                let g = sampler.sample(&mut rng(10 * i as u64 + k));
                exhaustive_check(&g, k);
            }
        }
    }

    #[test]
    fn cycle_code_failure_is_a_cycle() {
        // for degree-two variables, peeling fails iff the erased edges of the
        // check multigraph contain a cycle
        let spec = EnsembleSpec::regular_poisson(2, 0.5, 12).unwrap();
        let sampler = GraphSampler::new(&spec).unwrap();
        let mut r = rng(5);
        for _ in 0..20 {
            let g = sampler.sample(&mut r);
            for mask in 0u32..(1 << 12) {
                let erased: Vec<u32> = (0..12).filter(|v| mask >> v & 1 == 1).collect();
                let adj: Vec<Vec<u32>> = erased.iter().map(|&v| g.var_neighbors(v as usize).to_vec()).collect();
                let sub = TannerGraph::from_adjacency(g.num_checks(), &adj).unwrap();
                let has_cycle = !erased.is_empty() && min_stopping_set_leq(&sub, erased.len()).unwrap();
                let fail = peel(&g, &erased, &mut r) != PeelOutcome::Success;
                assert_eq!(fail, has_cycle);
            }
        }
    }

    #[test]
    fn deep_in_good_region_no_large_failures() {
        let spec = EnsembleSpec::regular(3, 6, 1024).unwrap();
        let opts = McOptions { seed: 3, ..Default::default() };
        let c = mc_curve(&spec, &[0.3], 10_000, &opts).unwrap();
        assert_eq!(c.rows[0].large_failures, 0);
        assert!(c.large_threshold.unwrap() > 0);
    }

    #[test]
    fn curve_is_deterministic_across_thread_counts() {
        let spec = EnsembleSpec::regular(3, 6, 256).unwrap();
        let opts = McOptions { seed: 11, ..Default::default() };
        let grid = [0.38, 0.42, 0.46];
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| mc_curve(&spec, &grid, 600, &opts).unwrap())
        };
        let a = run(1);
        assert_eq!(a, run(3));
        for r in &a.rows {
            assert!(r.large_failures <= r.failures && r.failures <= r.trials);
        }
        assert!(a.rows.windows(2).all(|w| w[0].p_block() <= w[1].p_block() + 4.0 * w[1].p_block_se()));
    }

    #[test]
    fn marginally_stable_counts_every_failure() {
        let spec = EnsembleSpec::regular_poisson(2, 0.5, 64).unwrap();
        let c = mc_curve(&spec, &[0.2], 2000, &McOptions::default()).unwrap();
        assert!(c.large_threshold.is_none());
        assert_eq!(c.rows[0].failures, c.rows[0].large_failures);
    }

    #[test]
    fn unsupported_expurgation_warns() {
        let spec = EnsembleSpec::regular(3, 6, 512).unwrap().with_expurgation(3);
        let c = mc_curve(&spec, &[0.3], 10, &McOptions::default()).unwrap();
        assert_eq!(c.warnings.len(), 1);
    }

    #[test]
    fn standard_errors() {
        let row = McRow { eps: 0.1, trials: 100, failures: 20, large_failures: 5, residual_bits: 40, residual_bits_sq: 200, n: 10 };
        assert!((row.p_block_se() - (0.2f64 * 0.8 / 100.0).sqrt()).abs() < 1e-15);
        assert!((row.p_bit() - 0.04).abs() < 1e-15);
        let var = (200.0 - 100.0 * 0.16) / 99.0;
        assert!((row.p_bit_se() - (var / 100.0f64).sqrt() / 10.0).abs() < 1e-15);
    }

    #[test]
    fn trajectory_start_matches_initial_moments() {
        use crate::covariance_evolution::{initial_moments, RegularModel};
        let spec = EnsembleSpec::regular(3, 6, 2048).unwrap();
        let eps = 0.42;
        let st = trajectory_stats(&spec, eps, 4000, &[(2048.0f64 * eps).round() as usize], 9).unwrap();
        let cp = &st.checkpoints[0];
        assert_eq!(cp.survivors, 4000);
        let init = initial_moments(&RegularModel::from_spec(&spec).unwrap(), st.erasures as f64 / 2048.0);
        assert!((cp.mean[0] - init.sigma).abs() < 4.0 * cp.mean_se[0] + 2.0 / 2048.0);
        assert!((cp.mean[1] - init.tau).abs() < 4.0 * cp.mean_se[1] + 2.0 / 2048.0);
        assert!((cp.cov[0] - init.d_ss()).abs() < 4.0 * cp.cov_se[0]);
        assert!((cp.cov[1] - init.d_st()).abs() < 4.0 * cp.cov_se[1]);
        assert!((cp.cov[2] - init.d_tt()).abs() < 4.0 * cp.cov_se[2]);
    }

    #[test]
    fn trajectory_rejects_bad_checkpoints() {
        let spec = EnsembleSpec::regular(3, 6, 64).unwrap();
        assert!(trajectory_stats(&spec, 0.4, 10, &[10, 20], 0).is_err());
        assert!(trajectory_stats(&spec, 0.4, 10, &[60], 0).is_err());
    }
}
