//! Degree distributions, ensemble descriptors and Tanner-graph sampling.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ipow;

/// Edge-perspective degree distribution: `coeff` of degree `d` is the
/// fraction of edges attached to nodes of degree `d`, i.e. the coefficient
/// of `x^(d-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeDistribution {
    terms: Vec<(u32, f64)>,
}

impl DegreeDistribution {
    /// Checks and rescales a raw coefficient list so that the coefficients
    /// sum to one. Repeated degrees are merged; zero terms are dropped.
    pub fn validate_and_normalize(raw: &[(u32, f64)]) -> Result<Self> {
        let mut merged: BTreeMap<u32, f64> = BTreeMap::new();
        for &(degree, coeff) in raw {
            if !coeff.is_finite() {
                return Err(Error::InvalidDistribution(format!(
                    "non-finite coefficient at degree {degree}"
                )));
            }
            if coeff < 0.0 {
                return Err(Error::NegativeCoefficient { degree, coeff });
            }
            if degree == 0 {
                return Err(Error::InvalidDistribution("degree 0 is not allowed".into()));
            }
            *merged.entry(degree).or_insert(0.0) += coeff;
        }
        let total: f64 = merged.values().sum();
        if total <= 0.0 {
            return Err(Error::InvalidDistribution("all coefficients are zero".into()));
        }
        let terms = merged
            .into_iter()
            .filter(|&(_, c)| c > 0.0)
            .map(|(d, c)| (d, c / total))
            .collect();
        Ok(DegreeDistribution { terms })
    }

    pub fn regular(degree: u32) -> Result<Self> {
        Self::validate_and_normalize(&[(degree, 1.0)])
    }

    pub fn terms(&self) -> &[(u32, f64)] {
        &self.terms
    }

    pub fn to_map(&self) -> BTreeMap<u32, f64> {
        self.terms.iter().copied().collect()
    }

    pub fn min_degree(&self) -> u32 {
        self.terms[0].0
    }

    pub fn max_degree(&self) -> u32 {
        self.terms[self.terms.len() - 1].0
    }

    /// The single degree of a regular distribution.
    pub fn regular_degree(&self) -> Option<u32> {
        (self.terms.len() == 1).then(|| self.terms[0].0)
    }

    /// `λ(x) = Σ λ_d x^(d-1)`.
    pub fn eval(&self, x: f64) -> f64 {
        self.terms.iter().map(|&(d, c)| c * ipow(x, d - 1)).sum()
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .filter(|&&(d, _)| d >= 2)
            .map(|&(d, c)| c * (d - 1) as f64 * ipow(x, d - 2))
            .sum()
    }

    /// `∫_0^1 λ(x) dx`; the reciprocal is the average node degree.
    pub fn integral(&self) -> f64 {
        self.terms.iter().map(|&(d, c)| c / d as f64).sum()
    }

    pub fn average_node_degree(&self) -> f64 {
        1.0 / self.integral()
    }

    /// Node-perspective fractions `Λ_d`, summing to one.
    pub fn node_fractions(&self) -> Vec<(u32, f64)> {
        let total = self.integral();
        self.terms.iter().map(|&(d, c)| (d, c / d as f64 / total)).collect()
    }

    /// Normalized node polynomial `Λ(x) = Σ Λ_d x^d`, with `Λ(1) = 1`.
    pub fn node_eval(&self, x: f64) -> f64 {
        let total = self.integral();
        self.terms.iter().map(|&(d, c)| c / d as f64 / total * ipow(x, d)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnsembleKind {
    /// Configuration-model ensemble with prescribed left and right degrees.
    Standard { lambda: DegreeDistribution, rho: DegreeDistribution },
    /// Left degrees prescribed; every left socket picks one of the
    /// `round(n (1 - rate))` checks uniformly and independently.
    Poisson { lambda: DegreeDistribution, rate: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub n: usize,
    /// Expurgation: graphs with a nonempty stopping set of size at most `s`
    /// are excluded.
    pub s: usize,
}

impl EnsembleSpec {
    pub fn standard(lambda: DegreeDistribution, rho: DegreeDistribution, n: usize, s: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidEnsemble("blocklength must be positive".into()));
        }
        let spec = EnsembleSpec { kind: EnsembleKind::Standard { lambda, rho }, n, s };
        SocketPlan::new(&spec)?;
        Ok(spec)
    }

    pub fn poisson(lambda: DegreeDistribution, rate: f64, n: usize, s: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidEnsemble(format!("Poisson rate {rate} outside [0, 1)")));
        }
        if n == 0 {
            return Err(Error::InvalidEnsemble("blocklength must be positive".into()));
        }
        let spec = EnsembleSpec { kind: EnsembleKind::Poisson { lambda, rate }, n, s };
        if spec.num_checks() == 0 {
            return Err(Error::InvalidEnsemble("ensemble has no check nodes".into()));
        }
        Ok(spec)
    }

    /// Regular standard ensemble with left degree `l` and right degree `r`.
    pub fn regular(l: u32, r: u32, n: usize) -> Result<Self> {
        Self::standard(DegreeDistribution::regular(l)?, DegreeDistribution::regular(r)?, n, 0)
    }

    /// Regular Poisson ensemble with left degree `l`.
    pub fn regular_poisson(l: u32, rate: f64, n: usize) -> Result<Self> {
        Self::poisson(DegreeDistribution::regular(l)?, rate, n, 0)
    }

    pub fn with_n(&self, n: usize) -> Result<Self> {
        let mut spec = self.clone();
        spec.n = n;
        match &spec.kind {
            EnsembleKind::Standard { .. } => {
                SocketPlan::new(&spec)?;
            }
            EnsembleKind::Poisson { .. } => {
                if n == 0 || spec.num_checks() == 0 {
                    return Err(Error::InvalidEnsemble("ensemble has no nodes".into()));
                }
            }
        }
        Ok(spec)
    }

    pub fn with_expurgation(&self, s: usize) -> Self {
        EnsembleSpec { s, ..self.clone() }
    }

    pub fn lambda(&self) -> &DegreeDistribution {
        match &self.kind {
            EnsembleKind::Standard { lambda, .. } | EnsembleKind::Poisson { lambda, .. } => lambda,
        }
    }

    pub fn is_poisson(&self) -> bool {
        matches!(self.kind, EnsembleKind::Poisson { .. })
    }

    /// Design rate `r` and `r̄ = 1 - r`.
    pub fn design_rate(&self) -> (f64, f64) {
        match &self.kind {
            EnsembleKind::Standard { lambda, rho } => {
                let rbar = rho.integral() / lambda.integral();
                (1.0 - rbar, rbar)
            }
            EnsembleKind::Poisson { rate, .. } => (*rate, 1.0 - rate),
        }
    }

    pub fn num_checks(&self) -> usize {
        let (_, rbar) = self.design_rate();
        (self.n as f64 * rbar).round() as usize
    }

    /// Mean of the Poisson check-degree law, `1 / (r̄ ∫λ)`.
    fn poisson_check_mean(&self) -> f64 {
        let (_, rbar) = self.design_rate();
        1.0 / (rbar * self.lambda().integral())
    }

    /// Edge-perspective right polynomial; `exp((x-1)/(r̄ ∫λ))` for Poisson.
    pub fn rho(&self, x: f64) -> f64 {
        match &self.kind {
            EnsembleKind::Standard { rho, .. } => rho.eval(x),
            EnsembleKind::Poisson { .. } => ((x - 1.0) * self.poisson_check_mean()).exp(),
        }
    }

    pub fn rho_derivative(&self, x: f64) -> f64 {
        match &self.kind {
            EnsembleKind::Standard { rho, .. } => rho.derivative(x),
            EnsembleKind::Poisson { .. } => {
                let mu = self.poisson_check_mean();
                mu * ((x - 1.0) * mu).exp()
            }
        }
    }

    /// Node-perspective check-degree law, indexed by degree, normalized to
    /// one. The Poisson law is truncated once the remaining mass is
    /// negligible.
    pub fn check_node_fractions(&self) -> Vec<f64> {
        match &self.kind {
            EnsembleKind::Standard { rho, .. } => {
                let mut out = vec![0.0; rho.max_degree() as usize + 1];
                for (d, f) in rho.node_fractions() {
                    out[d as usize] = f;
                }
                out
            }
            EnsembleKind::Poisson { .. } => poisson_pmf(self.poisson_check_mean(), 1e-17),
        }
    }

    /// True when every variable node has degree two.
    pub fn is_cycle_code(&self) -> bool {
        self.lambda().regular_degree() == Some(2)
    }

    /// `(l, Some(r))` for a regular standard ensemble, `(l, None)` for a
    /// regular Poisson ensemble.
    pub fn regular_degrees(&self) -> Option<(u32, Option<u32>)> {
        let l = self.lambda().regular_degree()?;
        match &self.kind {
            EnsembleKind::Standard { rho, .. } => Some((l, Some(rho.regular_degree()?))),
            EnsembleKind::Poisson { .. } => Some((l, None)),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: EnsembleConfig = serde_json::from_str(text)?;
        cfg.into_spec()
    }

    pub fn to_config(&self) -> EnsembleConfig {
        match &self.kind {
            EnsembleKind::Standard { lambda, rho } => EnsembleConfig {
                kind: KindTag::Standard,
                lambda: lambda.to_map(),
                rho: Some(rho.to_map()),
                rate: None,
                n: Some(self.n),
                s: self.s,
            },
            EnsembleKind::Poisson { lambda, rate } => EnsembleConfig {
                kind: KindTag::Poisson,
                lambda: lambda.to_map(),
                rho: None,
                rate: Some(*rate),
                n: Some(self.n),
                s: self.s,
            },
        }
    }
}

/// Poisson(mean) probabilities up to the point where the tail is below `eps`.
pub(crate) fn poisson_pmf(mean: f64, eps: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut p = (-mean).exp();
    let mut acc = 0.0;
    let mut k = 0usize;
    loop {
        out.push(p);
        acc += p;
        k += 1;
        if (k as f64 > mean && 1.0 - acc < eps) || k > 10_000 {
            break;
        }
        p *= mean / k as f64;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindTag {
    Standard,
    Poisson,
}

/// JSON form of an ensemble:
/// `{"kind": "standard" | "poisson", "lambda": {degree: coeff}, "rho": {...} | "rate": r, "n": int, "s": int}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub kind: KindTag,
    pub lambda: BTreeMap<u32, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<BTreeMap<u32, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub s: usize,
}

impl EnsembleConfig {
    pub fn into_spec(self) -> Result<EnsembleSpec> {
        let n = self
            .n
            .ok_or_else(|| Error::InvalidEnsemble("missing blocklength \"n\"".into()))?;
        let pairs = |m: &BTreeMap<u32, f64>| m.iter().map(|(&d, &c)| (d, c)).collect::<Vec<_>>();
        let lambda = DegreeDistribution::validate_and_normalize(&pairs(&self.lambda))?;
        match self.kind {
            KindTag::Standard => {
                let rho = self
                    .rho
                    .as_ref()
                    .ok_or_else(|| Error::InvalidEnsemble("standard ensemble needs \"rho\"".into()))?;
                let rho = DegreeDistribution::validate_and_normalize(&pairs(rho))?;
                EnsembleSpec::standard(lambda, rho, n, self.s)
            }
            KindTag::Poisson => {
                let rate = self
                    .rate
                    .ok_or_else(|| Error::InvalidEnsemble("Poisson ensemble needs \"rate\"".into()))?;
                EnsembleSpec::poisson(lambda, rate, n, self.s)
            }
        }
    }
}

/// Realized node degrees for a finite blocklength.
///
/// Node counts are rounded to integers; the largest-degree bucket then
/// absorbs the mismatch. On the right, a leftover that is not a multiple of
/// the largest degree becomes one check of smaller degree.
#[derive(Debug, Clone, PartialEq)]
pub struct SocketPlan {
    pub var_degrees: Vec<u32>,
    /// Empty for Poisson ensembles.
    pub check_degrees: Vec<u32>,
    pub num_checks: usize,
}

fn rounded_counts(total: usize, fractions: &[(u32, f64)]) -> Vec<(u32, i64)> {
    let mut counts: Vec<(u32, i64)> =
        fractions.iter().map(|&(d, f)| (d, (total as f64 * f).round() as i64)).collect();
    let diff = total as i64 - counts.iter().map(|c| c.1).sum::<i64>();
    if let Some(last) = counts.last_mut() {
        last.1 += diff;
    }
    counts
}

impl SocketPlan {
    pub fn new(spec: &EnsembleSpec) -> Result<Self> {
        let left = rounded_counts(spec.n, &spec.lambda().node_fractions());
        if left.iter().any(|c| c.1 < 0) {
            return Err(Error::InvalidEnsemble("left degree profile cannot be realized".into()));
        }
        let var_degrees: Vec<u32> = left
            .iter()
            .flat_map(|&(d, c)| std::iter::repeat_n(d, c as usize))
            .collect();
        let sockets: i64 = var_degrees.iter().map(|&d| d as i64).sum();

        match &spec.kind {
            EnsembleKind::Poisson { .. } => {
                Ok(SocketPlan { var_degrees, check_degrees: Vec::new(), num_checks: spec.num_checks() })
            }
            EnsembleKind::Standard { rho, .. } => {
                let m = spec.num_checks();
                let mut right = rounded_counts(m, &rho.node_fractions());
                let right_sockets: i64 = right.iter().map(|&(d, c)| d as i64 * c).sum();
                let diff = sockets - right_sockets;
                let (dmax, count) = right.last_mut().expect("nonempty distribution");
                let q = diff.div_euclid(*dmax as i64);
                let rem = diff.rem_euclid(*dmax as i64);
                *count += q;
                if *count < 0 {
                    return Err(Error::InvalidEnsemble(format!(
                        "socket counts cannot be balanced for n = {}",
                        spec.n
                    )));
                }
                let mut check_degrees: Vec<u32> = right
                    .iter()
                    .flat_map(|&(d, c)| std::iter::repeat_n(d, c as usize))
                    .collect();
                if rem > 0 {
                    check_degrees.push(rem as u32);
                }
                if check_degrees.is_empty() {
                    return Err(Error::InvalidEnsemble("ensemble has no check nodes".into()));
                }
                let num_checks = check_degrees.len();
                Ok(SocketPlan { var_degrees, check_degrees, num_checks })
            }
        }
    }

    pub fn num_edges(&self) -> usize {
        self.var_degrees.iter().map(|&d| d as usize).sum()
    }
}

/// Bipartite multigraph in compressed adjacency form.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TannerGraph {
    num_checks: usize,
    var_start: Vec<u32>,
    var_checks: Vec<u32>,
    check_start: Vec<u32>,
    check_vars: Vec<u32>,
}

impl TannerGraph {
    /// Builds a graph from per-variable check lists.
    pub fn from_adjacency(num_checks: usize, adjacency: &[Vec<u32>]) -> Result<Self> {
        let mut g = TannerGraph { num_checks, ..Default::default() };
        g.var_start.push(0);
        for checks in adjacency {
            for &c in checks {
                if c as usize >= num_checks {
                    return Err(Error::InvalidArgument(format!("check index {c} out of range")));
                }
                g.var_checks.push(c);
            }
            g.var_start.push(g.var_checks.len() as u32);
        }
        g.rebuild_check_side();
        Ok(g)
    }

    fn rebuild_check_side(&mut self) {
        let m = self.num_checks;
        self.check_start.clear();
        self.check_start.resize(m + 1, 0);
        for &c in &self.var_checks {
            self.check_start[c as usize + 1] += 1;
        }
        for c in 0..m {
            self.check_start[c + 1] += self.check_start[c];
        }
        self.check_vars.clear();
        self.check_vars.resize(self.var_checks.len(), 0);
        let mut fill: Vec<u32> = self.check_start[..m].to_vec();
        for v in 0..self.num_vars() {
            let (lo, hi) = (self.var_start[v] as usize, self.var_start[v + 1] as usize);
            for &c in &self.var_checks[lo..hi] {
                let slot = &mut fill[c as usize];
                self.check_vars[*slot as usize] = v as u32;
                *slot += 1;
            }
        }
    }

    pub fn num_vars(&self) -> usize {
        self.var_start.len().saturating_sub(1)
    }

    pub fn num_checks(&self) -> usize {
        self.num_checks
    }

    pub fn num_edges(&self) -> usize {
        self.var_checks.len()
    }

    /// Checks attached to variable `v`, with multiplicity.
    #[inline]
    pub fn var_neighbors(&self, v: usize) -> &[u32] {
        &self.var_checks[self.var_start[v] as usize..self.var_start[v + 1] as usize]
    }

    /// Variables attached to check `c`, with multiplicity.
    #[inline]
    pub fn check_neighbors(&self, c: usize) -> &[u32] {
        &self.check_vars[self.check_start[c] as usize..self.check_start[c + 1] as usize]
    }

    pub fn var_degree(&self, v: usize) -> usize {
        (self.var_start[v + 1] - self.var_start[v]) as usize
    }

    pub fn check_degree(&self, c: usize) -> usize {
        (self.check_start[c + 1] - self.check_start[c]) as usize
    }
}

/// Draws graphs from an ensemble; the socket plan is computed once.
#[derive(Debug, Clone)]
pub struct GraphSampler {
    spec: EnsembleSpec,
    plan: SocketPlan,
    var_start: Vec<u32>,
    check_sockets: Vec<u32>,
}

const MAX_REJECTIONS: usize = 1_000_000;

impl GraphSampler {
    pub fn new(spec: &EnsembleSpec) -> Result<Self> {
        let plan = SocketPlan::new(spec)?;
        let mut var_start = Vec::with_capacity(plan.var_degrees.len() + 1);
        var_start.push(0u32);
        let mut acc = 0u32;
        for &d in &plan.var_degrees {
            acc += d;
            var_start.push(acc);
        }
        let check_sockets = plan
            .check_degrees
            .iter()
            .enumerate()
            .flat_map(|(c, &d)| std::iter::repeat_n(c as u32, d as usize))
            .collect();
        Ok(GraphSampler { spec: spec.clone(), plan, var_start, check_sockets })
    }

    pub fn spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    pub fn plan(&self) -> &SocketPlan {
        &self.plan
    }

    /// Samples an unexpurgated graph into `g`, reusing its buffers.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, g: &mut TannerGraph) {
        g.num_checks = self.plan.num_checks;
        g.var_start.clear();
        g.var_start.extend_from_slice(&self.var_start);
        g.var_checks.clear();
        match self.spec.kind {
            EnsembleKind::Standard { .. } => {
                g.var_checks.extend_from_slice(&self.check_sockets);
                let sockets = &mut g.var_checks;
                for i in (1..sockets.len()).rev() {
                    let j = rng.random_range(0..=i);
                    sockets.swap(i, j);
                }
            }
            EnsembleKind::Poisson { .. } => {
                let m = self.plan.num_checks as u32;
                let e = self.plan.num_edges();
                g.var_checks.extend((0..e).map(|_| rng.random_range(0..m)));
            }
        }
        g.rebuild_check_side();
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TannerGraph {
        let mut g = TannerGraph::default();
        self.sample_into(rng, &mut g);
        g
    }

    /// True when expurgation at the spec's `s` can be enforced exactly.
    pub fn expurgation_supported(&self) -> bool {
        let s = self.spec.s;
        s == 0 || self.spec.is_cycle_code() || (s <= MAX_EXACT_S && self.spec.n <= MAX_EXACT_N)
    }

    /// Samples from the expurgated ensemble by rejection. Returns the number
    /// of rejected draws.
    pub fn sample_expurgated_into<R: Rng + ?Sized>(&self, rng: &mut R, g: &mut TannerGraph) -> Result<usize> {
        let s = self.spec.s;
        if s == 0 {
            self.sample_into(rng, g);
            return Ok(0);
        }
        if !self.expurgation_supported() {
            return Err(Error::Unsupported(format!(
                "exact expurgation with s = {s} at n = {} exceeds the search budget",
                self.spec.n
            )));
        }
        for attempt in 0..MAX_REJECTIONS {
            if self.spec.is_cycle_code() && self.spec.is_poisson() {
                // loops are per-variable events, so they can be rejected one
                // variable at a time
                self.sample_poisson_loop_free(rng, g);
                if s == 1 || !min_stopping_set_leq(g, s)? {
                    return Ok(attempt);
                }
            } else {
                self.sample_into(rng, g);
                if !min_stopping_set_leq(g, s)? {
                    return Ok(attempt);
                }
            }
        }
        Err(Error::Numerical(format!("expurgated sampling rejected {MAX_REJECTIONS} graphs")))
    }

    fn sample_poisson_loop_free<R: Rng + ?Sized>(&self, rng: &mut R, g: &mut TannerGraph) {
        let m = self.plan.num_checks as u32;
        g.num_checks = self.plan.num_checks;
        g.var_start.clear();
        g.var_start.extend_from_slice(&self.var_start);
        g.var_checks.clear();
        for _ in 0..self.plan.var_degrees.len() {
            let a = rng.random_range(0..m);
            let b = loop {
                let b = rng.random_range(0..m);
                if b != a || m == 1 {
                    break b;
                }
            };
            g.var_checks.push(a);
            g.var_checks.push(b);
        }
        g.rebuild_check_side();
    }
}

/// Samples one graph from `spec`, ignoring expurgation.
pub fn sample_graph<R: Rng + ?Sized>(spec: &EnsembleSpec, rng: &mut R) -> Result<TannerGraph> {
    Ok(GraphSampler::new(spec)?.sample(rng))
}

/// Largest `s` handled by exhaustive stopping-set search.
pub const MAX_EXACT_S: usize = 6;
/// Largest blocklength handled by exhaustive stopping-set search.
pub const MAX_EXACT_N: usize = 64;

/// Whether `g` has a nonempty stopping set with at most `s` variables.
///
/// Graphs in which every variable has degree two are decided for any size
/// through the girth of the check-node multigraph (each variable is an edge
/// there and stopping sets are exactly the edge sets containing a cycle).
/// Other graphs use a branching search, limited to `s <= 6` and at most 64
/// variables.
pub fn min_stopping_set_leq(g: &TannerGraph, s: usize) -> Result<bool> {
    if s == 0 || g.num_vars() == 0 {
        return Ok(false);
    }
    if (0..g.num_vars()).all(|v| g.var_degree(v) == 2) {
        return Ok(projected_girth_at_most(g, s));
    }
    if s > MAX_EXACT_S || g.num_vars() > MAX_EXACT_N {
        return Err(Error::Unsupported(format!(
            "stopping-set search limited to s <= {MAX_EXACT_S} and n <= {MAX_EXACT_N}"
        )));
    }
    let mut counts = vec![0u32; g.num_checks()];
    for v in 0..g.num_vars() {
        if grow_stopping_set(g, 1u64 << v, v, 1, s, &mut counts) {
            return Ok(true);
        }
    }
    Ok(false)
}

// Every stopping set containing `set` must cover each degree-one check of
// `set` with a second variable; branching over those variables is exhaustive.
fn grow_stopping_set(g: &TannerGraph, set: u64, min_v: usize, size: usize, s: usize, counts: &mut [u32]) -> bool {
    counts.iter_mut().for_each(|c| *c = 0);
    let mut bits = set;
    while bits != 0 {
        let v = bits.trailing_zeros() as usize;
        bits &= bits - 1;
        for &c in g.var_neighbors(v) {
            counts[c as usize] += 1;
        }
    }
    let Some(open) = counts.iter().position(|&c| c == 1) else {
        return true;
    };
    if size == s {
        return false;
    }
    let candidates: Vec<usize> = g
        .check_neighbors(open)
        .iter()
        .map(|&v| v as usize)
        .filter(|&v| v > min_v && set & (1u64 << v) == 0)
        .collect();
    candidates
        .into_iter()
        .any(|v| grow_stopping_set(g, set | (1u64 << v), min_v, size + 1, s, counts))
}

/// Is there a cycle of length at most `s` in the multigraph whose nodes are
/// checks and whose edges are the (degree-two) variables?
fn projected_girth_at_most(g: &TannerGraph, s: usize) -> bool {
    let m = g.num_checks();
    // loops and parallel edges
    for v in 0..g.num_vars() {
        let nb = g.var_neighbors(v);
        if nb[0] == nb[1] {
            return true;
        }
    }
    if s == 1 {
        return false;
    }
    let mut seen = std::collections::HashSet::new();
    for v in 0..g.num_vars() {
        let nb = g.var_neighbors(v);
        let key = (nb[0].min(nb[1]), nb[0].max(nb[1]));
        if !seen.insert(key) {
            return true;
        }
    }
    if s == 2 {
        return false;
    }
    // simple graph from here on; BFS from every node bounded by depth s/2
    let other = |v: usize, c: usize| -> usize {
        let nb = g.var_neighbors(v);
        if nb[0] as usize == c {
            nb[1] as usize
        } else {
            nb[0] as usize
        }
    };
    let max_depth = s / 2 + 1;
    let mut dist = vec![usize::MAX; m];
    let mut via = vec![usize::MAX; m];
    let mut queue = std::collections::VecDeque::new();
    let mut touched = Vec::new();
    for root in 0..m {
        for &c in &touched {
            dist[c] = usize::MAX;
            via[c] = usize::MAX;
        }
        touched.clear();
        queue.clear();
        dist[root] = 0;
        touched.push(root);
        queue.push_back(root);
        while let Some(c) = queue.pop_front() {
            if dist[c] >= max_depth {
                continue;
            }
            for &v in g.check_neighbors(c) {
                let v = v as usize;
                if v == via[c] {
                    continue;
                }
                let w = other(v, c);
                if dist[w] == usize::MAX {
                    dist[w] = dist[c] + 1;
                    via[w] = v;
                    touched.push(w);
                    queue.push_back(w);
                } else if dist[w] + dist[c] < s {
                    return true;
                }
            }
        }
    }
    false
}
