//! Cycle codes: Poisson ensembles with all variables of degree two.
//!
//! A variable is an edge between its two checks, so `E` erased variables
//! are `E` random edges on the `m = n r̄` check nodes and peeling succeeds
//! iff these edges form a forest. Counting labeled forests gives the exact
//! block erasure probability; near `ε* = r̄/2` the curve follows a stable
//! law.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ln_gamma;
use crate::numerics::quad::integrate_adaptive;

/// Largest check count evaluated in exact rational arithmetic.
pub const EXACT_MAX_CHECKS: usize = 128;
/// Default half-width of the critical window in the rescaled variable.
pub const WINDOW_HALF_WIDTH: f64 = 5.0;
/// Default window for the mother curve.
pub const MOTHER_WINDOW: f64 = 3.0;

const STABLE_T_MAX: f64 = 40.0;
/// Below this argument the light tail is taken from the non-oscillatory
/// representation.
const LEFT_SWITCH: f64 = -3.0;
const QUAD_WARN: f64 = 1e-6;

/// Exact counts `F(l, k)` of forests on `l` labeled nodes with `k` trees.
#[derive(Debug, Clone)]
pub struct ForestTable {
    rows: Vec<Vec<BigUint>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForestCount {
    pub value: BigUint,
    /// False when `(l, k)` lies outside `1 <= k <= l`; the value is then zero.
    pub in_range: bool,
}

impl ForestTable {
    /// Table for all `l <= max_nodes`, via
    /// `F(l,k) = Σ_j C(l-1, j-1) j^{j-2} F(l-j, k-1)`, where `j` is the size
    /// of the tree containing the first node.
    pub fn new(max_nodes: usize) -> Self {
        let trees: Vec<BigUint> = (0..=max_nodes)
            .map(|j| match j {
                0 => BigUint::zero(),
                1 => BigUint::one(),
                _ => BigUint::from(j).pow(j as u32 - 2),
            })
            .collect();
        let mut binom: Vec<BigUint> = vec![BigUint::one()];
        let mut rows: Vec<Vec<BigUint>> = vec![vec![BigUint::one()]];
        for l in 1..=max_nodes {
            // binom holds row l-1 of Pascal's triangle
            let mut row = vec![BigUint::zero(); l + 1];
            for (k, slot) in row.iter_mut().enumerate().skip(1) {
                let mut acc = BigUint::zero();
                for j in 1..=(l + 1 - k) {
                    let prev = &rows[l - j][k - 1];
                    if prev.is_zero() {
                        continue;
                    }
                    acc += &binom[j - 1] * &trees[j] * prev;
                }
                *slot = acc;
            }
            rows.push(row);
            let mut next = vec![BigUint::one(); l + 1];
            for i in 1..l {
                next[i] = &binom[i - 1] + &binom[i];
            }
            binom = next;
        }
        ForestTable { rows }
    }

    pub fn max_nodes(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn get(&self, l: usize, k: usize) -> ForestCount {
        if k < 1 || k > l || l > self.max_nodes() {
            let in_range = k >= 1 && k <= l;
            let value = if in_range { forest_count_uncached(l, k) } else { BigUint::zero() };
            return ForestCount { value, in_range };
        }
        ForestCount { value: self.rows[l][k].clone(), in_range: true }
    }

    /// Total number of labeled forests on `l` nodes.
    pub fn total(&self, l: usize) -> BigUint {
        self.rows[l].iter().sum()
    }
}

fn forest_count_uncached(l: usize, k: usize) -> BigUint {
    ForestTable::new(l).rows[l][k].clone()
}

pub fn forest_count(l: usize, k: usize) -> ForestCount {
    if k < 1 || k > l {
        return ForestCount { value: BigUint::zero(), in_range: false };
    }
    ForestCount { value: forest_count_uncached(l, k), in_range: true }
}

/// `m = n r̄`, rejected unless integral.
pub fn num_cycle_checks(n: usize, rate: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("rate {rate} outside [0, 1)")));
    }
    let m = n as f64 * (1.0 - rate);
    let mr = m.round();
    if (m - mr).abs() > 1e-9 * m.max(1.0) || mr < 1.0 {
        return Err(Error::InvalidArgument(format!("n r̄ = {m} is not a positive integer")));
    }
    Ok(mr as usize)
}

/// Probability that `e` uniform random edges on `m` labeled nodes form a
/// forest: `2^E E! F(m, m-E) / m^{2E}`, exact.
pub fn forest_probability_exact(table: &ForestTable, m: usize, e: usize) -> BigRational {
    if e == 0 {
        return BigRational::one();
    }
    if e >= m {
        return BigRational::zero();
    }
    let f = table.get(m, m - e).value;
    let mut num = BigUint::from(2u32).pow(e as u32) * f;
    for i in 2..=e {
        num *= BigUint::from(i);
    }
    let den = BigUint::from(m).pow(2 * e as u32);
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Logarithm of the forest probability for large `m`: the coefficient
/// extraction in the tree generating function is done on an exponentially
/// tilted, renormalized power series.
pub fn ln_forest_probability(m: usize, e: usize) -> f64 {
    if e == 0 {
        return 0.0;
    }
    if e >= m {
        return f64::NEG_INFINITY;
    }
    let k = m - e;
    let y = (2.0 * e as f64 / m as f64).min(1.0);
    let c = y * (-y).exp();
    let ln_c = c.ln();
    let big_u = (y - 0.5 * y * y) / c;
    let ln_u = big_u.ln();
    // π_i = u_i c^i / U with u_i = (i+1)^{i-1}/(i+1)!
    let base: Vec<f64> = (0..=e)
        .map(|i| {
            let i = i as f64;
            ((i - 1.0) * (i + 1.0).ln() - ln_gamma(i + 2.0) + i * ln_c - ln_u).exp()
        })
        .collect();
    let (res, ln_scale) = truncated_power(&base, k, e);
    let ln_coeff = res[e].ln() + ln_scale;
    e as f64 * std::f64::consts::LN_2 + ln_gamma(e as f64 + 1.0) + ln_gamma(m as f64 + 1.0)
        - ln_gamma(k as f64 + 1.0)
        - 2.0 * e as f64 * (m as f64).ln()
        - e as f64 * ln_c
        + k as f64 * ln_u
        + ln_coeff
}

fn convolve_truncated(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (i, &ai) in a.iter().enumerate().take(len) {
        if ai == 0.0 {
            continue;
        }
        for (o, &bj) in out[i..].iter_mut().zip(b) {
            *o += ai * bj;
        }
    }
    out
}

fn renormalize(v: &mut [f64]) -> f64 {
    let mx = v.iter().fold(0.0f64, |a, &b| a.max(b));
    if mx > 0.0 {
        v.iter_mut().for_each(|x| *x /= mx);
        mx.ln()
    } else {
        0.0
    }
}

/// `base^power` truncated to degree `deg`, as (scaled coefficients, log scale).
fn truncated_power(base: &[f64], mut power: usize, deg: usize) -> (Vec<f64>, f64) {
    let len = deg + 1;
    let mut res = vec![0.0; len];
    res[0] = 1.0;
    let mut ln_res = 0.0;
    let mut b = base.to_vec();
    let mut ln_b = 0.0;
    while power > 0 {
        if power & 1 == 1 {
            res = convolve_truncated(&res, &b, len);
            ln_res += renormalize(&mut res) + ln_b;
        }
        power >>= 1;
        if power > 0 {
            b = convolve_truncated(&b, &b, len);
            ln_b = 2.0 * ln_b + renormalize(&mut b);
        }
    }
    (res, ln_res)
}

/// Exact block erasure probability of the unexpurgated cycle code with `e`
/// erasures: `1 - 2^E E! F(m, m-E)/m^{2E}` with `m = n r̄`. Rational
/// arithmetic up to [`EXACT_MAX_CHECKS`] checks, log-space beyond.
pub fn exact_block_prob(n: usize, rate: f64, e: usize) -> Result<f64> {
    let m = num_cycle_checks(n, rate)?;
    if e > n {
        return Err(Error::InvalidArgument(format!("{e} erasures exceed n = {n}")));
    }
    if e >= m {
        return Ok(1.0);
    }
    if m <= EXACT_MAX_CHECKS {
        let table = ForestTable::new(m);
        let fail = BigRational::one() - forest_probability_exact(&table, m, e);
        return fail
            .to_f64()
            .ok_or_else(|| Error::Numerical("rational to float conversion failed".into()));
    }
    Ok(-ln_forest_probability(m, e).exp_m1())
}

/// Exact block erasure probabilities for several erasure counts, sharing
/// one forest table.
pub fn exact_block_curve(n: usize, rate: f64, erasures: &[usize]) -> Result<Vec<f64>> {
    let m = num_cycle_checks(n, rate)?;
    if m > EXACT_MAX_CHECKS {
        return erasures.iter().map(|&e| exact_block_prob(n, rate, e)).collect();
    }
    let table = ForestTable::new(m);
    erasures
        .iter()
        .map(|&e| {
            if e > n {
                return Err(Error::InvalidArgument(format!("{e} erasures exceed n = {n}")));
            }
            (BigRational::one() - forest_probability_exact(&table, m, e))
                .to_f64()
                .ok_or_else(|| Error::Numerical("rational to float conversion failed".into()))
        })
        .collect()
}

/// Value with an optional accuracy or domain warning.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Approx {
    pub value: f64,
    pub warning: Option<String>,
}

/// `p(u)` by quadrature of `(1/π) ∫_0^∞ Re exp(-iut - t^{3/2} e^{iπ/4}) dt`,
/// returned with the quadrature error estimate. In the light left tail the
/// oscillatory integral cancels to below its own round-off, so there the
/// equivalent non-oscillatory angular integral is used.
pub fn stable_density_with_error(u: f64) -> (f64, f64) {
    if u < LEFT_SWITCH {
        let (ln_p, err) = ln_stable_density_left(u);
        return (ln_p.exp(), err * ln_p.exp());
    }
    let width = (PI / (u.abs() + 1.0)).min(1.0);
    let panels = (STABLE_T_MAX / width).ceil() as usize;
    let h = STABLE_T_MAX / panels as f64;
    let f = |t: f64| {
        let w = t * t.sqrt() * FRAC_1_SQRT_2;
        (-w).exp() * (t * u + w).cos()
    };
    let (mut value, mut error) = (0.0, 0.0);
    for i in 0..panels {
        let r = integrate_adaptive(f, i as f64 * h, (i + 1) as f64 * h, 1e-13 / panels as f64, 0.0);
        value += r.value;
        error += r.error;
    }
    (value / PI, error / PI)
}

pub fn stable_density(u: f64) -> f64 {
    stable_density_with_error(u).0
}

/// `ln p(u)` for `u < 0` from the angular representation of the stable
/// law with index 3/2. Returns the log density and a relative error
/// estimate.
fn ln_stable_density_left(u: f64) -> (f64, f64) {
    let alpha = 1.5;
    // p is the standard totally skewed law scaled by γ = 2^{-1/3}; the left
    // half-line maps to the right half-line of the reflected law.
    let gamma = 2f64.powf(-1.0 / 3.0);
    let y = -u / gamma;
    let theta0 = PI / 6.0;
    let cos_a0 = (alpha * theta0).cos();
    let v = |th: f64| -> f64 {
        let s = (alpha * (theta0 + th)).sin();
        let c = th.cos();
        let val = cos_a0.powf(2.0) * (c / s).powi(3) * (alpha * theta0 + 0.5 * th).cos() / c;
        if val.is_finite() {
            val
        } else {
            f64::INFINITY
        }
    };
    let ya = y.powi(3);
    let (lo, hi) = (-theta0, PI / 2.0);
    let vmin = (1..200)
        .map(|i| v(lo + (hi - lo) * i as f64 / 200.0))
        .fold(f64::INFINITY, f64::min);
    let g = |th: f64| {
        let vt = v(th);
        if vt.is_finite() {
            vt * (-ya * (vt - vmin)).exp()
        } else {
            0.0
        }
    };
    let r = integrate_adaptive(g, lo, hi, 0.0, 1e-11);
    let ln_pref = alpha.ln() + 2.0 * y.ln() - (PI * (alpha - 1.0)).ln() - gamma.ln();
    (ln_pref + r.value.ln() - ya * vmin, r.error / r.value)
}

/// `∫ p` over the real line: quadrature on `[-12, 40]` plus the `u^{-5/2}`
/// right tail beyond 40 (the left tail is far below double precision).
pub fn stable_density_mass() -> f64 {
    let r = integrate_adaptive(stable_density, -12.0, 40.0, 1e-9, 0.0);
    r.value + 2.0 / 3.0 * 40.0 * stable_density(40.0)
}

fn mother_prefactor() -> f64 {
    (2.0 * PI).sqrt() * 3f64.powf(2.0 / 3.0) / 2.0
}

/// Mother curve `f(x) = (√(2π) 3^{2/3}/2) e^{-4x³/3} p(3^{2/3} x)`, with a
/// warning when the quadrature error estimate exceeds 1e-6 or `x` leaves
/// `[-3, 3]`.
pub fn mother_curve(x: f64) -> Approx {
    let u = 3f64.powf(2.0 / 3.0) * x;
    let cubic = -4.0 * x * x * x / 3.0;
    let (value, error) = if u < LEFT_SWITCH {
        let (ln_p, rel) = ln_stable_density_left(u);
        let v = (mother_prefactor().ln() + cubic + ln_p).exp();
        (v, rel * v)
    } else {
        let (p, e) = stable_density_with_error(u);
        let k = mother_prefactor() * cubic.exp();
        (k * p, k * e)
    };
    let warning = if error > QUAD_WARN {
        Some(format!("mother curve quadrature error {error:.2e} at x = {x}"))
    } else if x.abs() > MOTHER_WINDOW {
        Some(format!("mother curve evaluated outside [-{MOTHER_WINDOW}, {MOTHER_WINDOW}] at x = {x}"))
    } else {
        None
    };
    Approx { value, warning }
}

pub fn mother_curve_f(x: f64) -> f64 {
    mother_curve(x).value
}

/// Second derivative of the mother curve by central differences.
pub fn mother_curve_f2(x: f64) -> f64 {
    let h = 1e-3;
    (mother_curve_f(x + h) - 2.0 * mother_curve_f(x) + mother_curve_f(x - h)) / (h * h)
}

/// `A(s) = exp(Σ_{s'=1}^{s} 1/(2s'))`.
pub fn expurgation_factor(s: usize) -> f64 {
    (1..=s).map(|k| 0.5 / k as f64).sum::<f64>().exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleScalingParams {
    pub a: f64,
    pub b: f64,
    pub a_s: f64,
    pub eps_star: f64,
    pub rbar: f64,
}

impl CycleScalingParams {
    pub fn new(rate: f64, s: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!("rate {rate} outside [0, 1)")));
        }
        let rbar = 1.0 - rate;
        Ok(CycleScalingParams {
            a: rbar.powf(-1.0 / 6.0),
            b: rbar.powf(-2.0 / 3.0),
            a_s: expurgation_factor(s),
            eps_star: rbar / 2.0,
            rbar,
        })
    }

    /// Rescaled distance `b n^{1/3} (ε - ε*)`.
    pub fn window_variable(&self, n: usize, eps: f64) -> f64 {
        self.b * (n as f64).cbrt() * (eps - self.eps_star)
    }
}

/// `1 - A(s) a n^{-1/6} f(b n^{1/3}(ε - ε*))`. With `channel_correction`
/// the mother curve gains the memoryless-channel term
/// `ε*(1-ε*)/r̄^{4/3} f''(x) n^{-1/3}`.
pub fn block_scaling_approx(n: usize, rate: f64, s: usize, eps: f64, channel_correction: bool) -> Result<Approx> {
    let p = CycleScalingParams::new(rate, s)?;
    let nf = n as f64;
    let x = p.window_variable(n, eps);
    let mother = mother_curve(x);
    let mut f = mother.value;
    if channel_correction {
        let k = p.eps_star * (1.0 - p.eps_star) / p.rbar.powf(4.0 / 3.0);
        f += k * mother_curve_f2(x) * nf.powf(-1.0 / 3.0);
    }
    let value = 1.0 - p.a_s * p.a * nf.powf(-1.0 / 6.0) * f;
    let warning = if x.abs() > WINDOW_HALF_WIDTH {
        Some(format!("ε = {eps} lies outside the critical window (rescaled distance {x:.3}); extrapolating"))
    } else {
        mother.warning.filter(|_| x.abs() <= MOTHER_WINDOW)
    };
    Ok(Approx { value, warning })
}

/// Limit block erasure curve `1 - sqrt(1 - ε/ε*) exp(Σ (ε/ε*)^{s'}/(2s'))`,
/// one at and above the threshold.
pub fn limit_block_curve(eps: f64, rate: f64, s: usize) -> Result<f64> {
    let p = CycleScalingParams::new(rate, s)?;
    if eps < 0.0 {
        return Err(Error::InvalidArgument(format!("negative erasure probability {eps}")));
    }
    if eps >= p.eps_star {
        return Ok(1.0);
    }
    let q = eps / p.eps_star;
    let sum: f64 = (1..=s).map(|k| q.powi(k as i32) / (2.0 * k as f64)).sum();
    Ok(1.0 - (1.0 - q).sqrt() * sum.exp())
}

/// `L_s(x) = -ln(1-x) - Σ_{s'=1}^{s} x^{s'}/s'`.
pub fn l_s(x: f64, s: usize) -> f64 {
    -(-x).ln_1p() - (1..=s).map(|k| x.powi(k as i32) / k as f64).sum::<f64>()
}

/// Error-floor bit erasure probability `(1/2n) L_s(2ε/r̄)`.
pub fn error_floor_bit(n: usize, eps: f64, rate: f64, s: usize) -> Result<f64> {
    let p = CycleScalingParams::new(rate, s)?;
    let x = 2.0 * eps / p.rbar;
    if x >= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "error floor diverges at 2ε/r̄ = {x} (at or above threshold)"
        )));
    }
    if eps < 0.0 {
        return Err(Error::InvalidArgument(format!("negative erasure probability {eps}")));
    }
    Ok(l_s(x, s) / (2.0 * n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::TannerGraph;
    use crate::peeling_sim::{peel, PeelOutcome};
    use rand::SeedableRng;

    #[test]
    fn forest_counts() {
        assert_eq!(forest_count(3, 1).value, BigUint::from(3u32));
        assert_eq!(forest_count(2, 2).value, BigUint::from(1u32));
        assert_eq!(forest_count(4, 2).value, BigUint::from(15u32));
        assert!(!forest_count(3, 4).in_range);
        assert!(forest_count(3, 0).value.is_zero());
        let t = ForestTable::new(12);
        for l in 1..=12 {
            assert_eq!(t.get(l, l).value, BigUint::one());
            let cayley = if l == 1 { BigUint::one() } else { BigUint::from(l).pow(l as u32 - 2) };
            assert_eq!(t.get(l, 1).value, cayley);
        }
        let totals: Vec<u64> = (1..=7).map(|l| t.total(l).to_u64().unwrap()).collect();
        assert_eq!(totals, vec![1, 2, 7, 38, 291, 2932, 36961]);
    }

    fn find(p: &mut [usize], x: usize) -> usize {
        if p[x] != x {
            let r = find(p, p[x]);
            p[x] = r;
        }
        p[x]
    }

    #[test]
    fn forest_counts_match_enumeration() {
        for l in 1..=7usize {
            let edges: Vec<(usize, usize)> =
                (0..l).flat_map(|a| (a + 1..l).map(move |b| (a, b))).collect();
            let mut by_k = vec![0u64; l + 1];
            for mask in 0u32..(1 << edges.len()) {
                let mut parent: Vec<usize> = (0..l).collect();
                let mut acyclic = true;
                for (i, &(a, b)) in edges.iter().enumerate() {
                    if mask >> i & 1 == 1 {
                        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                        if ra == rb {
                            acyclic = false;
                            break;
                        }
                        parent[ra] = rb;
                    }
                }
                if acyclic {
                    by_k[l - mask.count_ones() as usize] += 1;
                }
            }
            let t = ForestTable::new(l);
            for k in 1..=l {
                assert_eq!(t.get(l, k).value.to_u64().unwrap(), by_k[k], "F({l},{k})");
            }
        }
    }

    #[test]
    fn exact_probability_edge_cases() {
        assert_eq!(exact_block_prob(128, 0.5, 0).unwrap(), 0.0);
        assert_eq!(exact_block_prob(128, 0.5, 65).unwrap(), 1.0);
        assert_eq!(exact_block_prob(128, 0.5, 64).unwrap(), 1.0);
        assert!(exact_block_prob(15, 0.5, 3).is_err());
        let curve = exact_block_curve(64, 0.5, &(0..=32).collect::<Vec<_>>()).unwrap();
        assert!(curve.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn exact_probability_matches_enumeration() {
        // n = 12, r = 1/2: six checks, three erased degree-two variables,
        // every ordered placement of their six sockets
        let (m, e) = (6u32, 3usize);
        let mut success = 0u64;
        let mut total = 0u64;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        for code in 0..m.pow(2 * e as u32) {
            let mut c = code;
            let adj: Vec<Vec<u32>> = (0..e)
                .map(|_| {
                    let a = c % m;
                    c /= m;
                    let b = c % m;
                    c /= m;
                    vec![a, b]
                })
                .collect();
            let g = TannerGraph::from_adjacency(m as usize, &adj).unwrap();
            if peel(&g, &[0, 1, 2], &mut rng) == PeelOutcome::Success {
                success += 1;
            }
            total += 1;
        }
        let brute = 1.0 - success as f64 / total as f64;
        assert!((exact_block_prob(12, 0.5, e).unwrap() - brute).abs() < 1e-15);
    }

    #[test]
    fn log_route_matches_exact() {
        for m in [20usize, 40, 90, 128] {
            let table = ForestTable::new(m);
            for e in [1, m / 4, m / 2, 3 * m / 4, m - 1] {
                let exact = forest_probability_exact(&table, m, e).to_f64().unwrap().ln();
                let approx = ln_forest_probability(m, e);
                assert!((exact - approx).abs() < 1e-9 * exact.abs().max(1.0), "m={m} e={e}: {exact} vs {approx}");
            }
        }
    }

    #[test]
    fn stable_density_values() {
        assert!((stable_density(0.0) - 0.248855).abs() < 1e-6);
        assert!((stable_density(3.0) - 0.022525).abs() < 1e-6);
        assert!((stable_density(-5.0) - 7.6377137e-9).abs() < 1e-15);
        // both representations agree where they overlap
        for u in [-2.9f64, -2.0, -1.0] {
            let (osc, _) = stable_density_with_error(u);
            let ang = ln_stable_density_left(u).0.exp();
            assert!((osc - ang).abs() < 1e-10 * osc, "u={u}");
        }
        let tail = stable_density(200.0) * 200f64.powf(2.5);
        assert!((tail - 0.4231).abs() < 2e-3, "{tail}");
    }

    #[test]
    fn stable_density_normalizes() {
        assert!((stable_density_mass() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn mother_curve_properties() {
        assert!((mother_curve_f(0.0) - 0.648764).abs() < 1e-6);
        for i in -30..=30 {
            let a = mother_curve(i as f64 / 10.0);
            assert!(a.value > 0.0);
            assert!(a.warning.is_none(), "{:?}", a.warning);
        }
        // continuity across the switch between representations
        let xs = LEFT_SWITCH / 3f64.powf(2.0 / 3.0);
        let (l, r) = (mother_curve_f(xs - 1e-9), mother_curve_f(xs + 1e-9));
        assert!((l - r).abs() < 1e-8 * l);
    }

    #[test]
    fn scaling_params_and_window_center() {
        let p = CycleScalingParams::new(0.5, 0).unwrap();
        assert_eq!(p.a_s, 1.0);
        assert_eq!(p.eps_star, 0.25);
        assert!((expurgation_factor(1) - 0.5f64.exp()).abs() < 1e-15);
        assert!((1..6).all(|s| expurgation_factor(s) > expurgation_factor(s - 1)));
        let n = 4096;
        let v = block_scaling_approx(n, 0.5, 1, 0.25, false).unwrap();
        let want = 1.0 - 0.5f64.exp() * p.a * (n as f64).powf(-1.0 / 6.0) * mother_curve_f(0.0);
        assert!((v.value - want).abs() < 1e-15);
        assert!(block_scaling_approx(n, 0.5, 0, 0.5, false).unwrap().warning.is_some());
    }

    #[test]
    fn limit_curve_and_floor() {
        assert_eq!(limit_block_curve(0.0, 0.5, 0).unwrap(), 0.0);
        assert_eq!(limit_block_curve(0.25, 0.5, 2).unwrap(), 1.0);
        assert!(limit_block_curve(0.25 - 1e-12, 0.5, 1).unwrap() > 0.999);
        assert_eq!(l_s(0.0, 3), 0.0);
        assert!((l_s(0.3, 0) + 0.7f64.ln()).abs() < 1e-15);
        let pb = error_floor_bit(1024, 0.1, 0.5, 1).unwrap();
        assert!((pb - l_s(0.4, 1) / 2048.0).abs() < 1e-18);
        assert!(error_floor_bit(1024, 0.25, 0.5, 0).is_err());
    }
}
