//! Infinite-blocklength analysis of the peeling decoder: residual degree
//! profile, threshold, critical point and the sensitivity of the degree-one
//! check fraction to the channel parameter.
//!
//! All counts are normalized per variable node of the original graph.

use serde::Serialize;

use crate::ensembles::{poisson_pmf, EnsembleKind, EnsembleSpec};
use crate::error::{Error, Result};
use crate::numerics::optim::golden_section;
use crate::numerics::{binomial, ipow};

const GRID_POINTS: usize = 10_000;
const EPS_TOL: f64 = 1e-7;
/// Round-off allowance on the gap; near `x = 0` the gap is a difference of
/// numbers close to one.
const GAP_SLACK: f64 = 1e-14;

/// Residual degree profile at a point of the decoding trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeProfile {
    /// Fraction of erased check-to-variable messages.
    pub x_l: f64,
    /// `ε λ(x_l)`, the fraction of erased variable-to-check messages.
    pub x_r: f64,
    /// `(degree, L_d)` residual variable fractions.
    pub var_fractions: Vec<(u32, f64)>,
    /// Residual check fractions indexed by residual degree (entry 0 is `R_0`,
    /// entry 1 is `σ`).
    pub check_fractions: Vec<f64>,
    pub nu: f64,
    pub sigma: f64,
    pub tau: f64,
}

impl DeProfile {
    /// `σ + Σ_{d≥2} d τ_d`, which equals the residual edge count per variable.
    pub fn check_side_edges(&self) -> f64 {
        self.sigma
            + self
                .check_fractions
                .iter()
                .enumerate()
                .skip(2)
                .map(|(d, t)| d as f64 * t)
                .sum::<f64>()
    }

    pub fn var_side_edges(&self) -> f64 {
        self.var_fractions.iter().map(|&(d, f)| d as f64 * f).sum()
    }
}

/// `σ(x_l)` for channel parameter `eps`.
pub fn sigma_at(spec: &EnsembleSpec, eps: f64, x_l: f64) -> f64 {
    let lam = spec.lambda();
    let xr = eps * lam.eval(x_l);
    lam.average_node_degree() * xr * (x_l - 1.0 + spec.rho(1.0 - xr))
}

/// `ν(x_l) = ε Λ(x_l)`.
pub fn nu_at(spec: &EnsembleSpec, eps: f64, x_l: f64) -> f64 {
    eps * spec.lambda().node_eval(x_l)
}

pub fn profile_at(spec: &EnsembleSpec, eps: f64, x_l: f64) -> DeProfile {
    let lam = spec.lambda();
    let xr = eps * lam.eval(x_l);
    let var_fractions: Vec<(u32, f64)> = lam
        .node_fractions()
        .into_iter()
        .map(|(d, f)| (d, eps * f * ipow(x_l, d)))
        .collect();
    let nu = var_fractions.iter().map(|v| v.1).sum();
    let (_, rbar) = spec.design_rate();

    // residual check degrees: thinning of the original degrees with keep
    // probability x_r
    let mut checks: Vec<f64> = match &spec.kind {
        EnsembleKind::Standard { .. } => {
            let gamma = spec.check_node_fractions();
            let mut out = vec![0.0; gamma.len()];
            for (j, &gj) in gamma.iter().enumerate() {
                if gj == 0.0 {
                    continue;
                }
                for (i, slot) in out.iter_mut().enumerate().take(j + 1) {
                    *slot += gj
                        * binomial(j as u32, i as u32)
                        * ipow(xr, i as u32)
                        * ipow(1.0 - xr, (j - i) as u32);
                }
            }
            out.iter().map(|v| rbar * v).collect()
        }
        EnsembleKind::Poisson { .. } => {
            let mean = xr / (rbar * lam.integral());
            poisson_pmf(mean, 1e-17).into_iter().map(|p| rbar * p).collect()
        }
    };
    if checks.len() < 2 {
        checks.resize(2, 0.0);
    }
    let sigma = sigma_at(spec, eps, x_l);
    checks[1] = sigma;
    let tau: f64 = checks.iter().skip(2).sum();
    checks[0] = rbar - sigma - tau;
    DeProfile { x_l, x_r: xr, var_fractions, check_fractions: checks, nu, sigma, tau }
}

/// `ρ(1 - ε λ(x)) - (1 - x)`, positive on `(0, 1]` iff decoding succeeds.
pub fn threshold_gap(spec: &EnsembleSpec, eps: f64, x: f64) -> f64 {
    spec.rho(1.0 - eps * spec.lambda().eval(x)) - (1.0 - x)
}

/// Minimum of the threshold gap over `(0, 1]`: a grid scan refined by
/// golden-section search. Returns `(x_min, gap_min)`.
pub fn min_gap(spec: &EnsembleSpec, eps: f64) -> (f64, f64) {
    let h = 1.0 / GRID_POINTS as f64;
    let mut best = (1, f64::INFINITY);
    for i in 1..=GRID_POINTS {
        let v = threshold_gap(spec, eps, i as f64 * h);
        if v < best.1 {
            best = (i, v);
        }
    }
    let lo = (best.0 - 1) as f64 * h;
    let hi = ((best.0 + 1) as f64 * h).min(1.0);
    let (x, v) = golden_section(|x| threshold_gap(spec, eps, x), lo.max(1e-12), hi, 1e-13);
    if v < best.1 {
        (x, v)
    } else {
        (best.0 as f64 * h, best.1)
    }
}

/// Channel parameter at which the stability condition `ε λ'(0) ρ'(1) = 1`
/// binds, or infinity when there are no degree-two variables.
pub fn stability_bound(spec: &EnsembleSpec) -> f64 {
    let slope = spec.lambda().derivative(0.0) * spec.rho_derivative(1.0);
    if slope > 0.0 {
        1.0 / slope
    } else {
        f64::INFINITY
    }
}

/// Threshold `ε*`: bisection on `ε` to absolute tolerance 1e-7, capped by
/// the stability bound.
pub fn threshold(spec: &EnsembleSpec) -> Result<f64> {
    let stab = stability_bound(spec);
    let upper = stab.min(1.0);
    // near x = 0 the grid cannot resolve the stability condition, so test
    // just below the bound directly
    let probe = if stab <= 1.0 { upper * (1.0 - 1e-10) } else { upper };
    if min_gap(spec, probe).1 > -GAP_SLACK {
        return Ok(upper);
    }
    let (mut lo, mut hi) = (0.0, upper);
    while hi - lo > EPS_TOL * 1e-3 {
        let mid = 0.5 * (lo + hi);
        if min_gap(spec, mid).1 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalData {
    pub eps_star: f64,
    pub x_star: f64,
    pub nu_star: f64,
    pub dsigma_deps: f64,
}

impl CriticalData {
    /// `x_r* = ε* λ(x*)`, the critical variable-to-check erasure fraction.
    pub fn x_r_star(&self, spec: &EnsembleSpec) -> f64 {
        self.eps_star * spec.lambda().eval(self.x_star)
    }
}

/// Critical point of an unconditionally stable ensemble.
pub fn critical_data(spec: &EnsembleSpec) -> Result<CriticalData> {
    let eps = threshold(spec)?;
    if eps >= stability_bound(spec) - EPS_TOL {
        return Err(Error::MarginallyStable);
    }
    let (x, _) = min_gap(spec, eps);
    if x < 1e-4 {
        return Err(Error::MarginallyStable);
    }
    let lam = spec.lambda();
    let lx = lam.eval(x);
    let dsigma = -lam.average_node_degree() * eps * lx * lx * spec.rho_derivative(1.0 - eps * lx);
    Ok(CriticalData { eps_star: eps, x_star: x, nu_star: nu_at(spec, eps, x), dsigma_deps: dsigma })
}

/// Asymptotic bit erasure curve as `(ε, P_b)` pairs.
///
/// Each `x` is a fixed-point value of the variable-to-check erasure
/// fraction; with `y = 1 - ρ(1 - x)` the point is
/// `(x / λ(y), x Λ(y) / λ(y))`, where `Λ` is the normalized node polynomial.
/// Valid for `x` above the critical value `x_r*` and at most one.
pub fn asymptotic_bit_curve(spec: &EnsembleSpec, xs: &[f64]) -> Result<Vec<(f64, f64)>> {
    let lower = match critical_data(spec) {
        Ok(cd) => cd.x_r_star(spec),
        Err(Error::MarginallyStable) => 0.0,
        Err(e) => return Err(e),
    };
    let lam = spec.lambda();
    xs.iter()
        .map(|&x| {
            if !(x > lower && x <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "curve parameter {x} outside ({lower}, 1]"
                )));
            }
            let y = 1.0 - spec.rho(1.0 - x);
            let ly = lam.eval(y);
            Ok((x / ly, x * lam.node_eval(y) / ly))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::DegreeDistribution;

    #[test]
    fn start_of_decoding() {
        let spec = EnsembleSpec::regular(3, 6, 1024).unwrap();
        for eps in [0.1, 0.3, 0.42944, 0.7] {
            let p = profile_at(&spec, eps, 1.0);
            assert!((p.sigma - 3.0 * eps * (1.0 - eps).powi(5)).abs() < 1e-14);
            assert!((p.nu - eps).abs() < 1e-15);
        }
        let p = profile_at(&spec, 0.0, 0.6);
        assert_eq!((p.sigma, p.tau, p.nu), (0.0, 0.0, 0.0));
    }

    #[test]
    fn edge_balance_regular() {
        for spec in [EnsembleSpec::regular(3, 6, 8).unwrap(), EnsembleSpec::regular_poisson(4, 0.25, 8).unwrap()] {
            for &eps in &[0.2, 0.45] {
                for k in 1..=20 {
                    let x = k as f64 / 20.0;
                    let p = profile_at(&spec, eps, x);
                    assert!((p.check_side_edges() - p.var_side_edges()).abs() < 1e-10);
                    let sum: f64 = p.check_fractions.iter().sum();
                    assert!((sum - spec.design_rate().1).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn table_thresholds() {
        let cases = [(3, 6, 0.42944), (3, 5, 0.5176)];
        for (l, r, want) in cases {
            let eps = threshold(&EnsembleSpec::regular(l, r, 8).unwrap()).unwrap();
            assert!((eps - want).abs() < 1e-4, "({l},{r}) -> {eps}");
        }
        let p = threshold(&EnsembleSpec::regular_poisson(3, 0.0, 8).unwrap()).unwrap();
        assert!((p - 0.818469).abs() < 1e-5);
    }

    #[test]
    fn cycle_code_threshold_is_half_rbar() {
        for rate in [0.0, 0.25, 0.5] {
            let spec = EnsembleSpec::regular_poisson(2, rate, 8).unwrap();
            assert_eq!(threshold(&spec).unwrap(), (1.0 - rate) / 2.0);
            assert!(matches!(critical_data(&spec), Err(Error::MarginallyStable)));
        }
    }

    #[test]
    fn critical_point_of_3_6() {
        let spec = EnsembleSpec::regular(3, 6, 8).unwrap();
        let cd = critical_data(&spec).unwrap();
        assert!((cd.nu_star - 0.203).abs() < 1e-3);
        assert!(sigma_at(&spec, cd.eps_star, cd.x_star).abs() < 1e-6);
        let x2 = cd.x_star * cd.x_star;
        let direct = -3.0 * cd.eps_star * x2 * x2 * 5.0 * (1.0 - cd.eps_star * x2).powi(4);
        assert!((cd.dsigma_deps - direct).abs() < 1e-12);
        let h = 1e-6;
        let fd = (sigma_at(&spec, cd.eps_star + h, cd.x_star) - sigma_at(&spec, cd.eps_star - h, cd.x_star)) / (2.0 * h);
        assert!((fd - cd.dsigma_deps).abs() < 1e-7);
        assert!(cd.dsigma_deps < 0.0);
    }

    #[test]
    fn poisson_critical_root_residual() {
        let spec = EnsembleSpec::regular_poisson(3, 0.0, 8).unwrap();
        let cd = critical_data(&spec).unwrap();
        assert!(threshold_gap(&spec, cd.eps_star, cd.x_star).abs() < 1e-6);
        assert!((cd.nu_star - cd.eps_star * cd.x_star.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn threshold_sides() {
        let spec = EnsembleSpec::regular(3, 6, 8).unwrap();
        let eps = threshold(&spec).unwrap();
        assert!(min_gap(&spec, eps - 1e-3).1 > 0.0);
        assert!(min_gap(&spec, eps + 1e-3).1 < 0.0);
    }

    #[test]
    fn poisson_threshold_scales_with_rbar() {
        let base = threshold(&EnsembleSpec::regular_poisson(3, 0.0, 8).unwrap()).unwrap();
        for rate in [0.25, 0.5] {
            let eps = threshold(&EnsembleSpec::regular_poisson(3, rate, 8).unwrap()).unwrap();
            assert!((eps - base * (1.0 - rate)).abs() < 1e-8, "{rate}: {eps}");
        }
    }

    #[test]
    fn bit_curve_endpoints() {
        let spec = EnsembleSpec::regular(3, 6, 8).unwrap();
        let pts = asymptotic_bit_curve(&spec, &[1.0]).unwrap();
        assert!((pts[0].0 - 1.0).abs() < 1e-15 && (pts[0].1 - 1.0).abs() < 1e-15);
        let cd = critical_data(&spec).unwrap();
        assert!(asymptotic_bit_curve(&spec, &[cd.x_r_star(&spec) * 0.9]).is_err());
        let xs: Vec<f64> = (1..=50).map(|i| cd.x_r_star(&spec) + i as f64 * (1.0 - cd.x_r_star(&spec)) / 50.0).collect();
        let pts = asymptotic_bit_curve(&spec, &xs).unwrap();
        assert!(pts.windows(2).all(|w| w[1].0 > w[0].0));
        assert!(pts[0].0 > cd.eps_star - 1e-6);

        let cycle = EnsembleSpec::poisson(DegreeDistribution::regular(2).unwrap(), 0.5, 8, 0).unwrap();
        let pts = asymptotic_bit_curve(&cycle, &[1e-7]).unwrap();
        assert!((pts[0].0 - 0.25).abs() < 1e-6);
    }
}
