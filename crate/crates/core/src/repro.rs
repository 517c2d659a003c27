//! End-to-end reproduction checks with pinned tolerances. Used by the
//! `repro` subcommand and by the acceptance test target.

use std::time::Instant;

use serde::Serialize;

use crate::covariance_evolution::{
    alpha_with, beta, beta_closed_form, integrate_to_clocks, initial_moments, poisson_rescale, scaling_params,
    IntegrationOptions, RegularModel, OMEGA,
};
use crate::cycle_exact::{block_scaling_approx, error_floor_bit, exact_block_curve, exact_block_prob, stable_density_mass};
use crate::density_evolution::{critical_data, threshold};
use crate::ensembles::{EnsembleSpec, GraphSampler, TannerGraph};
use crate::error::Result;
use crate::peeling_sim::{mc_curve, trajectory_stats, ChannelKind, McOptions, Peeler, DEFAULT_GAMMA};
use crate::rng::trial_rng;
use crate::scaling_predict::{predict_curve, shannon_exact, FormKind, ScalingForm};

/// Reference values and tolerances.
pub mod pinned {
    /// `(l, r, ε*)` for regular standard ensembles.
    pub const THRESHOLDS: [(u32, u32, f64); 8] = [
        (3, 4, 0.6473),
        (3, 5, 0.5176),
        (3, 6, 0.4294),
        (4, 5, 0.6001),
        (4, 6, 0.5061),
        (5, 6, 0.5510),
        (6, 7, 0.5079),
        (6, 12, 0.3075),
    ];
    pub const THRESHOLD_TOL: f64 = 1e-4;
    pub const THRESHOLD_SECONDS: f64 = 10.0;

    /// `(l, r, α, β/Ω)`.
    pub const SCALING: [(u32, u32, f64, f64); 4] = [
        (3, 4, 0.260115, 0.593632),
        (3, 5, 0.263814, 0.616196),
        (3, 6, 0.249869, 0.616949),
        (4, 6, 0.246776, 0.574356),
    ];
    pub const ALPHA_TOL: f64 = 2e-3;
    pub const ALPHA_SECONDS: f64 = 60.0;
    pub const BETA_TOL: f64 = 5e-3;
    pub const BETA_FORMS_TOL: f64 = 1e-6;

    /// `(l, ε*, α)` for Poisson ensembles at rate zero.
    pub const POISSON: [(u32, f64, f64); 4] = [
        (3, 0.818469, 0.497867),
        (4, 0.772280, 0.409321),
        (5, 0.701780, 0.375892),
        (6, 0.637081, 0.354574),
    ];
    pub const POISSON_EPS_TOL: f64 = 1e-4;
    pub const POISSON_ALPHA_TOL: f64 = 2e-3;
    pub const RESCALE_RATE: f64 = 0.5;
    pub const RESCALE_TOL: f64 = 2e-3;

    pub const COV_N: usize = 8192;
    pub const COV_TRIALS: u64 = 20_500;
    pub const COV_MIN_SURVIVORS: usize = 20_000;
    /// Checkpoints in `ν`; the first is replaced by the initial erasure
    /// fraction.
    pub const COV_CHECKPOINTS: [f64; 5] = [f64::NAN, 0.40, 0.35, 0.30, 0.28];
    pub const COV_SIGMAS: f64 = 4.0;
    pub const COV_SECONDS: f64 = 600.0;

    pub const CURVE_NS: [usize; 2] = [1024, 2048];
    pub const CURVE_POINTS: usize = 9;
    pub const CURVE_SPAN_ALPHAS: f64 = 3.0;
    pub const CURVE_TRIALS: u64 = 20_000;
    pub const CURVE_SUP_TOL: f64 = 0.05;

    pub const CYCLE_N: usize = 128;
    pub const CYCLE_RATE: f64 = 0.5;
    /// Erasure counts, `ε = E/128`.
    pub const CYCLE_ERASURES: [usize; 5] = [16, 20, 24, 32, 40];
    pub const CYCLE_TRIALS: u64 = 100_000;
    pub const CYCLE_SIGMAS: f64 = 4.0;
    pub const ORACLE_N: usize = 12;

    pub const ORDER_NS: [usize; 4] = [256, 1024, 4096, 16384];
    pub const ORDER_SLOPE: f64 = -1.0 / 3.0;
    pub const ORDER_SLOPE_TOL: f64 = 0.1;
    pub const MASS_TOL: f64 = 1e-4;

    pub const FLOOR_N: usize = 1024;
    pub const FLOOR_EPS: f64 = 0.10;
    pub const FLOOR_S: [usize; 2] = [0, 1];
    pub const FLOOR_TRIALS: u64 = 1_000_000;
    pub const FLOOR_SIGMAS: f64 = 4.0;

    pub const SHANNON_RATE: f64 = 0.5;
    pub const SHANNON_NS: (usize, usize) = (256, 512);
    pub const SHANNON_GRID: usize = 2001;
    pub const SHANNON_RATIO: (f64, f64) = (0.35, 0.65);
}

use pinned::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReproOptions {
    /// Divides Monte Carlo trial counts; results are then indicative only.
    pub quick: bool,
    pub seed: u64,
}

impl Default for ReproOptions {
    fn default() -> Self {
        ReproOptions { quick: false, seed: 20_240_601 }
    }
}

impl ReproOptions {
    fn trials(&self, full: u64) -> u64 {
        if self.quick {
            (full / 50).max(200)
        } else {
            full
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {:<24} {}  ({:.1} s) {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.seconds,
            self.detail
        )
    }
}

pub const CRITERIA: [(u32, &str); 10] = [
    (1, "threshold table"),
    (2, "variance parameters"),
    (3, "shift parameters"),
    (4, "poisson table"),
    (5, "covariance validation"),
    (6, "scaling curve match"),
    (7, "cycle exactness"),
    (8, "cycle scaling order"),
    (9, "error floor"),
    (10, "shannon benchmark"),
];

pub fn run_criterion(id: u32, opts: &ReproOptions) -> Result<CriterionResult> {
    let start = Instant::now();
    let (passed, detail) = match id {
        1 => thresholds(start)?,
        2 => variance_parameters(start)?,
        3 => shift_parameters()?,
        4 => poisson_table()?,
        5 => covariance_validation(opts, start)?,
        6 => scaling_curve(opts)?,
        7 => cycle_exactness(opts)?,
        8 => cycle_order()?,
        9 => error_floor(opts)?,
        10 => shannon()?,
        _ => return Err(crate::Error::InvalidArgument(format!("no criterion {id}"))),
    };
    let name = CRITERIA.iter().find(|c| c.0 == id).map_or("", |c| c.1);
    Ok(CriterionResult { id, name, passed, detail, seconds: start.elapsed().as_secs_f64() })
}

pub fn run_all(opts: &ReproOptions) -> Result<Vec<CriterionResult>> {
    CRITERIA.iter().map(|&(id, _)| run_criterion(id, opts)).collect()
}

fn thresholds(start: Instant) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    let mut misses = Vec::new();
    for (l, r, want) in THRESHOLDS {
        let eps = threshold(&EnsembleSpec::regular(l, r, 1)?)?;
        let dev = eps - want;
        worst = worst.max(dev.abs());
        if dev.abs() > THRESHOLD_TOL {
            misses.push(format!("({l},{r}) ε*={eps:.6} Δ={dev:+.2e}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let mut detail = format!("max |Δε*| = {worst:.2e} (tol {THRESHOLD_TOL:.0e})");
    if !misses.is_empty() {
        detail.push_str(&format!("; outside: {}", misses.join(", ")));
    }
    Ok((worst <= THRESHOLD_TOL && secs < THRESHOLD_SECONDS, detail))
}

fn variance_parameters(start: Instant) -> Result<(bool, String)> {
    let mut ok = true;
    let mut parts = Vec::new();
    for (l, r, want, _) in SCALING {
        let a = alpha_with(&EnsembleSpec::regular(l, r, 1)?, &IntegrationOptions { checkpoints: 2, ..Default::default() })?;
        let dev = a.alpha_exact - want;
        ok &= dev.abs() <= ALPHA_TOL;
        parts.push(format!("({l},{r}) α={:.6} Δ={dev:+.2e}", a.alpha_exact));
    }
    ok &= start.elapsed().as_secs_f64() < ALPHA_SECONDS;
    Ok((ok, parts.join("; ")))
}

fn shift_parameters() -> Result<(bool, String)> {
    let mut ok = true;
    let mut parts = Vec::new();
    for (l, r, _, want) in SCALING {
        let spec = EnsembleSpec::regular(l, r, 1)?;
        let b = beta(&spec, OMEGA)?;
        let bc = beta_closed_form(&spec, OMEGA)?;
        ok &= (b / OMEGA - want).abs() <= BETA_TOL && (b - bc).abs() <= BETA_FORMS_TOL;
        parts.push(format!("({l},{r}) β/Ω={:.6} Δ={:+.2e} |forms|={:.1e}", b / OMEGA, b / OMEGA - want, (b - bc).abs()));
    }
    Ok((ok, parts.join("; ")))
}

fn poisson_table() -> Result<(bool, String)> {
    let mut ok = true;
    let mut worst_eps: f64 = 0.0;
    let mut worst_alpha: f64 = 0.0;
    let mut worst_rescale: f64 = 0.0;
    for (l, eps_want, alpha_want) in POISSON {
        let p0 = scaling_params(&EnsembleSpec::regular_poisson(l, 0.0, 1)?, OMEGA)?;
        worst_eps = worst_eps.max((p0.eps_star - eps_want).abs());
        worst_alpha = worst_alpha.max((p0.alpha_exact - alpha_want).abs());
        let direct = scaling_params(&EnsembleSpec::regular_poisson(l, RESCALE_RATE, 1)?, OMEGA)?;
        let mapped = poisson_rescale(&p0, 0.0, RESCALE_RATE)?;
        worst_rescale = worst_rescale
            .max((direct.eps_star - mapped.eps_star).abs())
            .max((direct.alpha_exact - mapped.alpha_exact).abs());
    }
    ok &= worst_eps <= POISSON_EPS_TOL && worst_alpha <= POISSON_ALPHA_TOL && worst_rescale <= RESCALE_TOL;
    Ok((
        ok,
        format!("max |Δε*| = {worst_eps:.2e}, max |Δα| = {worst_alpha:.2e}, rescaling mismatch {worst_rescale:.2e}"),
    ))
}

fn covariance_validation(opts: &ReproOptions, start: Instant) -> Result<(bool, String)> {
    let spec = EnsembleSpec::regular(3, 6, COV_N)?;
    let cd = critical_data(&spec)?;
    let n = COV_N as f64;
    let erasures = (n * cd.eps_star).round() as usize;
    let eps_eff = erasures as f64 / n;
    let mut checkpoints = vec![erasures];
    checkpoints.extend(COV_CHECKPOINTS[1..].iter().map(|nu| (nu * n).round() as usize));
    let trials = opts.trials(COV_TRIALS);
    let stats = trajectory_stats(&spec, eps_eff, trials, &checkpoints, opts.seed)?;

    let model = RegularModel::from_spec(&spec)?;
    let clocks: Vec<f64> = checkpoints[1..].iter().map(|&v| eps_eff - v as f64 / n).collect();
    let traj = integrate_to_clocks(&model, eps_eff, &clocks, &IntegrationOptions::default())?;
    let mut expected = vec![initial_moments(&model, eps_eff)];
    expected.extend(traj.states[1..].iter().copied());

    let mut worst: f64 = 0.0;
    let mut min_survivors = usize::MAX;
    for (cp, ex) in stats.checkpoints.iter().zip(&expected) {
        min_survivors = min_survivors.min(cp.survivors);
        let pairs = [
            (cp.mean[0], cp.mean_se[0], ex.sigma),
            (cp.mean[1], cp.mean_se[1], ex.tau),
            (cp.cov[0], cp.cov_se[0], ex.d_ss()),
            (cp.cov[1], cp.cov_se[1], ex.d_st()),
            (cp.cov[2], cp.cov_se[2], ex.d_tt()),
        ];
        for (emp, se, want) in pairs {
            worst = worst.max((emp - want).abs() / se);
        }
    }
    let survivors_ok = opts.quick || min_survivors >= COV_MIN_SURVIVORS;
    let secs = start.elapsed().as_secs_f64();
    Ok((
        worst <= COV_SIGMAS && survivors_ok && secs < COV_SECONDS,
        format!("worst deviation {worst:.2} SE over 5 checkpoints x 5 moments, min survivors {min_survivors}"),
    ))
}

fn scaling_curve(opts: &ReproOptions) -> Result<(bool, String)> {
    let spec0 = EnsembleSpec::regular(3, 6, 1)?;
    let params = scaling_params(&spec0, OMEGA)?;
    let mut sups = Vec::new();
    for n in CURVE_NS {
        let spec = spec0.with_n(n)?;
        let half = CURVE_SPAN_ALPHAS * params.alpha_rand / (n as f64).sqrt();
        let grid: Vec<f64> = (0..CURVE_POINTS)
            .map(|i| params.eps_star - half + 2.0 * half * i as f64 / (CURVE_POINTS - 1) as f64)
            .collect();
        let mc = mc_curve(
            &spec,
            &grid,
            opts.trials(CURVE_TRIALS),
            &McOptions { gamma: DEFAULT_GAMMA, channel: ChannelKind::Rand, seed: opts.seed ^ n as u64 },
        )?;
        let form = ScalingForm::new(params.eps_star, params.alpha_rand, params.beta, n, FormKind::Refined)?;
        let pred = predict_curve(&form, &grid)?;
        let sup = mc
            .rows
            .iter()
            .zip(&pred)
            .map(|(m, p)| (m.p_block_gamma() - p.p_block).abs())
            .fold(0.0, f64::max);
        sups.push((n, sup));
    }
    let ok = sups.iter().all(|s| s.1 <= CURVE_SUP_TOL);
    let detail = sups.iter().map(|(n, s)| format!("n={n} sup={s:.4}")).collect::<Vec<_>>().join(", ");
    Ok((ok, format!("{detail} (tol {CURVE_SUP_TOL})")))
}

/// Union of all stopping sets inside the erased mask, by subset search.
fn max_stopping_subset(g: &TannerGraph, erased: u32) -> u32 {
    let mut union = 0u32;
    let mut sub = erased;
    let mut deg = vec![0u32; g.num_checks()];
    while sub != 0 {
        deg.iter_mut().for_each(|d| *d = 0);
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

/// Peeling residual equals the largest stopping set for every erasure
/// pattern of a few small graphs.
fn stopping_set_oracle(seed: u64) -> Result<bool> {
    let specs = [
        EnsembleSpec::regular_poisson(2, 0.5, ORACLE_N)?,
        EnsembleSpec::regular(3, 6, ORACLE_N)?,
        EnsembleSpec::regular(3, 4, ORACLE_N)?,
    ];
    let mut peeler = Peeler::new();
    for (lane, spec) in specs.iter().enumerate() {
        let sampler = GraphSampler::new(spec)?;
        for k in 0..4 {
            let mut rng = trial_rng(seed, 1000 + lane as u64, k);
            let g = sampler.sample(&mut rng);
            for mask in 0u32..(1 << ORACLE_N) {
                let erased: Vec<u32> = (0..ORACLE_N as u32).filter(|v| mask >> v & 1 == 1).collect();
                peeler.peel(&g, &erased, &mut rng);
                let residual = peeler.residual_vars().iter().fold(0u32, |acc, &v| acc | 1 << v);
                if residual != max_stopping_subset(&g, mask) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

fn cycle_exactness(opts: &ReproOptions) -> Result<(bool, String)> {
    let spec = EnsembleSpec::regular_poisson(2, CYCLE_RATE, CYCLE_N)?;
    let exact = exact_block_curve(CYCLE_N, CYCLE_RATE, &CYCLE_ERASURES)?;
    let grid: Vec<f64> = CYCLE_ERASURES.iter().map(|&e| e as f64 / CYCLE_N as f64).collect();
    let mc = mc_curve(
        &spec,
        &grid,
        opts.trials(CYCLE_TRIALS),
        &McOptions { gamma: DEFAULT_GAMMA, channel: ChannelKind::Exact, seed: opts.seed },
    )?;
    let mut worst: f64 = 0.0;
    for (row, ex) in mc.rows.iter().zip(&exact) {
        worst = worst.max((row.p_block() - ex).abs() / row.p_block_se());
    }
    let oracle = stopping_set_oracle(opts.seed)?;
    Ok((
        worst <= CYCLE_SIGMAS && oracle,
        format!("worst deviation {worst:.2} SE at 5 points; stopping-set oracle {}", if oracle { "agrees" } else { "DISAGREES" }),
    ))
}

/// Least-squares slope of `ln y` against `ln x`.
fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let k = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn cycle_order() -> Result<(bool, String)> {
    let eps_star = (1.0 - CYCLE_RATE) / 2.0;
    let mut gaps = Vec::new();
    for n in ORDER_NS {
        let e = (n as f64 * eps_star).round() as usize;
        let exact = exact_block_prob(n, CYCLE_RATE, e)?;
        let approx = block_scaling_approx(n, CYCLE_RATE, 0, eps_star, false)?.value;
        gaps.push((n as f64, (exact - approx).abs()));
    }
    let slope = loglog_slope(&gaps);
    let mass = stable_density_mass();
    let ok = (slope - ORDER_SLOPE).abs() <= ORDER_SLOPE_TOL && (mass - 1.0).abs() <= MASS_TOL;
    let listed = gaps.iter().map(|(n, g)| format!("{n}:{g:.3e}")).collect::<Vec<_>>().join(" ");
    Ok((ok, format!("slope {slope:.3} (target -1/3 ± {ORDER_SLOPE_TOL}); gaps {listed}; density mass {mass:.7}")))
}

fn error_floor(opts: &ReproOptions) -> Result<(bool, String)> {
    let mut ok = true;
    let mut parts = Vec::new();
    for s in FLOOR_S {
        let spec = EnsembleSpec::regular_poisson(2, CYCLE_RATE, FLOOR_N)?.with_expurgation(s);
        let mc = mc_curve(
            &spec,
            &[FLOOR_EPS],
            opts.trials(FLOOR_TRIALS),
            &McOptions { gamma: DEFAULT_GAMMA, channel: ChannelKind::Rand, seed: opts.seed.wrapping_add(s as u64) },
        )?;
        let row = &mc.rows[0];
        let floor = error_floor_bit(FLOOR_N, FLOOR_EPS, CYCLE_RATE, s)?;
        let dev = (row.p_bit() - floor) / row.p_bit_se();
        ok &= dev.abs() <= FLOOR_SIGMAS;
        parts.push(format!("s={s}: MC {:.4e} ± {:.1e}, formula {floor:.4e} ({dev:+.1} SE)", row.p_bit(), row.p_bit_se()));
    }
    Ok((ok, parts.join("; ")))
}

fn shannon() -> Result<(bool, String)> {
    let grid: Vec<f64> = (0..SHANNON_GRID).map(|i| i as f64 / (SHANNON_GRID - 1) as f64).collect();
    let a = shannon_exact(SHANNON_NS.0, SHANNON_RATE, &grid)?;
    let b = shannon_exact(SHANNON_NS.1, SHANNON_RATE, &grid)?;
    let ratio = b.max_gap / a.max_gap;
    Ok((
        ratio >= SHANNON_RATIO.0 && ratio <= SHANNON_RATIO.1,
        format!(
            "gap n={}: {:.4e}, n={}: {:.4e}, ratio {ratio:.3} (target [{}, {}])",
            SHANNON_NS.0, a.max_gap, SHANNON_NS.1, b.max_gap, SHANNON_RATIO.0, SHANNON_RATIO.1
        ),
    ))
}
