//! Scaling-law predictions of the waterfall curve, the random parity-check
//! benchmark, and least-squares fitting of the scaling parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::optim::nelder_mead;
use crate::numerics::{ln_binomial, q_function};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FormKind {
    /// `Q(√n (ε* - ε)/α)`.
    Basic,
    /// `Q(√n (ε* - β n^{-2/3} - ε)/α)`.
    #[default]
    Refined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingForm {
    pub eps_star: f64,
    pub alpha: f64,
    pub beta: f64,
    pub n: usize,
    pub kind: FormKind,
    /// Multiplier turning the block curve into a bit curve.
    pub nu_star: Option<f64>,
}

impl ScalingForm {
    pub fn new(eps_star: f64, alpha: f64, beta: f64, n: usize, kind: FormKind) -> Result<Self> {
        let form = ScalingForm { eps_star, alpha, beta, n, kind, nu_star: None };
        form.validate()?;
        Ok(form)
    }

    pub fn with_nu_star(mut self, nu_star: f64) -> Self {
        self.nu_star = Some(nu_star);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.n == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        if !self.eps_star.is_finite() || !self.beta.is_finite() {
            return Err(Error::InvalidArgument("non-finite scaling parameter".into()));
        }
        Ok(())
    }

    /// Threshold shift `β n^{-2/3}`, zero for the basic form.
    pub fn shift(&self) -> f64 {
        match self.kind {
            FormKind::Basic => 0.0,
            FormKind::Refined => self.beta * (self.n as f64).powf(-2.0 / 3.0),
        }
    }

    /// Scaling variable `√n (ε* - shift - ε)`.
    pub fn z(&self, eps: f64) -> f64 {
        (self.n as f64).sqrt() * (self.eps_star - self.shift() - eps)
    }

    pub fn block(&self, eps: f64) -> f64 {
        q_function(self.z(eps) / self.alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PredictionRow {
    pub eps: f64,
    pub p_block: f64,
    pub p_bit: Option<f64>,
}

pub fn predict_curve(form: &ScalingForm, eps_grid: &[f64]) -> Result<Vec<PredictionRow>> {
    form.validate()?;
    Ok(eps_grid
        .iter()
        .map(|&eps| {
            let p_block = form.block(eps);
            PredictionRow { eps, p_block, p_bit: form.nu_star.map(|nu| nu * p_block) }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShannonRow {
    pub eps: f64,
    pub exact: f64,
    pub q_approx: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShannonCurve {
    pub n: usize,
    pub rate: f64,
    pub rows: Vec<ShannonRow>,
    /// Largest `|exact - q_approx|` over the grid.
    pub max_gap: f64,
}

/// Expected block erasure probability of the random parity-check ensemble
/// with `n r̄` checks, and its Gaussian approximation
/// `Q(√n (r̄ - ε)/√(r̄(1-r̄)))`.
pub fn shannon_exact(n: usize, rate: f64, eps_grid: &[f64]) -> Result<ShannonCurve> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("rate {rate} outside [0, 1)")));
    }
    let mf = n as f64 * (1.0 - rate);
    let m = mf.round() as usize;
    if (mf - m as f64).abs() > 1e-9 * mf.max(1.0) {
        return Err(Error::InvalidArgument(format!("n r̄ = {mf} is not an integer")));
    }
    // fail[E] = 1 - Π_{i<E} (1 - 2^{i-m}); erasures beyond m always fail
    let mut fail = vec![1.0; n + 1];
    let mut ln_ok: f64 = 0.0;
    for (e, slot) in fail.iter_mut().enumerate().take(m.min(n) + 1) {
        *slot = -ln_ok.exp_m1();
        if e < m {
            ln_ok += (-(2f64.powi(e as i32 - m as i32))).ln_1p();
        }
    }
    let eps_star = 1.0 - rate;
    let sd = (eps_star * (1.0 - eps_star)).sqrt();
    let nf = n as f64;
    let mut rows = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::InvalidArgument(format!("erasure probability {eps} outside [0, 1]")));
        }
        let exact = if eps == 0.0 {
            fail[0]
        } else if eps == 1.0 {
            fail[n]
        } else {
            let (le, l1) = (eps.ln(), (-eps).ln_1p());
            (0..=n)
                .map(|e| {
                    let ef = e as f64;
                    (ln_binomial(nf, ef) + ef * le + (nf - ef) * l1).exp() * fail[e]
                })
                .sum::<f64>()
                .min(1.0)
        };
        let q_approx = q_function(nf.sqrt() * (eps_star - eps) / sd);
        rows.push(ShannonRow { eps, exact, q_approx });
    }
    let max_gap = rows.iter().map(|r| (r.exact - r.q_approx).abs()).fold(0.0, f64::max);
    Ok(ShannonCurve { n, rate, rows, max_gap })
}

/// One empirical point: distance to the anchor (`ε* - ε` for the erasure
/// channel, a capacity difference for other channels), estimate and its
/// standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub offset: f64,
    pub p: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Fix `β` instead of fitting it.
    pub freeze_beta: Option<f64>,
    pub alpha0: f64,
    pub beta0: f64,
    pub restarts: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { freeze_beta: None, alpha0: 0.25, beta0: 0.6, restarts: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResult {
    pub alpha: f64,
    pub beta: f64,
    /// Weighted sum of squared residuals at the optimum.
    pub residual: f64,
    pub converged: bool,
}

/// Weighted least squares for `Q(√n (d_i - β n^{-2/3})/α) ≈ P̂_i` where
/// `d_i` is the anchor offset of point `i`. Weights are inverse squared
/// standard errors, with zero errors raised to the smallest positive one.
pub fn fit_offsets(points: &[FitPoint], n: usize, opts: &FitOptions) -> Result<FitResult> {
    let interior = points.iter().filter(|p| p.p > 0.0 && p.p < 1.0).count();
    if interior < 4 {
        return Err(Error::InvalidArgument(format!(
            "curve cannot be fitted: {interior} points strictly inside (0, 1), need 4"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let floor = points
        .iter()
        .map(|p| p.se)
        .filter(|&s| s > 0.0 && s.is_finite())
        .fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { 1.0 };
    let weights: Vec<f64> = points.iter().map(|p| 1.0 / p.se.max(floor).powi(2)).collect();
    let sqrt_n = (n as f64).sqrt();
    let shift_scale = (n as f64).powf(-2.0 / 3.0);
    let objective = |alpha: f64, beta: f64| -> f64 {
        points
            .iter()
            .zip(&weights)
            .map(|(p, w)| {
                let q = q_function(sqrt_n * (p.offset - beta * shift_scale) / alpha);
                w * (q - p.p).powi(2)
            })
            .sum()
    };
    // α enters through its logarithm to stay positive
    let (x0, step): (Vec<f64>, Vec<f64>) = match opts.freeze_beta {
        Some(_) => (vec![opts.alpha0.ln()], vec![0.2]),
        None => (vec![opts.alpha0.ln(), opts.beta0], vec![0.2, 0.2]),
    };
    let unpack = |x: &[f64]| -> (f64, f64) { (x[0].exp(), opts.freeze_beta.unwrap_or_else(|| x[1])) };
    let f = |x: &[f64]| {
        let (a, b) = unpack(x);
        objective(a, b)
    };
    let mut best = nelder_mead(&f, &x0, &step, 1e-15, 1e-12, 20_000);
    for _ in 0..opts.restarts {
        let restart_step: Vec<f64> = step.iter().map(|s| s * 0.25).collect();
        let next = nelder_mead(&f, &best.x, &restart_step, 1e-15, 1e-12, 20_000);
        let stalled = next.value >= best.value * (1.0 - 1e-12);
        if next.value <= best.value {
            best = next;
        }
        if stalled {
            break;
        }
    }
    let (alpha, beta) = unpack(&best.x);
    Ok(FitResult { alpha, beta, residual: best.value, converged: best.converged })
}

/// [`fit_offsets`] with offsets `ε* - ε_i` built from a channel-parameter
/// grid.
pub fn fit_alpha_beta(eps: &[f64], p: &[f64], se: &[f64], eps_star: f64, n: usize, opts: &FitOptions) -> Result<FitResult> {
    if eps.len() != p.len() || eps.len() != se.len() {
        return Err(Error::InvalidArgument("curve columns differ in length".into()));
    }
    let points: Vec<FitPoint> = eps
        .iter()
        .zip(p)
        .zip(se)
        .map(|((&e, &p), &se)| FitPoint { offset: eps_star - e, p, se })
        .collect();
    fit_offsets(&points, n, opts)
}
