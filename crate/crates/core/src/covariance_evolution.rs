//! Mean and covariance evolution of the peeling decoder state `(ν, σ, τ)`
//! for regular ensembles, and the scaling parameters derived from it.
//!
//! The state is tracked against a clock `T` with `ν = ε - T`: every decoding
//! step removes exactly one variable. The covariance is a 3x3 matrix in the
//! order `(ν, σ, τ)`; under the exact-erasure channel the `ν` row and
//! column stay zero.

use serde::Serialize;

use crate::density_evolution::{critical_data, profile_at, CriticalData};
use crate::ensembles::EnsembleSpec;
use crate::error::{Error, Result};
use crate::numerics::ode::Dopri5;
use crate::numerics::optim::newton_bracketed;
use crate::numerics::{binomial, ipow};

/// Documented value of the universal constant entering the shift parameter.
pub const OMEGA: f64 = 1.00;

/// Value of the universal shift constant used by [`beta`].
pub fn omega_constant() -> f64 {
    OMEGA
}

/// Regular ensemble reduced to what the rate coefficients need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularModel {
    /// Variable degree.
    pub l: u32,
    /// Check degree; `None` for the Poisson ensemble.
    pub r: Option<u32>,
    /// `1 - rate`.
    pub rbar: f64,
}

/// Upper end of the `a(z)` inversion bracket for the Poisson generator.
const POISSON_Z_MAX: f64 = 600.0;
/// Lower end of the bracket; below it `a(z)` is linear to machine precision.
const Z_MIN: f64 = 1e-10;

impl RegularModel {
    pub fn from_spec(spec: &EnsembleSpec) -> Result<Self> {
        let (l, r) = spec.regular_degrees().ok_or(Error::NotRegular)?;
        if l < 2 {
            return Err(Error::InvalidEnsemble("variable degree must be at least 2".into()));
        }
        let model = RegularModel { l, r, rbar: spec.design_rate().1 };
        model.check_generator_monotone()?;
        Ok(model)
    }

    fn p2(&self) -> f64 {
        match self.r {
            Some(r) => binomial(r, 2),
            None => 0.5,
        }
    }

    /// `(p, p', p'')` of the generator `(1+z)^r - 1 - rz` or `e^z - 1 - z`.
    fn generator(&self, z: f64) -> (f64, f64, f64) {
        match self.r {
            Some(r) => {
                let (mut p, mut dp, mut ddp) = (0.0, 0.0, 0.0);
                for i in 2..=r {
                    let c = binomial(r, i);
                    p += c * ipow(z, i);
                    dp += c * i as f64 * ipow(z, i - 1);
                    ddp += c * (i * (i - 1)) as f64 * ipow(z, i - 2);
                }
                (p, dp, ddp)
            }
            None => {
                if z < 0.1 {
                    // series avoids the cancellation in e^z - 1 - z
                    let mut p = 0.0;
                    let mut term = z;
                    for k in 2..30 {
                        term *= z / k as f64;
                        p += term;
                    }
                    (p, z + p, 1.0 + z + p)
                } else {
                    (z.exp_m1() - z, z.exp_m1(), z.exp())
                }
            }
        }
    }

    /// `a(z) = z p'(z) / p(z)` and its derivative.
    fn a_and_derivative(&self, z: f64) -> (f64, f64) {
        let (p, dp, ddp) = self.generator(z);
        let a = z * dp / p;
        let da = (dp + z * ddp) / p - z * dp * dp / (p * p);
        (a, da)
    }

    fn a_range(&self) -> (f64, f64) {
        (2.0, self.r.map_or(f64::INFINITY, |r| r as f64))
    }

    fn z_upper(&self) -> f64 {
        match self.r {
            Some(_) => 1e8,
            None => POISSON_Z_MAX,
        }
    }

    fn check_generator_monotone(&self) -> Result<()> {
        let mut prev = 2.0;
        let zmax = self.z_upper();
        for i in 0..=400 {
            let z = 1e-6 * (zmax / 1e-6f64).powf(i as f64 / 400.0);
            let (a, _) = self.a_and_derivative(z);
            if a < prev - 1e-9 {
                return Err(Error::Numerical(format!("a(z) not increasing near z = {z}")));
            }
            prev = a;
        }
        Ok(())
    }

    /// Solves `a(z) = target` for `z > 0`.
    fn invert_a(&self, target: f64) -> Result<f64> {
        let (amin, amax) = self.a_range();
        if !(target > amin && target < amax) {
            return Err(Error::InfeasibleState(format!(
                "a(z) target {target} outside ({amin}, {amax})"
            )));
        }
        let hi = self.z_upper();
        if self.a_and_derivative(hi).0 <= target {
            return Err(Error::InfeasibleState(format!("a(z) target {target} beyond bracket")));
        }
        // a(z) ≈ 2 + z (r-2)/3 near zero for both generators
        let slope = self.r.map_or(1.0 / 3.0, |r| (r as f64 - 2.0) / 3.0);
        let guess = (target - 2.0) / slope;
        let lo = Z_MIN;
        if self.a_and_derivative(lo).0 >= target {
            return Ok(guess.min(lo));
        }
        newton_bracketed(
            |z| {
                let (a, da) = self.a_and_derivative(z);
                (a - target, da)
            },
            lo,
            hi,
            guess,
            1e-14,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateCoefficients {
    pub f_sigma: f64,
    pub f_tau: f64,
    pub f_ss: f64,
    pub f_st: f64,
    pub f_tt: f64,
    /// `∂f_σ/∂(ν, σ, τ)`.
    pub jac_sigma: [f64; 3],
    /// `∂f_τ/∂(ν, σ, τ)`.
    pub jac_tau: [f64; 3],
    /// Root of `a(z) = (νl - σ)/τ`.
    pub z_gen: f64,
}

/// Drift, diffusion and drift Jacobian per removed variable at state
/// `(ν, σ, τ)`.
///
/// The residual checks of degree at least two follow the dominant type with
/// generating function `p(z)`; `z` is fixed by matching the mean check
/// degree `(νl - σ)/τ`.
pub fn rate_coefficients(model: &RegularModel, nu: f64, sigma: f64, tau: f64) -> Result<RateCoefficients> {
    if !(nu > 0.0 && tau > 0.0) {
        return Err(Error::InfeasibleState(format!("need ν > 0 and τ > 0, got ν = {nu}, τ = {tau}")));
    }
    let l = model.l as f64;
    let lm1 = l - 1.0;
    let target = (nu * l - sigma) / tau;
    let z = model.invert_a(target)?;
    let (p, dp, ddp) = model.generator(z);
    let a = z * dp / p;
    let da = (dp + z * ddp) / p - z * dp * dp / (p * p);
    let p2 = model.p2();

    let tau2 = p2 * z * z / p * tau;
    let edges = nu * l;
    let q1 = sigma / edges;
    let f_tau = -lm1 * 2.0 * tau2 / edges;
    let f_sigma = -1.0 - lm1 * q1 - f_tau;
    let f_tt = -f_tau * (1.0 + f_tau / lm1);
    let f_st = f_tau * (1.0 - (f_sigma + 1.0) / lm1);
    let f_ss = -f_tau * f_tau / lm1 - lm1 * (q1 - 1.0) * q1 - f_tau * (1.0 + 2.0 * q1);

    let k = p2 * z * (2.0 - a) / (da * p);
    let pref = 2.0 * lm1 / edges;
    let dft_dsigma = pref * k;
    let dft_dnu = -pref * (-tau2 / nu + k * l);
    let dft_dtau = -pref * (tau2 / tau - k * a);
    let dfs_dnu = lm1 * sigma / (l * nu * nu) - dft_dnu;
    let dfs_dsigma = -lm1 / edges - dft_dsigma;
    let dfs_dtau = -dft_dtau;

    Ok(RateCoefficients {
        f_sigma,
        f_tau,
        f_ss,
        f_st,
        f_tt,
        jac_sigma: [dfs_dnu, dfs_dsigma, dfs_dtau],
        jac_tau: [dft_dnu, dft_dsigma, dft_dtau],
        z_gen: z,
    })
}

/// Mean state and normalized covariance along the decoding trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvolutionState {
    pub nu: f64,
    pub sigma: f64,
    pub tau: f64,
    /// Normalized covariance in the order `(ν, σ, τ)`.
    pub cov: [[f64; 3]; 3],
    /// Elapsed decoding time, `ε - ν`.
    pub clock: f64,
}

impl EvolutionState {
    pub fn d_ss(&self) -> f64 {
        self.cov[1][1]
    }
    pub fn d_st(&self) -> f64 {
        self.cov[1][2]
    }
    pub fn d_tt(&self) -> f64 {
        self.cov[2][2]
    }

    fn from_parts(eps: f64, clock: f64, y: &[f64]) -> Self {
        let mut cov = [[0.0; 3]; 3];
        cov[1][1] = y[2];
        cov[1][2] = y[3];
        cov[2][1] = y[3];
        cov[2][2] = y[4];
        EvolutionState { nu: eps - clock, sigma: y[0], tau: y[1], cov, clock }
    }

    /// Smallest eigenvalue of the `(σ, τ)` covariance block (the `ν` row is
    /// identically zero).
    pub fn min_cov_eigenvalue(&self) -> f64 {
        let (a, b, d) = (self.d_ss(), self.d_st(), self.d_tt());
        let mean = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        mean - rad
    }
}

/// Initial mean and covariance under the exact-erasure channel with
/// erasure fraction `eps`.
pub fn initial_moments(model: &RegularModel, eps: f64) -> EvolutionState {
    let l = model.l as f64;
    let (s, t, ss, st, tt) = match model.r {
        Some(r) => {
            let rf = r as f64;
            let eb = 1.0 - eps;
            let ebr1 = ipow(eb, r - 1);
            let ebr2 = ipow(eb, r - 2);
            let s = l * eps * ebr1;
            let t = l / rf * (1.0 - ipow(eb, r) - rf * eps * ebr1);
            let ss = l * eps * ebr1 * (1.0 - ebr2 * (1.0 + eps * ((rf - 1.0) * eps - 1.0) * rf));
            let st = -l * eps * ebr1 * (1.0 - ebr2 * (1.0 + eps * ((rf - 1.0) * (rf - 1.0) * eps - 1.0)));
            let tt = l * ebr1 / rf
                * (1.0 + (rf - 1.0) * eps
                    - ebr2
                        * (1.0
                            + eps
                                * (2.0 * rf - 3.0
                                    + (rf - 3.0) * (rf - 1.0) * eps
                                    + (rf - 1.0).powi(3) * eps * eps)));
            (s, t, ss, st, tt)
        }
        None => {
            let rb = model.rbar;
            let mu = l * eps / rb;
            let e1 = (-mu).exp();
            let e2 = (-2.0 * mu).exp();
            let s = mu * e1;
            let t = 1.0 - e1 - mu * e1;
            let ss = mu * e1 - mu * (1.0 - mu + mu * mu) * e2;
            let st = -mu * e1 + mu * (1.0 + mu * mu) * e2;
            let tt = (1.0 + mu) * e1 - (1.0 + 2.0 * mu + mu * mu + mu.powi(3)) * e2;
            (rb * s, rb * t, rb * ss, rb * st, rb * tt)
        }
    };
    EvolutionState::from_parts(eps, 0.0, &[s, t, ss, st, tt])
}

#[derive(Debug, Clone, Copy)]
pub struct IntegrationOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Number of evenly spaced checkpoints returned (at least two).
    pub checkpoints: usize,
    /// Blocklength used only for the trajectory-died diagnostic.
    pub n_ref: f64,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        IntegrationOptions { rtol: 1e-9, atol: 1e-13, checkpoints: 101, n_ref: 1024.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub eps: f64,
    pub states: Vec<EvolutionState>,
    /// First checkpoint `ν` at which the mean of `σ` fell below
    /// `-10 sqrt(δ_σσ / n_ref)`.
    pub died_at: Option<f64>,
}

impl Trajectory {
    pub fn last(&self) -> &EvolutionState {
        self.states.last().expect("trajectory has at least one state")
    }
}

/// Integrates mean and covariance from `ν = eps` down to `nu_end`, returning
/// states at evenly spaced checkpoints (endpoints included).
pub fn integrate_trajectory(
    model: &RegularModel,
    eps: f64,
    nu_end: f64,
    opts: &IntegrationOptions,
) -> Result<Trajectory> {
    let span = eps - nu_end;
    if !(span > 0.0) {
        return Err(Error::InvalidArgument(format!("ν must decrease: from {eps} to {nu_end}")));
    }
    let count = opts.checkpoints.max(2);
    let stops: Vec<f64> = (1..count).map(|i| span * i as f64 / (count - 1) as f64).collect();
    integrate_to_clocks(model, eps, &stops, opts)
}

/// Same as [`integrate_trajectory`] with explicit clock values `ε - ν`.
pub fn integrate_to_clocks(
    model: &RegularModel,
    eps: f64,
    clocks: &[f64],
    opts: &IntegrationOptions,
) -> Result<Trajectory> {
    let init = initial_moments(model, eps);
    let y0 = [init.sigma, init.tau, init.d_ss(), init.d_st(), init.d_tt()];
    let solver = Dopri5::new(opts.rtol, opts.atol);
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let c = rate_coefficients(model, eps - t, y[0], y[1])?;
        let (dss, dst, dtt) = (y[2], y[3], y[4]);
        let [_, js_s, js_t] = c.jac_sigma;
        let [_, jt_s, jt_t] = c.jac_tau;
        dy[0] = c.f_sigma;
        dy[1] = c.f_tau;
        // dδ = F + δAᵀ + Aδ restricted to the (σ, τ) block; the ν column of
        // the Jacobian multiplies zero covariance entries
        dy[2] = c.f_ss + 2.0 * (js_s * dss + js_t * dst);
        dy[3] = c.f_st + js_s * dst + js_t * dtt + jt_s * dss + jt_t * dst;
        dy[4] = c.f_tt + 2.0 * (jt_s * dst + jt_t * dtt);
        Ok(())
    };
    let ys = solver.solve(rhs, 0.0, &y0, clocks)?;
    let mut states = vec![init];
    let mut died_at = None;
    for (&clock, y) in clocks.iter().zip(&ys) {
        let st = EvolutionState::from_parts(eps, clock, y);
        if died_at.is_none() && st.sigma < -10.0 * (st.d_ss().max(0.0) / opts.n_ref).sqrt() {
            died_at = Some(st.nu);
        }
        states.push(st);
    }
    Ok(Trajectory { eps, states, died_at })
}

/// Integrates at `eps` down to the critical residual size `ν*(ε*)` of the
/// threshold trajectory.
pub fn integrate_to_critical(spec: &EnsembleSpec, eps: f64, opts: &IntegrationOptions) -> Result<Trajectory> {
    let model = RegularModel::from_spec(spec)?;
    let cd = critical_data(spec)?;
    integrate_trajectory(&model, eps, cd.nu_star, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingParams {
    pub eps_star: f64,
    pub x_star: f64,
    pub nu_star: f64,
    pub dsigma_deps: f64,
    pub delta_ss: f64,
    /// Variance parameter for the exact-erasure channel.
    pub alpha_exact: f64,
    /// Variance parameter for the memoryless channel.
    pub alpha_rand: f64,
    pub beta: f64,
    pub omega: f64,
}

/// `sqrt(α_exact² + ε*(1-ε*))`.
pub fn alpha_random_channel(alpha_exact: f64, eps_star: f64) -> f64 {
    (alpha_exact * alpha_exact + eps_star * (1.0 - eps_star)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaResult {
    pub critical: CriticalData,
    pub delta_ss: f64,
    pub tau_end: f64,
    pub alpha_exact: f64,
    pub alpha_rand: f64,
}

pub fn alpha_with(spec: &EnsembleSpec, opts: &IntegrationOptions) -> Result<AlphaResult> {
    let model = RegularModel::from_spec(spec)?;
    let cd = critical_data(spec)?;
    let traj = integrate_trajectory(&model, cd.eps_star, cd.nu_star, opts)?;
    let end = traj.last();
    if !(end.d_ss() >= 0.0) {
        return Err(Error::Numerical(format!("negative variance {} at the critical point", end.d_ss())));
    }
    let alpha_exact = end.d_ss().sqrt() / cd.dsigma_deps.abs();
    Ok(AlphaResult {
        critical: cd,
        delta_ss: end.d_ss(),
        tau_end: end.tau,
        alpha_exact,
        alpha_rand: alpha_random_channel(alpha_exact, cd.eps_star),
    })
}

/// `(α_exact, α_rand)` from covariance evolution to the critical point.
pub fn alpha(spec: &EnsembleSpec) -> Result<(f64, f64)> {
    let r = alpha_with(spec, &IntegrationOptions { checkpoints: 2, ..Default::default() })?;
    Ok((r.alpha_exact, r.alpha_rand))
}

/// The bracket `-∂f_σ/∂ν + ∂f_σ/∂τ f_τ` and `f_σσ` at the critical point.
fn shift_factors(model: &RegularModel, spec: &EnsembleSpec, cd: &CriticalData) -> Result<(f64, f64)> {
    let tau = profile_at(spec, cd.eps_star, cd.x_star).tau;
    let c = rate_coefficients(model, cd.nu_star, 0.0, tau)?;
    let bracket = -c.jac_sigma[0] + c.jac_sigma[2] * c.f_tau;
    Ok((bracket, c.f_ss))
}

/// Shift parameter `β = Ω · (-(f_σσ)^{2/3} B^{-1/3} / (∂σ/∂ε))` at the
/// critical point, with `B = -∂f_σ/∂ν + ∂f_σ/∂τ f_τ`.
pub fn beta(spec: &EnsembleSpec, omega: f64) -> Result<f64> {
    let model = RegularModel::from_spec(spec)?;
    let cd = critical_data(spec)?;
    let (bracket, f_ss) = shift_factors(&model, spec, &cd)?;
    if !(bracket > 0.0) || !(f_ss > 0.0) {
        return Err(Error::Numerical(format!(
            "shift factors not positive (bracket {bracket}, f_ss {f_ss})"
        )));
    }
    Ok(-omega * f_ss.powf(2.0 / 3.0) * bracket.powf(-1.0 / 3.0) / cd.dsigma_deps)
}

/// Closed form of [`beta`] for regular standard ensembles, written with the
/// check-side functions
/// `g(x) = Σ_{i≥2} i C(r,i) x^i x̄^(r-i) / Σ_{i≥2} C(r,i) x^i x̄^(r-i)` and
/// `h(x) = (l-1) 2 C(r,2) x² x̄^(r-2) / Σ_{i≥2} i C(r,i) x^i x̄^(r-i)`
/// evaluated at `x = ε* λ(x*)`.
pub fn beta_closed_form(spec: &EnsembleSpec, omega: f64) -> Result<f64> {
    let (l, r) = match spec.regular_degrees() {
        Some((l, Some(r))) => (l as f64, r),
        _ => return Err(Error::NotRegular),
    };
    let cd = critical_data(spec)?;
    let x = cd.x_r_star(spec);
    let tau = profile_at(spec, cd.eps_star, cd.x_star).tau;
    let rf = r as f64;
    let xb = 1.0 - x;
    // D = Σ_{i≥2} C x^i x̄^(r-i), N = Σ_{i≥2} i C x^i x̄^(r-i), with derivatives
    let d = 1.0 - ipow(xb, r) - rf * x * ipow(xb, r - 1);
    let dd = rf * (rf - 1.0) * x * ipow(xb, r - 2);
    let n = rf * x * (1.0 - ipow(xb, r - 1));
    let dn = rf * (1.0 - ipow(xb, r - 1)) + rf * (rf - 1.0) * x * ipow(xb, r - 2);
    let g = n / d;
    let dg = (dn * d - n * dd) / (d * d);
    let c2 = (l - 1.0) * rf * (rf - 1.0);
    let w = x * x * ipow(xb, r - 2);
    let dw = 2.0 * x * ipow(xb, r - 2) - (rf - 2.0) * x * x * ipow(xb, r.saturating_sub(3));
    let dh = c2 * (dw * n - w * dn) / (n * n);
    let bracket = (dh * g - l * dh) / (tau * dg);
    if !(bracket > 0.0) {
        return Err(Error::Numerical(format!("closed-form bracket {bracket} not positive")));
    }
    Ok(-omega * ((l - 2.0) / (l - 1.0)).powf(2.0 / 3.0) * bracket.powf(-1.0 / 3.0) / cd.dsigma_deps)
}

/// All scaling parameters of a regular ensemble.
pub fn scaling_params(spec: &EnsembleSpec, omega: f64) -> Result<ScalingParams> {
    let a = alpha_with(spec, &IntegrationOptions { checkpoints: 2, ..Default::default() })?;
    let b = beta(spec, omega)?;
    Ok(ScalingParams {
        eps_star: a.critical.eps_star,
        x_star: a.critical.x_star,
        nu_star: a.critical.nu_star,
        dsigma_deps: a.critical.dsigma_deps,
        delta_ss: a.delta_ss,
        alpha_exact: a.alpha_exact,
        alpha_rand: a.alpha_rand,
        beta: b,
        omega,
    })
}

/// Transfers Poisson-ensemble parameters computed at `rate` to `target`:
/// `ε*` and `ν*` scale with `r̄'/r̄`, `α` with its square root, `β` with its
/// cube root.
pub fn poisson_rescale(params: &ScalingParams, rate: f64, target: f64) -> Result<ScalingParams> {
    if !(target < 1.0) || !(rate < 1.0) {
        return Err(Error::InvalidArgument(format!("rates must be below one (got {rate} -> {target})")));
    }
    let k = (1.0 - target) / (1.0 - rate);
    let eps_star = params.eps_star * k;
    let alpha_exact = params.alpha_exact * k.sqrt();
    Ok(ScalingParams {
        eps_star,
        x_star: params.x_star,
        nu_star: params.nu_star * k,
        dsigma_deps: params.dsigma_deps,
        delta_ss: params.delta_ss * k,
        alpha_exact,
        alpha_rand: alpha_random_channel(alpha_exact, eps_star),
        beta: params.beta * k.cbrt(),
        omega: params.omega,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density_evolution::nu_at;

    fn model36() -> (EnsembleSpec, RegularModel) {
        let spec = EnsembleSpec::regular(3, 6, 8).unwrap();
        let m = RegularModel::from_spec(&spec).unwrap();
        (spec, m)
    }

    #[test]
    fn z_matches_density_evolution() {
        let (spec, m) = model36();
        let cd = critical_data(&spec).unwrap();
        for k in 0..20 {
            let x = cd.x_star + (1.0 - cd.x_star) * k as f64 / 19.0;
            let p = profile_at(&spec, cd.eps_star, x);
            let c = rate_coefficients(&m, p.nu, p.sigma, p.tau).unwrap();
            let want = p.x_r / (1.0 - p.x_r);
            assert!((c.z_gen - want).abs() < 1e-8, "{} vs {}", c.z_gen, want);
        }
        let pspec = EnsembleSpec::regular_poisson(3, 0.5, 8).unwrap();
        let pm = RegularModel::from_spec(&pspec).unwrap();
        let pcd = critical_data(&pspec).unwrap();
        for k in 0..20 {
            let x = pcd.x_star + (1.0 - pcd.x_star) * k as f64 / 19.0;
            let p = profile_at(&pspec, pcd.eps_star, x);
            let c = rate_coefficients(&pm, p.nu, p.sigma, p.tau).unwrap();
            let want = 3.0 * p.x_r / 0.5;
            assert!((c.z_gen - want).abs() < 1e-8 * want.max(1.0));
        }
    }

    #[test]
    fn critical_point_coefficients() {
        for (l, r) in [(3, 6), (4, 6), (5, 6)] {
            let spec = EnsembleSpec::regular(l, r, 8).unwrap();
            let m = RegularModel::from_spec(&spec).unwrap();
            let cd = critical_data(&spec).unwrap();
            let tau = profile_at(&spec, cd.eps_star, cd.x_star).tau;
            let c = rate_coefficients(&m, cd.nu_star, 0.0, tau).unwrap();
            assert!((c.f_tau + 1.0).abs() < 1e-6, "f_tau {}", c.f_tau);
            assert!((c.f_ss - (l as f64 - 2.0) / (l as f64 - 1.0)).abs() < 1e-6);
        }
    }

    #[test]
    fn infeasible_targets() {
        let (_, m) = model36();
        assert!(matches!(rate_coefficients(&m, 0.2, 0.7, 0.1), Err(Error::InfeasibleState(_))));
        assert!(matches!(rate_coefficients(&m, 0.2, 0.0, 0.5), Err(Error::InfeasibleState(_))));
        assert!(rate_coefficients(&m, 0.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn initial_means_match_closed_forms() {
        let (_, m) = model36();
        let eps = 0.42944;
        let st = initial_moments(&m, eps);
        assert!((st.sigma - 3.0 * eps * (1.0 - eps).powi(5)).abs() < 1e-15);
        let pm = RegularModel { l: 4, r: None, rbar: 1.0 };
        let st = initial_moments(&pm, 0.7);
        let le: f64 = 4.0 * 0.7;
        assert!((st.tau - (1.0 - (-le).exp() - le * (-le).exp())).abs() < 1e-15);
    }

    #[test]
    fn initial_covariance_positive() {
        for l in 3..=6 {
            let m = RegularModel { l, r: Some(2 * l), rbar: 0.5 };
            for eps in [0.05, 0.3, 0.6] {
                assert!(initial_moments(&m, eps).min_cov_eigenvalue() >= -1e-12);
            }
        }
    }

    #[test]
    fn critical_trajectory() {
        let (spec, m) = model36();
        let cd = critical_data(&spec).unwrap();
        let tr = integrate_trajectory(&m, cd.eps_star, cd.nu_star, &IntegrationOptions::default()).unwrap();
        assert!(tr.last().sigma.abs() < 1e-5);
        assert!((tr.last().nu - cd.nu_star).abs() < 1e-12);
        // single interior maximum of δ_σσ, nonzero at the end
        let d: Vec<f64> = tr.states.iter().map(|s| s.d_ss()).collect();
        let imax = d.iter().enumerate().fold(0, |b, (i, &v)| if v > d[b] { i } else { b });
        assert!(imax > 0 && imax < d.len() - 1);
        assert!(d[..=imax].windows(2).all(|w| w[1] >= w[0] - 1e-12));
        assert!(d[imax..].windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(*d.last().unwrap() > 0.01);
        for s in &tr.states {
            assert!(s.min_cov_eigenvalue() >= -1e-9);
            let de_nu = s.nu;
            assert!(de_nu > 0.0);
        }
    }

    #[test]
    fn mean_trajectory_matches_density_evolution() {
        let (spec, m) = model36();
        let cd = critical_data(&spec).unwrap();
        let tr = integrate_trajectory(&m, cd.eps_star, cd.nu_star, &IntegrationOptions::default()).unwrap();
        for st in &tr.states {
            // recover x_l from ν = ε x^l
            let x = (st.nu / cd.eps_star).cbrt();
            let p = profile_at(&spec, cd.eps_star, x);
            assert!((p.nu - st.nu).abs() < 1e-12);
            assert!((p.sigma - st.sigma).abs() < 1e-7, "{} vs {}", p.sigma, st.sigma);
            assert!((p.tau - st.tau).abs() < 1e-7);
            assert!((nu_at(&spec, cd.eps_star, x) - st.nu).abs() < 1e-12);
        }
    }

    #[test]
    fn variance_vanishes_below_threshold() {
        let (spec, m) = model36();
        let eps = threshold_minus(&spec, 0.05);
        let tr = integrate_trajectory(&m, eps, 1e-2, &IntegrationOptions::default()).unwrap();
        let end = tr.last();
        let peak = tr.states.iter().map(|s| s.d_ss()).fold(0.0, f64::max);
        assert!(end.d_ss() < 0.25 * peak, "{:?} peak {peak}", end.cov);
        // decays monotonically over the tail of the trajectory
        let tail = &tr.states[tr.states.len() * 3 / 4..];
        assert!(tail.windows(2).all(|w| w[1].d_ss() <= w[0].d_ss()));
        assert!(tr.died_at.is_none());
    }

    fn threshold_minus(spec: &EnsembleSpec, d: f64) -> f64 {
        crate::density_evolution::threshold(spec).unwrap() - d
    }

    #[test]
    fn alpha_random_identity() {
        let spec = EnsembleSpec::regular(3, 6, 8).unwrap();
        let a = alpha_with(&spec, &IntegrationOptions::default()).unwrap();
        let e = a.critical.eps_star;
        assert!((a.alpha_rand.powi(2) - a.alpha_exact.powi(2) - e * (1.0 - e)).abs() < 1e-10);
    }

    #[test]
    fn alpha_converged_in_tolerance() {
        let spec = EnsembleSpec::regular(3, 6, 8).unwrap();
        let a1 = alpha_with(&spec, &IntegrationOptions::default()).unwrap().alpha_exact;
        let opts = IntegrationOptions { rtol: 5e-10, atol: 5e-14, ..Default::default() };
        let a2 = alpha_with(&spec, &opts).unwrap().alpha_exact;
        assert!((a1 - a2).abs() < 1e-6);
    }

    #[test]
    fn beta_forms_agree() {
        for (l, r) in [(3, 4), (3, 5), (3, 6), (4, 6), (6, 12)] {
            let spec = EnsembleSpec::regular(l, r, 8).unwrap();
            let a = beta(&spec, OMEGA).unwrap();
            let b = beta_closed_form(&spec, OMEGA).unwrap();
            assert!((a - b).abs() < 1e-6, "({l},{r}): {a} vs {b}");
            assert!(a > 0.0);
        }
    }

    #[test]
    fn shift_parameter_values() {
        let b = beta(&EnsembleSpec::regular(3, 6, 8).unwrap(), OMEGA).unwrap();
        assert!((b - 0.616949).abs() < 5e-3);
        let b = beta(&EnsembleSpec::regular(3, 5, 8).unwrap(), OMEGA).unwrap();
        assert!((b - 0.616196).abs() < 5e-3);
        let b = beta(&EnsembleSpec::regular_poisson(3, 0.0, 8).unwrap(), OMEGA).unwrap();
        assert!((b - 0.964528).abs() < 5e-3);
    }

    #[test]
    fn rescale_identity_and_half_rate() {
        let spec = EnsembleSpec::regular_poisson(3, 0.0, 8).unwrap();
        let p = scaling_params(&spec, OMEGA).unwrap();
        assert_eq!(poisson_rescale(&p, 0.0, 0.0).unwrap(), p);
        let h = poisson_rescale(&p, 0.0, 0.5).unwrap();
        assert!((h.eps_star - p.eps_star / 2.0).abs() < 1e-15);
        assert!(poisson_rescale(&p, 0.0, 1.0).is_err());
    }

    #[test]
    fn documented_omega() {
        assert_eq!(omega_constant(), 1.00);
    }
}
