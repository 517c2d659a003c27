//! Small numerical toolbox: ODE integration, quadrature, scalar root finding
//! and minimization, and a simplex optimizer.

pub mod ode;
pub mod optim;
pub mod quad;

/// Gaussian tail probability `Q(z) = P(N(0,1) > z)`.
pub fn q_function(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// `ln C(n, k)` for real-valued arguments.
pub fn ln_binomial(n: f64, k: f64) -> f64 {
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

/// Binomial coefficient as a float. Exact for the small arguments used in
/// degree-profile sums.
pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Integer power with a non-negative exponent; `powi` with `0^0 = 1`.
#[inline]
pub fn ipow(x: f64, e: u32) -> f64 {
    x.powi(e as i32)
}
