//! Dormand-Prince 5(4) integrator with adaptive step control.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// difference between the 5th and embedded 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub h_max: f64,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Dopri5 { rtol: 1e-9, atol: 1e-12, max_steps: 1_000_000, h_max: f64::INFINITY }
    }
}

impl Dopri5 {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Dopri5 { rtol, atol, ..Default::default() }
    }

    /// Integrates `y' = f(t, y)` from `t0` to each of `stops` (increasing,
    /// all greater than `t0`), returning the state at every stop. Steps are
    /// clipped so each stop is hit exactly.
    pub fn solve<F>(&self, mut f: F, t0: f64, y0: &[f64], stops: &[f64]) -> Result<Vec<Vec<f64>>>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    {
        let dim = y0.len();
        let mut y = y0.to_vec();
        let mut t = t0;
        let mut k: Vec<Vec<f64>> = vec![vec![0.0; dim]; 7];
        let mut tmp = vec![0.0; dim];
        let mut y_new = vec![0.0; dim];
        let mut out = Vec::with_capacity(stops.len());
        let mut steps = 0usize;

        f(t, &y, &mut k[0])?;
        let mut h = self.initial_step(&mut f, t, &y, &k[0], stops.last().copied().unwrap_or(t0))?;

        for &stop in stops {
            if stop < t {
                return Err(Error::InvalidArgument("integration stops must increase".into()));
            }
            while t < stop {
                steps += 1;
                if steps > self.max_steps {
                    return Err(Error::Numerical(format!("step limit reached at t = {t}")));
                }
                let last = t + h >= stop;
                let hh = if last { stop - t } else { h };

                for i in 0..dim {
                    tmp[i] = y[i] + hh * A21 * k[0][i];
                }
                f(t + C2 * hh, &tmp, &mut k[1])?;
                for i in 0..dim {
                    tmp[i] = y[i] + hh * (A31 * k[0][i] + A32 * k[1][i]);
                }
                f(t + C3 * hh, &tmp, &mut k[2])?;
                for i in 0..dim {
                    tmp[i] = y[i] + hh * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i]);
                }
                f(t + C4 * hh, &tmp, &mut k[3])?;
                for i in 0..dim {
                    tmp[i] = y[i]
                        + hh * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
                }
                f(t + C5 * hh, &tmp, &mut k[4])?;
                for i in 0..dim {
                    tmp[i] = y[i]
                        + hh * (A61 * k[0][i]
                            + A62 * k[1][i]
                            + A63 * k[2][i]
                            + A64 * k[3][i]
                            + A65 * k[4][i]);
                }
                f(t + hh, &tmp, &mut k[5])?;
                for i in 0..dim {
                    y_new[i] = y[i]
                        + hh * (A71 * k[0][i]
                            + A73 * k[2][i]
                            + A74 * k[3][i]
                            + A75 * k[4][i]
                            + A76 * k[5][i]);
                }
                f(t + hh, &y_new, &mut k[6])?;

                let mut err = 0.0;
                for i in 0..dim {
                    let e = hh
                        * (E1 * k[0][i]
                            + E3 * k[2][i]
                            + E4 * k[3][i]
                            + E5 * k[4][i]
                            + E6 * k[5][i]
                            + E7 * k[6][i]);
                    let sc = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
                    err += (e / sc) * (e / sc);
                }
                let err = (err / dim as f64).sqrt();
                if !err.is_finite() {
                    return Err(Error::Numerical(format!("non-finite error estimate at t = {t}")));
                }

                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if err <= 1.0 {
                    t = if last { stop } else { t + hh };
                    std::mem::swap(&mut y, &mut y_new);
                    k.swap(0, 6);
                    // a clipped final step says nothing about the natural step size
                    if !last {
                        h = (hh * factor).min(self.h_max);
                    }
                } else {
                    h = hh * factor.min(1.0);
                }
                if h < 1e-14 * t.abs().max(1.0) {
                    return Err(Error::Numerical(format!("step size underflow at t = {t}")));
                }
            }
            out.push(y.clone());
        }
        Ok(out)
    }

    fn initial_step<F>(&self, f: &mut F, t: f64, y: &[f64], dy: &[f64], t_end: f64) -> Result<f64>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    {
        let span = (t_end - t).abs();
        if span == 0.0 {
            return Ok(1.0);
        }
        let dim = y.len();
        let sc: Vec<f64> = y.iter().map(|v| self.atol + self.rtol * v.abs()).collect();
        let d0 = (y.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / dim as f64).sqrt();
        let d1 = (dy.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / dim as f64).sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(span);
        let y1: Vec<f64> = y.iter().zip(dy).map(|(v, d)| v + h0 * d).collect();
        let mut dy1 = vec![0.0; dim];
        f(t + h0, &y1, &mut dy1)?;
        let d2 = (dy1
            .iter()
            .zip(dy)
            .zip(&sc)
            .map(|((a, b), s)| ((a - b) / s).powi(2))
            .sum::<f64>()
            / dim as f64)
            .sqrt()
            / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        Ok((100.0 * h0).min(h1).min(span).min(self.h_max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let solver = Dopri5::new(1e-10, 1e-13);
        let stops = [0.5, 1.0, 2.0];
        let out = solver
            .solve(
                |_t, y, dy| {
                    dy[0] = -y[0];
                    dy[1] = y[0];
                    Ok(())
                },
                0.0,
                &[1.0, 0.0],
                &stops,
            )
            .unwrap();
        for (s, y) in stops.iter().zip(&out) {
            assert!((y[0] - (-s).exp()).abs() < 1e-9);
            assert!((y[1] - (1.0 - (-s).exp())).abs() < 1e-9);
        }
    }

    #[test]
    fn harmonic_oscillator_energy() {
        let solver = Dopri5::new(1e-11, 1e-13);
        let out = solver
            .solve(
                |_t, y, dy| {
                    dy[0] = y[1];
                    dy[1] = -y[0];
                    Ok(())
                },
                0.0,
                &[1.0, 0.0],
                &[10.0],
            )
            .unwrap();
        assert!((out[0][0] - 10f64.cos()).abs() < 1e-8);
        assert!((out[0][1] + 10f64.sin()).abs() < 1e-8);
    }

    #[test]
    fn rhs_errors_propagate() {
        let solver = Dopri5::default();
        let r = solver.solve(
            |t, _y, _dy| {
                if t > 0.3 {
                    Err(Error::Numerical("boom".into()))
                } else {
                    Ok(())
                }
            },
            0.0,
            &[0.0],
            &[1.0],
        );
        assert!(r.is_err());
    }
}
