//! Modified Bessel functions K_0 and K_{1/2}, and the Bessel sums used by the
//! capacity estimates.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::quad;

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Controls the quadrature of `K_0(t) = \int_0^\infty e^{-t cosh r} dr`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub upper_cutoff: f64,
    pub abs_tolerance: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureConfig {
    /// The cutoff 20 keeps the tail `e^{-t e^r / 2}` negligible down to `t = 1e-6`.
    fn default() -> Self {
        Self { upper_cutoff: 20.0, abs_tolerance: 1e-13, max_subdivisions: 400 }
    }
}

/// `K_0(t)` by quadrature of its integral representation.
///
/// The integrand is written as `e^{-t} e^{-t (cosh r - 1)}` and cut at the
/// first `r` with `t (cosh r - 1) >= 40 + |ln tol|`.
pub fn k0_integral(t: f64, cfg: &QuadratureConfig) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return domain(format!("k0_integral needs t > 0, got {t}"));
    }
    let tol = cfg.abs_tolerance;
    let c = 40.0 + tol.ln().abs();
    let mut cut = (1.0 + c / t).acosh();
    if cut > cfg.upper_cutoff {
        cut = cfg.upper_cutoff;
        let u = 0.5 * t * cut.exp();
        let tail = (-u).exp() / u;
        if tail > tol {
            return domain(format!(
                "t = {t} too small for upper_cutoff {}: tail bound {tail:.2e}",
                cfg.upper_cutoff
            ));
        }
    }
    let scale = (-t).exp();
    let abs_tol = if scale > 0.0 { tol / scale } else { f64::INFINITY };
    let r = quad::integrate(
        |r: f64| (-t * 2.0 * (0.5 * r).sinh().powi(2)).exp(),
        0.0,
        cut,
        abs_tol,
        1e-15,
        cfg.max_subdivisions,
    )?;
    Ok(scale * r.value)
}

/// Small-argument series `log(2/t) I_0(t) + sum (t/2)^{2n}/(n!)^2 psi(n+1)`.
pub fn k0_series(t: f64) -> Result<f64> {
    if !(t > 0.0 && t <= 2.0) {
        return domain(format!("k0_series is used on (0, 2], got {t}"));
    }
    let q = 0.25 * t * t;
    let mut term = 1.0;
    let mut psi = -EULER_GAMMA;
    let mut i0 = 0.0;
    let mut s = 0.0;
    let mut n = 0u32;
    loop {
        i0 += term;
        s += term * psi;
        n += 1;
        let nf = n as f64;
        term *= q / (nf * nf);
        psi += 1.0 / nf;
        if term * psi.abs().max(1.0) < 1e-16 * i0.abs().max(1e-300) || n > 200 {
            break;
        }
    }
    Ok((2.0 / t).ln() * i0 + s)
}

/// `K_0(t)` for `t > 0`: series on `(0, 2]`, quadrature above.
///
/// Returns `+inf` at `t = 0` and NaN for negative input.
pub fn k0(t: f64) -> f64 {
    if t == 0.0 {
        return f64::INFINITY;
    }
    if t.is_nan() || t < 0.0 {
        return f64::NAN;
    }
    if t <= 2.0 {
        k0_series(t).expect("argument checked")
    } else if t > 700.0 {
        0.0
    } else {
        k0_integral(t, &QuadratureConfig::default()).expect("argument checked")
    }
}

/// `K_{1/2}(x) = sqrt(pi/(2x)) e^{-x}`.
pub fn k_half(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return domain(format!("k_half needs x > 0, got {x}"));
    }
    Ok((std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp())
}

/// `sum_{k=1}^{R} K_0(k/N)`.
pub fn k0_partial_sum(r: u64, n: u64) -> Result<f64> {
    if r == 0 || n == 0 {
        return domain("k0_partial_sum needs R, N >= 1");
    }
    Ok((1..=r).map(|k| k0(k as f64 / n as f64)).sum())
}

/// `sum_{j=1}^{k} 4^j K_0((2^j v h)/N)`.
pub fn k0_dyadic_sum(k: u32, h: u64, n: u64) -> Result<f64> {
    if k == 0 || h == 0 || n == 0 {
        return domain("k0_dyadic_sum needs k, h, N >= 1");
    }
    if k > 60 {
        return Err(Error::Domain(format!("k = {k} overflows 2^k")));
    }
    Ok((1..=k)
        .map(|j| {
            let arg = (1u64 << j).max(h) as f64 / n as f64;
            4f64.powi(j as i32) * k0(arg)
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_arguments() {
        assert!(k0_integral(0.0, &QuadratureConfig::default()).is_err());
        assert!(k0_integral(-1.0, &QuadratureConfig::default()).is_err());
        assert!(k0_series(2.5).is_err());
        assert!(k_half(0.0).is_err());
        assert!(k0_partial_sum(0, 3).is_err());
    }

    #[test]
    fn k0_switches_paths_continuously() {
        let a = k0(2.0);
        let b = k0(2.0 + 1e-12);
        assert!((a - b).abs() < 1e-11);
    }

    #[test]
    fn tiny_cutoff_reports_domain_error() {
        let cfg = QuadratureConfig { upper_cutoff: 3.0, ..Default::default() };
        assert!(matches!(k0_integral(1e-3, &cfg), Err(Error::Domain(_))));
    }
}
