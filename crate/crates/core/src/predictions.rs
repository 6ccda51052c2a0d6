//! Closed-form predictions: the arctan tail, `s*`, one-arm bands, the plateau
//! curve and the intrinsic scale.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::slab::{f_box, SlabParams};

/// Constants calibrated once by the sweeps described in the README and frozen here.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedConstants {
    pub version: u32,
    /// Lower one-arm constant `c` in `c (g0 F)^{-1/2} <= theta`.
    pub thm11_c: f64,
    /// Upper one-arm constant `C`.
    pub thm11_upper: f64,
    /// Standard errors of `c` and `C` in the calibration sweep.
    #[serde(default)]
    pub thm11_c_stderr: f64,
    #[serde(default)]
    pub thm11_upper_stderr: f64,
    /// Range-capacity threshold `c2`.
    pub range_c2: f64,
    /// Harnack ratio bound at `t = 1/2`.
    pub harnack_max: f64,
    /// Band for `g(x) / (1/(||x|| v 1) + K0((|y| v h)/N)/h)`.
    pub sandwich_lo: f64,
    pub sandwich_hi: f64,
    /// `C` in `lclt_error (M v |y|)^d <= C`.
    pub lclt_c: f64,
    /// Short-time bound `P(Y_t = y) <= C e^{-c|y|/M}` for `t <= |y| M`.
    pub short_time_rate: f64,
    pub short_time_c: f64,
}

impl FittedConstants {
    pub fn bundled() -> Self {
        serde_json::from_str(include_str!("../fixtures/constants.json")).expect("bundled constants parse")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// `(1/pi) arctan((s - 1)^{-1/2})`.
pub fn f_infty(s: f64) -> Result<f64> {
    if !(s > 1.0) {
        return domain(format!("f_infty needs s > 1, got {s}"));
    }
    Ok((1.0 / (s - 1.0).sqrt()).atan() / PI)
}

/// `I_g(x) = (1/pi) arctan((g x - 1)^{-1/2})`.
pub fn arctan_tail(g: f64, x: f64) -> Result<f64> {
    if !(g > 0.0) || !(g * x > 1.0) {
        return domain(format!("arctan_tail needs g > 0 and g x > 1, got g = {g}, x = {x}"));
    }
    f_infty(g * x)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PredictionInput {
    pub n: usize,
    pub h: usize,
    pub r: f64,
    pub g0: f64,
    pub constants: FittedConstants,
}

impl PredictionInput {
    pub fn new(n: usize, h: usize, r: f64, g0: f64) -> Result<Self> {
        if !(g0 > 0.0) {
            return domain("g0 must be positive");
        }
        if !(r > 0.0) || r > 4.0 * n as f64 {
            return domain(format!("R must lie in (0, 4N], got {r}"));
        }
        Ok(Self { n, h, r, g0, constants: FittedConstants::bundled() })
    }

    fn log_ratio(&self) -> f64 {
        (self.n as f64 / self.r.max(self.h as f64)).ln()
    }
}

/// `s* = (pi/3) g0 h / log(N / (R v h))`.
pub fn s_star(inp: &PredictionInput) -> Result<f64> {
    let l = inp.log_ratio();
    if !(l > 0.0) {
        return domain(format!("s* needs R v h < N (log ratio {l})"));
    }
    Ok(PI / 3.0 * inp.g0 * inp.h as f64 / l)
}

/// `(log R)/R <= eps log(N/(R v h))/h`.
pub fn flatness_holds(inp: &PredictionInput, eps: f64) -> bool {
    inp.r.ln() / inp.r <= eps * inp.log_ratio() / inp.h as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandKind {
    Thm11,
    Thm41,
}

/// One-arm band: `[c, C] (g0 F(R))^{-1/2}`, or the arctan band at `(1 +- eps) s*`
/// (the latter only for flat configurations).
pub fn theta_band(inp: &PredictionInput, kind: BandKind, eps: f64) -> Result<(f64, f64)> {
    match kind {
        BandKind::Thm11 => {
            let p = SlabParams::new(inp.n, inp.h)?;
            let scale = (inp.g0 * f_box(inp.r, &p)).powf(-0.5);
            Ok((inp.constants.thm11_c * scale, (inp.constants.thm11_upper * scale).min(1.0)))
        }
        BandKind::Thm41 => {
            if !(eps > 0.0 && eps < 1.0) {
                return domain("eps must lie in (0, 1)");
            }
            if !flatness_holds(inp, eps) {
                return Err(Error::Precondition(format!(
                    "flatness fails: (log R)/R = {:.4} > eps log(N/(R v h))/h = {:.4}",
                    inp.r.ln() / inp.r,
                    eps * inp.log_ratio() / inp.h as f64
                )));
            }
            let s = s_star(inp)?;
            let lo = f_infty((1.0 + eps) * s)?;
            let hi = if (1.0 - eps) * s <= 1.0 { 0.5 } else { f_infty((1.0 - eps) * s)? };
            Ok((lo, hi))
        }
    }
}

/// Predicted `1/theta` at macroscopic scale: `sqrt((3/pi) max(h, log N) / (c C))`.
pub fn plateau_table(n: usize, h_grid: &[usize], k: &FittedConstants) -> Vec<(usize, f64)> {
    let ln = (n as f64).ln();
    h_grid
        .iter()
        .map(|&h| (h, (3.0 / PI * (h as f64).max(ln) / (k.thm11_c * k.thm11_upper)).sqrt()))
        .collect()
}

/// `R_c(s) = N^{1 - 1/s}`.
pub fn r_c(s: f64, n: f64) -> Result<f64> {
    if !(s > 1.0) {
        return domain(format!("r_c needs s > 1, got {s}"));
    }
    Ok(n.powf(1.0 - 1.0 / s))
}

/// `lim sqrt(g0 h / log(N/(R v h))) f_infty(s*) = sqrt(3/pi^3)`.
pub fn corollary_limit() -> f64 {
    (3.0 / PI.powi(3)).sqrt()
}

/// `sqrt(g0 h / log(N/(R v h))) f_infty(s*)`.
pub fn corollary_quantity(inp: &PredictionInput) -> Result<f64> {
    let s = s_star(inp)?;
    Ok((inp.g0 * inp.h as f64 / inp.log_ratio()).sqrt() * f_infty(s)?)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ArctanReport {
    pub checked: usize,
    pub failures: Vec<f64>,
    /// Largest ratio `arctan(1/sqrt(x-1)) / arctan(1/sqrt(x))` seen; bounded by `2 sqrt 2`.
    pub max_chain_ratio: f64,
}

impl ArctanReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// `(pi/4)(1 ^ x) <= arctan x <= (pi/2)(1 ^ x)` for `x >= 0`, and
/// `arctan(x^{-1/2}) <= arctan((x-1)^{-1/2}) <= 2 sqrt(2) arctan(x^{-1/2})` for `x > 1`.
pub fn arctan_inequalities_check(grid: &[f64]) -> ArctanReport {
    let tol = 1e-15;
    let mut failures = Vec::new();
    let mut ratio: f64 = 0.0;
    for &x in grid {
        if x >= 0.0 {
            let m = x.min(1.0);
            let a = x.atan();
            if a < PI / 4.0 * m - tol || a > PI / 2.0 * m + tol {
                failures.push(x);
            }
        }
        if x > 1.0 {
            let lo = (1.0 / x.sqrt()).atan();
            let mid = (1.0 / (x - 1.0).sqrt()).atan();
            ratio = ratio.max(mid / lo);
            if mid < lo - tol || mid > 2.0 * 2f64.sqrt() * lo + tol {
                failures.push(x);
            }
        }
    }
    ArctanReport { checked: grid.len(), failures, max_chain_ratio: ratio }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_constants_load() {
        let k = FittedConstants::bundled();
        assert!(k.thm11_c > 0.0 && k.thm11_c < k.thm11_upper);
    }

    #[test]
    fn thm41_band_instance() {
        let mut inp = PredictionInput::new(1 << 20, 1, 64.0, 1.0).unwrap();
        inp.g0 = 5.0 * (inp.log_ratio()) * 3.0 / PI;
        assert!((s_star(&inp).unwrap() - 5.0).abs() < 1e-12);
        let (lo, hi) = theta_band(&inp, BandKind::Thm41, 0.1).unwrap();
        assert!((lo - (1.0 / 4.5f64.sqrt()).atan() / PI).abs() < 1e-15);
        assert!((hi - (1.0 / 3.5f64.sqrt()).atan() / PI).abs() < 1e-15);
    }
}
