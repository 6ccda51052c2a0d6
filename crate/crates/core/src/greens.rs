//! Green's functions of the slab.
//!
//! Normalization: every Green's function here is the inverse of the operator
//! `lambda I - A/6` (the covariance of the free field), so
//! `g = g2 + g3`, `cap({0}) g(0) = 1` and the single-site killed value is
//! `1/lambda` hold exactly.
//!
//! Two quadrature engines are used.
//!
//! * [`GreenEvaluator`] integrates over the horizontal frequencies with the
//!   trapezoidal rule and does the vertical direction in closed form: for the
//!   massive `Z^3` walk,
//!   `int e^{ikz} / (a - b cos k) dk/2pi = rho^{|z|} / sqrt(a^2 - b^2)`.
//!   The winding sum over unwrapped heights `z + jh`, `j != 0`, is then a
//!   geometric series.
//! * [`SlabKernelTable`] expands in the `h` vertical Fourier modes, does the
//!   `k2` integral in closed form and tabulates all offsets in one sweep.
//!
//! The trapezoidal rule with `Q` nodes returns exactly the Green's function of
//! the horizontal torus of period `Q`, so the error is the wrap-around term,
//! of relative size about `exp(-sqrt(6) Q / N)`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bessel::k0;
use crate::error::{domain, numeric, Error, Result};
use crate::lattice::Domain;
use crate::quad;
use crate::slab::{ball_unchecked, hat, slab_norm, Region, SlabParams, SlabPoint};

const SQRT6: f64 = 2.449_489_742_783_178;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenValue {
    pub g3: f64,
    pub g2: f64,
    /// Bound on the neglected winding tail relative to `g2`.
    pub winding_tail: f64,
}

impl GreenValue {
    pub fn g(&self) -> f64 {
        self.g2 + self.g3
    }
}

#[derive(Clone, Copy)]
struct Node {
    inv_root: f64,
    ln_rho: f64,
}

/// `a - b = d`, `b = 1/3`; returns `1/sqrt(a^2-b^2)` and `ln rho`, `rho = b/(a + sqrt(a^2-b^2))`.
#[inline]
fn node(d: f64) -> Node {
    let root = (d * (d + 2.0 / 3.0)).sqrt();
    Node { inv_root: 1.0 / root, ln_rho: -(3.0 * d + 3.0 * root).ln_1p() }
}

/// Trapezoid nodes needed for relative accuracy `tol` at mass `1/N`.
fn base_nodes(n: f64, tol: f64) -> usize {
    let q = (n * ((1.0 / tol).ln() + 4.0) / SQRT6).ceil() as usize;
    q.max(32)
}

fn round4(q: usize) -> usize {
    q.div_ceil(4) * 4
}

type Key = (i64, i64, i64);

fn canon(x: &SlabPoint, h: usize) -> Key {
    let (a, b) = (x.y1.abs(), x.y2.abs());
    (a.max(b), a.min(b), hat(x.z, h).abs())
}

/// Representative of `x` under the lattice symmetries of `g`.
pub(crate) fn canonical(x: &SlabPoint, h: usize) -> SlabPoint {
    let (a, b, c) = canon(x, h);
    SlabPoint { y1: a, y2: b, z: c }
}

/// Spectral evaluator of `g3`, `g2` and `g = g2 + g3` on the infinite slab.
pub struct GreenEvaluator {
    pub params: SlabParams,
    pub quad_points_per_dim: usize,
    pub winding_cutoff: usize,
    pub rel_tolerance: f64,
    cache: Mutex<HashMap<Key, GreenValue>>,
}

impl GreenEvaluator {
    pub fn new(params: SlabParams) -> Result<Self> {
        Self::with_tolerance(params, 1e-10)
    }

    pub fn with_tolerance(params: SlabParams, rel_tolerance: f64) -> Result<Self> {
        if !(rel_tolerance > 0.0 && rel_tolerance < 0.1) {
            return domain(format!("tolerance must lie in (0, 0.1), got {rel_tolerance}"));
        }
        let q = round4(base_nodes(params.nf(), rel_tolerance));
        let k = (params.nf() / (SQRT6 * params.hf()) * (40.0 + rel_tolerance.ln().abs())).ceil();
        Ok(Self {
            params,
            quad_points_per_dim: q,
            winding_cutoff: k.min(1e6) as usize,
            rel_tolerance,
            cache: Mutex::new(HashMap::new()),
        })
    }

    fn nodes_for(&self, ymax: i64) -> usize {
        round4(self.quad_points_per_dim + 2 * ymax as usize)
    }

    /// Relative winding tail at the slowest-decaying frequency.
    fn winding_tail(&self) -> Result<f64> {
        let p = &self.params;
        let n0 = node(p.killing);
        let t = (p.hf() * self.winding_cutoff as f64 * n0.ln_rho).exp();
        let tail = t / (1.0 - t);
        if tail > self.rel_tolerance {
            return numeric(format!(
                "winding tail {tail:.2e} above tolerance; increase K_max beyond {}",
                self.winding_cutoff
            ));
        }
        Ok(tail)
    }

    pub fn eval(&self, x: &SlabPoint) -> Result<GreenValue> {
        Ok(self.eval_many(std::slice::from_ref(x))?[0])
    }

    pub fn g3(&self, x: &SlabPoint) -> Result<f64> {
        Ok(self.eval(x)?.g3)
    }

    pub fn g2(&self, x: &SlabPoint) -> Result<f64> {
        Ok(self.eval(x)?.g2)
    }

    pub fn g(&self, x: &SlabPoint) -> Result<f64> {
        Ok(self.eval(x)?.g())
    }

    /// Evaluates many offsets in one quadrature sweep (memoized).
    pub fn eval_many(&self, pts: &[SlabPoint]) -> Result<Vec<GreenValue>> {
        let h = self.params.h;
        let keys: Vec<Key> = pts.iter().map(|p| canon(p, h)).collect();
        let mut missing: Vec<Key> = {
            let cache = self.cache.lock().expect("cache poisoned");
            keys.iter().filter(|k| !cache.contains_key(k)).copied().collect()
        };
        missing.sort_unstable();
        missing.dedup();
        if !missing.is_empty() {
            let vals = self.compute(&missing)?;
            let mut cache = self.cache.lock().expect("cache poisoned");
            for (k, v) in missing.into_iter().zip(vals) {
                cache.entry(k).or_insert(v);
            }
        }
        let cache = self.cache.lock().expect("cache poisoned");
        Ok(keys.iter().map(|k| cache[k]).collect())
    }

    fn compute(&self, keys: &[Key]) -> Result<Vec<GreenValue>> {
        let p = self.params;
        let tail = self.winding_tail()?;
        let ymax = keys.iter().map(|k| k.0).max().unwrap_or(0);
        let q = self.nodes_for(ymax);
        let half = q / 2;
        let sin2: Vec<f64> = (0..=half).map(|j| (PI * j as f64 / q as f64).sin().powi(2)).collect();
        let cos_t: Vec<f64> = (0..q).map(|m| (2.0 * PI * m as f64 / q as f64).cos()).collect();
        let hf = p.hf();
        let kcut = self.winding_cutoff as f64;
        let np = keys.len();
        let rows: Vec<Vec<f64>> = (0..=half)
            .into_par_iter()
            .map(|j1| {
                let mut acc = vec![0.0; 2 * np];
                let c1: Vec<f64> = keys.iter().map(|k| cos_t[(j1 * k.0 as usize) % q]).collect();
                for j2 in 0..=half {
                    let w2 = if j2 == 0 || j2 == half { 1.0 } else { 2.0 };
                    let nd = node(p.killing + 2.0 * (sin2[j1] + sin2[j2]) / 3.0);
                    let rho_h = (hf * nd.ln_rho).exp();
                    let geo = (1.0 - (hf * kcut * nd.ln_rho).exp()) / -(hf * nd.ln_rho).exp_m1();
                    for (i, k) in keys.iter().enumerate() {
                        let c = c1[i] * cos_t[(j2 * k.1 as usize) % q] * w2 * nd.inv_root;
                        let zf = k.2 as f64;
                        let rz = (zf * nd.ln_rho).exp();
                        let wind = (rho_h * rz + ((hf - zf) * nd.ln_rho).exp()) * geo;
                        acc[2 * i] += c * rz;
                        acc[2 * i + 1] += c * wind;
                    }
                }
                let w1 = if j1 == 0 || j1 == half { 1.0 } else { 2.0 };
                acc.iter_mut().for_each(|v| *v *= w1);
                acc
            })
            .collect();
        let norm = 1.0 / (q as f64 * q as f64);
        let mut tot = vec![0.0; 2 * np];
        for r in &rows {
            for (t, v) in tot.iter_mut().zip(r) {
                *t += v;
            }
        }
        Ok((0..np)
            .map(|i| GreenValue { g3: tot[2 * i] * norm, g2: tot[2 * i + 1] * norm, winding_tail: tail })
            .collect())
    }

    /// `(g3, g2)` at `(y1, y2, z)` for all `0 <= y1 <= y1_max`, in one sweep.
    pub fn profile(&self, y2: i64, z: i64, y1_max: i64) -> Result<Vec<GreenValue>> {
        let p = self.params;
        let tail = self.winding_tail()?;
        let q = self.nodes_for(y1_max.max(y2.abs()));
        let half = q / 2;
        let sin2: Vec<f64> = (0..=half).map(|j| (PI * j as f64 / q as f64).sin().powi(2)).collect();
        let cos_t: Vec<f64> = (0..q).map(|m| (2.0 * PI * m as f64 / q as f64).cos()).collect();
        let hf = p.hf();
        let kcut = self.winding_cutoff as f64;
        let zf = hat(z, p.h).abs() as f64;
        let b = y2.unsigned_abs() as usize;
        let rows: Vec<(f64, f64)> = (0..=half)
            .into_par_iter()
            .map(|j1| {
                let (mut v3, mut v2) = (0.0, 0.0);
                for j2 in 0..=half {
                    let w2 = if j2 == 0 || j2 == half { 1.0 } else { 2.0 };
                    let nd = node(p.killing + 2.0 * (sin2[j1] + sin2[j2]) / 3.0);
                    let rho_h = (hf * nd.ln_rho).exp();
                    let geo = (1.0 - (hf * kcut * nd.ln_rho).exp()) / -(hf * nd.ln_rho).exp_m1();
                    let c = cos_t[(j2 * b) % q] * w2 * nd.inv_root;
                    let rz = (zf * nd.ln_rho).exp();
                    v3 += c * rz;
                    v2 += c * (rho_h * rz + ((hf - zf) * nd.ln_rho).exp()) * geo;
                }
                (v3, v2)
            })
            .collect();
        let norm = 1.0 / (q as f64 * q as f64);
        Ok((0..=y1_max)
            .map(|a| {
                let (mut g3, mut g2) = (0.0, 0.0);
                for (j1, (v3, v2)) in rows.iter().enumerate() {
                    let w1 = if j1 == 0 || j1 == half { 1.0 } else { 2.0 };
                    let c = w1 * cos_t[(j1 * a as usize) % q];
                    g3 += c * v3;
                    g2 += c * v2;
                }
                GreenValue { g3: g3 * norm, g2: g2 * norm, winding_tail: tail }
            })
            .collect())
    }
}

pub fn g3(x: &SlabPoint, ev: &GreenEvaluator) -> Result<f64> {
    ev.g3(x)
}

pub fn g2(x: &SlabPoint, ev: &GreenEvaluator) -> Result<f64> {
    ev.g2(x)
}

/// `g = g2 + g3`, the inverse of `lambda I - A/6` on the slab.
pub fn g_slab(x: &SlabPoint, ev: &GreenEvaluator) -> Result<f64> {
    ev.g(x)
}

/// Tabulated `g(y1, y2, z)` for `|y1| <= w1`, `|y2| <= w2` and all `z`.
#[derive(Clone, Debug)]
pub struct SlabKernelTable {
    pub params: SlabParams,
    pub w1: i64,
    pub w2: i64,
    /// Sum over the vertical column instead of single heights.
    pub column: bool,
    data: Vec<f64>,
}

impl SlabKernelTable {
    pub fn new(params: SlabParams, w1: i64, w2: i64, tol: f64) -> Self {
        Self::build(params, w1, w2, tol, false)
    }

    /// `sum_z g(y, z)`: the kernel of vertically invariant measures.
    pub fn column(params: SlabParams, w1: i64, w2: i64, tol: f64) -> Self {
        Self::build(params, w1, w2, tol, true)
    }

    fn build(params: SlabParams, w1: i64, w2: i64, tol: f64, column: bool) -> Self {
        let h = params.h;
        let q = round4(base_nodes(params.nf(), tol) + 2 * w1.max(w2) as usize);
        let half = q / 2;
        let (na, nb) = (w1 as usize + 1, w2 as usize + 1);
        let cos_t: Vec<f64> = (0..q).map(|m| (2.0 * PI * m as f64 / q as f64).cos()).collect();
        let modes: Vec<usize> = if column { vec![0] } else { (0..=h / 2).collect() };
        let fm: Vec<Vec<f64>> = modes
            .par_iter()
            .map(|&m| {
                let sm = (PI * m as f64 / h as f64).sin().powi(2);
                let mut f = vec![0.0; na * nb];
                let mut pw = vec![0.0; nb];
                for j in 0..=half {
                    let w = if j == 0 || j == half { 1.0 } else { 2.0 };
                    let sk = (PI * j as f64 / q as f64).sin().powi(2);
                    let nd = node(params.killing + 2.0 * (sm + sk) / 3.0);
                    let rho = nd.ln_rho.exp();
                    pw[0] = w * nd.inv_root;
                    for b in 1..nb {
                        pw[b] = pw[b - 1] * rho;
                    }
                    for a in 0..na {
                        let c = cos_t[(j * a) % q];
                        let row = &mut f[a * nb..(a + 1) * nb];
                        for (r, p) in row.iter_mut().zip(&pw) {
                            *r += c * p;
                        }
                    }
                }
                f.iter_mut().for_each(|v| *v /= q as f64);
                f
            })
            .collect();
        let data = if column {
            fm.into_iter().next().expect("one mode")
        } else {
            let mut data = vec![0.0; na * nb * h];
            for z in 0..h {
                for (mi, &m) in modes.iter().enumerate() {
                    // Modes m and h - m coincide; count both unless m = h - m.
                    let mult = if m == 0 || 2 * m == h { 1.0 } else { 2.0 };
                    let c = mult * (2.0 * PI * (m * z) as f64 / h as f64).cos() / h as f64;
                    for ab in 0..na * nb {
                        data[ab * h + z] += c * fm[mi][ab];
                    }
                }
            }
            data
        };
        Self { params, w1, w2, column, data }
    }

    /// Kernel at the offset `d`; `None` outside the tabulated window.
    pub fn get(&self, d: &SlabPoint) -> Option<f64> {
        let (a, b) = (d.y1.abs(), d.y2.abs());
        let (a, b) = if a > self.w1 || b > self.w2 {
            if b <= self.w1 && a <= self.w2 && self.w1 == self.w2 {
                (b, a)
            } else {
                return None;
            }
        } else {
            (a, b)
        };
        let nb = self.w2 as usize + 1;
        let ab = a as usize * nb + b as usize;
        Some(if self.column { self.data[ab] } else { self.data[ab * self.params.h + d.z.rem_euclid(self.params.h as i64) as usize] })
    }

    pub fn value(&self, x: &SlabPoint, y: &SlabPoint) -> f64 {
        let d = x.sub(y, self.params.h);
        self.get(&d).unwrap_or_else(|| panic!("offset {d} outside kernel table"))
    }
}

/// Solution of `(lambda I - A/6) g = delta_0` on a Dirichlet box.
pub struct OracleField {
    pub domain: Domain,
    pub values: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
}

impl OracleField {
    pub fn solve(params: SlabParams, box_radius: i64) -> Result<Self> {
        if box_radius < 1 {
            return domain("box_radius must be >= 1");
        }
        let domain = Domain::boxed(params, -box_radius, box_radius, -box_radius, box_radius);
        let rep = domain.point_source(&SlabPoint::ORIGIN)?;
        Ok(Self { domain, values: rep.x, iterations: rep.iterations, rel_residual: rep.rel_residual })
    }

    pub fn get(&self, x: &SlabPoint) -> Option<f64> {
        self.domain.index_of(x).map(|i| self.values[i])
    }
}

/// Linear-solve oracle for `g(x)` on `[-r, r]^2 x Z/hZ` with zero outside.
pub fn g_oracle(x: &SlabPoint, params: &SlabParams, box_radius: i64) -> Result<f64> {
    let f = OracleField::solve(*params, box_radius)?;
    f.get(x).ok_or_else(|| Error::Domain(format!("{x} outside the oracle box")))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum KillingSet {
    /// Killing outside `B(center, r)`.
    ComplementOfBall { center: SlabPoint, r: f64 },
    /// Killing outside an explicit region.
    Explicit,
    /// No killing beyond the mass; the region is a truncation box.
    Empty,
}

/// The complement of a killing set inside a bounding box, as a finite graph.
pub struct KilledDomain {
    pub domain: Domain,
    pub descriptor: KillingSet,
}

impl KilledDomain {
    pub fn complement_of_ball(center: SlabPoint, r: f64, params: SlabParams) -> Result<Self> {
        if !(r >= 1.0) {
            return domain(format!("killing ball radius must be >= 1, got {r}"));
        }
        let reg = ball_unchecked(&center, r, &params);
        Self::from_region(&reg, KillingSet::ComplementOfBall { center, r })
    }

    pub fn explicit(region: &Region) -> Result<Self> {
        Self::from_region(region, KillingSet::Explicit)
    }

    /// Truncation box of half-width `radius` around the origin.
    pub fn empty(params: SlabParams, radius: i64) -> Self {
        let domain = Domain::boxed(params, -radius, radius, -radius, radius);
        Self { domain, descriptor: KillingSet::Empty }
    }

    fn from_region(region: &Region, descriptor: KillingSet) -> Result<Self> {
        let domain = Domain::from_points(region.params, region.points.clone());
        if domain.is_empty() || !domain.is_connected() {
            return domain_err("killed domain must be nonempty and connected");
        }
        Ok(Self { domain, descriptor })
    }

    pub fn contains(&self, x: &SlabPoint) -> bool {
        self.domain.index_of(x).is_some()
    }
}

fn domain_err<T>(msg: &str) -> Result<T> {
    Err(Error::Domain(msg.to_string()))
}

/// `g^K(x1, x2)` by a Dirichlet solve on the domain.
pub fn killed_green(x1: &SlabPoint, x2: &SlabPoint, kd: &KilledDomain) -> Result<f64> {
    let i1 = kd.domain.index_of(x1).ok_or_else(|| Error::Domain(format!("{x1} is in the killing set")))?;
    if !kd.contains(x2) {
        return domain(format!("{x2} is in the killing set"));
    }
    let rep = kd.domain.point_source(x2)?;
    Ok(rep.x[i1])
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HarnackReport {
    pub ratio: f64,
    pub per_source: Vec<f64>,
    /// Largest `|L u|` on `B_{2R}`.
    pub residual: f64,
}

/// Max over eight boundary sources `w` of `sup u / inf u` on `B_{tR}`, where
/// `u = g^K(., w)` is killed outside `B_{2R+2}` and harmonic on `B_{2R}`.
pub fn harnack_ratio(r: i64, t: f64, params: &SlabParams) -> Result<HarnackReport> {
    if r < 4 {
        return domain(format!("harnack_ratio needs R >= 4, got {r}"));
    }
    if !(t > 0.0 && t <= 0.5) {
        return domain(format!("t must lie in (0, 1/2], got {t}"));
    }
    let h = params.h;
    let outer = 2.0 * r as f64;
    let kd = KilledDomain::complement_of_ball(SlabPoint::ORIGIN, outer + 2.0, *params)?;
    let d = &kd.domain;
    let inner: Vec<usize> =
        (0..d.len()).filter(|&i| slab_norm(&d.points[i], h) < t * r as f64).collect();
    let core: Vec<usize> = (0..d.len()).filter(|&i| slab_norm(&d.points[i], h) < outer).collect();
    let mut per_source = Vec::new();
    let mut residual: f64 = 0.0;
    for k in 0..8 {
        let ang = 2.0 * PI * k as f64 / 8.0;
        let (c, s) = (ang.cos(), ang.sin());
        let mut rr = outer;
        let w = loop {
            let w = SlabPoint::new((rr * c).round() as i64, (rr * s).round() as i64, 0, h);
            if slab_norm(&w, h) >= outer {
                break w;
            }
            rr += 0.25;
        };
        let rep = d.point_source(&w)?;
        let u = rep.x;
        for &i in &core {
            residual = residual.max(d.row(&u, i).abs());
        }
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for &i in &inner {
            lo = lo.min(u[i]);
            hi = hi.max(u[i]);
        }
        per_source.push(hi / lo);
    }
    let ratio = per_source.iter().copied().fold(1.0, f64::max);
    Ok(HarnackReport { ratio, per_source, residual })
}

/// `e^{-s} I_n(s) = (1/pi) int_0^pi cos(nk) e^{-s(1 - cos k)} dk`.
fn lattice_kernel_1d(n: i64, s: f64) -> f64 {
    if s == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    if s <= 40.0 {
        return lattice_kernel_series(n, s);
    }
    let upper = (PI * (25.0 / s).sqrt()).min(PI);
    let f = |k: f64| (n as f64 * k).cos() * (-2.0 * s * (0.5 * k).sin().powi(2)).exp();
    let r = quad::integrate(f, 0.0, upper, 1e-17, 1e-13, 2000).map(|r| r.value).unwrap_or(f64::NAN);
    r / PI
}

/// Power series of `e^{-s} I_n(s)`; every term is positive, so it is stable
/// for moderate `s`, where the Fourier integral loses all relative accuracy.
fn lattice_kernel_series(n: i64, s: f64) -> f64 {
    let n = n.unsigned_abs() as f64;
    let ln_fact: f64 = (1..=n as u64).map(|k| (k as f64).ln()).sum();
    let mut term = (-s + n * (0.5 * s).ln() - ln_fact).exp();
    let mut sum = term;
    let mut k = 1.0;
    while k < 2000.0 {
        term *= 0.25 * s * s / (k * (k + n));
        sum += term;
        if term < 1e-17 * sum && k > 0.5 * s {
            break;
        }
        k += 1.0;
    }
    sum
}

/// `P(Y_t = y)` for the rate-`r` walk on `Z^d`, as a product of 1-d Fourier integrals.
pub fn heat_kernel(y: &[i64], t: f64, r: f64) -> f64 {
    let d = y.len() as f64;
    y.iter().map(|&yi| lattice_kernel_1d(yi, r * t / d)).product()
}

/// `p^{d,r}(y, t) = (d/(2 pi r t))^{d/2} exp(-d|y|^2/(2rt))`.
pub fn gaussian_kernel(y: &[i64], t: f64, r: f64) -> f64 {
    let d = y.len() as f64;
    let y2: f64 = y.iter().map(|&v| (v * v) as f64).sum();
    (d / (2.0 * PI * r * t)).powf(0.5 * d) * (-d * y2 / (2.0 * r * t)).exp()
}

/// `int_M^infty |P(Y_t = y) - p^{d,r}(y, t)| dt`.
pub fn lclt_error(y: &[i64], m: f64, r: f64) -> Result<f64> {
    let d = y.len();
    if !(d == 2 || d == 3) {
        return domain(format!("dimension must be 2 or 3, got {d}"));
    }
    if !(r > 0.0 && r <= 1.0) {
        return domain(format!("rate must lie in (0, 1], got {r}"));
    }
    let origin = y.iter().all(|&v| v == 0);
    if origin && m < 1.0 {
        return domain("y = 0 needs M >= 1");
    }
    let y2: f64 = y.iter().map(|&v| (v * v) as f64).sum();
    let t0 = m.max(1e-6);
    let t1 = 1e6 * (1.0 + y2);
    let f = |u: f64| {
        let t = u.exp();
        t * (heat_kernel(y, t, r) - gaussian_kernel(y, t, r)).abs()
    };
    let mut total = 0.0;
    // Split the log-time axis so the adaptive rule sees the sign changes.
    let (a, b) = (t0.ln(), t1.ln());
    let pieces = 24;
    for k in 0..pieces {
        let lo = a + (b - a) * k as f64 / pieces as f64;
        let hi = a + (b - a) * (k + 1) as f64 / pieces as f64;
        total += quad::integrate(f, lo, hi, 1e-14, 1e-9, 2000)?.value;
    }
    // Tail beyond t1 with |P - p| decaying like t^{-d/2-1}.
    let tail = t1 * (heat_kernel(y, t1, r) - gaussian_kernel(y, t1, r)).abs() / (0.5 * d as f64);
    Ok(total + tail)
}

/// `sup_{t <= |y| M} P(Y_t = y) e^{c|y|/M}` on a fine time grid.
pub fn short_time_ratio(y: &[i64], m: f64, r: f64, c: f64) -> f64 {
    let norm = y.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
    let tmax = norm * m;
    let mut best: f64 = 0.0;
    for k in 1..=400 {
        let t = tmax * k as f64 / 400.0;
        best = best.max(heat_kernel(y, t, r));
    }
    best * (c * norm / m).exp()
}

/// Two asymptotic branches for `g(0)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct VariancePrediction {
    /// `log N / h`.
    pub lambda: f64,
    /// `(3/pi) log N / h`.
    pub two_d: f64,
    /// `g_{Z^3}(0) + (3/pi) log N / h`.
    pub three_d: f64,
}

impl VariancePrediction {
    /// The planar branch once `log N / h >= 10`, else the three-dimensional one.
    pub fn value(&self) -> f64 {
        if self.lambda >= 10.0 {
            self.two_d
        } else {
            self.three_d
        }
    }
}

pub fn variance_prediction(params: &SlabParams) -> VariancePrediction {
    let lambda = params.nf().ln() / params.hf();
    VariancePrediction {
        lambda,
        two_d: 3.0 / PI * lambda,
        three_d: g_z3_origin() + 3.0 / PI * lambda,
    }
}

/// `K(c_h, l_y, l_z) = (c_h/2) sum_{k != 0} r_k^{-1} e^{-sqrt(6) r_k}`, `r_k = (l_y^2 + (l_z + c_h k)^2)^{1/2}`.
pub fn k_limit_series(c_h: f64, ly: f64, lz: f64) -> Result<f64> {
    if !(c_h > 0.0) {
        return domain(format!("c_h must be positive, got {c_h}"));
    }
    let term = |k: f64| {
        let r = (ly * ly + (lz + c_h * k).powi(2)).sqrt();
        if r == 0.0 {
            f64::INFINITY
        } else {
            (-SQRT6 * r).exp() / r
        }
    };
    let mut s = 0.0;
    let mut k = 1.0;
    loop {
        let t = term(k) + term(-k);
        s += t;
        if t < 1e-16 * s.max(1e-300) || k > 1e7 {
            break;
        }
        k += 1.0;
    }
    Ok(0.5 * c_h * s)
}

/// `g_{Z^3}(0)` for the unit-rate walk (massless), by polar Gauss-Legendre
/// quadrature of the 2-d reduced integrand `1/sqrt(a^2 - b^2)`, whose
/// `1/|k|` singularity the polar Jacobian removes.
pub fn g_z3_origin() -> f64 {
    static V: OnceLock<f64> = OnceLock::new();
    *V.get_or_init(|| {
        let (xs, ws) = quad::gauss_legendre(64);
        let f = |k1: f64, k2: f64| {
            let s = (0.5 * k1).sin().powi(2) + (0.5 * k2).sin().powi(2);
            let d = 2.0 * s / 3.0;
            1.0 / (d * (d + 2.0 / 3.0)).sqrt()
        };
        // Integrate over the triangle 0 <= theta <= pi/4 of [0, pi]^2, split in
        // four angular and four radial panels.
        let mut total = 0.0;
        let panels = 4;
        for pa in 0..panels {
            let (ta, tb) = (PI / 4.0 * pa as f64 / panels as f64, PI / 4.0 * (pa + 1) as f64 / panels as f64);
            for (xt, wt) in xs.iter().zip(&ws) {
                let th = 0.5 * (ta + tb) + 0.5 * (tb - ta) * xt;
                let rmax = PI / th.cos();
                for pr in 0..panels {
                    let (ra, rb) = (rmax * pr as f64 / panels as f64, rmax * (pr + 1) as f64 / panels as f64);
                    for (xr, wr) in xs.iter().zip(&ws) {
                        let r = 0.5 * (ra + rb) + 0.5 * (rb - ra) * xr;
                        let v = r * f(r * th.cos(), r * th.sin());
                        total += wt * wr * 0.25 * (tb - ta) * (rb - ra) * v;
                    }
                }
            }
        }
        // Two triangles make [0, pi]^2; four quadrants and (2 pi)^-2 give 1/pi^2.
        2.0 * total / (PI * PI)
    })
}

/// Planar-branch asymptotic profile `(3/pi) K_0(sqrt(6)(|y| v h)/N)/h + g_{Z^3}(x) e^{-sqrt(6)||x||/N}`,
/// with `g_{Z^3}(x)` replaced by `3/(2 pi ||x||)` away from the origin.
pub fn asymptotic_profile(x: &SlabPoint, params: &SlabParams) -> f64 {
    let h = params.hf();
    let n = params.nf();
    let y = x.horizontal_norm();
    let r = slab_norm(x, params.h);
    let g3 = if r == 0.0 { g_z3_origin() } else { 3.0 / (2.0 * PI * r) };
    3.0 / PI * k0(SQRT6 * y.max(h) / n) / h + g3 * (-SQRT6 * r / n).exp()
}

/// Sandwich reference `1/(||x|| v 1) + K_0((|y| v h)/N)/h`.
pub fn sandwich_reference(x: &SlabPoint, params: &SlabParams) -> f64 {
    let h = params.hf();
    1.0 / slab_norm(x, params.h).max(1.0) + k0(x.horizontal_norm().max(h) / params.nf()) / h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_matches_pointwise() {
        let p = SlabParams::new(16, 3).unwrap();
        let ev = GreenEvaluator::new(p).unwrap();
        let prof = ev.profile(2, 1, 6).unwrap();
        for (a, v) in prof.iter().enumerate() {
            let w = ev.eval(&SlabPoint::new(a as i64, 2, 1, 3)).unwrap();
            assert!((v.g3 - w.g3).abs() < 1e-12 * w.g3);
            assert!((v.g2 - w.g2).abs() < 1e-12 * w.g2.max(1e-3));
        }
    }

    #[test]
    fn table_matches_evaluator() {
        let p = SlabParams::new(8, 4).unwrap();
        let ev = GreenEvaluator::new(p).unwrap();
        let t = SlabKernelTable::new(p, 5, 5, 1e-11);
        for x in [SlabPoint::new(0, 0, 0, 4), SlabPoint::new(3, 1, 2, 4), SlabPoint::new(5, 4, 3, 4)] {
            let a = ev.g(&x).unwrap();
            let b = t.get(&x).unwrap();
            assert!((a - b).abs() < 1e-9 * a, "{x}: {a} vs {b}");
        }
        let col = SlabKernelTable::column(p, 5, 5, 1e-11);
        let s: f64 = (0..4).map(|z| t.get(&SlabPoint::new(2, 1, z, 4)).unwrap()).sum();
        assert!((col.get(&SlabPoint::new(2, 1, 0, 4)).unwrap() - s).abs() < 1e-9 * s);
    }

    #[test]
    fn killed_domain_must_be_connected() {
        let p = SlabParams::new(8, 3).unwrap();
        let r = Region::new([SlabPoint::new(0, 0, 0, 3), SlabPoint::new(5, 0, 0, 3)], p);
        assert!(KilledDomain::explicit(&r).is_err());
    }
}
