//! Discrete potential theory: equilibrium measures, capacities, energies and
//! the walk-range capacity tail.
//!
//! Three solvers share one normalization (`e_A = L h_A` on `A`, with `L` the
//! operator `lambda I - A/6`):
//!
//! * hitting solve: Dirichlet problem for the hitting function on a finite
//!   domain (a truncation box, or the complement of a killing set);
//! * Gram solve: `G_AA e = 1` for any [`Kernel`]. Points of `A` with all six
//!   neighbors in `A` carry `e = kappa` exactly, so only the boundary rows are
//!   solved for;
//! * variational: minimum energy over probability measures on `A`.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, numeric, Error, Result};
use crate::greens::{canonical, GreenEvaluator, KilledDomain, KillingSet, SlabKernelTable};
use crate::lattice::Domain;
use crate::linalg::SpdMatrix;
use crate::rng::{stream, Purpose};
use crate::slab::{ball_unchecked, disk, line, slab_norm, Region, SlabParams, SlabPoint};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub support: Region,
    pub weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(support: Region, weights: Vec<f64>) -> Result<Self> {
        if support.len() != weights.len() {
            return domain("support and weights differ in length");
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return domain("weights must be nonnegative");
        }
        Ok(Self { support, weights })
    }

    pub fn point_mass(x: SlabPoint, params: SlabParams) -> Self {
        Self { support: Region::new([x], params), weights: vec![1.0] }
    }

    pub fn uniform(support: Region) -> Self {
        let n = support.len();
        Self { weights: vec![1.0 / n as f64; n], support }
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_probability(&self) -> bool {
        (self.total() - 1.0).abs() <= 1e-12
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    HittingSolve,
    GramSolve,
    Variational,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Residuals {
    /// Relative residual of the linear solve (0 for direct factorizations).
    pub solver: f64,
    pub iterations: usize,
    /// `max |sum_y G(x, y) e(y) - 1|` over the checked points of `A`.
    pub potential: Option<f64>,
    pub truncation_radius: Option<i64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EquilibriumSolution {
    pub target: Region,
    pub killing: Option<KillingSet>,
    pub eq_measure: DiscreteMeasure,
    pub capacity: f64,
    pub method: Method,
    pub residuals: Residuals,
}

/// Kernel `k(x, y)` on slab points: `g`, its winding parts, a killed Green's
/// function or a torus Green's function.
pub trait Kernel: Sync {
    fn params(&self) -> SlabParams;
    fn value(&self, x: &SlabPoint, y: &SlabPoint) -> Result<f64>;
    /// Hook called before bulk evaluation on `xs x ys`.
    fn prepare(&self, _xs: &[SlabPoint], _ys: &[SlabPoint]) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GreenPart {
    G,
    G2,
    G3,
}

pub struct GreenKernel<'a> {
    pub ev: &'a GreenEvaluator,
    pub part: GreenPart,
}

impl<'a> GreenKernel<'a> {
    pub fn new(ev: &'a GreenEvaluator, part: GreenPart) -> Self {
        Self { ev, part }
    }
}

impl Kernel for GreenKernel<'_> {
    fn params(&self) -> SlabParams {
        self.ev.params
    }

    fn value(&self, x: &SlabPoint, y: &SlabPoint) -> Result<f64> {
        let v = self.ev.eval(&x.sub(y, self.ev.params.h))?;
        Ok(match self.part {
            GreenPart::G => v.g(),
            GreenPart::G2 => v.g2,
            GreenPart::G3 => v.g3,
        })
    }

    fn prepare(&self, xs: &[SlabPoint], ys: &[SlabPoint]) -> Result<()> {
        let h = self.ev.params.h;
        let mut offs = HashSet::new();
        for x in xs {
            for y in ys {
                offs.insert(canonical(&x.sub(y, h), h));
            }
        }
        let offs: Vec<SlabPoint> = offs.into_iter().collect();
        self.ev.eval_many(&offs).map(|_| ())
    }
}

impl Kernel for SlabKernelTable {
    fn params(&self) -> SlabParams {
        self.params
    }

    fn value(&self, x: &SlabPoint, y: &SlabPoint) -> Result<f64> {
        if self.column {
            return domain("column tables are not point kernels");
        }
        let d = x.sub(y, self.params.h);
        self.get(&d).ok_or_else(|| Error::Domain(format!("offset {d} outside the kernel table")))
    }
}

/// Dense `g^K` on a small killed domain, from the inverse of its operator.
pub struct DomainKernel {
    pub domain: Domain,
    inverse: SpdMatrix,
}

impl DomainKernel {
    pub const MAX_SITES: usize = 6000;

    pub fn new(kd: &KilledDomain) -> Result<Self> {
        let d = kd.domain.clone();
        let n = d.len();
        if n > Self::MAX_SITES {
            return domain(format!("dense killed kernel limited to {} sites, got {n}", Self::MAX_SITES));
        }
        let mut op = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            d.apply(&e, &mut col, None);
            op[j * n..(j + 1) * n].copy_from_slice(&col);
            e[j] = 0.0;
        }
        let m = SpdMatrix { n, data: op };
        let ident: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                let mut v = vec![0.0; n];
                v[j] = 1.0;
                v
            })
            .collect();
        let inv = m.solve(&ident)?;
        let mut data = vec![0.0; n * n];
        for (j, c) in inv.into_iter().enumerate() {
            data[j * n..(j + 1) * n].copy_from_slice(&c);
        }
        Ok(Self { domain: d, inverse: SpdMatrix { n, data } })
    }
}

impl Kernel for DomainKernel {
    fn params(&self) -> SlabParams {
        self.domain.params
    }

    fn value(&self, x: &SlabPoint, y: &SlabPoint) -> Result<f64> {
        match (self.domain.index_of(x), self.domain.index_of(y)) {
            (Some(i), Some(j)) => Ok(self.inverse.get(i, j)),
            _ => Ok(0.0),
        }
    }
}

/// Gram matrix `k(x_i, x_j)`.
pub fn gram(k: &dyn Kernel, pts: &[SlabPoint]) -> Result<SpdMatrix> {
    k.prepare(pts, pts)?;
    let n = pts.len();
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| (0..n).map(|i| k.value(&pts[i], &pts[j])).collect::<Result<Vec<f64>>>())
        .collect::<Result<_>>()?;
    Ok(SpdMatrix { n, data: cols.concat() })
}

/// `sum_{y in ys} k(x, y)` for each `x` in `xs`.
pub fn row_sums(k: &dyn Kernel, xs: &[SlabPoint], ys: &[SlabPoint]) -> Result<Vec<f64>> {
    k.prepare(xs, ys)?;
    xs.par_iter()
        .map(|x| ys.iter().map(|y| k.value(x, y)).sum::<Result<f64>>())
        .collect()
}

/// `sum k(x1, x2) mu(x1) mu(x2)`.
pub fn energy(mu: &DiscreteMeasure, k: &dyn Kernel) -> Result<f64> {
    let g = gram(k, &mu.support.points)?;
    let mut out = vec![0.0; g.n];
    g.matvec(&mu.weights, &mut out);
    Ok(mu.weights.iter().zip(&out).map(|(a, b)| a * b).sum())
}

fn potential_check(k: &dyn Kernel, pts: &[SlabPoint], e: &[f64], probe: &[SlabPoint]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    k.prepare(probe, pts)?;
    for x in probe {
        let mut s = 0.0;
        for (y, w) in pts.iter().zip(e) {
            s += k.value(x, y)? * w;
        }
        worst = worst.max((s - 1.0).abs());
    }
    Ok(worst)
}

/// Every `stride`-th element, at most `n` of them.
fn spread<T: Copy>(v: &[T], n: usize) -> Vec<T> {
    if v.len() <= n {
        return v.to_vec();
    }
    let stride = v.len().div_ceil(n);
    v.iter().step_by(stride).copied().collect()
}

/// Equilibrium measure by solving `G e = 1` on the boundary points of `A`.
pub fn cap_gram(a: &Region, k: &dyn Kernel) -> Result<EquilibriumSolution> {
    if a.is_empty() {
        return domain("capacity of the empty set");
    }
    let p = k.params();
    let interior = a.interior_mask();
    let (mut bd, mut inn) = (Vec::new(), Vec::new());
    for (x, &i) in a.points.iter().zip(&interior) {
        if i {
            inn.push(*x);
        } else {
            bd.push(*x);
        }
    }
    let g = gram(k, &bd)?;
    let rhs: Vec<f64> = if inn.is_empty() {
        vec![1.0; bd.len()]
    } else {
        row_sums(k, &bd, &inn)?.iter().map(|s| 1.0 - p.killing * s).collect()
    };
    let eb = g.solve(&[rhs])?.remove(0);
    let bidx: HashMap<SlabPoint, usize> = bd.iter().enumerate().map(|(i, x)| (*x, i)).collect();
    let weights: Vec<f64> =
        a.points.iter().map(|x| bidx.get(x).map_or(p.killing, |&i| eb[i])).collect();
    let probe: Vec<SlabPoint> = spread(&bd, 16).into_iter().chain(spread(&inn, 16)).collect();
    let potential = potential_check(k, &a.points, &weights, &probe)?;
    let capacity = weights.iter().sum();
    Ok(EquilibriumSolution {
        target: a.clone(),
        killing: None,
        eq_measure: DiscreteMeasure { support: a.clone(), weights },
        capacity,
        method: Method::GramSolve,
        residuals: Residuals { solver: 0.0, iterations: 0, potential: Some(potential), truncation_radius: None },
    })
}

/// Capacity of a vertically invariant set given by its columns, with the
/// column kernel `sum_z g(y, z)`.
pub fn cap_columns(cols: &[(i64, i64)], table: &SlabKernelTable) -> Result<f64> {
    if !table.column {
        return domain("cap_columns needs a column kernel table");
    }
    let p = table.params;
    let set: HashSet<(i64, i64)> = cols.iter().copied().collect();
    let (mut bd, mut inn) = (Vec::new(), Vec::new());
    for &(a, b) in cols {
        let interior = [(a + 1, b), (a - 1, b), (a, b + 1), (a, b - 1)].iter().all(|c| set.contains(c));
        if interior {
            inn.push((a, b));
        } else {
            bd.push((a, b));
        }
    }
    let kv = |x: &(i64, i64), y: &(i64, i64)| -> Result<f64> {
        let d = SlabPoint { y1: x.0 - y.0, y2: x.1 - y.1, z: 0 };
        table.get(&d).ok_or_else(|| Error::Domain(format!("offset {d} outside the kernel table")))
    };
    let n = bd.len();
    let mut data = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            data[j * n + i] = kv(&bd[i], &bd[j])?;
        }
    }
    let rhs: Vec<f64> = bd
        .par_iter()
        .map(|x| inn.iter().map(|y| kv(x, y)).sum::<Result<f64>>().map(|s| 1.0 - p.killing * s))
        .collect::<Result<_>>()?;
    let eb = SpdMatrix { n, data }.solve(&[rhs])?.remove(0);
    Ok(p.hf() * (eb.iter().sum::<f64>() + p.killing * inn.len() as f64))
}

struct HitField {
    domain: Domain,
    hit: Vec<f64>,
    solution: EquilibriumSolution,
}

fn hitting_equilibrium(a: &Region, domain: Domain, killing: Option<KillingSet>, radius: Option<i64>) -> Result<HitField> {
    let mut target = vec![false; domain.len()];
    let mut idx = Vec::with_capacity(a.len());
    for x in &a.points {
        let i = domain
            .index_of(x)
            .ok_or_else(|| Error::Domain(format!("{x} lies in the killing set")))?;
        target[i] = true;
        idx.push(i);
    }
    let (hit, rep) = domain.hitting(&target)?;
    let weights: Vec<f64> = idx.iter().map(|&i| domain.row(&hit, i)).collect();
    let capacity = weights.iter().sum();
    let solution = EquilibriumSolution {
        target: a.clone(),
        killing,
        eq_measure: DiscreteMeasure { support: a.clone(), weights },
        capacity,
        method: Method::HittingSolve,
        residuals: Residuals {
            solver: rep.rel_residual,
            iterations: rep.iterations,
            potential: None,
            truncation_radius: radius,
        },
    };
    Ok(HitField { domain, hit, solution })
}

/// Equilibrium measure from the hitting function: on a truncation box of
/// half-width `box_radius` (default `4N`) around `A`, or on a killed domain.
pub fn equilibrium(a: &Region, kd: Option<&KilledDomain>, box_radius: Option<i64>) -> Result<EquilibriumSolution> {
    if a.is_empty() {
        return domain("capacity of the empty set");
    }
    let f = match kd {
        Some(kd) => hitting_equilibrium(a, kd.domain.clone(), Some(kd.descriptor.clone()), None)?,
        None => {
            let r = box_radius.unwrap_or(4 * a.params.n as i64);
            let d = Domain::around(a.params, &a.points, r);
            hitting_equilibrium(a, d, None, Some(r))?
        }
    };
    Ok(f.solution)
}

/// `|P_x(H_A < infty) - sum_{x'} g(x, x') e_A(x')|`, with the hitting
/// probability and `e_A` from a Dirichlet solve and `g` from the spectral
/// evaluator.
pub fn hitting_identity_residual(x: &SlabPoint, a: &Region, ev: &GreenEvaluator, box_radius: Option<i64>) -> Result<f64> {
    let p = a.params;
    let r = box_radius.unwrap_or(4 * p.n as i64);
    let mut pts = a.points.clone();
    pts.push(*x);
    let d = Domain::around(p, &pts, r);
    let f = hitting_equilibrium(a, d, None, Some(r))?;
    let px = f.hit[f.domain.index_of(x).expect("x is inside the box")];
    let k = GreenKernel::new(ev, GreenPart::G);
    k.prepare(std::slice::from_ref(x), &a.points)?;
    let mut s = 0.0;
    for (y, w) in a.points.iter().zip(&f.solution.eq_measure.weights) {
        s += k.value(x, y)? * w;
    }
    Ok((px - s).abs())
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OptConfig {
    /// Stop once the KKT residual is below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200_000 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VariationalResult {
    pub capacity: f64,
    pub argmin: DiscreteMeasure,
    pub iterations: usize,
    pub kkt_residual: f64,
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// `max_i |min(mu_i / max mu, (G mu)_i / E - 1)|`: zero exactly at the minimizer.
fn kkt(mu: &[f64], gmu: &[f64], e: f64) -> f64 {
    let m = mu.iter().copied().fold(0.0, f64::max);
    mu.iter().zip(gmu).map(|(a, g)| (a / m).min(g / e - 1.0).abs()).fold(0.0, f64::max)
}

/// `1 / min { energy(mu) : mu probability on A }` by spectral projected gradient.
pub fn cap_variational(a: &Region, k: &dyn Kernel, cfg: &OptConfig) -> Result<VariationalResult> {
    if a.is_empty() {
        return domain("capacity of the empty set");
    }
    let g = gram(k, &a.points)?;
    let n = g.n;
    let mut mu = vec![1.0 / n as f64; n];
    let mut gmu = vec![0.0; n];
    g.matvec(&mu, &mut gmu);
    let mut e: f64 = mu.iter().zip(&gmu).map(|(x, y)| x * y).sum();
    let dmax = (0..n).map(|i| g.get(i, i)).fold(0.0, f64::max);
    let mut step = 1.0 / (2.0 * dmax);
    let mut gd = vec![0.0; n];
    let mut it = 0;
    loop {
        let r = kkt(&mu, &gmu, e);
        if r <= cfg.tol {
            let weights: Vec<f64> = mu;
            return Ok(VariationalResult {
                capacity: 1.0 / e,
                argmin: DiscreteMeasure { support: a.clone(), weights },
                iterations: it,
                kkt_residual: r,
            });
        }
        if it >= cfg.max_iter {
            return numeric(format!("projected gradient stopped at KKT residual {r:.3e} after {it} iterations (best capacity {})", 1.0 / e));
        }
        let trial: Vec<f64> = mu.iter().zip(&gmu).map(|(m, gr)| m - step * 2.0 * gr).collect();
        let target = project_simplex(&trial);
        let d: Vec<f64> = target.iter().zip(&mu).map(|(t, m)| t - m).collect();
        g.matvec(&d, &mut gd);
        let slope: f64 = d.iter().zip(&gmu).map(|(x, y)| x * y).sum();
        let curv: f64 = d.iter().zip(&gd).map(|(x, y)| x * y).sum();
        if curv <= 0.0 || slope >= 0.0 {
            // No descent left at working precision.
            let weights = mu;
            let r = kkt(&weights, &gmu, e);
            if r <= cfg.tol.sqrt() {
                return Ok(VariationalResult { capacity: 1.0 / e, argmin: DiscreteMeasure { support: a.clone(), weights }, iterations: it, kkt_residual: r });
            }
            return numeric(format!("projected gradient stalled at KKT residual {r:.3e}"));
        }
        // Exact minimizer along the segment; it satisfies the Armijo condition with c = 1/2.
        let lam = (-slope / curv).min(1.0);
        for i in 0..n {
            mu[i] += lam * d[i];
            gmu[i] += lam * gd[i];
        }
        e += 2.0 * lam * slope + lam * lam * curv;
        // Barzilai-Borwein step from s = lam d, y = 2 lam G d.
        step = (0.5 * (d.iter().map(|x| x * x).sum::<f64>() / curv)).clamp(1e-12, 1e12);
        it += 1;
        if it % 50 == 0 {
            g.matvec(&mu, &mut gmu);
            e = mu.iter().zip(&gmu).map(|(x, y)| x * y).sum();
        }
    }
}

fn table_for(params: SlabParams, w: i64) -> SlabKernelTable {
    SlabKernelTable::new(params, w, w, 1e-10)
}

/// `cap(l_R)`.
pub fn cap_line(r: usize, params: &SlabParams) -> Result<f64> {
    let a = line(r, params)?;
    let t = SlabKernelTable::new(*params, r as i64, 0, 1e-10);
    Ok(cap_gram(&a, &t)?.capacity)
}

/// `cap(B_R)`.
pub fn cap_ball(r: f64, params: &SlabParams) -> Result<f64> {
    let a = crate::slab::ball(&SlabPoint::ORIGIN, r, params)?;
    let t = table_for(*params, 2 * r.ceil() as i64);
    Ok(cap_gram(&a, &t)?.capacity)
}

/// `cap(D_R)`; vertically invariant disks use the column kernel.
pub fn cap_disk(r: f64, params: &SlabParams) -> Result<f64> {
    let a = disk(&SlabPoint::ORIGIN, r, params)?;
    let w = 2 * r.ceil() as i64;
    if a.len() % params.h == 0 && (params.h as f64) / 2.0 < r {
        let cols: Vec<(i64, i64)> = a.points.iter().filter(|x| x.z == 0).map(|x| (x.y1, x.y2)).collect();
        let t = SlabKernelTable::column(*params, w, w, 1e-10);
        return cap_columns(&cols, &t);
    }
    Ok(cap_gram(&a, &table_for(*params, w))?.capacity)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RangeTailConfig {
    pub r: i64,
    pub s_values: Vec<f64>,
    /// Capacities relative to the killing set `B(x, 2R)^c` instead of the free slab.
    pub killed: bool,
    pub nsamples: usize,
    pub seed: u64,
    pub c2: f64,
    /// Ranges with more distinct sites are thinned to at most this many.
    pub max_points: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RangeTailRow {
    pub s: f64,
    pub probability: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RangeTailReport {
    pub rows: Vec<RangeTailRow>,
    pub reference_capacity: f64,
    /// Range capacities, one per walk, in sample order.
    pub capacities: Vec<f64>,
    pub thinned: usize,
    pub died: usize,
    /// Least-squares slope of `log p` against `s` over rows with `p > 0`.
    pub slope: Option<f64>,
}

/// Distinct sites visited by the killed walk from the origin before it
/// leaves `B(0, R)`, in order of first visit; also whether it was killed.
pub fn walk_range<R: Rng>(r: i64, params: &SlabParams, rng: &mut R) -> (Vec<SlabPoint>, bool) {
    let h = params.h;
    let death = params.killing / params.vertex_weight;
    let mut x = SlabPoint::ORIGIN;
    let mut seen = HashSet::from([x]);
    let mut order = vec![x];
    loop {
        if rng.random::<f64>() < death {
            return (order, true);
        }
        x = x.neighbors(h)[rng.random_range(0..6)];
        if slab_norm(&x, h) >= r as f64 {
            return (order, false);
        }
        if seen.insert(x) {
            order.push(x);
        }
    }
}

/// Empirical `P(cap(range) <= (c2/s) cap(B(0, R)))` per `s`, for walks
/// stopped on leaving `B(0, R)`.
pub fn range_capacity_tail(cfg: &RangeTailConfig, params: &SlabParams) -> Result<RangeTailReport> {
    let r = cfg.r;
    if r < 4 {
        return domain("range_capacity_tail needs R >= 4");
    }
    if cfg.s_values.iter().any(|&s| !(s >= 2.0 && s <= r as f64 / 2.0)) {
        return domain("s values must lie in [2, R/2]");
    }
    if cfg.nsamples == 0 || cfg.max_points == 0 {
        return domain("need nsamples >= 1 and max_points >= 1");
    }
    let ball = ball_unchecked(&SlabPoint::ORIGIN, r as f64, params);
    let (kernel, reference): (Box<dyn Kernel>, f64) = if cfg.killed {
        let kd = KilledDomain::complement_of_ball(SlabPoint::ORIGIN, 2.0 * r as f64, *params)?;
        let reference = equilibrium(&ball, Some(&kd), None)?.capacity;
        (Box::new(DomainKernel::new(&kd)?), reference)
    } else {
        let t = table_for(*params, 2 * r);
        let reference = cap_gram(&ball, &t)?.capacity;
        (Box::new(t), reference)
    };
    let runs: Vec<(f64, bool, bool)> = (0..cfg.nsamples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(cfg.seed, i as u64, Purpose::Walk);
            let (pts, died) = walk_range(r, params, &mut rng);
            let thinned = pts.len() > cfg.max_points;
            let pts = spread(&pts, cfg.max_points);
            let reg = Region::new(pts, *params);
            cap_gram(&reg, kernel.as_ref()).map(|s| (s.capacity, died, thinned))
        })
        .collect::<Result<_>>()?;
    let n = runs.len() as f64;
    let rows: Vec<RangeTailRow> = cfg
        .s_values
        .iter()
        .map(|&s| {
            let thr = cfg.c2 / s * reference;
            let p = runs.iter().filter(|r| r.0 <= thr).count() as f64 / n;
            RangeTailRow { s, probability: p, stderr: (p * (1.0 - p) / n).sqrt() }
        })
        .collect();
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.probability > 0.0).map(|r| (r.s, r.probability.ln())).collect();
    let slope = ls_slope(&pts);
    Ok(RangeTailReport {
        rows,
        reference_capacity: reference,
        capacities: runs.iter().map(|r| r.0).collect(),
        thinned: runs.iter().filter(|r| r.2).count(),
        died: runs.iter().filter(|r| r.1).count(),
        slope,
    })
}

/// Ordinary least-squares slope; `None` with fewer than two distinct abscissae.
pub fn ls_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_projection() {
        let p = project_simplex(&[0.5, 0.5, 0.5]);
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        let p = project_simplex(&[3.0, 0.0, -1.0]);
        assert_eq!(p, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn solid_box_interior_weight_is_killing_rate() {
        let p = SlabParams::new(6, 3).unwrap();
        let mut pts = Vec::new();
        for a in -2..=2 {
            for b in -2..=2 {
                for z in 0..3 {
                    pts.push(SlabPoint::new(a, b, z, 3));
                }
            }
        }
        let a = Region::new(pts, p);
        let sol = equilibrium(&a, None, Some(40)).unwrap();
        let i = a.index()[&SlabPoint::ORIGIN];
        assert!((sol.eq_measure.weights[i] - p.killing).abs() < 1e-14);
    }

    #[test]
    fn gram_and_hitting_agree() {
        let p = SlabParams::new(6, 2).unwrap();
        let a = crate::slab::ball(&SlabPoint::ORIGIN, 2.5, &p).unwrap();
        let hs = equilibrium(&a, None, Some(80)).unwrap();
        let ev = GreenEvaluator::with_tolerance(p, 1e-12).unwrap();
        let gs = cap_gram(&a, &GreenKernel::new(&ev, GreenPart::G)).unwrap();
        assert!((hs.capacity - gs.capacity).abs() < 1e-9 * hs.capacity);
        assert!(gs.residuals.potential.unwrap() < 1e-9);
    }
}
