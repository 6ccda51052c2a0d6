//! The massive free field on the periodic box `(Z/MZ)^2 x (Z/hZ)`, percolation
//! of `{phi >= 0}` on its cable system, and cluster observables.
//!
//! Vertex `(i1, i2, z)` has index `(i1 M + i2) h + z`. Edge ids are
//! `3 v + dir` with `dir` in `{0, 1, 2}` the positive `y1`, `y2`, `z` step from
//! `v`. For `h = 2` both vertical steps reach the same vertex through a single
//! edge of weight `2/6`, owned by the vertex at `z = 0`; for `h = 1` the
//! vertical edge is a loop and never connects anything.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, InverseGaussian};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::capacity::{cap_gram, Kernel};
use crate::error::{domain, Error, Result};
use crate::linalg::{cg, SpdMatrix};
use crate::rng::{box_muller, edge_key, hash_uniform, stream, Purpose};
use crate::slab::{slab_norm, Region, SlabParams, SlabPoint};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusBox {
    pub m: usize,
    pub h: usize,
    pub params: SlabParams,
}

impl TorusBox {
    /// Requires `M >= 8N`.
    pub fn new(params: SlabParams, m: usize) -> Result<Self> {
        if m < 8 * params.n {
            return Err(Error::Precondition(format!("torus period M = {m} below 8N = {}", 8 * params.n)));
        }
        Ok(Self { m, h: params.h, params })
    }

    /// A box without the `M >= 8N` margin, for small self-tests.
    pub fn unchecked(params: SlabParams, m: usize) -> Self {
        Self { m, h: params.h, params }
    }

    pub fn len(&self) -> usize {
        self.m * self.m * self.h
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, p: &SlabPoint) -> usize {
        let m = self.m as i64;
        let (a, b) = (p.y1.rem_euclid(m) as usize, p.y2.rem_euclid(m) as usize);
        (a * self.m + b) * self.h + p.z.rem_euclid(self.h as i64) as usize
    }

    pub fn coords(&self, v: usize) -> (usize, usize, usize) {
        let z = v % self.h;
        let ab = v / self.h;
        (ab / self.m, ab % self.m, z)
    }

    /// `lambda - (cos(2 pi k1/M) + cos(2 pi k2/M) + cos(2 pi k3/h))/3`.
    pub fn eigenvalue(&self, k1: usize, k2: usize, k3: usize) -> f64 {
        let (m, h) = (self.m as f64, self.h as f64);
        self.params.vertex_weight
            - ((2.0 * PI * k1 as f64 / m).cos() + (2.0 * PI * k2 as f64 / m).cos() + (2.0 * PI * k3 as f64 / h).cos())
                / 3.0
    }
}

/// In-place unnormalized 3-d FFT on the box layout.
struct Fft3 {
    tbox: TorusBox,
    fm: Arc<dyn Fft<f64>>,
    fh: Arc<dyn Fft<f64>>,
}

impl Fft3 {
    fn new(tbox: TorusBox) -> Self {
        let mut planner = FftPlanner::new();
        Self { tbox, fm: planner.plan_fft_forward(tbox.m), fh: planner.plan_fft_forward(tbox.h) }
    }

    fn run(&self, data: &mut [Complex64], scratch: &mut [Complex64]) {
        let (m, h) = (self.tbox.m, self.tbox.h);
        if h > 1 {
            self.fh.process(data);
        }
        for (blk, sc) in data.chunks_mut(m * h).zip(scratch.chunks_mut(m * h)) {
            transpose::transpose(blk, sc, h, m);
            self.fm.process(sc);
            transpose::transpose(sc, blk, m, h);
        }
        transpose::transpose(data, scratch, m * h, m);
        self.fm.process(scratch);
        transpose::transpose(scratch, data, m, m * h);
    }
}

/// Spectral sampler: one transform gives two independent fields.
pub struct Sampler {
    pub tbox: TorusBox,
    scale: Vec<f64>,
    fft: Fft3,
}

#[derive(Clone, Debug)]
pub struct FieldSample {
    pub values: Vec<f64>,
    pub seed: u64,
    pub sample: u64,
    pub tbox: TorusBox,
}

impl Sampler {
    pub fn new(tbox: TorusBox) -> Self {
        let n = tbox.len();
        let norm = 1.0 / (n as f64).sqrt();
        let mut scale = vec![0.0; n];
        for (v, s) in scale.iter_mut().enumerate() {
            let (a, b, c) = tbox.coords(v);
            *s = norm / tbox.eigenvalue(a, b, c).sqrt();
        }
        Self { tbox, scale, fft: Fft3::new(tbox) }
    }

    /// Samples `2p` and `2p + 1`.
    pub fn pair(&self, seed: u64, p: u64) -> (Vec<f64>, Vec<f64>) {
        let n = self.tbox.len();
        let mut rng = stream(seed, p, Purpose::Field);
        let mut data: Vec<Complex64> = self
            .scale
            .iter()
            .map(|s| {
                let (a, b) = box_muller(&mut rng);
                Complex64::new(a * s, b * s)
            })
            .collect();
        let mut scratch = vec![Complex64::new(0.0, 0.0); n];
        self.fft.run(&mut data, &mut scratch);
        (data.iter().map(|c| c.re).collect(), data.iter().map(|c| c.im).collect())
    }

    pub fn sample(&self, seed: u64, i: u64) -> FieldSample {
        let (a, b) = self.pair(seed, i / 2);
        let values = if i % 2 == 0 { a } else { b };
        FieldSample { values, seed, sample: i, tbox: self.tbox }
    }
}

/// Sample 0 of the stream `seed`.
pub fn sample_field(tbox: TorusBox, seed: u64) -> FieldSample {
    Sampler::new(tbox).sample(seed, 0)
}

/// Green's function of the torus, `(lambda I - A/6)^{-1}`, tabulated by offset.
#[derive(Clone, Debug)]
pub struct TorusGreen {
    pub tbox: TorusBox,
    values: Vec<f64>,
}

impl TorusGreen {
    pub fn new(tbox: TorusBox) -> Self {
        let n = tbox.len();
        let mut data: Vec<Complex64> = (0..n)
            .map(|v| {
                let (a, b, c) = tbox.coords(v);
                Complex64::new(1.0 / (tbox.eigenvalue(a, b, c) * n as f64), 0.0)
            })
            .collect();
        let mut scratch = vec![Complex64::new(0.0, 0.0); n];
        Fft3::new(tbox).run(&mut data, &mut scratch);
        Self { tbox, values: data.iter().map(|c| c.re).collect() }
    }

    /// `G(d)` for an offset `d` (reduced on the torus).
    pub fn at(&self, d: &SlabPoint) -> f64 {
        self.values[self.tbox.index(d)]
    }

    pub fn origin(&self) -> f64 {
        self.values[0]
    }
}

impl Kernel for TorusGreen {
    fn params(&self) -> SlabParams {
        self.tbox.params
    }

    fn value(&self, x: &SlabPoint, y: &SlabPoint) -> Result<f64> {
        Ok(self.at(&SlabPoint { y1: x.y1 - y.y1, y2: x.y2 - y.y2, z: x.z - y.z }))
    }
}

/// Step offsets for the three edge directions.
const STEPS: [(i64, i64, i64); 3] = [(1, 0, 0), (0, 1, 0), (0, 0, 1)];

fn shift(tbox: &TorusBox, v: usize, dir: usize, sign: i64) -> usize {
    let (a, b, c) = tbox.coords(v);
    let (d1, d2, d3) = STEPS[dir];
    let p = SlabPoint { y1: a as i64 + sign * d1, y2: b as i64 + sign * d2, z: c as i64 + sign * d3 };
    tbox.index(&p)
}

/// Weight of edge `3 v + dir`, or `None` if `v` does not own such an edge.
pub fn edge_weight(tbox: &TorusBox, v: usize, dir: usize) -> Option<f64> {
    if dir < 2 {
        return Some(1.0 / 6.0);
    }
    match tbox.h {
        1 => Some(2.0 / 6.0),
        2 => (v % 2 == 0).then_some(2.0 / 6.0),
        _ => Some(1.0 / 6.0),
    }
}

/// Edges incident to `v` as `(edge id, other end, weight, direction sign)`;
/// the loop of `h = 1` is included.
fn incident(tbox: &TorusBox, v: usize) -> Vec<(u64, usize, f64, i64, usize)> {
    let mut out = Vec::with_capacity(6);
    for dir in 0..3 {
        if let Some(w) = edge_weight(tbox, v, dir) {
            out.push((3 * v as u64 + dir as u64, shift(tbox, v, dir, 1), w, 1, dir));
        }
        if tbox.h <= 2 && dir == 2 {
            if tbox.h == 2 && v % 2 == 1 {
                let u = shift(tbox, v, 2, -1);
                out.push((3 * u as u64 + 2, u, 2.0 / 6.0, -1, dir));
            }
            continue;
        }
        let u = shift(tbox, v, dir, -1);
        if let Some(w) = edge_weight(tbox, u, dir) {
            out.push((3 * u as u64 + dir as u64, u, w, -1, dir));
        }
    }
    out
}

/// Cable rule: open iff both ends are nonnegative and the coin falls below
/// `1 - exp(-2 w phi phi')`.
#[inline]
fn open(phi: &[f64], key: u64, id: u64, v: usize, u: usize, w: f64) -> bool {
    let (a, b) = (phi[v], phi[u]);
    a >= 0.0 && b >= 0.0 && u != v && hash_uniform(key, id) < -(-2.0 * w * a * b).exp_m1()
}

/// Open edges as a bitmap over edge ids.
pub fn percolate(field: &FieldSample) -> Vec<u64> {
    let t = &field.tbox;
    let key = edge_key(field.seed, field.sample);
    let n = t.len();
    let mut bits = vec![0u64; (3 * n).div_ceil(64)];
    for v in 0..n {
        for dir in 0..3 {
            if let Some(w) = edge_weight(t, v, dir) {
                let id = 3 * v + dir;
                let u = shift(t, v, dir, 1);
                if open(&field.values, key, id as u64, v, u, w) {
                    bits[id / 64] |= 1 << (id % 64);
                }
            }
        }
    }
    bits
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClusterResult {
    pub contains_origin: bool,
    /// Unwrapped positions relative to the origin, in BFS order.
    pub vertices: Vec<SlabPoint>,
    #[serde(skip)]
    pub indices: Vec<usize>,
    pub max_norm_reached: f64,
    /// The unwrapped extent reached `M/2`.
    pub wrapped: bool,
    /// Exploration stopped at the stop radius.
    pub stopped: bool,
    pub cap_estimate: Option<f64>,
}

impl ClusterResult {
    pub fn region(&self, params: SlabParams) -> Region {
        Region::new(self.vertices.iter().copied(), params)
    }
}

/// Breadth-first exploration of the cluster of the origin along open edges;
/// stops once a vertex with `||x|| >= stop_radius` is reached.
pub fn explore_cluster(field: &FieldSample, stop_radius: Option<f64>) -> ClusterResult {
    let t = &field.tbox;
    let phi = &field.values;
    let mut res = ClusterResult {
        contains_origin: false,
        vertices: Vec::new(),
        indices: Vec::new(),
        max_norm_reached: 0.0,
        wrapped: false,
        stopped: false,
        cap_estimate: None,
    };
    if phi[0] < 0.0 {
        return res;
    }
    res.contains_origin = true;
    let key = edge_key(field.seed, field.sample);
    let half = (t.m / 2) as i64;
    let mut seen: HashMap<usize, SlabPoint> = HashMap::from([(0, SlabPoint::ORIGIN)]);
    let mut queue = VecDeque::from([0usize]);
    let (mut lo1, mut hi1, mut lo2, mut hi2) = (0i64, 0i64, 0i64, 0i64);
    res.vertices.push(SlabPoint::ORIGIN);
    res.indices.push(0);
    while let Some(v) = queue.pop_front() {
        let pv = seen[&v];
        for (id, u, w, sign, dir) in incident(t, v) {
            if u == v || seen.contains_key(&u) || !open(phi, key, id, v, u, w) {
                continue;
            }
            let (d1, d2, d3) = STEPS[dir];
            let pu = SlabPoint { y1: pv.y1 + sign * d1, y2: pv.y2 + sign * d2, z: (pv.z + sign * d3).rem_euclid(t.h as i64) };
            seen.insert(u, pu);
            res.vertices.push(pu);
            res.indices.push(u);
            lo1 = lo1.min(pu.y1);
            hi1 = hi1.max(pu.y1);
            lo2 = lo2.min(pu.y2);
            hi2 = hi2.max(pu.y2);
            let r = slab_norm(&pu, t.h);
            res.max_norm_reached = res.max_norm_reached.max(r);
            if hi1 - lo1 >= half || hi2 - lo2 >= half {
                res.wrapped = true;
                return res;
            }
            if let Some(s) = stop_radius {
                if r >= s {
                    res.stopped = true;
                    return res;
                }
            }
            queue.push_back(u);
        }
    }
    res
}

/// Full cluster of the origin.
pub fn origin_cluster(field: &FieldSample) -> ClusterResult {
    explore_cluster(field, None)
}

/// Runs `f` on every sample, two per transform, in parallel; results come
/// back in sample order whatever the number of workers.
pub fn map_samples<T, F>(tbox: TorusBox, nsamples: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&FieldSample) -> T + Sync,
{
    let sampler = Sampler::new(tbox);
    let pairs = nsamples.div_ceil(2);
    let nested: Vec<Vec<T>> = (0..pairs as u64)
        .into_par_iter()
        .map(|p| {
            let (a, b) = sampler.pair(seed, p);
            let mut out = Vec::with_capacity(2);
            for (k, values) in [a, b].into_iter().enumerate() {
                let i = 2 * p + k as u64;
                if (i as usize) < nsamples {
                    out.push(f(&FieldSample { values, seed, sample: i, tbox }));
                }
            }
            out
        })
        .collect();
    nested.into_iter().flatten().collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OneArmEstimate {
    pub theta_hat: f64,
    pub stderr: f64,
    pub nsamples: usize,
    pub n: usize,
    pub h: usize,
    pub r: f64,
    pub flagged: usize,
    pub prediction_band: Option<(f64, f64)>,
}

/// Per-sample reach of the origin's cluster: `-1` if `phi_0 < 0`, the largest
/// norm reached otherwise (at least `R_max` when exploration stopped early);
/// `NaN` for wrap-flagged samples.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OneArmRun {
    pub tbox: TorusBox,
    pub r_max: f64,
    pub seed: u64,
    pub reach: Vec<f64>,
}

impl OneArmRun {
    pub fn flagged(&self) -> usize {
        self.reach.iter().filter(|r| r.is_nan()).count()
    }

    /// `theta_hat(R)` over the first `n` samples (all if `None`), wrap-flagged ones excluded.
    pub fn estimate(&self, r: f64, n: Option<usize>) -> Result<OneArmEstimate> {
        if r > self.r_max {
            return domain(format!("R = {r} above the explored radius {}", self.r_max));
        }
        let reach = &self.reach[..n.unwrap_or(self.reach.len()).min(self.reach.len())];
        let valid: Vec<f64> = reach.iter().copied().filter(|x| !x.is_nan()).collect();
        let k = valid.iter().filter(|&&x| x >= r).count() as f64;
        let n = valid.len().max(1) as f64;
        let th = k / n;
        Ok(OneArmEstimate {
            theta_hat: th,
            stderr: (th * (1.0 - th) / n).sqrt(),
            nsamples: valid.len(),
            n: self.tbox.params.n,
            h: self.tbox.h,
            r,
            flagged: reach.len() - valid.len(),
            prediction_band: None,
        })
    }
}

/// Explores every sample up to `R_max`; one run serves all `R <= R_max`.
pub fn one_arm(tbox: TorusBox, r_max: f64, nsamples: usize, seed: u64) -> Result<OneArmRun> {
    if nsamples == 0 {
        return domain("need at least one sample");
    }
    if r_max < 0.0 || r_max > 4.0 * tbox.params.nf() {
        return domain(format!("R must lie in [0, 4N], got {r_max}"));
    }
    let reach = map_samples(tbox, nsamples, seed, |f| {
        let c = explore_cluster(f, Some(r_max));
        if !c.contains_origin {
            -1.0
        } else if c.wrapped {
            f64::NAN
        } else {
            c.max_norm_reached
        }
    });
    let run = OneArmRun { tbox, r_max, seed, reach };
    if run.flagged() * 100 > nsamples {
        return Err(Error::Precondition(format!("{} of {nsamples} samples wrapped; enlarge M", run.flagged())));
    }
    Ok(run)
}

/// How a cluster's capacity is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CapMode {
    /// Capacity of the cluster as a subset of the cable system.
    Cable,
    /// Capacity of its vertex set.
    VertexTrace,
}

/// End of a cluster's overhang into a cable leaving it, at distance `s` from
/// `a` along the cable `[a, b]` of length `len` (`b = None`: the killing cable).
#[derive(Clone, Copy, Debug)]
struct Tip {
    a: SlabPoint,
    b: Option<SlabPoint>,
    len: f64,
    s: f64,
    cable: u64,
}

fn sample_overhang<R: Rng>(a: f64, b: f64, len: f64, rng: &mut R) -> f64 {
    // r = tau / (len - tau) is a first-passage time of Brownian motion with
    // drift: inverse Gaussian, or Levy when the far end sits at zero.
    let shape = a * a / (2.0 * len);
    let r = if b == 0.0 {
        let (z, _) = box_muller(rng);
        shape / (z * z)
    } else {
        InverseGaussian::new(a / b.abs(), shape).map(|d| d.sample(rng)).unwrap_or(f64::INFINITY)
    };
    if r.is_finite() {
        len * r / (1.0 + r)
    } else {
        len
    }
}

fn collect_tips(field: &FieldSample, c: &ClusterResult) -> Vec<Tip> {
    let t = &field.tbox;
    let phi = &field.values;
    let key = edge_key(field.seed, field.sample);
    let mut rng = stream(field.seed, field.sample, Purpose::Overhang);
    let pos: HashMap<usize, SlabPoint> = c.indices.iter().copied().zip(c.vertices.iter().copied()).collect();
    let lk = 0.5 / t.params.killing;
    let mut tips = Vec::new();
    for (&v, &pv) in c.indices.iter().zip(&c.vertices) {
        let a = phi[v];
        let s = sample_overhang(a, 0.0, lk, &mut rng);
        tips.push(Tip { a: pv, b: None, len: lk, s, cable: u64::MAX - v as u64 });
        for (id, u, w, sign, dir) in incident(t, v) {
            let len = 0.5 / w;
            let (d1, d2, d3) = STEPS[dir];
            let pu = SlabPoint { y1: pv.y1 + sign * d1, y2: pv.y2 + sign * d2, z: pv.z + sign * d3 };
            if u == v {
                // Loop cable: both of its ends sit at v.
                if sign < 0 || open(phi, key, id, v, u, w) {
                    continue;
                }
                let s1 = sample_overhang(a, a, len, &mut rng);
                let s2 = s1 + (len - s1) - sample_overhang(a, 0.0, len - s1, &mut rng);
                tips.push(Tip { a: pv, b: Some(pv), len, s: s1, cable: id });
                tips.push(Tip { a: pv, b: Some(pv), len, s: s2, cable: id });
                continue;
            }
            if open(phi, key, id, v, u, w) {
                continue;
            }
            if pos.contains_key(&u) {
                // Both ends belong to the cluster: handle the cable once, from its owner.
                if sign < 0 {
                    continue;
                }
                let b = phi[u];
                let s1 = sample_overhang(a, b, len, &mut rng);
                let s2 = len - sample_overhang(b, 0.0, len - s1, &mut rng);
                tips.push(Tip { a: pv, b: Some(pu), len, s: s1, cable: id });
                tips.push(Tip { a: pv, b: Some(pu), len, s: s2, cable: id });
            } else {
                let s = sample_overhang(a, phi[u], len, &mut rng);
                // Measure from the owner end so tips on one cable compare.
                let tip = if sign > 0 {
                    Tip { a: pv, b: Some(pu), len, s, cable: id }
                } else {
                    Tip { a: pu, b: Some(pv), len, s: len - s, cable: id }
                };
                tips.push(tip);
            }
        }
    }
    tips
}

/// Cable Green's function between two tips: linear interpolation of the
/// vertex kernel, plus the bridge term on a shared cable.
fn tip_kernel(g: &TorusGreen, p: &Tip, q: &Tip) -> f64 {
    let ends = |t: &Tip| -> [(SlabPoint, f64); 2] {
        let wb = t.s / t.len;
        [(t.a, 1.0 - wb), (t.b.unwrap_or(t.a), if t.b.is_some() { wb } else { 0.0 })]
    };
    let mut v = 0.0;
    for (x, wx) in ends(p) {
        for (y, wy) in ends(q) {
            if wx != 0.0 && wy != 0.0 {
                v += wx * wy * g.value(&x, &y).unwrap_or(0.0);
            }
        }
    }
    if p.cable == q.cable {
        let (lo, hi) = if p.s <= q.s { (p.s, q.s) } else { (q.s, p.s) };
        v += 2.0 * lo * (p.len - hi) / p.len;
    }
    v
}

fn tips_capacity(g: &TorusGreen, tips: &[Tip]) -> Result<f64> {
    let n = tips.len();
    let m = SpdMatrix::from_fn(n, |i, j| tip_kernel(g, &tips[i], &tips[j]));
    let e = m.solve(&[vec![1.0; n]])?.remove(0);
    Ok(e.iter().sum())
}

/// Exact cable capacity by the exterior Dirichlet problem: unknown potential
/// on vertices off the cluster, `1` on it, and cables cut at the tips.
fn exterior_capacity(field: &FieldSample, c: &ClusterResult, tips: &[Tip]) -> Result<f64> {
    let t = &field.tbox;
    let n = t.len();
    let kappa = t.params.killing;
    let mut inside = vec![false; n];
    for &v in &c.indices {
        inside[v] = true;
    }
    // Extra conductance to potential 1 at each outside vertex, from cut cables.
    let mut to_one = vec![0.0; n];
    let mut flux_ground = 0.0;
    let mut cut: HashMap<u64, ()> = HashMap::new();
    for tip in tips {
        match tip.b {
            None => flux_ground += 1.0 / (2.0 * (tip.len - tip.s)),
            Some(b) => {
                let (ia, ib) = (t.index(&tip.a), t.index(&b));
                cut.insert(tip.cable, ());
                if inside[ia] && !inside[ib] {
                    to_one[ib] += 1.0 / (2.0 * (tip.len - tip.s));
                } else if inside[ib] && !inside[ia] {
                    to_one[ia] += 1.0 / (2.0 * tip.s);
                }
            }
        }
    }
    // Exterior operator in CSR form; cluster rows are the identity.
    let mut start = Vec::with_capacity(n + 1);
    let mut cols: Vec<u32> = Vec::with_capacity(6 * n);
    let mut vals: Vec<f64> = Vec::with_capacity(6 * n);
    let mut diag = vec![1.0; n];
    start.push(0u32);
    for v in 0..n {
        if !inside[v] {
            let mut d = kappa + to_one[v];
            for (_, u, w, _, _) in incident(t, v) {
                if u == v || inside[u] {
                    continue;
                }
                d += w;
                cols.push(u as u32);
                vals.push(w);
            }
            diag[v] = d;
        }
        start.push(cols.len() as u32);
    }
    // Symmetric Jacobi scaling: tip conductances make the diagonal uneven.
    let scale: Vec<f64> = diag.iter().map(|d| 1.0 / d.sqrt()).collect();
    for v in 0..n {
        for k in start[v] as usize..start[v + 1] as usize {
            vals[k] *= scale[v] * scale[cols[k] as usize];
        }
    }
    let apply = |x: &[f64], y: &mut [f64]| {
        for v in 0..n {
            let mut off = 0.0;
            for k in start[v] as usize..start[v + 1] as usize {
                off += vals[k] * x[cols[k] as usize];
            }
            y[v] = x[v] - off;
        }
    };
    let rhs: Vec<f64> = (0..n).map(|v| if inside[v] { 0.0 } else { to_one[v] * scale[v] }).collect();
    let rep = cg(apply, &rhs, None, 1e-10, 200_000)?;
    let u: Vec<f64> = rep.x.iter().zip(&scale).map(|(x, s)| x * s).collect();
    let mut flux = flux_ground;
    for tip in tips {
        if let Some(b) = tip.b {
            let (ia, ib) = (t.index(&tip.a), t.index(&b));
            if inside[ia] && !inside[ib] {
                flux += (1.0 - u[ib]) / (2.0 * (tip.len - tip.s));
            } else if inside[ib] && !inside[ia] {
                flux += (1.0 - u[ia]) / (2.0 * tip.s);
            }
        }
    }
    Ok(flux)
}

/// Largest tip set handled by a dense solve.
const DENSE_TIPS: usize = 1500;

/// Capacity of the cluster on the cable system. When the capacity provably
/// exceeds `cutoff` (through a subset of tips) that lower bound is returned.
pub fn cable_capacity(field: &FieldSample, c: &ClusterResult, g: &TorusGreen, cutoff: f64) -> Result<f64> {
    if !c.contains_origin {
        return Ok(0.0);
    }
    let tips = collect_tips(field, c);
    if tips.len() <= DENSE_TIPS {
        return tips_capacity(g, &tips);
    }
    let stride = tips.len().div_ceil(DENSE_TIPS * 2 / 3);
    let sub: Vec<Tip> = tips.iter().step_by(stride).copied().collect();
    let lb = tips_capacity(g, &sub)?;
    if lb > cutoff {
        return Ok(lb);
    }
    exterior_capacity(field, c, &tips)
}

/// Capacity of the vertex set of the cluster (torus kernel).
pub fn trace_capacity(c: &ClusterResult, g: &TorusGreen) -> Result<f64> {
    if !c.contains_origin {
        return Ok(0.0);
    }
    Ok(cap_gram(&c.region(g.tbox.params), g)?.capacity)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CapLawRow {
    pub x: f64,
    pub gx: f64,
    pub empirical_tail: f64,
    pub arctan_tail: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CapLawReport {
    pub g0: f64,
    pub mode: CapMode,
    pub rows: Vec<CapLawRow>,
    /// Reference point `g x0` of the normalized comparison.
    pub gx_ref: f64,
    /// `sup |P(cap > x)/P(cap > x0) - I(x)/I(x0)| / (I(x)/I(x0))`.
    pub sup_rel_dev_normalized: f64,
    /// `sup |P(cap > x) - I(x)| / I(x)`.
    pub sup_rel_dev: f64,
    pub nonempty_fraction: f64,
    pub flagged: usize,
    pub nsamples: usize,
    pub capacities: Vec<f64>,
}

/// `(1/pi) arctan((g x - 1)^{-1/2})`.
fn arctan_law(gx: f64) -> f64 {
    (1.0 / (gx - 1.0).sqrt()).atan() / PI
}

/// Empirical tail of the origin cluster's capacity against the arctan law,
/// on a log grid of `g x` in `[1.5, 20]`.
pub fn cluster_cap_law(tbox: TorusBox, nsamples: usize, seed: u64, mode: CapMode, grid_points: usize) -> Result<CapLawReport> {
    if nsamples == 0 || grid_points < 2 {
        return domain("need samples and at least two grid points");
    }
    let g = TorusGreen::new(tbox);
    let g0 = g.origin();
    let (lo, hi) = (1.5f64, 20.0f64);
    let cutoff = 2.0 * hi / g0;
    let caps: Vec<Result<f64>> = map_samples(tbox, nsamples, seed, |f| {
        let c = origin_cluster(f);
        if c.wrapped {
            return Ok(f64::NAN);
        }
        match mode {
            CapMode::Cable => cable_capacity(f, &c, &g, cutoff),
            CapMode::VertexTrace => trace_capacity(&c, &g),
        }
    });
    let caps: Vec<f64> = caps.into_iter().collect::<Result<_>>()?;
    let valid: Vec<f64> = caps.iter().copied().filter(|c| !c.is_nan()).collect();
    let n = valid.len() as f64;
    let tail = |x: f64| valid.iter().filter(|&&c| c > x).count() as f64 / n;
    let rows: Vec<CapLawRow> = (0..grid_points)
        .map(|i| {
            let gx = lo * (hi / lo).powf(i as f64 / (grid_points - 1) as f64);
            let x = gx / g0;
            CapLawRow { x, gx, empirical_tail: tail(x), arctan_tail: arctan_law(gx) }
        })
        .collect();
    let (p0, i0) = (rows[0].empirical_tail, rows[0].arctan_tail);
    let mut dn: f64 = 0.0;
    let mut du: f64 = 0.0;
    for r in &rows {
        let want = r.arctan_tail / i0;
        dn = dn.max((r.empirical_tail / p0 - want).abs() / want);
        du = du.max((r.empirical_tail - r.arctan_tail).abs() / r.arctan_tail);
    }
    Ok(CapLawReport {
        g0,
        mode,
        rows,
        gx_ref: lo,
        sup_rel_dev_normalized: dn,
        sup_rel_dev: du,
        nonempty_fraction: valid.iter().filter(|&&c| c > 0.0).count() as f64 / n,
        flagged: caps.len() - valid.len(),
        nsamples,
        capacities: caps,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CappedCrossingRow {
    pub s: f64,
    pub probability: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CappedCrossingReport {
    pub r: f64,
    pub f_r: f64,
    pub theta_hat: f64,
    pub rows: Vec<CappedCrossingRow>,
    /// Weighted least-squares fit of `log p` against `1/s`.
    pub slope: Option<f64>,
    pub slope_stderr: Option<f64>,
    pub flagged: usize,
    /// `cap(C cap B_R)` for crossing samples, `NaN` otherwise.
    pub capacities: Vec<f64>,
}

/// `P(0 <-> dB_R, cap(C cap B_R) < s F(R))` per `s`.
pub fn capped_crossing_joint(tbox: TorusBox, r: f64, s_values: &[f64], nsamples: usize, seed: u64) -> Result<CappedCrossingReport> {
    if !(r >= 1.0) || nsamples == 0 {
        return domain("need R >= 1 and samples");
    }
    let params = tbox.params;
    let g = TorusGreen::new(tbox);
    let f_r = crate::slab::f_box(r, &params);
    let h = params.h;
    let caps: Vec<Result<f64>> = map_samples(tbox, nsamples, seed, |f| {
        let c = origin_cluster(f);
        if c.wrapped {
            return Ok(f64::INFINITY);
        }
        if !c.contains_origin || c.max_norm_reached < r {
            return Ok(f64::NAN);
        }
        let inner = c.vertices.iter().copied().filter(|p| slab_norm(p, h) < r);
        Ok(cap_gram(&Region::new(inner, params), &g)?.capacity)
    });
    let caps: Vec<f64> = caps.into_iter().collect::<Result<_>>()?;
    let flagged = caps.iter().filter(|c| c.is_infinite()).count();
    let caps: Vec<f64> = caps.into_iter().map(|c| if c.is_infinite() { f64::NAN } else { c }).collect();
    let n = (nsamples - flagged) as f64;
    let crossing = caps.iter().filter(|c| !c.is_nan()).count() as f64;
    let rows: Vec<CappedCrossingRow> = s_values
        .iter()
        .map(|&s| {
            let p = caps.iter().filter(|&&c| c < s * f_r).count() as f64 / n;
            CappedCrossingRow { s, probability: p, stderr: (p * (1.0 - p) / n).sqrt() }
        })
        .collect();
    let (slope, slope_stderr) = weighted_log_fit(&rows, n);
    Ok(CappedCrossingReport { r, f_r, theta_hat: crossing / n, rows, slope, slope_stderr, flagged, capacities: caps })
}

/// Fit `log p = a + b/s` with weights `n p / (1 - p)` (delta-method variance
/// of `log p`); returns `b` and its standard error.
fn weighted_log_fit(rows: &[CappedCrossingRow], n: f64) -> (Option<f64>, Option<f64>) {
    let pts: Vec<(f64, f64, f64)> = rows
        .iter()
        .filter(|r| r.probability > 0.0 && r.probability < 1.0)
        .map(|r| (1.0 / r.s, r.probability.ln(), n * r.probability / (1.0 - r.probability)))
        .collect();
    if pts.len() < 2 {
        return (None, None);
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return (None, None);
    }
    let b = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    (Some(b), Some((1.0 / sxx).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_green_inverts_operator() {
        let p = SlabParams::new(4, 3).unwrap();
        let t = TorusBox::unchecked(p, 8);
        let g = TorusGreen::new(t);
        // (lambda - A/6) G = delta at a few sites.
        for x in [SlabPoint::ORIGIN, SlabPoint::new(1, 0, 0, 3), SlabPoint::new(3, 2, 1, 3)] {
            let s: f64 = x.neighbors(3).iter().map(|q| g.at(q)).sum();
            let lhs = p.vertex_weight * g.at(&x) - s / 6.0;
            let want = if x == SlabPoint::ORIGIN { 1.0 } else { 0.0 };
            assert!((lhs - want).abs() < 1e-12, "{x}: {lhs}");
        }
    }

    #[test]
    fn incident_edges_are_symmetric() {
        for h in [1, 2, 3] {
            let p = SlabParams::new(4, h).unwrap();
            let t = TorusBox::unchecked(p, 4);
            let mut total = 0.0;
            for v in 0..t.len() {
                for (id, u, w, _, _) in incident(&t, v) {
                    total += w;
                    if u != v {
                        assert!(incident(&t, u).iter().any(|e| e.0 == id && e.1 == v));
                    }
                }
            }
            // Total conductance 1 per vertex, with the loop of h = 1 counted once.
            assert!((total / t.len() as f64 - 1.0).abs() < 1e-12, "h = {h}");
        }
    }

    #[test]
    fn overhang_is_within_cable() {
        let mut rng = stream(1, 2, Purpose::Overhang);
        for _ in 0..1000 {
            let s = sample_overhang(0.7, -0.3, 3.0, &mut rng);
            assert!(s > 0.0 && s <= 3.0);
        }
    }

    #[test]
    fn dense_and_exterior_routes_agree() {
        let t = TorusBox::new(SlabParams::new(4, 2).unwrap(), 32).unwrap();
        let g = TorusGreen::new(t);
        let sampler = Sampler::new(t);
        let mut checked = 0;
        for i in 0..40 {
            let f = sampler.sample(3, i);
            let c = origin_cluster(&f);
            if !c.contains_origin || c.wrapped {
                continue;
            }
            let tips = collect_tips(&f, &c);
            let dense = tips_capacity(&g, &tips).unwrap();
            let ext = exterior_capacity(&f, &c, &tips).unwrap();
            assert!((dense - ext).abs() < 1e-6 * dense, "sample {i}: {dense} vs {ext}");
            checked += 1;
        }
        assert!(checked >= 10);
    }
}
