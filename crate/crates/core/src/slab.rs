//! Slab geometry `Z^2 x (Z/hZ)`: points, norm, the standard shapes, the
//! renormalization lattice and the scale function `F`.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::bessel::k0;
use crate::error::{domain, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlabParams {
    pub n: usize,
    pub h: usize,
    pub edge_weight: f64,
    pub killing: f64,
    pub vertex_weight: f64,
}

impl SlabParams {
    pub fn new(n: usize, h: usize) -> Result<Self> {
        if n == 0 || h == 0 || h > n {
            return domain(format!("need 1 <= h <= N, got N = {n}, h = {h}"));
        }
        let killing = 1.0 / (n as f64 * n as f64);
        Ok(Self { n, h, edge_weight: 1.0 / 6.0, killing, vertex_weight: 1.0 + killing })
    }

    pub fn nf(&self) -> f64 {
        self.n as f64
    }

    pub fn hf(&self) -> f64 {
        self.h as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SlabPoint {
    pub y1: i64,
    pub y2: i64,
    pub z: i64,
}

impl SlabPoint {
    /// Builds a point, reducing `z` mod `h`.
    pub fn new(y1: i64, y2: i64, z: i64, h: usize) -> Self {
        Self { y1, y2, z: z.rem_euclid(h as i64) }
    }

    pub const ORIGIN: SlabPoint = SlabPoint { y1: 0, y2: 0, z: 0 };

    /// `self - other` with the vertical coordinate reduced mod `h`.
    pub fn sub(&self, other: &SlabPoint, h: usize) -> SlabPoint {
        SlabPoint::new(self.y1 - other.y1, self.y2 - other.y2, self.z - other.z, h)
    }

    pub fn add(&self, other: &SlabPoint, h: usize) -> SlabPoint {
        SlabPoint::new(self.y1 + other.y1, self.y2 + other.y2, self.z + other.z, h)
    }

    /// The six graph neighbors; for `h <= 2` the vertical ones coincide
    /// (with each other, or with the point itself when `h = 1`).
    pub fn neighbors(&self, h: usize) -> [SlabPoint; 6] {
        let (a, b, z) = (self.y1, self.y2, self.z);
        [
            SlabPoint { y1: a + 1, y2: b, z },
            SlabPoint { y1: a - 1, y2: b, z },
            SlabPoint { y1: a, y2: b + 1, z },
            SlabPoint { y1: a, y2: b - 1, z },
            SlabPoint::new(a, b, z + 1, h),
            SlabPoint::new(a, b, z - 1, h),
        ]
    }

    pub fn horizontal_norm(&self) -> f64 {
        ((self.y1 * self.y1 + self.y2 * self.y2) as f64).sqrt()
    }
}

impl fmt::Display for SlabPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.y1, self.y2, self.z)
    }
}

/// Representative of `z` in `Z` with `|hat z| = d(0, z)`; `z = h/2` maps to `+h/2`.
pub fn hat_z(z: i64, h: usize) -> Result<i64> {
    let hi = h as i64;
    if h == 0 || z < 0 || z >= hi {
        return domain(format!("hat_z needs 0 <= z < h, got z = {z}, h = {h}"));
    }
    Ok(if 2 * z <= hi { z } else { z - hi })
}

pub(crate) fn hat(z: i64, h: usize) -> i64 {
    let hi = h as i64;
    let z = z.rem_euclid(hi);
    if 2 * z <= hi {
        z
    } else {
        z - hi
    }
}

/// Euclidean norm of `(y1, y2, hat z)`.
pub fn slab_norm(x: &SlabPoint, h: usize) -> f64 {
    let zh = hat(x.z, h);
    ((x.y1 * x.y1 + x.y2 * x.y2 + zh * zh) as f64).sqrt()
}

/// A finite set of slab points without duplicates, in a fixed order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Region {
    pub points: Vec<SlabPoint>,
    pub params: SlabParams,
}

impl Region {
    /// Reduces `z` mod `h` and drops repeated points, keeping first occurrences.
    pub fn new(points: impl IntoIterator<Item = SlabPoint>, params: SlabParams) -> Self {
        let mut seen = HashMap::new();
        let mut out = Vec::new();
        for p in points {
            let p = SlabPoint::new(p.y1, p.y2, p.z, params.h);
            if seen.insert(p, out.len()).is_none() {
                out.push(p);
            }
        }
        Self { points: out, params }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn index(&self) -> HashMap<SlabPoint, usize> {
        self.points.iter().enumerate().map(|(i, p)| (*p, i)).collect()
    }

    pub fn contains_all(&self, other: &Region) -> bool {
        let idx = self.index();
        other.points.iter().all(|p| idx.contains_key(p))
    }

    /// Largest horizontal coordinate difference between two points.
    pub fn horizontal_diameter(&self) -> i64 {
        let (mut lo1, mut hi1, mut lo2, mut hi2) = (i64::MAX, i64::MIN, i64::MAX, i64::MIN);
        for p in &self.points {
            lo1 = lo1.min(p.y1);
            hi1 = hi1.max(p.y1);
            lo2 = lo2.min(p.y2);
            hi2 = hi2.max(p.y2);
        }
        if self.points.is_empty() {
            0
        } else {
            (hi1 - lo1).max(hi2 - lo2)
        }
    }

    /// Points all of whose six neighbors are in the region.
    pub fn interior_mask(&self) -> Vec<bool> {
        let idx = self.index();
        self.points
            .iter()
            .map(|p| p.neighbors(self.params.h).iter().all(|q| idx.contains_key(q)))
            .collect()
    }

    /// One `y1 y2 z` triple per line.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        for p in &self.points {
            writeln!(w, "{} {} {}", p.y1, p.y2, p.z)?;
        }
        Ok(())
    }

    /// Parses the line format of [`Region::write_text`]; blank lines and `#` comments are skipped.
    pub fn read_text<R: BufRead>(r: R, params: SlabParams) -> Result<Self> {
        let mut pts = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v: Vec<i64> = line
                .split_whitespace()
                .map(|s| s.parse::<i64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
            if v.len() != 3 {
                return Err(Error::Parse(format!("line {}: expected `y1 y2 z`", i + 1)));
            }
            if v[2] < 0 || v[2] >= params.h as i64 {
                return domain(format!("line {}: z = {} outside [0, {})", i + 1, v[2], params.h));
            }
            pts.push(SlabPoint::new(v[0], v[1], v[2], params.h));
        }
        Ok(Region::new(pts, params))
    }
}

fn check_radius(r: f64) -> Result<()> {
    if !(r >= 1.0) || !r.is_finite() {
        return domain(format!("radius must be >= 1, got {r}"));
    }
    Ok(())
}

/// `B(center, R) = { x : ||x - center|| < R }`.
pub fn ball(center: &SlabPoint, r: f64, params: &SlabParams) -> Result<Region> {
    check_radius(r)?;
    Ok(ball_unchecked(center, r, params))
}

pub(crate) fn ball_unchecked(center: &SlabPoint, r: f64, params: &SlabParams) -> Region {
    let h = params.h;
    let m = r.ceil() as i64;
    let mut pts = Vec::new();
    for d1 in -m..=m {
        for d2 in -m..=m {
            for z in 0..h as i64 {
                let off = SlabPoint::new(d1, d2, z, h);
                if slab_norm(&off, h) < r {
                    pts.push(center.add(&off, h));
                }
            }
        }
    }
    Region::new(pts, *params)
}

/// `D(center, R)`: horizontal disk `|y' - y| < R` times vertical ball `d(z', z) < R`.
pub fn disk(center: &SlabPoint, r: f64, params: &SlabParams) -> Result<Region> {
    check_radius(r)?;
    let h = params.h;
    let m = r.ceil() as i64;
    let mut pts = Vec::new();
    for d1 in -m..=m {
        for d2 in -m..=m {
            if (((d1 * d1 + d2 * d2) as f64).sqrt()) >= r {
                continue;
            }
            for z in 0..h as i64 {
                if (hat(z, h).abs() as f64) < r {
                    pts.push(center.add(&SlabPoint::new(d1, d2, z, h), h));
                }
            }
        }
    }
    Ok(Region::new(pts, *params))
}

/// `l_R = {(k, 0, 0) : 0 <= k <= R - 1}`.
pub fn line(r: usize, params: &SlabParams) -> Result<Region> {
    if r == 0 {
        return domain("line needs R >= 1");
    }
    Ok(Region::new((0..r as i64).map(|k| SlabPoint { y1: k, y2: 0, z: 0 }), *params))
}

/// `B_{(1-a)R} \ B_{(1-b)R}` around the origin.
pub fn annulus(a: f64, b: f64, r: f64, params: &SlabParams) -> Result<Region> {
    if !(0.0 < a && a < b && b < 1.0) {
        return domain(format!("annulus needs 0 < a < b < 1, got a = {a}, b = {b}"));
    }
    check_radius(r)?;
    let outer = ball_unchecked(&SlabPoint::ORIGIN, (1.0 - a) * r, params);
    let inner_r = (1.0 - b) * r;
    let pts = outer.points.into_iter().filter(|p| slab_norm(p, params.h) >= inner_r);
    Ok(Region::new(pts, *params))
}

/// Horizontal square window `[-half_width, half_width]^2` used for lattice checks.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Window {
    pub half_width: i64,
}

/// Vertical anchors `s_0 < ... < s_{m-1}` of the renormalization lattice.
///
/// `m = max(1, floor(h/L))` gaps of sizes `floor(h/m)` or `floor(h/m)+1`, the
/// larger ones first, with `s_j` the last site of gap `j`.
pub fn vertical_anchors(l: i64, h: usize) -> Result<Vec<i64>> {
    if l <= 3 {
        return domain(format!("renormalization lattice needs L > 3, got {l}"));
    }
    let h = h as i64;
    let m = (h / l).max(1);
    let (q, rem) = (h / m, h % m);
    let mut s = Vec::with_capacity(m as usize);
    let mut acc = 0;
    for i in 0..m {
        acc += q + i64::from(i < rem);
        s.push(acc - 1);
    }
    Ok(s)
}

/// `Lambda(L)` inside the window: `L Z^2` horizontally times the vertical anchors.
pub fn renorm_lattice(l: i64, window: Window, params: &SlabParams) -> Result<Region> {
    let anchors = vertical_anchors(l, params.h)?;
    let k = window.half_width.div_euclid(l);
    let mut pts = Vec::new();
    for i in -k..=k {
        for j in -k..=k {
            for &s in &anchors {
                pts.push(SlabPoint::new(i * l, j * l, s, params.h));
            }
        }
    }
    Ok(Region::new(pts, *params))
}

/// `F(R) = R ^ h / K_0((R v h)/N)`.
pub fn f_box(r: f64, params: &SlabParams) -> f64 {
    let h = params.hf();
    r.min(h / k0(r.max(h) / params.nf()))
}
