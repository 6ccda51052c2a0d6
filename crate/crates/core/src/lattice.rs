//! Finite pieces of the slab with zero boundary values outside, and the
//! operator `lambda I - A/6` restricted to them.

use std::collections::{HashMap, VecDeque};

use crate::error::Result;
use crate::linalg::{cg, CgReport};
use crate::slab::{SlabParams, SlabPoint};

const NONE: u32 = u32::MAX;

#[derive(Clone, Debug)]
enum Indexer {
    Box { lo1: i64, lo2: i64, w1: i64, w2: i64 },
    Map(HashMap<SlabPoint, usize>),
}

/// Vertices of a finite subgraph; the walk is killed on leaving it.
#[derive(Clone, Debug)]
pub struct Domain {
    pub params: SlabParams,
    pub points: Vec<SlabPoint>,
    indexer: Indexer,
    nbr: Vec<[u32; 6]>,
}

/// Relative residual targeted by every lattice solve.
pub const SOLVE_TOL: f64 = 1e-12;

impl Domain {
    /// `[lo1, hi1] x [lo2, hi2] x Z/hZ`.
    pub fn boxed(params: SlabParams, lo1: i64, hi1: i64, lo2: i64, hi2: i64) -> Self {
        let h = params.h as i64;
        let (w1, w2) = (hi1 - lo1 + 1, hi2 - lo2 + 1);
        let mut points = Vec::with_capacity((w1 * w2 * h) as usize);
        for y1 in lo1..=hi1 {
            for y2 in lo2..=hi2 {
                for z in 0..h {
                    points.push(SlabPoint { y1, y2, z });
                }
            }
        }
        let indexer = Indexer::Box { lo1, lo2, w1, w2 };
        Self::finish(params, points, indexer)
    }

    /// Box of half-width `radius` around the horizontal bounding box of `pts`.
    pub fn around(params: SlabParams, pts: &[SlabPoint], radius: i64) -> Self {
        let lo1 = pts.iter().map(|p| p.y1).min().unwrap_or(0) - radius;
        let hi1 = pts.iter().map(|p| p.y1).max().unwrap_or(0) + radius;
        let lo2 = pts.iter().map(|p| p.y2).min().unwrap_or(0) - radius;
        let hi2 = pts.iter().map(|p| p.y2).max().unwrap_or(0) + radius;
        Self::boxed(params, lo1, hi1, lo2, hi2)
    }

    pub fn from_points(params: SlabParams, points: Vec<SlabPoint>) -> Self {
        let map = points.iter().enumerate().map(|(i, p)| (*p, i)).collect();
        Self::finish(params, points, Indexer::Map(map))
    }

    fn finish(params: SlabParams, points: Vec<SlabPoint>, indexer: Indexer) -> Self {
        let mut d = Self { params, points, indexer, nbr: Vec::new() };
        let h = params.h;
        let nbr = d
            .points
            .iter()
            .map(|p| {
                let mut out = [NONE; 6];
                for (k, q) in p.neighbors(h).iter().enumerate() {
                    if let Some(i) = d.index_of(q) {
                        out[k] = i as u32;
                    }
                }
                out
            })
            .collect();
        d.nbr = nbr;
        d
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn index_of(&self, p: &SlabPoint) -> Option<usize> {
        match &self.indexer {
            Indexer::Box { lo1, lo2, w1, w2 } => {
                let (a, b) = (p.y1 - lo1, p.y2 - lo2);
                if a < 0 || b < 0 || a >= *w1 || b >= *w2 {
                    return None;
                }
                Some(((a * w2 + b) * self.params.h as i64 + p.z) as usize)
            }
            Indexer::Map(m) => m.get(p).copied(),
        }
    }

    /// Neighbor slots of vertex `i` (`None` outside the domain).
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = Option<usize>> + '_ {
        self.nbr[i].iter().map(|&j| if j == NONE { None } else { Some(j as usize) })
    }

    /// `y = (lambda I - A/6) x` with zero values outside; rows and columns in
    /// `fixed` are replaced by the identity.
    pub fn apply(&self, x: &[f64], y: &mut [f64], fixed: Option<&[bool]>) {
        let lam = self.params.vertex_weight;
        let w = self.params.edge_weight;
        let get = |j: u32| -> f64 {
            if j == NONE {
                return 0.0;
            }
            let j = j as usize;
            match fixed {
                Some(f) if f[j] => 0.0,
                _ => x[j],
            }
        };
        for i in 0..self.points.len() {
            if let Some(f) = fixed {
                if f[i] {
                    y[i] = x[i];
                    continue;
                }
            }
            let n = &self.nbr[i];
            let s = get(n[0]) + get(n[1]) + get(n[2]) + get(n[3]) + get(n[4]) + get(n[5]);
            y[i] = lam * x[i] - w * s;
        }
    }

    pub fn solve(&self, rhs: &[f64], fixed: Option<&[bool]>) -> Result<CgReport> {
        // CG needs O(N log(1/tol)) iterations at mass 1/N.
        let max_iter = 200 * self.params.n.max(8) + 20_000;
        cg(|x, y| self.apply(x, y, fixed), rhs, None, SOLVE_TOL, max_iter)
    }

    /// Green's function of the domain with source at `p`.
    pub fn point_source(&self, p: &SlabPoint) -> Result<CgReport> {
        let i = self.index_of(p).ok_or_else(|| {
            crate::error::Error::Domain(format!("source {p} outside the domain"))
        })?;
        let mut rhs = vec![0.0; self.len()];
        rhs[i] = 1.0;
        self.solve(&rhs, None)
    }

    /// Hitting probabilities of the vertex set marked in `target`.
    pub fn hitting(&self, target: &[bool]) -> Result<(Vec<f64>, CgReport)> {
        let w = self.params.edge_weight;
        let mut rhs = vec![0.0; self.len()];
        for i in 0..self.len() {
            if target[i] {
                continue;
            }
            for j in self.nbr[i] {
                if j != NONE && target[j as usize] {
                    rhs[i] += w;
                }
            }
        }
        let rep = self.solve(&rhs, Some(target))?;
        let mut hit = rep.x.clone();
        for i in 0..self.len() {
            if target[i] {
                hit[i] = 1.0;
            }
        }
        Ok((hit, rep))
    }

    /// `lambda u(i) - (1/6) sum_{j ~ i} u(j)` at one vertex.
    pub fn row(&self, u: &[f64], i: usize) -> f64 {
        let s: f64 = self.nbr[i].iter().filter(|&&j| j != NONE).map(|&j| u[j as usize]).sum();
        self.params.vertex_weight * u[i] - self.params.edge_weight * s
    }

    pub fn is_connected(&self) -> bool {
        if self.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.len()];
        let mut q = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = q.pop_front() {
            for j in self.nbr[i] {
                if j != NONE && !seen[j as usize] {
                    seen[j as usize] = true;
                    count += 1;
                    q.push_back(j as usize);
                }
            }
        }
        count == self.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_site_green_is_inverse_weight() {
        let p = SlabParams::new(4, 3).unwrap();
        let d = Domain::from_points(p, vec![SlabPoint::ORIGIN]);
        let rep = d.point_source(&SlabPoint::ORIGIN).unwrap();
        assert!((rep.x[0] - 1.0 / p.vertex_weight).abs() < 1e-15);
    }

    #[test]
    fn box_index_round_trip() {
        let p = SlabParams::new(8, 3).unwrap();
        let d = Domain::boxed(p, -2, 3, -1, 1);
        for (i, q) in d.points.iter().enumerate() {
            assert_eq!(d.index_of(q), Some(i));
        }
        assert!(d.is_connected());
    }

    #[test]
    fn thin_slab_self_loop_enters_operator() {
        // h = 1: the vertical self-loop contributes 2/6 of the diagonal.
        let p = SlabParams::new(4, 1).unwrap();
        let d = Domain::from_points(p, vec![SlabPoint::ORIGIN]);
        let mut y = [0.0];
        d.apply(&[1.0], &mut y, None);
        assert!((y[0] - (p.vertex_weight - 2.0 / 6.0)).abs() < 1e-15);
    }
}
