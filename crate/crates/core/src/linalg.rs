//! Conjugate gradients for the sparse lattice operators and dense SPD solves.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use crate::error::{numeric, Result};

#[derive(Clone, Debug)]
pub struct CgReport {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` for a symmetric positive definite `A` given as `apply(x, out)`.
pub fn cg<F>(apply: F, b: &[f64], x0: Option<&[f64]>, rel_tol: f64, max_iter: usize) -> Result<CgReport>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(CgReport { x: vec![0.0; n], iterations: 0, rel_residual: 0.0 });
    }
    let mut x = x0.map_or_else(|| vec![0.0; n], |v| v.to_vec());
    let mut r = vec![0.0; n];
    apply(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let mut it = 0;
    while rr.sqrt() > rel_tol * bnorm {
        if it >= max_iter {
            return numeric(format!(
                "CG did not converge: relative residual {:.3e} after {it} iterations",
                rr.sqrt() / bnorm
            ));
        }
        apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
        it += 1;
        // Recompute the true residual now and then against drift.
        if it % 200 == 0 {
            apply(&x, &mut r);
            for i in 0..n {
                r[i] = b[i] - r[i];
            }
            rr = dot(&r, &r);
        }
    }
    Ok(CgReport { x, iterations: it, rel_residual: rr.sqrt() / bnorm })
}

/// Dense symmetric positive definite matrix in column-major order.
#[derive(Clone, Debug)]
pub struct SpdMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SpdMatrix {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for j in 0..n {
            for i in j..n {
                let v = f(i, j);
                data[j * n + i] = v;
                data[i * n + j] = v;
            }
        }
        Self { n, data }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.n + i]
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.n {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let col = &self.data[j * self.n..(j + 1) * self.n];
            for (o, c) in out.iter_mut().zip(col) {
                *o += c * xj;
            }
        }
    }

    /// Cholesky solve for several right-hand sides (each of length `n`).
    pub fn solve(&self, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = self.n;
        if n == 0 {
            return Ok(rhs.iter().map(|_| Vec::new()).collect());
        }
        let a = Mat::<f64>::from_fn(n, n, |i, j| self.data[j * n + i]);
        let llt = a
            .llt(Side::Lower)
            .map_err(|e| crate::error::Error::Numeric(format!("Cholesky failed: {e:?}")))?;
        let b = Mat::<f64>::from_fn(n, rhs.len(), |i, k| rhs[k][i]);
        let x = llt.solve(&b);
        let out: Vec<Vec<f64>> = (0..rhs.len()).map(|k| (0..n).map(|i| x[(i, k)]).collect()).collect();
        if out.iter().flatten().any(|v| !v.is_finite()) {
            return numeric("Cholesky solve produced non-finite values");
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cg_solves_tridiagonal() {
        let n = 50;
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 2.5 * x[i] - l - r;
            }
        };
        let b = vec![1.0; n];
        let rep = cg(apply, &b, None, 1e-12, 1000).unwrap();
        let mut y = vec![0.0; n];
        apply(&rep.x, &mut y);
        for i in 0..n {
            assert!((y[i] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn dense_solve_matches_matvec() {
        let m = SpdMatrix::from_fn(30, |i, j| 1.0 / (1.0 + (i as f64 - j as f64).abs()) + if i == j { 3.0 } else { 0.0 });
        let b: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let x = m.solve(&[b.clone()]).unwrap().remove(0);
        let mut y = vec![0.0; 30];
        m.matvec(&x, &mut y);
        for i in 0..30 {
            assert!((y[i] - b[i]).abs() < 1e-12);
        }
    }
}
