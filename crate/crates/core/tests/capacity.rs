use approx::assert_relative_eq;
use proptest::prelude::*;
use slabgff_core::capacity::*;
use slabgff_core::greens::GreenEvaluator;
use slabgff_core::slab::{ball, disk, line};
use slabgff_core::{Region, SlabParams, SlabPoint};

/// `1^T G^{-1} 1` on all points of `A`, by Gaussian elimination with partial pivoting.
fn cap_oracle(a: &Region, ev: &GreenEvaluator) -> f64 {
    let h = a.params.h;
    let pts = &a.points;
    let n = pts.len();
    let mut m: Vec<Vec<f64>> = pts
        .iter()
        .map(|x| {
            let mut row: Vec<f64> = pts.iter().map(|y| ev.g(&x.sub(y, h)).unwrap()).collect();
            row.push(1.0);
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, p);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..=n {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[r][k] * x[k]).sum();
        x[r] = (m[r][n] - s) / m[r][r];
    }
    x.iter().sum()
}

fn setup(n: usize, h: usize) -> (SlabParams, GreenEvaluator) {
    let p = SlabParams::new(n, h).unwrap();
    (p, GreenEvaluator::new(p).unwrap())
}

#[test]
fn singleton_and_pair() {
    let (p, ev) = setup(16, 4);
    let k = GreenKernel::new(&ev, GreenPart::G);
    let g0 = ev.g(&SlabPoint::ORIGIN).unwrap();
    let s = cap_gram(&Region::new([SlabPoint::ORIGIN], p), &k).unwrap();
    assert_relative_eq!(s.capacity, 1.0 / g0, max_relative = 1e-12);
    let x = SlabPoint::new(3, 1, 2, 4);
    let pair = cap_gram(&Region::new([SlabPoint::ORIGIN, x], p), &k).unwrap();
    assert_relative_eq!(pair.capacity, 2.0 / (g0 + ev.g(&x).unwrap()), max_relative = 1e-12);
}

#[test]
fn gram_route_matches_full_oracle() {
    let (p, ev) = setup(16, 4);
    let k = GreenKernel::new(&ev, GreenPart::G);
    for a in [ball(&SlabPoint::ORIGIN, 2.5, &p).unwrap(), disk(&SlabPoint::ORIGIN, 2.0, &p).unwrap(), line(7, &p).unwrap()] {
        let want = cap_oracle(&a, &ev);
        let sol = cap_gram(&a, &k).unwrap();
        assert_relative_eq!(sol.capacity, want, max_relative = 1e-9);
        assert!(sol.residuals.potential.unwrap() < 1e-9);
        assert!(sol.eq_measure.weights.iter().all(|&w| w > 0.0));
    }
}

#[test]
fn shortcut_solvers_agree() {
    let (p, ev) = setup(16, 4);
    let k = GreenKernel::new(&ev, GreenPart::G);
    let l = line(9, &p).unwrap();
    assert_relative_eq!(cap_line(9, &p).unwrap(), cap_gram(&l, &k).unwrap().capacity, max_relative = 1e-8);
    let b = ball(&SlabPoint::ORIGIN, 3.0, &p).unwrap();
    assert_relative_eq!(cap_ball(3.0, &p).unwrap(), cap_oracle(&b, &ev), max_relative = 1e-8);
    // R = 3 > h/2: a full cylinder, solved through the column kernel.
    let d = disk(&SlabPoint::ORIGIN, 3.0, &p).unwrap();
    assert_relative_eq!(cap_disk(3.0, &p).unwrap(), cap_oracle(&d, &ev), max_relative = 1e-8);
}

#[test]
fn hitting_route_agrees_with_gram() {
    let (p, ev) = setup(8, 4);
    let k = GreenKernel::new(&ev, GreenPart::G);
    let a = ball(&SlabPoint::ORIGIN, 2.0, &p).unwrap();
    let hit = equilibrium(&a, None, Some(96)).unwrap();
    assert_eq!(hit.method, Method::HittingSolve);
    assert_relative_eq!(hit.capacity, cap_gram(&a, &k).unwrap().capacity, max_relative = 1e-7);
    let r = hitting_identity_residual(&SlabPoint::new(5, 2, 1, 4), &a, &ev, Some(96)).unwrap();
    assert!(r < 1e-8, "{r}");
}

#[test]
fn variational_agrees_with_gram() {
    let (p, ev) = setup(16, 2);
    let k = GreenKernel::new(&ev, GreenPart::G);
    let a = ball(&SlabPoint::new(0, 0, 1, 2), 2.5, &p).unwrap();
    let v = cap_variational(&a, &k, &OptConfig::default()).unwrap();
    assert_relative_eq!(v.capacity, cap_gram(&a, &k).unwrap().capacity, max_relative = 1e-6);
    assert!(v.argmin.is_probability());
    // Uniform measure has energy at least the minimum 1/cap.
    let e = energy(&DiscreteMeasure::uniform(a.clone()), &k).unwrap();
    assert!(e >= 1.0 / v.capacity - 1e-12);
}

#[test]
fn monotone_and_subadditive() {
    let (p, ev) = setup(32, 4);
    let k = GreenKernel::new(&ev, GreenPart::G);
    let mut prev = 0.0;
    for r in [1.0, 1.5, 2.0, 3.0, 4.0] {
        let c = cap_gram(&ball(&SlabPoint::ORIGIN, r, &p).unwrap(), &k).unwrap().capacity;
        assert!(c > prev);
        prev = c;
    }
    let a = ball(&SlabPoint::ORIGIN, 2.0, &p).unwrap();
    let b = ball(&SlabPoint::new(2, 0, 0, 4), 2.0, &p).unwrap();
    let u = Region::new(a.points.iter().chain(&b.points).copied(), p);
    let (ca, cb, cu) = (
        cap_gram(&a, &k).unwrap().capacity,
        cap_gram(&b, &k).unwrap().capacity,
        cap_gram(&u, &k).unwrap().capacity,
    );
    assert!(cu <= ca + cb && cu >= ca.max(cb));
}

#[test]
fn empty_set_is_an_error() {
    let (p, ev) = setup(8, 2);
    let k = GreenKernel::new(&ev, GreenPart::G);
    assert!(cap_gram(&Region::new([], p), &k).is_err());
    assert!(equilibrium(&Region::new([], p), None, None).is_err());
}

/// Euclidean projection onto the simplex: `max(v - tau, 0)` with `tau` found by bisection.
fn simplex_oracle(v: &[f64]) -> Vec<f64> {
    let mass = |t: f64| v.iter().map(|x| (x - t).max(0.0)).sum::<f64>();
    let (mut lo, mut hi) = (v.iter().copied().fold(f64::INFINITY, f64::min) - 1.0, v.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    v.iter().map(|x| (x - 0.5 * (lo + hi)).max(0.0)).collect()
}

proptest! {
    #[test]
    fn simplex_projection(v in prop::collection::vec(-5.0f64..5.0, 1..30)) {
        let got = project_simplex(&v);
        let want = simplex_oracle(&v);
        prop_assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (a, b) in got.iter().zip(&want) {
            prop_assert!(*a >= 0.0);
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
