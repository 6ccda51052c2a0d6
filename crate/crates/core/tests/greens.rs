use std::f64::consts::PI;

use approx::assert_relative_eq;
use slabgff_core::greens::*;
use slabgff_core::predictions::FittedConstants;
use slabgff_core::{Region, SlabParams, SlabPoint};
use statrs::function::gamma::gamma;

/// `g` on an `L x L x h` torus by direct summation over Fourier modes; the
/// images at distance `L` are suppressed by `exp(-sqrt(6) L / N)`.
fn torus_oracle(x: &SlabPoint, n: usize, h: usize, l: usize) -> f64 {
    let lambda = 1.0 + 1.0 / (n * n) as f64;
    let mut s = 0.0;
    for a in 0..l {
        let k1 = 2.0 * PI * a as f64 / l as f64;
        for b in 0..l {
            let k2 = 2.0 * PI * b as f64 / l as f64;
            for c in 0..h {
                let k3 = 2.0 * PI * c as f64 / h as f64;
                let phase = k1 * x.y1 as f64 + k2 * x.y2 as f64 + k3 * x.z as f64;
                s += phase.cos() / (lambda - (k1.cos() + k2.cos() + k3.cos()) / 3.0);
            }
        }
    }
    s / (l * l * h) as f64
}

#[test]
fn spectral_matches_fourier_oracle() {
    for (n, h) in [(4usize, 1usize), (4, 2), (6, 3), (8, 5)] {
        let p = SlabParams::new(n, h).unwrap();
        let ev = GreenEvaluator::new(p).unwrap();
        let l = 24 * n;
        for x in [SlabPoint::ORIGIN, SlabPoint::new(1, 0, 0, h), SlabPoint::new(3, -2, 1, h), SlabPoint::new(0, 7, 2, h)] {
            let want = torus_oracle(&x, n, h, l);
            let got = ev.g(&x).unwrap();
            assert_relative_eq!(got, want, max_relative = 1e-8);
        }
    }
}

#[test]
fn watson_integral() {
    // Closed form of the return-time Green's function of simple random walk on Z^3.
    let w = 6f64.sqrt() / (32.0 * PI.powi(3)) * gamma(1.0 / 24.0) * gamma(5.0 / 24.0) * gamma(7.0 / 24.0) * gamma(11.0 / 24.0);
    assert_relative_eq!(w, 1.516_386_059_151_978, max_relative = 1e-12);
    assert_relative_eq!(g_z3_origin(), w, max_relative = 1e-9);
}

#[test]
fn dirichlet_oracle_approaches_slab_value() {
    let p = SlabParams::new(8, 4).unwrap();
    let ev = GreenEvaluator::new(p).unwrap();
    let f = OracleField::solve(p, 96).unwrap();
    for x in [SlabPoint::ORIGIN, SlabPoint::new(2, 1, 3, 4), SlabPoint::new(10, 0, 2, 4)] {
        assert_relative_eq!(f.get(&x).unwrap(), ev.g(&x).unwrap(), max_relative = 1e-8);
    }
    assert!(f.get(&SlabPoint::new(97, 0, 0, 4)).is_none());
}

#[test]
fn symmetries() {
    let h = 5;
    let ev = GreenEvaluator::new(SlabParams::new(16, h).unwrap()).unwrap();
    let x = ev.g(&SlabPoint::new(3, 2, 1, h)).unwrap();
    for y in [
        SlabPoint::new(-3, 2, 1, h),
        SlabPoint::new(2, 3, 1, h),
        SlabPoint::new(3, -2, 4, h),
        SlabPoint::new(-2, -3, -1, h),
    ] {
        assert_relative_eq!(ev.g(&y).unwrap(), x, max_relative = 1e-12);
    }
}

#[test]
fn parts_are_positive_and_decay() {
    let h = 4;
    let ev = GreenEvaluator::new(SlabParams::new(32, h).unwrap()).unwrap();
    let mut prev = f64::INFINITY;
    for a in 0..40 {
        let v = ev.eval(&SlabPoint::new(a, 0, 0, h)).unwrap();
        assert!(v.g2 > 0.0 && v.g3 > 0.0);
        assert!(v.g() < prev);
        prev = v.g();
    }
}

#[test]
fn sandwich_within_fixture_band() {
    let k = FittedConstants::bundled();
    for (n, h) in [(16usize, 1usize), (16, 2), (16, 8), (16, 16), (64, 4)] {
        let p = SlabParams::new(n, h).unwrap();
        let ev = GreenEvaluator::new(p).unwrap();
        for y1 in (0..=n as i64).step_by(3) {
            for z in 0..h as i64 {
                let x = SlabPoint::new(y1, 1, z, h);
                if x.horizontal_norm() > n as f64 {
                    continue;
                }
                let ratio = ev.g(&x).unwrap() / sandwich_reference(&x, &p);
                assert!(ratio >= k.sandwich_lo && ratio <= k.sandwich_hi, "N = {n}, h = {h}, {x}: {ratio}");
            }
        }
    }
}

#[test]
fn harnack_within_fixture_bound() {
    let k = FittedConstants::bundled();
    for h in [1usize, 4, 16] {
        let rep = harnack_ratio(6, 0.5, &SlabParams::new(64, h).unwrap()).unwrap();
        assert!(rep.ratio >= 1.0 && rep.ratio <= k.harnack_max, "h = {h}: {}", rep.ratio);
        assert!(rep.residual < 1e-8);
    }
    assert!(harnack_ratio(3, 0.5, &SlabParams::new(64, 4).unwrap()).is_err());
}

#[test]
fn killed_single_site() {
    for h in [2usize, 3, 8] {
        let p = SlabParams::new(10, h).unwrap();
        let kd = KilledDomain::explicit(&Region::new([SlabPoint::ORIGIN], p)).unwrap();
        let v = killed_green(&SlabPoint::ORIGIN, &SlabPoint::ORIGIN, &kd).unwrap();
        assert_relative_eq!(v, 1.0 / 1.01, max_relative = 1e-12);
    }
    // h = 1: the two vertical half-edges are a self-loop.
    let p = SlabParams::new(10, 1).unwrap();
    let kd = KilledDomain::explicit(&Region::new([SlabPoint::ORIGIN], p)).unwrap();
    let v = killed_green(&SlabPoint::ORIGIN, &SlabPoint::ORIGIN, &kd).unwrap();
    assert_relative_eq!(v, 1.0 / (1.01 - 1.0 / 3.0), max_relative = 1e-12);
    assert!(killed_green(&SlabPoint::new(1, 0, 0, 1), &SlabPoint::ORIGIN, &kd).is_err());
}

/// `e^{-s} I_n(s)` by the trapezoid rule on the periodic integrand over `[0, 2 pi]`.
fn bessel_i_scaled(n: i64, s: f64) -> f64 {
    let m = 4096;
    let mut sum = 0.0;
    for j in 0..m {
        let k = 2.0 * PI * j as f64 / m as f64;
        sum += (n as f64 * k).cos() * (-s * (1.0 - k.cos())).exp();
    }
    sum / m as f64
}

#[test]
fn heat_kernel_against_trapezoid() {
    for (y, t) in [(vec![0i64, 0, 0], 0.7), (vec![1, 2, 0], 3.0), (vec![2, 1], 5.0), (vec![4, 0, 1], 12.0)] {
        let d = y.len() as f64;
        let want: f64 = y.iter().map(|&v| bessel_i_scaled(v, t / d)).product();
        let got = heat_kernel(&y, t, 1.0);
        assert!((got - want).abs() <= 1e-9 * want + 1e-15, "{y:?} {t}: {got} vs {want}");
        assert!(got >= 0.0);
    }
}

#[test]
fn lclt_and_short_time_within_constants() {
    let k = FittedConstants::bundled();
    for y in [vec![4i64, 0, 0], vec![8, 0, 0], vec![16, 0, 0]] {
        let norm = y[0] as f64;
        for m in [0.0, 4.0] {
            let e = lclt_error(&y, m, 1.0).unwrap();
            assert!(e * norm.max(m).powi(3) <= k.lclt_c, "y = {y:?}, M = {m}: {e}");
        }
    }
    assert!(lclt_error(&[0, 0, 0], 0.5, 1.0).is_err());
    assert!(lclt_error(&[1], 1.0, 1.0).is_err());
    let s = short_time_ratio(&[16, 0, 0], 2.0, 1.0, k.short_time_rate);
    assert!(s <= k.short_time_c, "{s}");
}

#[test]
fn variance_prediction_branches() {
    let p = SlabParams::new(1 << 20, 1).unwrap();
    let v = variance_prediction(&p);
    assert!(v.lambda >= 10.0);
    assert_eq!(v.value(), v.two_d);
    let q = SlabParams::new(64, 64).unwrap();
    assert_eq!(variance_prediction(&q).value(), variance_prediction(&q).three_d);
    assert_relative_eq!(v.three_d - v.two_d, g_z3_origin(), max_relative = 1e-12);
}
