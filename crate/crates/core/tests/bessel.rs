use approx::assert_relative_eq;
use proptest::prelude::*;
use slabgff_core::bessel::*;

/// Trapezoid rule on `int_0^inf e^{-t cosh r} dr`; the integrand is analytic
/// and even in `r`, so the error decays exponentially in `1/step`.
fn k0_trapezoid(t: f64) -> f64 {
    let step: f64 = 1.0 / 64.0;
    let mut s = 0.5 * (-t).exp();
    let mut r: f64 = step;
    loop {
        let v = (-t * r.cosh()).exp();
        s += v;
        if v < 1e-300 || r > 40.0 {
            break;
        }
        r += step;
    }
    s * step
}

#[test]
fn k0_matches_trapezoid_oracle() {
    for &t in &[1e-3, 0.01, 0.1, 0.5, 1.0, 1.9, 2.0, 2.5, 5.0, 20.0, 80.0] {
        let want = k0_trapezoid(t);
        assert_relative_eq!(k0(t), want, max_relative = 1e-11);
        assert_relative_eq!(k0_integral(t, &QuadratureConfig::default()).unwrap(), want, max_relative = 1e-11);
        if t <= 2.0 {
            assert_relative_eq!(k0_series(t).unwrap(), want, max_relative = 1e-11);
        }
    }
}

#[test]
fn known_values() {
    // Abramowitz and Stegun, table 9.8.
    assert_relative_eq!(k0(1.0), 0.421_024_438_240_708_3, max_relative = 1e-13);
    assert_relative_eq!(k0(0.1), 2.427_069_024_702_017, max_relative = 1e-13);
    assert_relative_eq!(k0(2.0), 0.113_893_872_749_533_4, max_relative = 1e-13);
}

#[test]
fn small_argument_asymptotics() {
    for &t in &[1e-6f64, 1e-8] {
        let lead = (2.0 / t).ln() - EULER_GAMMA;
        assert!((k0(t) - lead).abs() < t * t * (1.0 / t).ln());
    }
}

#[test]
fn domain_errors() {
    assert!(k0_series(0.0).is_err());
    assert!(k0_series(2.5).is_err());
    assert!(k0_integral(-1.0, &QuadratureConfig::default()).is_err());
    assert!(k_half(0.0).is_err());
    assert!(k0(0.0).is_infinite());
    assert!(k0(-1.0).is_nan());
    assert!(k0_partial_sum(0, 4).is_err());
    assert!(k0_dyadic_sum(0, 1, 4).is_err());
}

#[test]
fn k_half_closed_form_against_integral() {
    // K_{1/2}(x) = int_0^inf e^{-x cosh r} cosh(r/2) dr.
    for &x in &[0.3f64, 1.0, 4.0] {
        let step: f64 = 1.0 / 128.0;
        let mut s = 0.5 * (-x).exp();
        let mut r: f64 = step;
        while r < 40.0 {
            s += (-x * r.cosh()).exp() * (0.5 * r).cosh();
            r += step;
        }
        assert_relative_eq!(k_half(x).unwrap(), s * step, max_relative = 1e-11);
    }
}

#[test]
fn partial_sum_against_direct_sum() {
    for &(r, n) in &[(16u64, 1024u64), (100, 100), (5, 3)] {
        let direct: f64 = (1..=r).map(|k| k0_trapezoid(k as f64 / n as f64)).sum();
        assert_relative_eq!(k0_partial_sum(r, n).unwrap(), direct, max_relative = 1e-10);
    }
}

#[test]
fn partial_sum_scale() {
    // sum_{k <= R} K0(k/N) is comparable to R (K0(R/N) v 1).
    let (r, n) = (100u64, 100u64);
    let s = k0_partial_sum(r, n).unwrap();
    let scale = r as f64 * k0(r as f64 / n as f64).max(1.0);
    assert!(s / scale > 0.5 && s / scale < 2.0, "ratio {}", s / scale);
    // At N = 64 R the sum is close to R K0(R/N); the ratio is about 1.2.
    let (r, n) = (16u64, 1024u64);
    let ratio = k0_partial_sum(r, n).unwrap() / (r as f64 * k0(r as f64 / n as f64));
    assert!(ratio > 1.0 && ratio < 1.25, "ratio {ratio}");
}

#[test]
fn dyadic_sum_against_direct_sum() {
    let (k, h, n) = (5u32, 1u64, 32u64);
    let direct: f64 = (1..=k).map(|j| 4f64.powi(j as i32) * k0_trapezoid((1u64 << j).max(h) as f64 / n as f64)).sum();
    assert_relative_eq!(k0_dyadic_sum(k, h, n).unwrap(), direct, max_relative = 1e-10);
    let bound = 4f64.powi(k as i32) * k0(32.0 / 32.0).max(1.0);
    assert!(direct <= 2.0 * bound);
}

proptest! {
    #[test]
    fn k0_is_decreasing_and_log_bounded(t in 1e-3f64..2.0, dt in 1e-4f64..0.5) {
        prop_assert!(k0(t + dt) < k0(t));
        let l = (1.0 / t).ln();
        let v = k0(t);
        prop_assert!(l <= v && v <= l.max(0.0) + 1.0);
    }

    #[test]
    fn series_and_integral_agree(t in 1e-3f64..2.0) {
        let a = k0_integral(t, &QuadratureConfig::default()).unwrap();
        let b = k0_series(t).unwrap();
        prop_assert!((a - b).abs() <= 1e-10);
    }
}
