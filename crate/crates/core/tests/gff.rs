use slabgff_core::gff::*;
use slabgff_core::{SlabParams, SlabPoint};

fn tbox(n: usize, h: usize, m: usize) -> TorusBox {
    TorusBox::new(SlabParams::new(n, h).unwrap(), m).unwrap()
}

fn constant_field(t: TorusBox, c: f64, seed: u64) -> FieldSample {
    FieldSample { values: vec![c; t.len()], seed, sample: 0, tbox: t }
}

#[test]
fn open_probability_on_constant_field() {
    // w = 1/6, phi = 3: P(open) = 1 - exp(-2 w phi^2) = 1 - e^{-3}.
    let t = tbox(8, 4, 64);
    let f = constant_field(t, 3.0, 11);
    let bits = percolate(&f);
    let mut open = 0usize;
    let mut total = 0usize;
    for v in 0..t.len() {
        for dir in 0..2 {
            let id = 3 * v + dir;
            total += 1;
            open += ((bits[id / 64] >> (id % 64)) & 1) as usize;
        }
    }
    let p = open as f64 / total as f64;
    let want = 1.0 - (-3.0f64).exp();
    let se = (want * (1.0 - want) / total as f64).sqrt();
    assert!((p - want).abs() < 5.0 * se, "{p} vs {want}");
    // Negative ends never connect.
    let g = constant_field(t, -1.0, 11);
    assert!(percolate(&g).iter().all(|&w| w == 0));
}

#[test]
fn isolated_origin() {
    let t = tbox(4, 3, 32);
    let mut f = constant_field(t, -1.0, 5);
    f.values[0] = 2.0;
    let c = origin_cluster(&f);
    assert!(c.contains_origin && !c.wrapped);
    assert_eq!(c.vertices, vec![SlabPoint::ORIGIN]);
    let g = TorusGreen::new(t);
    // The cable cluster contains the origin; its overhangs only add capacity.
    let cap = cable_capacity(&f, &c, &g, f64::INFINITY).unwrap();
    assert!(cap >= 1.0 / g.origin() - 1e-12, "{cap}");
    assert_eq!(cap, cable_capacity(&f, &c, &g, f64::INFINITY).unwrap());
    f.values[0] = -0.5;
    let c = origin_cluster(&f);
    assert!(!c.contains_origin);
    assert_eq!(cable_capacity(&f, &c, &g, f64::INFINITY).unwrap(), 0.0);
}

#[test]
fn field_variance_matches_torus_green() {
    let t = tbox(16, 4, 128);
    let g0 = TorusGreen::new(t).origin();
    let per_sample = map_samples(t, 40, 3, |f| f.values.iter().map(|v| v * v).sum::<f64>() / f.values.len() as f64);
    let mean = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
    let var = per_sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (per_sample.len() - 1) as f64;
    let se = (var / per_sample.len() as f64).sqrt();
    assert!((mean - g0).abs() < 4.0 * se, "{mean} vs {g0} (se {se})");
}

#[test]
fn torus_green_is_solution() {
    // (lambda - A/6) G = delta_0, with the h = 2 double edge.
    for h in [1usize, 2, 4] {
        let t = TorusBox::unchecked(SlabParams::new(6, h).unwrap(), 16);
        let g = TorusGreen::new(t);
        let lambda = 1.0 + 1.0 / 36.0;
        for x in [SlabPoint::ORIGIN, SlabPoint::new(2, 1, 1, h)] {
            let nb = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
                .iter()
                .map(|&(a, b, c)| g.at(&SlabPoint { y1: x.y1 + a, y2: x.y2 + b, z: x.z + c }))
                .sum::<f64>();
            let lhs = lambda * g.at(&x) - nb / 6.0;
            let want = if x == SlabPoint::ORIGIN { 1.0 } else { 0.0 };
            assert!((lhs - want).abs() < 1e-10, "h = {h}, {x}: {lhs}");
        }
    }
}

#[test]
fn origin_sign_is_fair() {
    let t = tbox(4, 2, 32);
    let n = 2000;
    let pos = map_samples(t, n, 17, |f| f.values[0] >= 0.0).into_iter().filter(|&b| b).count() as f64 / n as f64;
    assert!((pos - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt(), "{pos}");
}

#[test]
fn one_arm_is_monotone_in_r() {
    let run = one_arm(tbox(16, 2, 128), 24.0, 400, 9).unwrap();
    let mut prev = 1.0;
    for r in [0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 24.0] {
        let e = run.estimate(r, None).unwrap();
        assert!(e.theta_hat <= prev);
        prev = e.theta_hat;
    }
    let e0 = run.estimate(0.0, None).unwrap();
    assert!((e0.theta_hat - 0.5).abs() < 0.1);
    assert!(run.estimate(25.0, None).is_err());
    assert!(one_arm(tbox(16, 2, 128), 65.0, 10, 9).is_err());
    assert!(one_arm(tbox(16, 2, 128), 8.0, 0, 9).is_err());
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let t = tbox(8, 4, 64);
    let run_with = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let reach = one_arm(t, 16.0, 60, 21).unwrap().reach;
            let law = cluster_cap_law(t, 40, 22, CapMode::Cable, 6).unwrap().capacities;
            (reach, law)
        })
    };
    let (a, b) = (run_with(1), run_with(3));
    assert_eq!(format!("{:?}", a), format!("{:?}", b));
}

#[test]
fn samples_are_reproducible() {
    let t = tbox(4, 2, 32);
    let s = Sampler::new(t);
    assert_eq!(s.sample(4, 7).values, s.sample(4, 7).values);
    assert_ne!(s.sample(4, 7).values, s.sample(4, 6).values);
    assert_ne!(s.sample(4, 7).values, s.sample(5, 7).values);
}
