//! Acceptance criteria 1-13 and the auxiliary checks of the `validate` suites.
//!
//! Each check returns a [`CriterionRecord`]; an error inside a check is a
//! failed record, never a panic.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use slabgff_core::bessel::{k0, k0_integral, k0_series, QuadratureConfig};
use slabgff_core::capacity::{
    cap_disk, cap_gram, cap_line, cap_variational, equilibrium, hitting_identity_residual, range_capacity_tail,
    GreenKernel, GreenPart, OptConfig, RangeTailConfig,
};
use slabgff_core::gff::{capped_crossing_joint, cluster_cap_law, one_arm, CapMode, OneArmRun, TorusBox, TorusGreen};
use slabgff_core::greens::{g_z3_origin, lclt_error, short_time_ratio, GreenEvaluator, OracleField};
use slabgff_core::predictions::{
    arctan_inequalities_check, f_infty, s_star, theta_band, BandKind, FittedConstants, PredictionInput,
};
use slabgff_core::slab::{ball, f_box, slab_norm};
use slabgff_core::{Region, Result, SlabParams, SlabPoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Quick,
    Desk,
    Extended,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionRecord {
    pub id: String,
    pub title: String,
    pub passed: bool,
    pub measured: Value,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionRecord {
    pub fn line(&self) -> String {
        format!(
            "criterion {:<22} {}  {}  ({:.1} s)",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.detail,
            self.seconds
        )
    }
}

/// `(passed, measured values, one-line summary)`.
pub type Outcome = (bool, Value, String);

pub fn record(id: &str, title: &str, f: impl FnOnce() -> Result<Outcome>) -> CriterionRecord {
    let t0 = Instant::now();
    let (passed, measured, detail) = match f() {
        Ok(o) => o,
        Err(e) => (false, Value::Null, format!("error: {e}")),
    };
    CriterionRecord {
        id: id.to_string(),
        title: title.to_string(),
        passed,
        measured,
        detail,
        seconds: t0.elapsed().as_secs_f64(),
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

// ---------------------------------------------------------------- 1

pub fn c1_bessel() -> Result<Outcome> {
    let cfg = QuadratureConfig::default();
    let mut max_diff: f64 = 0.0;
    let mut bound_failures = Vec::new();
    for t in log_grid(1e-3, 2.0, 200) {
        let a = k0_integral(t, &cfg)?;
        let b = k0_series(t)?;
        max_diff = max_diff.max((a - b).abs());
        let l = (1.0 / t).ln();
        if b < l || b > l.max(0.0) + 1.0 {
            bound_failures.push(t);
        }
    }
    let ok = max_diff <= 1e-10 && bound_failures.is_empty();
    Ok((
        ok,
        json!({ "max_abs_diff": max_diff, "bound_failures": bound_failures }),
        format!("max |integral - series| = {max_diff:.2e}, bound failures {}", bound_failures.len()),
    ))
}

// ---------------------------------------------------------------- 2

/// Probe points with `||x|| <= r`, the origin first.
pub fn probe_points(h: usize, r: f64, count: usize, seed: u64) -> Vec<SlabPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![SlabPoint::ORIGIN];
    let ri = r as i64;
    while out.len() < count {
        let p = SlabPoint::new(rng.random_range(-ri..=ri), rng.random_range(-ri..=ri), rng.random_range(0..h as i64), h);
        if slab_norm(&p, h) <= r && !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

pub fn green_cross_check(n: usize, hs: &[usize], nprobes: usize, seed: u64) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut per_h = Vec::new();
    for &h in hs {
        let p = SlabParams::new(n, h)?;
        let ev = GreenEvaluator::new(p)?;
        let oracle = OracleField::solve(p, 4 * n as i64)?;
        let probes = probe_points(h, (n / 2) as f64, nprobes.min(probe_capacity(h, (n / 2) as f64)), seed ^ h as u64);
        let vals = ev.eval_many(&probes)?;
        let mut e: f64 = 0.0;
        for (x, v) in probes.iter().zip(&vals) {
            let o = oracle.get(x).expect("probe inside the oracle box");
            e = e.max((v.g() - o).abs() / o);
        }
        worst = worst.max(e);
        per_h.push(json!({ "h": h, "max_rel_err": e, "probes": probes.len() }));
    }
    Ok((worst <= 1e-4, json!({ "per_h": per_h, "max_rel_err": worst }), format!("max rel err {worst:.2e}")))
}

fn probe_capacity(h: usize, r: f64) -> usize {
    ball(&SlabPoint::ORIGIN, r + 1e-9, &SlabParams::new(h.max(1) * 64, h).expect("valid")).map_or(1, |b| b.len())
}

pub fn c2_green(seed: u64) -> Result<Outcome> {
    green_cross_check(32, &[1, 2, 4, 8, 16, 32], 50, seed)
}

// ---------------------------------------------------------------- 3

pub fn c3_variance() -> Result<Outcome> {
    let p1 = SlabParams::new(4096, 1)?;
    let g1 = GreenEvaluator::new(p1)?.g(&SlabPoint::ORIGIN)?;
    let r1 = g1 * PI / (3.0 * 4096f64.ln());
    let p2 = SlabParams::new(64, 64)?;
    let g2 = GreenEvaluator::new(p2)?.g(&SlabPoint::ORIGIN)?;
    let reference = 1.5164 + 3.0 / PI * 64f64.ln() / 64.0;
    let r2 = g2 / reference;
    let ok1 = (0.90..=1.10).contains(&r1);
    let ok2 = (0.98..=1.02).contains(&r2);
    Ok((
        ok1 && ok2,
        json!({
            "planar": { "N": 4096, "h": 1, "g0": g1, "ratio": r1, "passed": ok1 },
            "cubic": { "N": 64, "h": 64, "g0": g2, "g_z3": g_z3_origin(), "reference": reference, "ratio": r2, "passed": ok2 },
        }),
        format!("g0 pi/(3 log N) = {r1:.4} (h=1), g0/ref = {r2:.4} (h=N=64)"),
    ))
}

// ---------------------------------------------------------------- 4

fn random_set(rng: &mut ChaCha8Rng, params: SlabParams, size: usize, radius: i64) -> Region {
    let h = params.h as i64;
    let mut pts = Vec::with_capacity(size);
    while pts.len() < size {
        let p = SlabPoint::new(rng.random_range(-radius..=radius), rng.random_range(-radius..=radius), rng.random_range(0..h), params.h);
        if !pts.contains(&p) {
            pts.push(p);
        }
    }
    Region::new(pts, params)
}

pub fn c4_identities(instances: usize, seed: u64) -> Result<Outcome> {
    let p = SlabParams::new(8, 4)?;
    let boxr = 12 * p.n as i64;
    let ev = GreenEvaluator::new(p)?;
    let g0 = ev.g(&SlabPoint::ORIGIN)?;

    let single = equilibrium(&Region::new([SlabPoint::ORIGIN], p), None, Some(boxr))?;
    let point_err = (single.capacity * g0 - 1.0).abs();

    let b = ball(&SlabPoint::ORIGIN, 3.0, &p)?;
    let sol = equilibrium(&b, None, Some(boxr))?;
    let mask = b.interior_mask();
    let interior_err = sol
        .eq_measure
        .weights
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|(w, _)| (w - p.killing).abs())
        .fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last_exit: f64 = 0.0;
    for _ in 0..instances {
        let size = rng.random_range(1..=12);
        let a = random_set(&mut rng, p, size, 4);
        let x = SlabPoint::new(rng.random_range(-8..=8), rng.random_range(-8..=8), rng.random_range(0..4), p.h);
        last_exit = last_exit.max(hitting_identity_residual(&x, &a, &ev, Some(boxr))?);
    }

    let kernel = GreenKernel::new(&ev, GreenPart::G);
    let cfg = OptConfig::default();
    let mut var_err: f64 = 0.0;
    for _ in 0..instances {
        let size = rng.random_range(1..=200);
        let a = random_set(&mut rng, p, size, 6);
        let v = cap_variational(&a, &kernel, &cfg)?;
        let e = equilibrium(&a, None, Some(boxr))?;
        var_err = var_err.max((v.capacity - e.capacity).abs() / e.capacity);
    }
    let ok = point_err <= 1e-8 && interior_err <= 1e-12 && last_exit <= 1e-8 && var_err <= 1e-6;
    Ok((
        ok,
        json!({
            "cap0_g0_err": point_err,
            "interior_weight_err": interior_err,
            "last_exit_residual": last_exit,
            "variational_rel_err": var_err,
            "instances": instances,
        }),
        format!(
            "|cap g0 - 1| {point_err:.1e}, interior {interior_err:.1e}, last-exit {last_exit:.1e}, variational {var_err:.1e}"
        ),
    ))
}

// ---------------------------------------------------------------- 5

pub fn c5_flat_capacities() -> Result<Outcome> {
    let p = SlabParams::new(1024, 8)?;
    let r: f64 = 64.0;
    let k = k0(r.max(p.hf()) / p.nf());
    let cd = cap_disk(r, &p)?;
    let disk = cd * k / (PI / 3.0 * p.hf());
    let cl = cap_line(64, &p)?;
    let line = cl * (r.ln() / r + k / p.hf()) / (PI / 3.0);
    let okd = (0.8..=1.2).contains(&disk);
    let okl = (0.8..=1.25).contains(&line);
    Ok((
        okd && okl,
        json!({
            "disk": { "capacity": cd, "ratio": disk, "passed": okd },
            "line": { "capacity": cl, "ratio": line, "passed": okl },
        }),
        format!("disk ratio {disk:.4} in [0.8, 1.2]: {okd}; line ratio {line:.4} in [0.8, 1.25]: {okl}"),
    ))
}

// ---------------------------------------------------------------- 6

pub fn c6_cap_law(nsamples: usize, seed: u64) -> Result<Outcome> {
    let t = TorusBox::new(SlabParams::new(32, 2)?, 256)?;
    let rep = cluster_cap_law(t, nsamples, seed, CapMode::Cable, 12)?;
    let flagged = rep.flagged as f64 / nsamples as f64;
    let ok = rep.sup_rel_dev_normalized <= 0.10 && flagged <= 0.01;
    let rows: Vec<Value> = rep
        .rows
        .iter()
        .map(|r| json!({ "gx": r.gx, "empirical": r.empirical_tail, "arctan": r.arctan_tail }))
        .collect();
    Ok((
        ok,
        json!({
            "sup_rel_dev_normalized": rep.sup_rel_dev_normalized,
            "sup_rel_dev": rep.sup_rel_dev,
            "flagged_fraction": flagged,
            "nonempty_fraction": rep.nonempty_fraction,
            "g0": rep.g0,
            "rows": rows,
        }),
        format!("normalized sup rel dev {:.4}, flagged {:.4}", rep.sup_rel_dev_normalized, flagged),
    ))
}

// ---------------------------------------------------------------- 7, 8, 9

pub const SWEEP_N: [usize; 2] = [64, 128];
pub const SWEEP_H: [usize; 4] = [1, 2, 4, 8];
pub const SWEEP_R: [f64; 3] = [8.0, 16.0, 32.0];

/// One explored run per `(N, h)`; `R` reuses it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRun {
    pub n: usize,
    pub h: usize,
    pub g0: f64,
    pub g0_torus: f64,
    pub run: OneArmRun,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BandPoint {
    pub n: usize,
    pub h: usize,
    pub r: f64,
    pub theta_hat: f64,
    pub stderr: f64,
    /// `theta_hat sqrt(g0 F(R))` and its standard error.
    pub v: f64,
    pub v_stderr: f64,
}

/// Samples per `(N, h)`; the `(128, 1)` run is longer so that it also
/// serves the asymptotic check.
pub fn sweep_samples(n: usize, h: usize, base: usize) -> usize {
    if n == 128 && h == 1 {
        2 * base
    } else {
        base
    }
}

pub fn sweep_runs(base: usize, seed: u64) -> Result<Vec<SweepRun>> {
    let mut out = Vec::new();
    for (i, &n) in SWEEP_N.iter().enumerate() {
        for (j, &h) in SWEEP_H.iter().enumerate() {
            let p = SlabParams::new(n, h)?;
            let t = TorusBox::new(p, 8 * n)?;
            let g0 = GreenEvaluator::new(p)?.g(&SlabPoint::ORIGIN)?;
            let g0_torus = TorusGreen::new(t).origin();
            let run = one_arm(t, 32.0, sweep_samples(n, h, base), seed + (4 * i + j) as u64)?;
            out.push(SweepRun { n, h, g0, g0_torus, run });
        }
    }
    Ok(out)
}

pub fn band_points(runs: &[SweepRun], base: usize) -> Result<Vec<BandPoint>> {
    let mut out = Vec::new();
    for s in runs {
        let p = SlabParams::new(s.n, s.h)?;
        for &r in &SWEEP_R {
            let est = s.run.estimate(r, Some(base))?;
            let scale = (s.g0 * f_box(r, &p)).sqrt();
            out.push(BandPoint {
                n: s.n,
                h: s.h,
                r,
                theta_hat: est.theta_hat,
                stderr: est.stderr,
                v: est.theta_hat * scale,
                v_stderr: est.stderr * scale,
            });
        }
    }
    Ok(out)
}

/// Band `[min v, max v]` with the standard errors of the extreme points.
pub fn band_of(points: &[BandPoint]) -> ((f64, f64), (f64, f64)) {
    let lo = points.iter().min_by(|a, b| a.v.total_cmp(&b.v)).expect("nonempty sweep");
    let hi = points.iter().max_by(|a, b| a.v.total_cmp(&b.v)).expect("nonempty sweep");
    ((lo.v, lo.v_stderr), (hi.v, hi.v_stderr))
}

pub fn c7_bands(points: &[BandPoint], k: &FittedConstants) -> Result<Outcome> {
    let ((c, c_se), (cc, cc_se)) = band_of(points);
    let ratio = cc / c;
    let lo_dev = (c - k.thm11_c).abs() / (c_se * c_se + k.thm11_c_stderr.powi(2)).sqrt();
    let hi_dev = (cc - k.thm11_upper).abs() / (cc_se * cc_se + k.thm11_upper_stderr.powi(2)).sqrt();
    let ok = ratio <= 6.0 && lo_dev <= 3.0 && hi_dev <= 3.0;
    Ok((
        ok,
        json!({
            "band": [c, cc],
            "band_stderr": [c_se, cc_se],
            "ratio": ratio,
            "persisted_band": [k.thm11_c, k.thm11_upper],
            "lo_deviation_sigma": lo_dev,
            "hi_deviation_sigma": hi_dev,
            "points": points,
        }),
        format!(
            "band [{c:.4}, {cc:.4}], C/c = {ratio:.2}; vs persisted [{:.4}, {:.4}]: {lo_dev:.1} / {hi_dev:.1} sigma",
            k.thm11_c, k.thm11_upper
        ),
    ))
}

pub fn c8_plateau(runs: &[SweepRun], base: usize) -> Result<Outcome> {
    let mut ests = Vec::new();
    for s in runs.iter().filter(|s| s.n == 128 && s.h <= 4) {
        let e = s.run.estimate(16.0, Some(base))?;
        ests.push((s.h, e.theta_hat, e.stderr));
    }
    let mut worst: f64 = 0.0;
    for i in 0..ests.len() {
        for j in i + 1..ests.len() {
            let (_, a, sa) = ests[i];
            let (_, b, sb) = ests[j];
            worst = worst.max((a - b).abs() / (sa * sa + sb * sb).sqrt());
        }
    }
    let rows: Vec<Value> = ests.iter().map(|(h, t, s)| json!({ "h": h, "theta_hat": t, "stderr": s })).collect();
    Ok((
        worst <= 3.0,
        json!({ "N": 128, "R": 16, "rows": rows, "max_pair_sigma": worst }),
        format!("largest pairwise gap {worst:.2} combined stderr"),
    ))
}

/// `theta_hat / f_infty(s*)` with `g0` the variance of the simulated field.
pub fn arctan_ratio(run: &OneArmRun, g0: f64, r: f64, lo: f64, hi: f64) -> Result<Outcome> {
    let p = run.tbox.params;
    let est = run.estimate(r, None)?;
    let inp = PredictionInput::new(p.n, p.h, r, g0)?;
    let s = s_star(&inp)?;
    let f = f_infty(s)?;
    let ratio = est.theta_hat / f;
    Ok((
        (lo..=hi).contains(&ratio),
        json!({
            "N": p.n, "h": p.h, "R": r, "M": run.tbox.m,
            "theta_hat": est.theta_hat, "stderr": est.stderr, "nsamples": est.nsamples,
            "g0": g0, "s_star": s, "f_infty": f, "ratio": ratio, "band": [lo, hi],
        }),
        format!("theta_hat = {:.4} +- {:.4}, f_infty(s*) = {f:.4}, ratio {ratio:.4}", est.theta_hat, est.stderr),
    ))
}

pub fn c9_extended(seed: u64) -> Result<Outcome> {
    let p = SlabParams::new(512, 1)?;
    let t = TorusBox::new(p, 4096)?;
    let g0 = TorusGreen::new(t).origin();
    let run = one_arm(t, 64.0, 4000, seed)?;
    arctan_ratio(&run, g0, 64.0, 0.85, 1.15)
}

// ---------------------------------------------------------------- 10

pub fn range_tail_config(nsamples: usize, seed: u64, k: &FittedConstants) -> RangeTailConfig {
    RangeTailConfig {
        r: 64,
        s_values: (2..=8).map(f64::from).collect(),
        killed: false,
        nsamples,
        seed,
        c2: k.range_c2,
        max_points: 1500,
    }
}

pub fn c10_range_tail(nsamples: usize, seed: u64, k: &FittedConstants) -> Result<Outcome> {
    let p = SlabParams::new(256, 8)?;
    let rep = range_capacity_tail(&range_tail_config(nsamples, seed, k), &p)?;
    let slope = rep.slope;
    let ok = slope.is_some_and(|s| s <= -0.2);
    let rows: Vec<Value> = rep.rows.iter().map(|r| json!({ "s": r.s, "p": r.probability, "stderr": r.stderr })).collect();
    Ok((
        ok,
        json!({
            "slope": slope, "rows": rows, "c2": k.range_c2,
            "reference_capacity": rep.reference_capacity, "thinned": rep.thinned, "died": rep.died,
        }),
        format!("slope of log p vs s: {}", slope.map_or("undefined".into(), |s| format!("{s:.4}"))),
    ))
}

// ---------------------------------------------------------------- 11

/// `s` grid for the capped crossing test, in units of `F(R)`.
pub const CAPPED_S: [f64; 7] = [1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8];

pub fn c11_capped_crossing(nsamples: usize, seed: u64) -> Result<Outcome> {
    let t = TorusBox::new(SlabParams::new(64, 2)?, 512)?;
    let rep = capped_crossing_joint(t, 16.0, &CAPPED_S, nsamples, seed)?;
    let (slope, se) = (rep.slope, rep.slope_stderr);
    let z = match (slope, se) {
        (Some(s), Some(e)) if e > 0.0 => s / e,
        _ => f64::NAN,
    };
    let ok = z <= -3.0;
    let rows: Vec<Value> = rep.rows.iter().map(|r| json!({ "s": r.s, "p": r.probability, "stderr": r.stderr })).collect();
    Ok((
        ok,
        json!({
            "slope": slope, "slope_stderr": se, "z": z, "theta_hat": rep.theta_hat,
            "F_R": rep.f_r, "rows": rows, "flagged": rep.flagged,
        }),
        format!("slope of log p vs 1/s {:.3} ({z:.1} sigma)", slope.unwrap_or(f64::NAN)),
    ))
}

// ---------------------------------------------------------------- 12

pub fn c12_lclt(k: &FittedConstants) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut rows = Vec::new();
    for &y in &[4i64, 8, 16] {
        for &m in &[0.0f64, 4.0] {
            let e = lclt_error(&[y, 0, 0], m, 1.0)?;
            let scaled = e * m.max(y as f64).powi(3);
            worst = if scaled.is_finite() { worst.max(scaled) } else { f64::INFINITY };
            rows.push(json!({ "y": y, "M": m, "error": e, "scaled": scaled }));
        }
    }
    let mut short = Vec::new();
    let mut short_ok = true;
    for &(y, m) in &[(16i64, 2.0f64), (8, 2.0), (16, 4.0)] {
        let v = short_time_ratio(&[y, 0, 0], m, 1.0, k.short_time_rate);
        short_ok &= v <= k.short_time_c;
        short.push(json!({ "y": y, "M": m, "ratio": v }));
    }
    let ok = worst <= 10.0 && short_ok;
    Ok((
        ok,
        json!({ "lclt": rows, "max_scaled": worst, "short_time": short, "short_time_c": k.short_time_c, "rate": k.short_time_rate }),
        format!("max lclt_error (M v |y|)^3 = {worst:.3}, short-time spot checks pass: {short_ok}"),
    ))
}

// ---------------------------------------------------------------- 13

/// Reduced versions of the Monte-Carlo criteria, serialized for comparison.
pub fn mc_fingerprint(seed: u64, k: &FittedConstants) -> Result<Vec<String>> {
    let t1 = TorusBox::new(SlabParams::new(32, 2)?, 256)?;
    let a = cluster_cap_law(t1, 120, seed, CapMode::Cable, 12)?;
    let t2 = TorusBox::new(SlabParams::new(64, 2)?, 512)?;
    let b = one_arm(t2, 32.0, 200, seed + 1)?;
    let c = capped_crossing_joint(t2, 16.0, &CAPPED_S, 120, seed + 2)?;
    let mut cfg = range_tail_config(24, seed + 3, k);
    cfg.r = 16;
    let d = range_capacity_tail(&cfg, &SlabParams::new(64, 4)?)?;
    Ok(vec![ser(&a), ser(&b), ser(&c), ser(&d)])
}

fn ser<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("report serializes")
}

pub fn c13_reproducibility(seed: u64, k: &FittedConstants, threads: &[usize]) -> Result<Outcome> {
    let mut prints = Vec::new();
    for &n in threads {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| slabgff_core::Error::Numeric(e.to_string()))?;
        prints.push(pool.install(|| mc_fingerprint(seed, k))?);
    }
    let names = ["caplaw", "onearm", "capped", "range"];
    let mut same = Vec::new();
    for (i, name) in names.iter().enumerate() {
        same.push((name, prints.iter().all(|p| p[i] == prints[0][i])));
    }
    let ok = same.iter().all(|(_, s)| *s);
    Ok((
        ok,
        json!({ "threads": threads, "identical": same.iter().map(|(n, s)| json!({ "run": n, "identical": s })).collect::<Vec<_>>() }),
        format!("outputs identical across {threads:?} threads: {ok}"),
    ))
}

// ---------------------------------------------------------------- auxiliary

pub fn predictions_check(k: &FittedConstants) -> Result<Outcome> {
    let grid: Vec<f64> = (0..2000).map(|i| i as f64 * 0.01).chain(log_grid(1.0 + 1e-9, 1e6, 400)).collect();
    let rep = arctan_inequalities_check(&grid);
    // Nesting of the two bands at a flat configuration.
    let p = SlabParams::new(128, 1)?;
    let g0 = GreenEvaluator::new(p)?.g(&SlabPoint::ORIGIN)?;
    let mut inp = PredictionInput::new(128, 1, 16.0, g0)?;
    inp.constants = k.clone();
    let b11 = theta_band(&inp, BandKind::Thm11, 0.1)?;
    let b41 = theta_band(&inp, BandKind::Thm41, 0.1)?;
    let nested = b11.0 <= b41.0 && b41.1 <= b11.1;
    Ok((
        rep.passed() && nested,
        json!({ "arctan": rep, "thm11_band": b11, "thm41_band": b41, "nested": nested }),
        format!(
            "arctan inequalities on {} points: {} failures; bands nested at (128, 1, 16): {nested}",
            rep.checked,
            rep.failures.len()
        ),
    ))
}

pub fn slab_check() -> Result<Outcome> {
    let p = SlabParams::new(16, 4)?;
    let b12 = ball(&SlabPoint::ORIGIN, 1.2, &p)?.len();
    let b15 = ball(&SlabPoint::ORIGIN, 1.5, &p)?.len();
    let mono = (1..=64).all(|r| f_box(r as f64, &p) <= f_box(r as f64 + 1.0, &p));
    let ok = b12 == 7 && b15 == 19 && mono;
    Ok((
        ok,
        json!({ "ball_1_2": b12, "ball_1_5": b15, "f_box_monotone": mono }),
        format!("|B(0, 1.2)| = {b12}, |B(0, 1.5)| = {b15}, F monotone: {mono}"),
    ))
}

/// Interior equilibrium weight and `cap({0}) g(0) = 1` by the Gram route at
/// a scale where the hitting solve is slow.
pub fn capacity_quick() -> Result<Outcome> {
    let p = SlabParams::new(64, 4)?;
    let ev = GreenEvaluator::new(p)?;
    let k = GreenKernel::new(&ev, GreenPart::G);
    let single = cap_gram(&Region::new([SlabPoint::ORIGIN], p), &k)?.capacity * ev.g(&SlabPoint::ORIGIN)?;
    let b = ball(&SlabPoint::ORIGIN, 4.0, &p)?;
    let sol = cap_gram(&b, &k)?;
    let pot = sol.residuals.potential.unwrap_or(f64::NAN);
    let ok = (single - 1.0).abs() <= 1e-8 && pot <= 1e-8;
    Ok((
        ok,
        json!({ "cap0_g0": single, "ball_capacity": sol.capacity, "potential_residual": pot }),
        format!("cap({{0}}) g(0) = {single:.12}, ball potential residual {pot:.1e}"),
    ))
}
