//! Subcommand bodies. Each writes its files through an [`OutputDir`] and
//! finishes with the run manifest.

use serde_json::json;
use slabgff_core::capacity::{
    cap_gram, cap_variational, equilibrium, DiscreteMeasure, EquilibriumSolution, GreenKernel, GreenPart, Method,
    OptConfig, Residuals,
};
use slabgff_core::gff::{
    cable_capacity, cluster_cap_law, one_arm, origin_cluster, CapMode, Sampler, TorusBox, TorusGreen,
};
use slabgff_core::greens::{GreenEvaluator, OracleField};
use slabgff_core::predictions::{plateau_table, theta_band, BandKind, FittedConstants, PredictionInput};
use slabgff_core::slab::{ball, disk, line};
use slabgff_core::{Error, Region, Result, SlabParams, SlabPoint};

use crate::criteria::probe_points;
use crate::manifest::{num, OutputDir, RunManifest};
use crate::validate::validate;
use crate::*;

pub fn execute(cmd: &Command) -> Result<i32> {
    let common = cmd.common();
    let mut manifest = RunManifest::begin(cmd.name(), cmd.params(), common.seed);
    let mut out = OutputDir::create(out_dir(common, cmd.name(), &manifest.run_id), &manifest.run_id)?;
    let code = match cmd {
        Command::Green(a) => green(a, &mut out)?,
        Command::Cap(a) => cap(a, &mut out)?,
        Command::Sample(a) => sample(a, &mut out)?,
        Command::Onearm(a) => onearm(a, &mut out)?,
        Command::Caplaw(a) => caplaw(a, &mut out)?,
        Command::Plateau(a) => plateau(a, &mut out)?,
        Command::Bands(a) => bands(a, &mut out)?,
        Command::Validate(a) => run_validate(a, &mut out)?,
    };
    let path = out.finish(&mut manifest)?;
    eprintln!("manifest: {}", path.display());
    Ok(code)
}

fn green(a: &GreenArgs, out: &mut OutputDir) -> Result<i32> {
    let p = SlabParams::new(a.n, a.h)?;
    let probes = match &a.points {
        Some(path) => read_points(path, a.h)?,
        None => probe_points(a.h, (a.n / 2) as f64, a.probes, a.common.seed),
    };
    let reach = probes.iter().map(|x| x.y1.abs().max(x.y2.abs())).max().unwrap_or(0);
    let boxr = a.oracle_box.unwrap_or(4 * a.n as i64).max(reach + 1);
    let ev = GreenEvaluator::new(p)?;
    let vals = ev.eval_many(&probes)?;
    let oracle = OracleField::solve(p, boxr)?;
    let rows: Vec<Vec<String>> = probes
        .iter()
        .zip(&vals)
        .map(|(x, v)| {
            let o = oracle.get(x).expect("probe inside the oracle box");
            vec![
                a.n.to_string(),
                a.h.to_string(),
                x.y1.to_string(),
                x.y2.to_string(),
                x.z.to_string(),
                num(v.g3),
                num(v.g2),
                num(v.g()),
                num(o),
                num((v.g() - o).abs() / o),
            ]
        })
        .collect();
    out.csv("green.csv", &["N", "h", "y1", "y2", "z", "g3", "g2", "g", "g_oracle", "rel_err"], &rows)?;
    Ok(EXIT_OK)
}

fn cap(a: &CapArgs, out: &mut OutputDir) -> Result<i32> {
    let p = SlabParams::new(a.n, a.h)?;
    let region = match (&a.region, a.shape) {
        (Some(path), _) => Region::new(read_points(path, a.h)?, p),
        (None, Some(shape)) => {
            let r = a.r.ok_or_else(|| Error::Domain("--R is required with --shape".into()))?;
            match shape {
                Shape::Ball => ball(&SlabPoint::ORIGIN, r, &p)?,
                Shape::Disk => disk(&SlabPoint::ORIGIN, r, &p)?,
                Shape::Line => line(r as usize, &p)?,
            }
        }
        (None, None) => return Err(Error::Domain("give --shape or --region".into())),
    };
    let ev = GreenEvaluator::new(p)?;
    let kernel = GreenKernel::new(&ev, GreenPart::G);
    let sol: EquilibriumSolution = match a.method {
        MethodArg::Hitting => equilibrium(&region, None, a.box_radius)?,
        MethodArg::Gram => cap_gram(&region, &kernel)?,
        MethodArg::Variational => {
            let v = cap_variational(&region, &kernel, &OptConfig::default())?;
            let weights: Vec<f64> = v.argmin.weights.iter().map(|w| w * v.capacity).collect();
            EquilibriumSolution {
                target: region.clone(),
                killing: None,
                eq_measure: DiscreteMeasure::new(region.clone(), weights)?,
                capacity: v.capacity,
                method: Method::Variational,
                residuals: Residuals {
                    solver: v.kkt_residual,
                    iterations: v.iterations,
                    potential: None,
                    truncation_radius: None,
                },
            }
        }
    };
    out.json(
        "cap.json",
        &json!({
            "capacity": sol.capacity,
            "method": sol.method,
            "residuals": sol.residuals,
            "params": p,
            "points": region.len(),
        }),
    )?;
    if a.measure {
        let rows: Vec<Vec<String>> = sol
            .eq_measure
            .support
            .points
            .iter()
            .zip(&sol.eq_measure.weights)
            .map(|(x, w)| vec![x.y1.to_string(), x.y2.to_string(), x.z.to_string(), num(*w)])
            .collect();
        out.csv("measure.csv", &["y1", "y2", "z", "weight"], &rows)?;
    }
    Ok(EXIT_OK)
}

fn sample(a: &SampleArgs, out: &mut OutputDir) -> Result<i32> {
    let t = TorusBox::new(SlabParams::new(a.n, a.h)?, a.m)?;
    let f = Sampler::new(t).sample(a.common.seed, a.index);
    let g = TorusGreen::new(t);
    let n = f.values.len() as f64;
    let mean = f.values.iter().sum::<f64>() / n;
    let var = f.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let c = origin_cluster(&f);
    let capacity = if c.wrapped { None } else { Some(cable_capacity(&f, &c, &g, f64::INFINITY)?) };
    out.json(
        "sample.json",
        &json!({
            "N": a.n, "h": a.h, "M": a.m, "seed": a.common.seed, "index": a.index,
            "phi_origin": f.values[0],
            "field_mean": mean,
            "field_var": var,
            "torus_g0": g.origin(),
            "cluster": {
                "contains_origin": c.contains_origin,
                "size": c.vertices.len(),
                "max_norm_reached": c.max_norm_reached,
                "wrapped": c.wrapped,
                "cable_capacity": capacity,
            },
        }),
    )?;
    if a.cluster_csv {
        let rows: Vec<Vec<String>> =
            c.vertices.iter().map(|x| vec![x.y1.to_string(), x.y2.to_string(), x.z.to_string()]).collect();
        out.csv("cluster.csv", &["y1", "y2", "z"], &rows)?;
    }
    Ok(EXIT_OK)
}

fn onearm(a: &OneArmArgs, out: &mut OutputDir) -> Result<i32> {
    let p = SlabParams::new(a.n, a.h)?;
    let t = TorusBox::new(p, a.m)?;
    let run = one_arm(t, a.r, a.samples, a.common.seed)?;
    let est = run.estimate(a.r, None)?;
    let g0 = GreenEvaluator::new(p)?.g(&SlabPoint::ORIGIN)?;
    let inp = PredictionInput::new(a.n, a.h, a.r, g0)?;
    let thm11 = theta_band(&inp, BandKind::Thm11, a.eps)?;
    let thm41 = match theta_band(&inp, BandKind::Thm41, a.eps) {
        Ok(b) => json!({ "band": b, "label": "band (heuristic thresholds)" }),
        Err(e) => json!({ "band": null, "reason": e.to_string() }),
    };
    out.json(
        "onearm.json",
        &json!({
            "theta_hat": est.theta_hat,
            "stderr": est.stderr,
            "nsamples": est.nsamples,
            "flagged": est.flagged,
            "g0": g0,
            "bands": { "thm11": thm11, "thm41": thm41 },
        }),
    )?;
    let ledger = a.ledger.clone().unwrap_or_else(|| {
        out.dir.parent().map_or_else(|| "onearm_ledger.csv".into(), |d| d.join("onearm_ledger.csv"))
    });
    out.append_csv(
        &ledger,
        &["N", "h", "R", "M", "samples", "seed", "theta", "stderr", "lo_band", "hi_band"],
        &[vec![
            a.n.to_string(),
            a.h.to_string(),
            num(a.r),
            a.m.to_string(),
            a.samples.to_string(),
            a.common.seed.to_string(),
            num(est.theta_hat),
            num(est.stderr),
            num(thm11.0),
            num(thm11.1),
        ]],
    )?;
    out.files.push(ledger);
    Ok(EXIT_OK)
}

fn caplaw(a: &CapLawArgs, out: &mut OutputDir) -> Result<i32> {
    let t = TorusBox::new(SlabParams::new(a.n, a.h)?, a.m)?;
    let mode = match a.mode {
        ModeArg::Cable => CapMode::Cable,
        ModeArg::VertexTrace => CapMode::VertexTrace,
    };
    let rep = cluster_cap_law(t, a.samples, a.common.seed, mode, a.grid)?;
    let rows: Vec<Vec<String>> =
        rep.rows.iter().map(|r| vec![num(r.x), num(r.empirical_tail), num(r.arctan_tail)]).collect();
    out.csv("caplaw.csv", &["x", "empirical_tail", "arctan_tail"], &rows)?;
    out.json(
        "caplaw.json",
        &json!({
            "g0": rep.g0,
            "mode": rep.mode,
            "sup_rel_dev_normalized": rep.sup_rel_dev_normalized,
            "sup_rel_dev": rep.sup_rel_dev,
            "nonempty_fraction": rep.nonempty_fraction,
            "flagged": rep.flagged,
            "nsamples": rep.nsamples,
        }),
    )?;
    Ok(EXIT_OK)
}

fn plateau(a: &PlateauArgs, out: &mut OutputDir) -> Result<i32> {
    let k = FittedConstants::bundled();
    let rows: Vec<Vec<String>> =
        plateau_table(a.n, &a.hs, &k).into_iter().map(|(h, v)| vec![h.to_string(), num(v)]).collect();
    out.csv("plateau.csv", &["h", "inv_theta_pred"], &rows)?;
    Ok(EXIT_OK)
}

fn bands(a: &BandsArgs, out: &mut OutputDir) -> Result<i32> {
    let mut items = Vec::new();
    for &n in &a.n {
        for &h in &a.h {
            let p = SlabParams::new(n, h)?;
            let g0 = GreenEvaluator::new(p)?.g(&SlabPoint::ORIGIN)?;
            for &r in &a.r {
                let inp = PredictionInput::new(n, h, r, g0)?;
                let thm11 = theta_band(&inp, BandKind::Thm11, a.eps)?;
                let thm41 = match theta_band(&inp, BandKind::Thm41, a.eps) {
                    Ok(b) => json!({ "band": b, "label": "band (heuristic thresholds)" }),
                    Err(e) => json!({ "band": null, "reason": e.to_string() }),
                };
                items.push(json!({ "N": n, "h": h, "R": r, "g0": g0, "thm11": thm11, "thm41": thm41 }));
            }
        }
    }
    out.json("bands.json", &json!({ "eps": a.eps, "configurations": items }))?;
    Ok(EXIT_OK)
}

fn run_validate(a: &ValidateArgs, out: &mut OutputDir) -> Result<i32> {
    let k = FittedConstants::bundled();
    let rep = validate(a.suite, a.scale, a.common.seed, &k, |r| eprintln!("{}", r.line()));
    out.json("report.json", &rep)?;
    Ok(if rep.passed { EXIT_OK } else { EXIT_ACCEPTANCE })
}
