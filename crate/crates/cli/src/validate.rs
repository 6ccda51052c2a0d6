//! Validation suites: which checks run for a module at a given scale.

use serde::{Deserialize, Serialize};
use slabgff_core::predictions::FittedConstants;

use crate::criteria::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Bessel,
    Slab,
    Greens,
    Capacity,
    Gff,
    Predictions,
    All,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub suite: Suite,
    pub scale: Scale,
    pub seed: u64,
    pub passed: bool,
    pub records: Vec<CriterionRecord>,
}

/// Samples per one-arm configuration at desk scale.
pub const SWEEP_BASE: usize = 2000;

/// Seed offset of criterion `id`, so that each criterion has its own streams.
pub fn seed_for(seed: u64, id: u64) -> u64 {
    seed.wrapping_add(1000 * id)
}

fn wants(suite: Suite, s: Suite) -> bool {
    suite == Suite::All || suite == s
}

/// Runs the suite, calling `sink` after each record (for progress output).
pub fn validate(
    suite: Suite,
    scale: Scale,
    seed: u64,
    k: &FittedConstants,
    mut sink: impl FnMut(&CriterionRecord),
) -> ValidationReport {
    let mut records = Vec::new();
    let mut push = |r: CriterionRecord| {
        sink(&r);
        records.push(r);
    };
    let desk = scale != Scale::Quick;

    if wants(suite, Suite::Bessel) {
        push(record("1", "K0 integral vs series and log bounds", c1_bessel));
    }
    if wants(suite, Suite::Slab) {
        push(record("slab.invariants", "ball counts and F monotonicity", slab_check));
    }
    if wants(suite, Suite::Greens) {
        if desk {
            push(record("2", "spectral Green's function vs linear-solve oracle", || c2_green(seed_for(seed, 2))));
            push(record("3", "variance regimes", c3_variance));
        } else {
            push(record("greens.small-oracle", "spectral vs oracle at N = 16", || {
                green_cross_check(16, &[1, 4], 12, seed_for(seed, 2))
            }));
        }
        push(record("12", "LCLT error and short-time bound", || c12_lclt(k)));
    }
    if wants(suite, Suite::Capacity) {
        push(record("capacity.gram", "Gram-route identities at N = 64", capacity_quick));
        let n = if desk { 20 } else { 4 };
        push(record("4", "potential-theory identities", || c4_identities(n, seed_for(seed, 4))));
        if desk {
            push(record("5", "flat-regime capacities of disk and line", c5_flat_capacities));
            push(record("10", "range-capacity tail", || c10_range_tail(2000, seed_for(seed, 10), k)));
        }
    }
    if wants(suite, Suite::Gff) && desk {
        push(record("6", "cluster capacity law", || c6_cap_law(20_000, seed_for(seed, 6))));
        gff_sweep(seed, k, &mut push);
        if scale == Scale::Extended {
            push(record("9x", "arctan asymptotics at N = 512", || c9_extended(seed_for(seed, 9) + 1)));
        }
        push(record("11", "capped crossing decays in 1/s", || c11_capped_crossing(6000, seed_for(seed, 11))));
        push(record("13", "thread-count independence", || c13_reproducibility(seed_for(seed, 13), k, &[1, 3])));
    }
    if wants(suite, Suite::Predictions) {
        push(record("predictions.arctan", "arctan inequalities and band nesting", || predictions_check(k)));
    }
    let passed = records.iter().all(|r| r.passed);
    ValidationReport { suite, scale, seed, passed, records }
}

/// Criteria 7, 8 and 9 from one sweep of runs.
fn gff_sweep(seed: u64, k: &FittedConstants, push: &mut impl FnMut(CriterionRecord)) {
    let t0 = std::time::Instant::now();
    match sweep_runs(SWEEP_BASE, seed_for(seed, 7)) {
        Ok(runs) => {
            let sweep_secs = t0.elapsed().as_secs_f64();
            let mut r7 = record("7", "one-arm band across the sweep", || c7_bands(&band_points(&runs, SWEEP_BASE)?, k));
            r7.seconds += sweep_secs;
            push(r7);
            push(record("8", "plateau in h at N = 128", || c8_plateau(&runs, SWEEP_BASE)));
            let long = runs.iter().find(|s| s.n == 128 && s.h == 1).expect("sweep contains (128, 1)");
            push(record("9", "arctan asymptotics at N = 128", || arctan_ratio(&long.run, long.g0_torus, 16.0, 0.80, 1.20)));
        }
        Err(e) => {
            for id in ["7", "8", "9"] {
                let msg = e.to_string();
                push(record(id, "one-arm sweep", move || Err(slabgff_core::Error::Numeric(msg))));
            }
        }
    }
}
