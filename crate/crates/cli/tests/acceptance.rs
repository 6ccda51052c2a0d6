//! Acceptance run: criteria 1-13 at desk scale, one line per criterion.
//!
//! Environment: `SLABGFF_SEED` (master seed), `SLABGFF_ACCEPTANCE_SCALE`
//! (`quick`, `desk` or `extended`), `SLABGFF_STRICT=1` to exit nonzero when
//! a criterion fails, `SLABGFF_REPORT` to also write the JSON report there.

use std::time::Instant;

use slabgff_cli::criteria::Scale;
use slabgff_cli::validate::{validate, Suite};
use slabgff_core::predictions::FittedConstants;

const DEFAULT_SEED: u64 = 20_240_611;

fn main() {
    let seed = std::env::var("SLABGFF_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(DEFAULT_SEED);
    let scale = match std::env::var("SLABGFF_ACCEPTANCE_SCALE").as_deref() {
        Ok("quick") => Scale::Quick,
        Ok("extended") => Scale::Extended,
        _ => Scale::Desk,
    };
    let strict = std::env::var("SLABGFF_STRICT").is_ok_and(|v| v == "1");
    let k = FittedConstants::bundled();
    println!("acceptance: scale {scale:?}, seed {seed}");
    let t0 = Instant::now();
    let rep = validate(Suite::All, scale, seed, &k, |r| println!("{}", r.line()));

    let mut numbered: Vec<_> = rep.records.iter().filter_map(|r| r.id.parse::<u32>().ok().map(|n| (n, r))).collect();
    numbered.sort_by_key(|(n, _)| *n);
    println!();
    println!("summary ({:.0} s):", t0.elapsed().as_secs_f64());
    for (_, r) in &numbered {
        println!("  {}", r.line());
    }
    for r in rep.records.iter().filter(|r| r.id.parse::<u32>().is_err()) {
        println!("  {}", r.line());
    }
    let failed: Vec<&str> = rep.records.iter().filter(|r| !r.passed).map(|r| r.id.as_str()).collect();
    println!(
        "acceptance: {} of {} numbered criteria pass; failing: {:?}",
        numbered.iter().filter(|(_, r)| r.passed).count(),
        numbered.len(),
        failed
    );
    if let Ok(path) = std::env::var("SLABGFF_REPORT") {
        let text = serde_json::to_string_pretty(&rep).expect("report serializes");
        std::fs::write(&path, text).expect("report written");
    }
    if strict && !failed.is_empty() {
        std::process::exit(1);
    }
}
