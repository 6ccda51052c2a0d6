//! `slabgff` command line: subcommands over the core library, run manifests
//! and the validation suites.

pub mod commands;
pub mod criteria;
pub mod manifest;
pub mod validate;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use slabgff_core::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_PRECONDITION: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_ACCEPTANCE: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "slabgff", version, about = "Green's functions, capacities and free-field percolation on slabs")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Output directory (default: `$SLABGFF_OUT/<command>-<run id>`, else `runs/...`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Flat `key=value` file; flags on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Spectral Green's function against the linear-solve oracle, as CSV.
    Green(GreenArgs),
    /// Capacity of a named shape or of a region file.
    Cap(CapArgs),
    /// One field sample and the cluster of the origin.
    Sample(SampleArgs),
    /// One-arm probability estimate with prediction bands.
    Onearm(OneArmArgs),
    /// Empirical capacity tail of the origin cluster against the arctan law.
    Caplaw(CapLawArgs),
    /// Predicted `1/theta` at macroscopic scale over a grid of heights.
    Plateau(PlateauArgs),
    /// One-arm prediction bands per configuration.
    Bands(BandsArgs),
    /// Module invariant suites; exit code 4 if a check fails.
    Validate(ValidateArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GreenArgs {
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: usize,
    #[arg(long)]
    pub h: usize,
    /// File of `y1 y2 z` lines; random probes in `B(0, N/2)` otherwise.
    #[arg(long)]
    pub points: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub probes: usize,
    /// Half-width of the oracle box (default `4N`).
    #[arg(long)]
    pub oracle_box: Option<i64>,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Line,
    Ball,
    Disk,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Hitting,
    Gram,
    Variational,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CapArgs {
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: usize,
    #[arg(long)]
    pub h: usize,
    #[arg(long, conflicts_with = "region")]
    pub shape: Option<Shape>,
    #[arg(long = "R")]
    #[serde(rename = "R")]
    pub r: Option<f64>,
    /// Region file of `y1 y2 z` lines.
    #[arg(long)]
    pub region: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MethodArg::Gram)]
    pub method: MethodArg,
    /// Truncation half-width for the hitting solve (default `4N`).
    #[arg(long)]
    pub box_radius: Option<i64>,
    /// Also write the equilibrium measure as CSV.
    #[arg(long)]
    pub measure: bool,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SampleArgs {
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: usize,
    #[arg(long)]
    pub h: usize,
    #[arg(long = "M")]
    #[serde(rename = "M")]
    pub m: usize,
    /// Sample index within the seed's stream.
    #[arg(long, default_value_t = 0)]
    pub index: u64,
    /// Also write the cluster's vertices as CSV.
    #[arg(long)]
    pub cluster_csv: bool,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct OneArmArgs {
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: usize,
    #[arg(long)]
    pub h: usize,
    #[arg(long = "R")]
    #[serde(rename = "R")]
    pub r: f64,
    #[arg(long = "M")]
    #[serde(rename = "M")]
    pub m: usize,
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    /// Ledger CSV to append to (default: `onearm_ledger.csv` next to the run directory).
    #[arg(long)]
    #[serde(skip)]
    pub ledger: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Cable,
    VertexTrace,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CapLawArgs {
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: usize,
    #[arg(long)]
    pub h: usize,
    #[arg(long = "M")]
    #[serde(rename = "M")]
    pub m: usize,
    #[arg(long, default_value_t = 20_000)]
    pub samples: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Cable)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 12)]
    pub grid: usize,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct PlateauArgs {
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64")]
    pub hs: Vec<usize>,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BandsArgs {
    #[arg(long = "N", value_delimiter = ',')]
    #[serde(rename = "N")]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub h: Vec<usize>,
    #[arg(long = "R", value_delimiter = ',')]
    #[serde(rename = "R")]
    pub r: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ValidateArgs {
    #[arg(value_enum)]
    pub suite: validate::Suite,
    #[arg(long, value_enum, default_value_t = criteria::Scale::Quick)]
    pub scale: criteria::Scale,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Green(_) => "green",
            Command::Cap(_) => "cap",
            Command::Sample(_) => "sample",
            Command::Onearm(_) => "onearm",
            Command::Caplaw(_) => "caplaw",
            Command::Plateau(_) => "plateau",
            Command::Bands(_) => "bands",
            Command::Validate(_) => "validate",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::Green(a) => &a.common,
            Command::Cap(a) => &a.common,
            Command::Sample(a) => &a.common,
            Command::Onearm(a) => &a.common,
            Command::Caplaw(a) => &a.common,
            Command::Plateau(a) => &a.common,
            Command::Bands(a) => &a.common,
            Command::Validate(a) => &a.common,
        }
    }

    /// Scientific parameters as strings, for the manifest and the run id.
    pub fn params(&self) -> BTreeMap<String, String> {
        let v = match self {
            Command::Green(a) => serde_json::to_value(a),
            Command::Cap(a) => serde_json::to_value(a),
            Command::Sample(a) => serde_json::to_value(a),
            Command::Onearm(a) => serde_json::to_value(a),
            Command::Caplaw(a) => serde_json::to_value(a),
            Command::Plateau(a) => serde_json::to_value(a),
            Command::Bands(a) => serde_json::to_value(a),
            Command::Validate(a) => serde_json::to_value(a),
        }
        .expect("arguments serialize");
        let mut out = BTreeMap::new();
        if let serde_json::Value::Object(m) = v {
            for (k, v) in m {
                let s = match v {
                    serde_json::Value::String(s) => s,
                    serde_json::Value::Null => continue,
                    other => other.to_string(),
                };
                out.insert(k, s);
            }
        }
        out
    }
}

const SUBCOMMANDS: [&str; 8] = ["green", "cap", "sample", "onearm", "caplaw", "plateau", "bands", "validate"];

/// Lines `key = value` (blank lines and `#` comments skipped).
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, Error> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("config line {}: expected key=value", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Inserts the config file's pairs right after the subcommand, so that
/// later command-line flags override them.
pub fn expand_config(argv: &[String]) -> Result<Vec<String>, Error> {
    let mut path = None;
    for (i, a) in argv.iter().enumerate() {
        if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else if a == "--config" {
            path = argv.get(i + 1).cloned();
        }
    }
    let Some(path) = path else {
        return Ok(argv.to_vec());
    };
    let pairs = parse_config(&std::fs::read_to_string(&path)?)?;
    let at = argv
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.as_str()))
        .map_or(argv.len(), |i| i + 1);
    let mut flags = Vec::new();
    for (k, v) in pairs {
        match v.as_str() {
            "true" => flags.push(format!("--{k}")),
            "false" => {}
            _ => flags.push(format!("--{k}={v}")),
        }
    }
    let mut out = argv[..at].to_vec();
    out.extend(flags);
    out.extend_from_slice(&argv[at..]);
    Ok(out)
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_PRECONDITION,
    }
}

/// Output directory for a run.
pub fn out_dir(common: &Common, command: &str, run_id: &str) -> PathBuf {
    if let Some(p) = &common.out {
        return p.clone();
    }
    let root = std::env::var_os("SLABGFF_OUT").map_or_else(|| PathBuf::from("runs"), PathBuf::from);
    root.join(format!("{command}-{run_id}"))
}

/// Entry point; returns the process exit code.
pub fn run(argv: Vec<String>) -> i32 {
    let argv = match expand_config(&argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("slabgff: {e}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let threads = cli.command.common().threads.unwrap_or(0);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("slabgff: {e}");
            return EXIT_USAGE;
        }
    };
    match pool.install(|| commands::execute(&cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("slabgff: {e}");
            exit_code(&e)
        }
    }
}

/// Reads `y1 y2 z` lines.
pub fn read_points(path: &Path, h: usize) -> Result<Vec<slabgff_core::SlabPoint>, Error> {
    let params = slabgff_core::SlabParams::new(h.max(1), h)?;
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    Ok(slabgff_core::Region::read_text(f, params)?.points)
}
