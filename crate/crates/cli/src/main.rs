//! Command line front end: binds traces, configs, the cache engine, the
//! closed-form model and the Monte Carlo oracle into reproducible runs.
//!
//! Exit codes: 0 success, 1 usage error, 2 input error, 3 validation
//! failure (mc-validate found a cell off by more than 3 sigma).

mod sim;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{Map, Value};

use reapsim_core::config::{load_config, RunConfig};
use reapsim_core::fault::{
    analytical_rate, run_trials, CheckPolicy, Depletion, McScenario, McStats,
};
use reapsim_core::model::{
    accumulated_error_probability, block_error_probability, read_disturbance_probability,
    reap_error_probability, BlockErrorQuery, DeviceParams, SignConvention,
};
use reapsim_core::report::{emit_json, envelope, sci_number};
use reapsim_core::trace::{
    format_trace_line, generate_synthetic, AccessEvent, OnesModel, SyntheticSpec,
};

#[derive(Parser)]
#[command(
    name = "reapsim",
    version,
    about = "Read-disturbance reliability simulator for MRAM set-associative caches"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one closed-form reliability quantity and print it as JSON
    Model(ModelArgs),
    /// Run one read scheme over a trace and write its report files
    Simulate(sim::SimulateArgs),
    /// Run the conventional and check-every-line schemes over the same
    /// trace and report normalized MTTF and energy overhead
    Compare(sim::CompareArgs),
    /// Check the closed forms against the bit-level Monte Carlo oracle
    McValidate(McValidateArgs),
    /// Generate a synthetic trace file
    GenTrace(GenTraceArgs),
}

/// Failures carry the exit code that distinguishes a misused flag from a
/// broken input file.
pub enum CliError {
    Usage(anyhow::Error),
    Input(anyhow::Error),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) => 2,
        }
    }

    fn message(&self) -> &anyhow::Error {
        match self {
            CliError::Usage(e) | CliError::Input(e) => e,
        }
    }
}

pub fn usage<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Usage(e.into())
}

pub fn input<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Input(e.into())
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Command::Model(args) => cmd_model(&args),
        Command::Simulate(args) => sim::cmd_simulate(&args),
        Command::Compare(args) => sim::cmd_compare(&args),
        Command::McValidate(args) => cmd_mc_validate(&args),
        Command::GenTrace(args) => cmd_gen_trace(&args),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {:#}", e.message());
            std::process::exit(e.exit_code());
        }
    }
}

/// Resolve --config into a validated RunConfig (defaults when absent).
pub fn resolve_config(path: &Option<PathBuf>) -> Result<RunConfig, CliError> {
    match path {
        Some(path) => load_config(path).map_err(input),
        None => Ok(RunConfig::default()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Formula {
    /// Block error probability of a single checked read
    Single,
    /// Block error probability after `reads` unchecked reads accumulate
    Accumulated,
    /// Failure probability when every one of `reads` reads is checked
    Reap,
    /// Per-read flip probability from the device parameters
    PerRead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConventionArg {
    Standard,
    AsPrinted,
}

#[derive(Args)]
struct ModelArgs {
    /// Quantity to evaluate
    #[arg(long, value_enum)]
    formula: Formula,
    /// Per-read flip probability (single/accumulated/reap)
    #[arg(long, default_value_t = 1e-8)]
    p: f64,
    /// Ones-count of the block
    #[arg(long, default_value_t = 100)]
    n: u64,
    /// Reads between checks
    #[arg(long, default_value_t = 50)]
    reads: u64,
    /// ECC correction capability in bits
    #[arg(long, default_value_t = 1)]
    ecc_t: u32,
    /// Read pulse width in ns (per-read formula)
    #[arg(long, default_value_t = 1.0)]
    t_read: f64,
    /// Thermal time constant in ns (per-read formula)
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Thermal stability factor (per-read formula)
    #[arg(long, default_value_t = 60.0)]
    delta: f64,
    /// Read current over critical current (per-read formula)
    #[arg(long, default_value_t = 0.5)]
    i_ratio: f64,
    /// Exponent sign convention (per-read formula)
    #[arg(long, value_enum, default_value_t = ConventionArg::Standard)]
    convention: ConventionArg,
}

fn cmd_model(args: &ModelArgs) -> Result<i32, CliError> {
    let mut inputs = Map::new();
    let (label, value) = match args.formula {
        Formula::PerRead => {
            let device = DeviceParams {
                tau_ns: args.tau,
                delta: args.delta,
                i_read_ua: args.i_ratio * 100.0,
                i_c0_ua: 100.0,
                t_read_ns: args.t_read,
                sign_convention: match args.convention {
                    ConventionArg::Standard => SignConvention::Standard,
                    ConventionArg::AsPrinted => SignConvention::AsPrinted,
                },
                p_override: None,
            };
            inputs.insert("t_read_ns".into(), Value::from(args.t_read));
            inputs.insert("tau_ns".into(), Value::from(args.tau));
            inputs.insert("delta".into(), Value::from(args.delta));
            inputs.insert("i_ratio".into(), Value::from(args.i_ratio));
            inputs.insert(
                "convention".into(),
                Value::from(match args.convention {
                    ConventionArg::Standard => "standard",
                    ConventionArg::AsPrinted => "as-printed",
                }),
            );
            (
                "per-read",
                read_disturbance_probability(&device).map_err(usage)?,
            )
        }
        kind => {
            let query =
                BlockErrorQuery::new(args.p, args.n, args.reads, args.ecc_t).map_err(usage)?;
            inputs.insert("p".into(), sci_number(args.p));
            inputs.insert("n".into(), Value::from(args.n));
            inputs.insert("ecc_t".into(), Value::from(args.ecc_t));
            match kind {
                Formula::Single => {
                    let single =
                        BlockErrorQuery::new(args.p, args.n, 1, args.ecc_t).map_err(usage)?;
                    ("single", block_error_probability(&single))
                }
                Formula::Accumulated => {
                    inputs.insert("reads".into(), Value::from(args.reads));
                    ("accumulated", accumulated_error_probability(&query))
                }
                Formula::Reap => {
                    inputs.insert("reads".into(), Value::from(args.reads));
                    ("reap", reap_error_probability(&query))
                }
                Formula::PerRead => unreachable!(),
            }
        }
    };
    let mut out = Map::new();
    out.insert("formula".into(), Value::from(label));
    out.insert("inputs".into(), Value::Object(inputs));
    out.insert("value".into(), sci_number(value));
    emit_json(&Value::Object(out), std::io::stdout().lock()).map_err(input)?;
    Ok(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DepletionArg {
    Physical,
    Rebinomial,
}

impl From<DepletionArg> for Depletion {
    fn from(d: DepletionArg) -> Self {
        match d {
            DepletionArg::Physical => Depletion::Physical,
            DepletionArg::Rebinomial => Depletion::Rebinomial,
        }
    }
}

#[derive(Args)]
struct McValidateArgs {
    /// Trials per grid cell
    #[arg(long, default_value_t = 1_000_000)]
    trials: u64,
    /// Base seed; each grid row derives its own stream from it
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Flip probabilities of the grid
    #[arg(long, value_delimiter = ',', default_values_t = vec![1e-2, 1e-3])]
    p: Vec<f64>,
    /// Ones-counts of the grid
    #[arg(long, value_delimiter = ',', default_values_t = vec![16, 100])]
    n: Vec<u32>,
    /// Reads-between-checks values of the grid
    #[arg(long, value_delimiter = ',', default_values_t = vec![1, 10, 50])]
    reads: Vec<u64>,
    /// ECC correction capability in bits
    #[arg(long, default_value_t = 1)]
    ecc_t: u32,
    /// How flipped cells behave on later reads
    #[arg(long, value_enum, default_value_t = DepletionArg::Rebinomial)]
    depletion: DepletionArg,
    /// Also write the table as JSON to this path
    #[arg(long)]
    out: Option<PathBuf>,
}

struct GridRow {
    scenario: McScenario,
    policy: CheckPolicy,
    analytical: f64,
    stats: McStats,
    z: f64,
}

fn z_score(observed: f64, analytical: f64, trials: u64) -> f64 {
    let sigma = (analytical * (1.0 - analytical) / trials as f64).sqrt();
    if sigma > 0.0 {
        (observed - analytical) / sigma
    } else if observed == analytical {
        0.0
    } else {
        f64::INFINITY * (observed - analytical).signum()
    }
}

fn cmd_mc_validate(args: &McValidateArgs) -> Result<i32, CliError> {
    let mut rows = Vec::new();
    let mut row_index = 0u64;
    for &p in &args.p {
        for &n in &args.n {
            for &reads in &args.reads {
                for policy in [CheckPolicy::AtEnd, CheckPolicy::EveryRead] {
                    let scenario = McScenario {
                        p,
                        n_ones: n,
                        reads_between_checks: reads,
                        ecc_t: args.ecc_t,
                        trials: args.trials,
                        seed: args.seed.wrapping_add(row_index),
                        depletion: args.depletion.into(),
                    };
                    scenario.validate().map_err(usage)?;
                    let analytical = analytical_rate(&scenario, policy).map_err(usage)?;
                    let stats = run_trials(&scenario, policy).map_err(usage)?;
                    let z = z_score(stats.uncorrectable_rate, analytical, args.trials);
                    rows.push(GridRow {
                        scenario,
                        policy,
                        analytical,
                        stats,
                        z,
                    });
                    row_index += 1;
                }
            }
        }
    }

    let mut stdout = std::io::stdout().lock();
    writeln!(
        stdout,
        "{:<9} {:>4} {:>6}  {:<11} {:>13} {:>13} {:>10} {:>8}",
        "p", "n", "reads", "check", "analytical", "empirical", "stderr", "z"
    )
    .map_err(input)?;
    for row in &rows {
        writeln!(
            stdout,
            "{:<9} {:>4} {:>6}  {:<11} {:>13.6e} {:>13.6e} {:>10.3e} {:>8}",
            format!("{:.0e}", row.scenario.p),
            row.scenario.n_ones,
            row.scenario.reads_between_checks,
            row.policy.label(),
            row.analytical,
            row.stats.uncorrectable_rate,
            row.stats.stderr,
            format!("{:+.3}", row.z),
        )
        .map_err(input)?;
    }
    let worst = rows.iter().map(|r| r.z.abs()).fold(0.0f64, f64::max);
    let pass = worst <= 3.0;
    writeln!(
        stdout,
        "{} rows, max |z| = {:.3}: {}",
        rows.len(),
        worst,
        if pass { "PASS" } else { "FAIL" }
    )
    .map_err(input)?;

    if let Some(path) = &args.out {
        let mut grid = Map::new();
        grid.insert("trials".into(), Value::from(args.trials));
        grid.insert("seed".into(), Value::from(args.seed));
        grid.insert(
            "p".into(),
            Value::Array(args.p.iter().map(|&p| sci_number(p)).collect()),
        );
        grid.insert(
            "n".into(),
            Value::Array(args.n.iter().map(|&n| Value::from(n)).collect()),
        );
        grid.insert(
            "reads".into(),
            Value::Array(args.reads.iter().map(|&r| Value::from(r)).collect()),
        );
        grid.insert("ecc_t".into(), Value::from(args.ecc_t));
        grid.insert(
            "depletion".into(),
            Value::from(match args.depletion {
                DepletionArg::Physical => "physical",
                DepletionArg::Rebinomial => "rebinomial",
            }),
        );
        let mut doc = envelope("mc-validate", Value::Object(grid));
        let rows_json: Vec<Value> = rows
            .iter()
            .map(|row| {
                let mut m = Map::new();
                m.insert("p".into(), sci_number(row.scenario.p));
                m.insert("n".into(), Value::from(row.scenario.n_ones));
                m.insert(
                    "reads".into(),
                    Value::from(row.scenario.reads_between_checks),
                );
                m.insert("check".into(), Value::from(row.policy.label()));
                m.insert("seed".into(), Value::from(row.scenario.seed));
                m.insert("analytical".into(), sci_number(row.analytical));
                m.insert("empirical".into(), sci_number(row.stats.uncorrectable_rate));
                m.insert("stderr".into(), sci_number(row.stats.stderr));
                m.insert("z".into(), sci_number(row.z));
                m.insert("pass".into(), Value::from(row.z.abs() <= 3.0));
                Value::Object(m)
            })
            .collect();
        doc.insert("rows".into(), Value::Array(rows_json));
        doc.insert("max_abs_z".into(), sci_number(worst));
        doc.insert("pass".into(), Value::from(pass));
        let file = File::create(path)
            .with_context(|| format!("cannot create {}", path.display()))
            .map_err(input)?;
        emit_json(&Value::Object(doc), BufWriter::new(file)).map_err(input)?;
    }

    Ok(if pass { 0 } else { 3 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OnesArg {
    Fixed,
    UniformRandom,
    FromSeed,
}

#[derive(Args)]
struct GenTraceArgs {
    /// Trace file to write
    #[arg(long)]
    out: PathBuf,
    /// Number of accesses
    #[arg(long, default_value_t = 100_000)]
    events: u64,
    /// Fraction of accesses that are reads
    #[arg(long, default_value_t = 0.7)]
    read_fraction: f64,
    /// Number of distinct blocks addressed
    #[arg(long, default_value_t = 4096)]
    address_space: u64,
    /// Popularity skew exponent; 0 draws blocks uniformly
    #[arg(long, default_value_t = 1.1)]
    skew: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Content model for the ones-counts written into the trace
    #[arg(long, value_enum, default_value_t = OnesArg::Fixed)]
    ones: OnesArg,
    /// Ones per block under the fixed content model
    #[arg(long, default_value_t = 128)]
    ones_count: u32,
    /// Config supplying the cache geometry (block size sets address
    /// alignment); defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_gen_trace(args: &GenTraceArgs) -> Result<i32, CliError> {
    let config = resolve_config(&args.config)?;
    let ones_model = match args.ones {
        OnesArg::Fixed => OnesModel::Fixed {
            count: args.ones_count,
        },
        OnesArg::UniformRandom => OnesModel::UniformRandom,
        OnesArg::FromSeed => OnesModel::FromSeed,
    };
    let spec = SyntheticSpec {
        num_events: args.events,
        read_fraction: args.read_fraction,
        address_space: args.address_space,
        set_skew: args.skew,
        ones_model,
        seed: args.seed,
    };
    let events = generate_synthetic(&spec, &config.geometry).map_err(usage)?;

    let file = File::create(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))
        .map_err(input)?;
    let mut w = BufWriter::new(file);
    let ones_label = match args.ones {
        OnesArg::Fixed => format!("fixed({})", args.ones_count),
        OnesArg::UniformRandom => "uniform-random".to_string(),
        OnesArg::FromSeed => "from-seed".to_string(),
    };
    (|| -> std::io::Result<()> {
        writeln!(w, "# synthetic trace")?;
        writeln!(
            w,
            "# events={} read_fraction={} address_space={} skew={} ones={} seed={}",
            args.events, args.read_fraction, args.address_space, args.skew, ones_label, args.seed
        )?;
        for access in events {
            let event = AccessEvent {
                kind: access.kind,
                address: access.address,
                ones: Some(access.ones),
                payload: None,
            };
            writeln!(w, "{}", format_trace_line(&event))?;
        }
        w.flush()
    })()
    .with_context(|| format!("cannot write {}", args.out.display()))
    .map_err(input)?;
    Ok(0)
}
