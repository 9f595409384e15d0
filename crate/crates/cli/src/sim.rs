//! Trace-driven runs: the simulate and compare verbs.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, ValueEnum};
use serde_json::{Map, Value};

use reapsim_core::cache::{AccessCounters, CacheState, ReliabilityLedger, Scheme};
use reapsim_core::config::RunConfig;
use reapsim_core::model::{mttf_from_ledger, normalized_mttf};
use reapsim_core::report::{
    area_report, build_histogram, counters_json, emit_json, emit_key_value_csv,
    energy_overhead_ratio, energy_report, envelope, ledger_json, sci_cell, sci_number,
    EnergyReport,
};
use reapsim_core::trace::stream_trace;

use crate::{input, resolve_config, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    ConventionalParallel,
    ReapParallel,
    SerialTagThenData,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::ConventionalParallel => Scheme::ConventionalParallel,
            SchemeArg::ReapParallel => Scheme::ReapParallel,
            SchemeArg::SerialTagThenData => Scheme::SerialTagThenData,
        }
    }
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Trace file to replay
    #[arg(long)]
    trace: PathBuf,
    /// Run configuration (defaults apply when omitted)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the configured read scheme
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    /// Override the configured seed
    #[arg(long)]
    seed: Option<u64>,
    /// Directory the report files go into
    #[arg(long, default_value = "reports")]
    out: PathBuf,
}

#[derive(Args)]
pub struct CompareArgs {
    /// Trace file to replay under both schemes
    #[arg(long)]
    trace: PathBuf,
    /// Run configuration (defaults apply when omitted)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the configured seed
    #[arg(long)]
    seed: Option<u64>,
    /// Directory the report files go into
    #[arg(long, default_value = "reports")]
    out: PathBuf,
}

pub struct SchemeRun {
    pub ledger: ReliabilityLedger,
    pub counters: AccessCounters,
}

/// Replay the trace through one scheme, drain, and hand back the books.
pub fn run_scheme(
    trace_path: &Path,
    config: &RunConfig,
    scheme: Scheme,
) -> Result<SchemeRun, CliError> {
    let file = File::open(trace_path)
        .with_context(|| format!("cannot open trace {}", trace_path.display()))
        .map_err(input)?;
    let reader = BufReader::new(file);
    let mut scheme_config = config.scheme;
    scheme_config.scheme = scheme;
    let mut state = CacheState::new(config.geometry, scheme_config).map_err(input)?;
    for event in stream_trace(reader, &config.geometry, config.trace.ones, config.seed) {
        let access = event
            .with_context(|| format!("error in trace {}", trace_path.display()))
            .map_err(input)?;
        state.access(&access, &config.device);
    }
    let ledger = state.drain(&config.device);
    Ok(SchemeRun {
        ledger,
        counters: state.counters().clone(),
    })
}

fn sim_time_ns(counters: &AccessCounters, config: &RunConfig) -> f64 {
    (counters.read_accesses + counters.write_accesses) as f64 * config.report.access_period_ns
}

fn mttf_json(run: &SchemeRun, config: &RunConfig) -> Value {
    let sim_time = sim_time_ns(&run.counters, config);
    let mut map = Map::new();
    map.insert("sim_time_ns".into(), Value::from(sim_time));
    map.insert(
        "mttf_ns".into(),
        sci_number(mttf_from_ledger(run.ledger.expected_failures, sim_time)),
    );
    map.insert(
        "demand_mttf_ns".into(),
        sci_number(mttf_from_ledger(run.ledger.demand_check_failures, sim_time)),
    );
    Value::Object(map)
}

fn scheme_section(run: &SchemeRun, energy: &EnergyReport, config: &RunConfig) -> Value {
    let mut map = Map::new();
    map.insert("ledger".into(), ledger_json(&run.ledger));
    map.insert("counters".into(), counters_json(&run.counters));
    map.insert("mttf".into(), mttf_json(run, config));
    map.insert("energy".into(), energy.to_json());
    Value::Object(map)
}

fn trace_section(path: &Path, counters: &AccessCounters) -> Value {
    let mut map = Map::new();
    map.insert("path".into(), Value::from(path.display().to_string()));
    map.insert(
        "events".into(),
        Value::from(counters.read_accesses + counters.write_accesses),
    );
    map.insert("reads".into(), Value::from(counters.read_accesses));
    map.insert("writes".into(), Value::from(counters.write_accesses));
    Value::Object(map)
}

fn config_echo(config: &RunConfig) -> Result<Value, CliError> {
    serde_json::to_value(config)
        .context("config echo")
        .map_err(input)
}

fn create_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
        .map_err(input)
}

fn write_json(path: &Path, doc: &Value) -> Result<(), CliError> {
    let file = File::create(path)
        .with_context(|| format!("cannot create {}", path.display()))
        .map_err(input)?;
    emit_json(doc, BufWriter::new(file))
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(input)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<i32, CliError> {
    let mut config = resolve_config(&args.config)?;
    if let Some(scheme) = args.scheme {
        config.scheme.scheme = scheme.into();
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let scheme = config.scheme.scheme;
    let run = run_scheme(&args.trace, &config, scheme)?;

    let energy = energy_report(&run.counters, &config.energy).map_err(input)?;
    let area = area_report(&config.geometry, &config.area).map_err(input)?;
    let histogram = build_histogram(
        &run.ledger,
        &config.device,
        config.report.mean_ones,
        config.geometry.ecc_t,
    )
    .map_err(input)?;

    create_out_dir(&args.out)?;
    let echo = config_echo(&config)?;

    let mut doc = envelope("simulate", echo.clone());
    doc.insert("trace".into(), trace_section(&args.trace, &run.counters));
    doc.insert("ledger".into(), ledger_json(&run.ledger));
    doc.insert("counters".into(), counters_json(&run.counters));
    doc.insert("mttf".into(), mttf_json(&run, &config));
    doc.insert("energy".into(), energy.to_json());
    doc.insert("area".into(), area.to_json());
    write_json(&args.out.join("report.json"), &Value::Object(doc))?;

    let sim_time = sim_time_ns(&run.counters, &config);
    let rows: Vec<(&str, String)> = vec![
        ("scheme", run.ledger.scheme_label.clone()),
        ("read_accesses", run.counters.read_accesses.to_string()),
        ("write_accesses", run.counters.write_accesses.to_string()),
        ("hits", run.counters.hits.to_string()),
        ("misses", run.counters.misses.to_string()),
        ("evictions", run.counters.evictions.to_string()),
        ("writebacks", run.counters.writebacks.to_string()),
        ("data_line_reads", run.counters.data_line_reads.to_string()),
        ("ecc_decodes", run.counters.ecc_decodes.to_string()),
        ("checked_reads", run.ledger.checked_reads.to_string()),
        (
            "concealed_increments",
            run.ledger.concealed_increments.to_string(),
        ),
        ("expected_failures", sci_cell(run.ledger.expected_failures)),
        (
            "demand_check_failures",
            sci_cell(run.ledger.demand_check_failures),
        ),
        ("sim_time_ns", format!("{sim_time}")),
        (
            "mttf_ns",
            sci_cell(mttf_from_ledger(run.ledger.expected_failures, sim_time)),
        ),
        (
            "demand_mttf_ns",
            sci_cell(mttf_from_ledger(run.ledger.demand_check_failures, sim_time)),
        ),
        ("total_energy_pj", format!("{}", energy.total_energy)),
        (
            "area_overhead_fraction",
            format!("{}", area.overhead_fraction),
        ),
    ];
    let csv_file = File::create(args.out.join("report.csv"))
        .with_context(|| format!("cannot create {}", args.out.join("report.csv").display()))
        .map_err(input)?;
    emit_key_value_csv(&rows, BufWriter::new(csv_file)).map_err(input)?;

    let mut hist_doc = envelope("histogram", echo);
    for (key, value) in histogram
        .to_json()
        .as_object()
        .expect("histogram is an object")
    {
        hist_doc.insert(key.clone(), value.clone());
    }
    write_json(&args.out.join("histogram.json"), &Value::Object(hist_doc))?;
    let hist_file = File::create(args.out.join("histogram.csv"))
        .with_context(|| format!("cannot create {}", args.out.join("histogram.csv").display()))
        .map_err(input)?;
    histogram
        .write_csv(BufWriter::new(hist_file))
        .map_err(input)?;

    println!(
        "{}: {} accesses, expected failures {}, reports in {}",
        run.ledger.scheme_label,
        run.counters.read_accesses + run.counters.write_accesses,
        sci_cell(run.ledger.expected_failures),
        args.out.display()
    );
    Ok(0)
}

pub fn cmd_compare(args: &CompareArgs) -> Result<i32, CliError> {
    let mut config = resolve_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let baseline = run_scheme(&args.trace, &config, Scheme::ConventionalParallel)?;
    let candidate = run_scheme(&args.trace, &config, Scheme::ReapParallel)?;

    let baseline_energy = energy_report(&baseline.counters, &config.energy).map_err(input)?;
    let candidate_energy = energy_report(&candidate.counters, &config.energy).map_err(input)?;
    let ratio = normalized_mttf(
        candidate.ledger.expected_failures,
        baseline.ledger.expected_failures,
    );
    let overhead = energy_overhead_ratio(&candidate_energy, &baseline_energy).map_err(input)?;

    create_out_dir(&args.out)?;
    let mut doc = envelope("compare", config_echo(&config)?);
    doc.insert(
        "trace".into(),
        trace_section(&args.trace, &baseline.counters),
    );
    doc.insert(
        "baseline".into(),
        scheme_section(&baseline, &baseline_energy, &config),
    );
    doc.insert(
        "candidate".into(),
        scheme_section(&candidate, &candidate_energy, &config),
    );
    doc.insert("normalized_mttf".into(), sci_number(ratio));
    doc.insert("energy_overhead_ratio".into(), Value::from(overhead));
    write_json(&args.out.join("comparison.json"), &Value::Object(doc))?;

    let rows: Vec<(&str, String)> = vec![
        ("baseline_scheme", baseline.ledger.scheme_label.clone()),
        ("candidate_scheme", candidate.ledger.scheme_label.clone()),
        (
            "baseline_expected_failures",
            sci_cell(baseline.ledger.expected_failures),
        ),
        (
            "candidate_expected_failures",
            sci_cell(candidate.ledger.expected_failures),
        ),
        ("normalized_mttf", sci_cell(ratio)),
        (
            "baseline_total_energy_pj",
            format!("{}", baseline_energy.total_energy),
        ),
        (
            "candidate_total_energy_pj",
            format!("{}", candidate_energy.total_energy),
        ),
        ("energy_overhead_ratio", format!("{overhead}")),
    ];
    let csv_file = File::create(args.out.join("comparison.csv"))
        .with_context(|| {
            format!(
                "cannot create {}",
                args.out.join("comparison.csv").display()
            )
        })
        .map_err(input)?;
    emit_key_value_csv(&rows, BufWriter::new(csv_file)).map_err(input)?;

    let ratio_text = if ratio.is_finite() {
        format!("{ratio:.6e}")
    } else {
        format!("{ratio}")
    };
    println!(
        "normalized MTTF ({} over {}): {}",
        candidate.ledger.scheme_label, baseline.ledger.scheme_label, ratio_text
    );
    println!(
        "energy overhead ({} over {}): {:.6}",
        candidate.ledger.scheme_label, baseline.ledger.scheme_label, overhead
    );
    Ok(0)
}
