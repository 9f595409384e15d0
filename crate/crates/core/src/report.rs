//! Evaluation reports: concealed-read histograms, MTTF, and parametric
//! energy/area overheads, emitted as JSON and CSV.
//!
//! Every emitter is a pure function of finalized ledgers and counters,
//! and identical inputs always produce byte-identical bytes. Values on a
//! probability or failure scale are written in decimal scientific
//! notation with 12 significant digits so that 1e-13-scale numbers stay
//! distinguishable; non-finite values (an infinite MTTF after a run with
//! zero expected failures) are emitted as JSON null and as empty CSV
//! cells.

use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::cache::{AccessCounters, CacheGeometry, ReliabilityLedger};
use crate::model::{
    accumulated_error_probability, read_disturbance_probability, BlockErrorQuery, DeviceParams,
    ModelError,
};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("parameter {name} must satisfy {requirement}, got {value}")]
    InvalidParameter {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("cannot compare scheme {label:?} against itself")]
    SchemeCollision { label: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv write failed: {0}")]
    Csv(#[from] csv::Error),
}

/// Dynamic energy cost of the primitive cache operations, in picojoules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyParams {
    /// One data-line read from the array.
    pub e_line_read: f64,
    /// One data-line write into the array.
    pub e_line_write: f64,
    /// One tag read plus compare across the set.
    pub e_tag_access: f64,
    /// One ECC decode of a block.
    pub e_ecc_decode: f64,
}

impl EnergyParams {
    pub fn validate(&self) -> Result<(), ReportError> {
        for (name, value) in [
            ("e_line_read", self.e_line_read),
            ("e_line_write", self.e_line_write),
            ("e_tag_access", self.e_tag_access),
            ("e_ecc_decode", self.e_ecc_decode),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(ReportError::InvalidParameter {
                    name,
                    requirement: "finite and >= 0",
                    value,
                });
            }
        }
        Ok(())
    }
}

/// Area cost of one ECC decoder as a fraction of total cache area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaParams {
    pub decoder_area_fraction: f64,
}

impl AreaParams {
    pub fn validate(&self) -> Result<(), ReportError> {
        let f = self.decoder_area_fraction;
        if !f.is_finite() || !(0.0..1.0).contains(&f) {
            return Err(ReportError::InvalidParameter {
                name: "decoder_area_fraction",
                requirement: "in [0, 1)",
                value: f,
            });
        }
        Ok(())
    }
}

/// One histogram bin: how often a checked line had been read exactly
/// `concealed_reads` times since its previous check, and what that bin
/// contributes to the expected failure count.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramRow {
    pub concealed_reads: u64,
    pub raw_count: u64,
    /// Raw count scaled so the first (lowest concealed-read) bin reads 100.
    pub normalized_frequency: f64,
    /// raw_count x accumulated block error probability for a line of
    /// `mean_ones` ones checked after that many concealed reads.
    pub failure_contribution: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramReport {
    pub scheme_label: String,
    /// Mean ones-count used for the per-bin contribution column.
    pub mean_ones: u32,
    pub rows: Vec<HistogramRow>,
}

/// Histogram of concealed-read counts observed at check time, normalized
/// so the lowest bin reads 100 (the zero-concealed-reads bin whenever the
/// run produced one). Bins never hit are omitted. An empty ledger gives
/// an empty report.
pub fn build_histogram(
    ledger: &ReliabilityLedger,
    model: &DeviceParams,
    mean_ones: u32,
    ecc_t: u32,
) -> Result<HistogramReport, ReportError> {
    let p = read_disturbance_probability(model)?;
    let mut rows = Vec::with_capacity(ledger.check_histogram.len());
    let scale = match ledger.check_histogram.values().next() {
        Some(&first) => 100.0 / first as f64,
        None => 0.0,
    };
    for (&concealed, &count) in &ledger.check_histogram {
        let query = BlockErrorQuery::new(p, u64::from(mean_ones), concealed + 1, ecc_t)?;
        rows.push(HistogramRow {
            concealed_reads: concealed,
            raw_count: count,
            normalized_frequency: count as f64 * scale,
            failure_contribution: count as f64 * accumulated_error_probability(&query),
        });
    }
    Ok(HistogramReport {
        scheme_label: ledger.scheme_label.clone(),
        mean_ones,
        rows,
    })
}

/// Per-scheme dynamic energy split by mechanism, in picojoules.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub scheme_label: String,
    pub line_read_energy: f64,
    pub line_write_energy: f64,
    pub tag_energy: f64,
    pub decode_energy: f64,
    pub total_energy: f64,
}

/// Price the counter totals of a finished run:
/// data-line reads and ECC decodes at their per-operation costs, one tag
/// access per cache access, one line write per write access.
pub fn energy_report(
    counters: &AccessCounters,
    params: &EnergyParams,
) -> Result<EnergyReport, ReportError> {
    params.validate()?;
    let line_read_energy = counters.data_line_reads as f64 * params.e_line_read;
    let line_write_energy = counters.write_accesses as f64 * params.e_line_write;
    let tag_energy =
        (counters.read_accesses + counters.write_accesses) as f64 * params.e_tag_access;
    let decode_energy = counters.ecc_decodes as f64 * params.e_ecc_decode;
    Ok(EnergyReport {
        scheme_label: counters.scheme_label.clone(),
        line_read_energy,
        line_write_energy,
        tag_energy,
        decode_energy,
        total_energy: line_read_energy + line_write_energy + tag_energy + decode_energy,
    })
}

/// Candidate total over baseline total from the same trace. The two
/// reports must come from different schemes; two zero totals compare as
/// 1.0, and a nonzero candidate against a zero baseline as infinity.
pub fn energy_overhead_ratio(
    candidate: &EnergyReport,
    baseline: &EnergyReport,
) -> Result<f64, ReportError> {
    if candidate.scheme_label == baseline.scheme_label {
        return Err(ReportError::SchemeCollision {
            label: candidate.scheme_label.clone(),
        });
    }
    Ok(if baseline.total_energy == 0.0 {
        if candidate.total_energy == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        candidate.total_energy / baseline.total_energy
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AreaReport {
    pub ways: u32,
    pub decoder_area_fraction: f64,
    /// Extra area of the (ways - 1) additional decoders the
    /// check-every-line read path needs, as a fraction of cache area.
    pub overhead_fraction: f64,
}

pub fn area_report(
    geometry: &CacheGeometry,
    params: &AreaParams,
) -> Result<AreaReport, ReportError> {
    params.validate()?;
    Ok(AreaReport {
        ways: geometry.ways,
        decoder_area_fraction: params.decoder_area_fraction,
        overhead_fraction: (geometry.ways - 1) as f64 * params.decoder_area_fraction,
    })
}

/// A float on a probability/failure scale rendered as a JSON number in
/// decimal scientific notation with 12 significant digits. Non-finite
/// values become null.
pub fn sci_number(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let literal = format!("{:.11e}", x);
    literal
        .parse::<serde_json::Number>()
        .map(Value::Number)
        .unwrap_or(Value::Null)
}

/// Same rendering for CSV cells; non-finite values become empty cells.
pub fn sci_cell(x: f64) -> String {
    if x.is_finite() {
        format!("{:.11e}", x)
    } else {
        String::new()
    }
}

/// Common outer object every emitted JSON report carries: schema and
/// artifact versions, the report kind, and the fully resolved run
/// configuration that produced it.
pub fn envelope(kind: &str, config_echo: Value) -> Map<String, Value> {
    let mut map = Map::new();
    map.insert("schema_version".into(), Value::from(SCHEMA_VERSION));
    map.insert(
        "artifact_version".into(),
        Value::from(env!("CARGO_PKG_VERSION")),
    );
    map.insert("kind".into(), Value::from(kind));
    map.insert("config".into(), config_echo);
    map
}

impl HistogramReport {
    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut m = Map::new();
                m.insert("concealed_reads".into(), Value::from(row.concealed_reads));
                m.insert("raw_count".into(), Value::from(row.raw_count));
                m.insert(
                    "normalized_frequency".into(),
                    Value::from(row.normalized_frequency),
                );
                m.insert(
                    "failure_contribution".into(),
                    sci_number(row.failure_contribution),
                );
                Value::Object(m)
            })
            .collect();
        let mut map = Map::new();
        map.insert("scheme".into(), Value::from(self.scheme_label.as_str()));
        map.insert("mean_ones".into(), Value::from(self.mean_ones));
        map.insert("bins".into(), Value::Array(rows));
        Value::Object(map)
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), ReportError> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record([
            "concealed_reads",
            "raw_count",
            "normalized_frequency",
            "failure_contribution",
        ])?;
        for row in &self.rows {
            w.write_record([
                row.concealed_reads.to_string(),
                row.raw_count.to_string(),
                format_plain(row.normalized_frequency),
                sci_cell(row.failure_contribution),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl EnergyReport {
    pub fn to_json(&self) -> Value {
        let mut map = Map::new();
        map.insert("scheme".into(), Value::from(self.scheme_label.as_str()));
        map.insert(
            "line_read_energy_pj".into(),
            Value::from(self.line_read_energy),
        );
        map.insert(
            "line_write_energy_pj".into(),
            Value::from(self.line_write_energy),
        );
        map.insert("tag_energy_pj".into(), Value::from(self.tag_energy));
        map.insert("decode_energy_pj".into(), Value::from(self.decode_energy));
        map.insert("total_energy_pj".into(), Value::from(self.total_energy));
        Value::Object(map)
    }
}

impl AreaReport {
    pub fn to_json(&self) -> Value {
        let mut map = Map::new();
        map.insert("ways".into(), Value::from(self.ways));
        map.insert(
            "decoder_area_fraction".into(),
            Value::from(self.decoder_area_fraction),
        );
        map.insert(
            "overhead_fraction".into(),
            Value::from(self.overhead_fraction),
        );
        Value::Object(map)
    }
}

/// Ledger section shared by the simulate and compare reports.
pub fn ledger_json(ledger: &ReliabilityLedger) -> Value {
    let mut map = Map::new();
    map.insert("scheme".into(), Value::from(ledger.scheme_label.as_str()));
    map.insert(
        "expected_failures".into(),
        sci_number(ledger.expected_failures),
    );
    map.insert(
        "demand_check_failures".into(),
        sci_number(ledger.demand_check_failures),
    );
    map.insert("checked_reads".into(), Value::from(ledger.checked_reads));
    map.insert(
        "concealed_increments".into(),
        Value::from(ledger.concealed_increments),
    );
    Value::Object(map)
}

pub fn counters_json(counters: &AccessCounters) -> Value {
    let mut map = Map::new();
    map.insert("scheme".into(), Value::from(counters.scheme_label.as_str()));
    map.insert("read_accesses".into(), Value::from(counters.read_accesses));
    map.insert(
        "write_accesses".into(),
        Value::from(counters.write_accesses),
    );
    map.insert(
        "data_line_reads".into(),
        Value::from(counters.data_line_reads),
    );
    map.insert("ecc_decodes".into(), Value::from(counters.ecc_decodes));
    map.insert("hits".into(), Value::from(counters.hits));
    map.insert("misses".into(), Value::from(counters.misses));
    map.insert("evictions".into(), Value::from(counters.evictions));
    map.insert("writebacks".into(), Value::from(counters.writebacks));
    Value::Object(map)
}

/// Write a finished JSON report: pretty-printed, key order fixed by
/// construction, trailing newline.
pub fn emit_json<W: Write>(report: &Value, mut sink: W) -> Result<(), ReportError> {
    serde_json::to_writer_pretty(&mut sink, report)?;
    sink.write_all(b"\n")?;
    Ok(())
}

/// Key/value CSV rendering for the scalar reports.
pub fn emit_key_value_csv<W: Write>(rows: &[(&str, String)], sink: W) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["key", "value"])?;
    for (key, value) in rows {
        w.write_record([*key, value.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

fn format_plain(x: f64) -> String {
    let mut s = format!("{x}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}

impl From<serde_json::Error> for ReportError {
    fn from(e: serde_json::Error) -> Self {
        ReportError::Io(e.into())
    }
}
