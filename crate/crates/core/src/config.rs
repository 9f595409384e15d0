//! Run configuration: one TOML document holding every knob of a run.
//!
//! Any subset of keys may appear in the file; missing keys take the
//! documented defaults below, and unknown keys are errors. Command-line
//! flags override file values, which override defaults. The fully
//! resolved configuration is embedded in every report, and feeding such
//! an echo back in reproduces the run byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{CacheError, CacheGeometry, Replacement, Scheme, SchemeConfig};
use crate::model::{DeviceParams, ModelError, SignConvention};
use crate::report::{AreaParams, EnergyParams, ReportError};
use crate::trace::OnesModel;

pub const CONFIG_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config_version {found} is not supported (this build reads version {CONFIG_VERSION})")]
    UnsupportedVersion { found: u64 },
    #[error("rng {found:?} is not supported (this build provides \"chacha12\")")]
    UnsupportedRng { found: String },
    #[error(transparent)]
    Geometry(#[from] CacheError),
    #[error(transparent)]
    Device(#[from] ModelError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{name} must be {requirement} (got {value})")]
    BadValue {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
}

/// Trace-handling defaults used while streaming a trace file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    /// Content model applied to trace lines that carry no `ones=` or
    /// `payload=` descriptor.
    pub ones: OnesModel,
}

/// Knobs of the derived report columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    /// Ones-count used for the histogram's per-bin failure contribution.
    pub mean_ones: u32,
    /// Wall-clock length of one access, for converting expected failures
    /// into an MTTF.
    pub access_period_ns: f64,
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub config_version: u64,
    pub seed: u64,
    pub rng: String,
    pub geometry: CacheGeometry,
    pub device: DeviceParams,
    pub scheme: SchemeConfig,
    pub energy: EnergyParams,
    pub area: AreaParams,
    pub trace: TraceConfig,
    pub report: ReportConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            config_version: CONFIG_VERSION,
            seed: 42,
            rng: "chacha12".to_string(),
            geometry: CacheGeometry {
                num_sets: 1024,
                ways: 8,
                block_bits: 512,
                ecc_t: 1,
            },
            device: DeviceParams {
                tau_ns: 1.0,
                delta: 60.0,
                i_read_ua: 50.0,
                i_c0_ua: 100.0,
                t_read_ns: 1.0,
                sign_convention: SignConvention::Standard,
                p_override: Some(1e-8),
            },
            scheme: SchemeConfig::new(Scheme::ConventionalParallel),
            energy: EnergyParams {
                e_line_read: 50.0,
                e_line_write: 100.0,
                e_tag_access: 5.0,
                e_ecc_decode: 1.0,
            },
            area: AreaParams {
                decoder_area_fraction: 0.001,
            },
            trace: TraceConfig {
                ones: OnesModel::Fixed { count: 128 },
            },
            report: ReportConfig {
                mean_ones: 128,
                access_period_ns: 1.0,
            },
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.config_version != CONFIG_VERSION {
            return Err(ConfigError::UnsupportedVersion {
                found: self.config_version,
            });
        }
        if self.rng != "chacha12" {
            return Err(ConfigError::UnsupportedRng {
                found: self.rng.clone(),
            });
        }
        let g = self.geometry;
        CacheGeometry::new(g.num_sets, g.ways, g.block_bits, g.ecc_t)?;
        self.device.validate()?;
        self.energy.validate()?;
        self.area.validate()?;
        if self.report.mean_ones > g.block_bits {
            return Err(ConfigError::BadValue {
                name: "report.mean_ones",
                requirement: "no larger than geometry.block_bits",
                value: f64::from(self.report.mean_ones),
            });
        }
        if !self.report.access_period_ns.is_finite() || self.report.access_period_ns <= 0.0 {
            return Err(ConfigError::BadValue {
                name: "report.access_period_ns",
                requirement: "finite and > 0",
                value: self.report.access_period_ns,
            });
        }
        if let OnesModel::Fixed { count } = self.trace.ones {
            if count > g.block_bits {
                return Err(ConfigError::BadValue {
                    name: "trace.ones.count",
                    requirement: "no larger than geometry.block_bits",
                    value: f64::from(count),
                });
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Parse a TOML document over the defaults and validate the result.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let patch: ConfigPatch = toml::from_str(text)?;
    let mut config = RunConfig::default();
    patch.apply(&mut config);
    config.validate()?;
    Ok(config)
}

/// Load a TOML config file; errors name the path.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigPatch {
    config_version: Option<u64>,
    seed: Option<u64>,
    rng: Option<String>,
    geometry: Option<GeometryPatch>,
    device: Option<DevicePatch>,
    scheme: Option<SchemePatch>,
    energy: Option<EnergyPatch>,
    area: Option<AreaPatch>,
    trace: Option<TracePatch>,
    report: Option<ReportPatch>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometryPatch {
    num_sets: Option<u32>,
    ways: Option<u32>,
    block_bits: Option<u32>,
    ecc_t: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DevicePatch {
    tau_ns: Option<f64>,
    delta: Option<f64>,
    i_read_ua: Option<f64>,
    i_c0_ua: Option<f64>,
    t_read_ns: Option<f64>,
    sign_convention: Option<SignConvention>,
    p_override: Option<f64>,
    /// TOML cannot express "clear the override"; setting this recomputes
    /// the per-read flip probability from the device fields instead.
    use_formula: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemePatch {
    scheme: Option<Scheme>,
    writes_cause_concealed_reads: Option<bool>,
    account_dirty_writeback: Option<bool>,
    drain_dirty_at_end: Option<bool>,
    replacement: Option<Replacement>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnergyPatch {
    e_line_read: Option<f64>,
    e_line_write: Option<f64>,
    e_tag_access: Option<f64>,
    e_ecc_decode: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AreaPatch {
    decoder_area_fraction: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TracePatch {
    ones: Option<OnesModel>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportPatch {
    mean_ones: Option<u32>,
    access_period_ns: Option<f64>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(value) = value {
        *slot = value;
    }
}

impl ConfigPatch {
    fn apply(self, config: &mut RunConfig) {
        set(&mut config.config_version, self.config_version);
        set(&mut config.seed, self.seed);
        set(&mut config.rng, self.rng);
        if let Some(g) = self.geometry {
            set(&mut config.geometry.num_sets, g.num_sets);
            set(&mut config.geometry.ways, g.ways);
            set(&mut config.geometry.block_bits, g.block_bits);
            set(&mut config.geometry.ecc_t, g.ecc_t);
        }
        if let Some(d) = self.device {
            set(&mut config.device.tau_ns, d.tau_ns);
            set(&mut config.device.delta, d.delta);
            set(&mut config.device.i_read_ua, d.i_read_ua);
            set(&mut config.device.i_c0_ua, d.i_c0_ua);
            set(&mut config.device.t_read_ns, d.t_read_ns);
            set(&mut config.device.sign_convention, d.sign_convention);
            if let Some(p) = d.p_override {
                config.device.p_override = Some(p);
            }
            if d.use_formula == Some(true) {
                config.device.p_override = None;
            }
        }
        if let Some(s) = self.scheme {
            set(&mut config.scheme.scheme, s.scheme);
            set(
                &mut config.scheme.writes_cause_concealed_reads,
                s.writes_cause_concealed_reads,
            );
            set(
                &mut config.scheme.account_dirty_writeback,
                s.account_dirty_writeback,
            );
            set(&mut config.scheme.drain_dirty_at_end, s.drain_dirty_at_end);
            set(&mut config.scheme.replacement, s.replacement);
        }
        if let Some(e) = self.energy {
            set(&mut config.energy.e_line_read, e.e_line_read);
            set(&mut config.energy.e_line_write, e.e_line_write);
            set(&mut config.energy.e_tag_access, e.e_tag_access);
            set(&mut config.energy.e_ecc_decode, e.e_ecc_decode);
        }
        if let Some(a) = self.area {
            set(
                &mut config.area.decoder_area_fraction,
                a.decoder_area_fraction,
            );
        }
        if let Some(t) = self.trace {
            set(&mut config.trace.ones, t.ones);
        }
        if let Some(r) = self.report {
            set(&mut config.report.mean_ones, r.mean_ones);
            set(&mut config.report.access_period_ns, r.access_period_ns);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default_config() {
        let config = parse_config("").unwrap();
        assert_eq!(config, RunConfig::default());
        assert_eq!(config.geometry.ways, 8);
        assert_eq!(config.geometry.block_bits, 512);
        assert_eq!(config.device.p_override, Some(1e-8));
        assert_eq!(config.seed, 42);
    }

    #[test]
    fn partial_sections_override_only_their_keys() {
        let config = parse_config(
            "seed = 7\n\n[geometry]\nways = 4\n\n[scheme]\nscheme = \"reap-parallel\"\n",
        )
        .unwrap();
        assert_eq!(config.seed, 7);
        assert_eq!(config.geometry.ways, 4);
        assert_eq!(config.geometry.num_sets, 1024);
        assert_eq!(config.scheme.scheme, Scheme::ReapParallel);
        assert!(config.scheme.account_dirty_writeback);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            parse_config("wayz = 4\n"),
            Err(ConfigError::Parse(_))
        ));
        assert!(matches!(
            parse_config("[geometry]\nwayz = 4\n"),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn version_and_rng_must_match() {
        assert!(matches!(
            parse_config("config_version = 2\n"),
            Err(ConfigError::UnsupportedVersion { found: 2 })
        ));
        assert!(matches!(
            parse_config("rng = \"mt19937\"\n"),
            Err(ConfigError::UnsupportedRng { .. })
        ));
    }

    #[test]
    fn invalid_geometry_is_rejected() {
        assert!(matches!(
            parse_config("[geometry]\nnum_sets = 3\n"),
            Err(ConfigError::Geometry(_))
        ));
    }

    #[test]
    fn formula_mode_clears_the_override() {
        let config = parse_config("[device]\nuse_formula = true\n").unwrap();
        assert_eq!(config.device.p_override, None);
        let config = parse_config("[device]\np_override = 1e-6\n").unwrap();
        assert_eq!(config.device.p_override, Some(1e-6));
    }

    #[test]
    fn ones_model_round_trips_through_toml() {
        let config = parse_config("[trace.ones]\nmodel = \"from-seed\"\n").unwrap();
        assert_eq!(config.trace.ones, OnesModel::FromSeed);
        let text = config.to_toml();
        let reparsed = parse_config(&text).unwrap();
        assert_eq!(reparsed, config);
    }

    #[test]
    fn resolved_config_echo_round_trips() {
        let config = parse_config("[geometry]\nways = 2\n[report]\nmean_ones = 100\n").unwrap();
        let text = config.to_toml();
        let reparsed = parse_config(&text).unwrap();
        assert_eq!(reparsed, config);
    }

    #[test]
    fn report_knobs_validated() {
        assert!(matches!(
            parse_config("[report]\nmean_ones = 513\n"),
            Err(ConfigError::BadValue {
                name: "report.mean_ones",
                ..
            })
        ));
        assert!(matches!(
            parse_config("[report]\naccess_period_ns = 0.0\n"),
            Err(ConfigError::BadValue {
                name: "report.access_period_ns",
                ..
            })
        ));
        assert!(matches!(
            parse_config("[trace.ones]\nmodel = \"fixed\"\ncount = 600\n"),
            Err(ConfigError::BadValue {
                name: "trace.ones.count",
                ..
            })
        ));
    }

    #[test]
    fn missing_file_error_names_the_path() {
        let err = load_config(Path::new("/nonexistent/run.toml")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/run.toml"));
    }
}
