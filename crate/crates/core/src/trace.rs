//! Trace parsing, streaming and synthetic workload generation.
//!
//! Trace files are line oriented:
//!
//! ```text
//! # comment
//! R 0x1A40 ones=120
//! W 1a80 payload=deadbeef
//! R 0x2000
//! ```
//!
//! Each data line is an access kind (`R` or `W`), a hex block address with
//! optional `0x` prefix, and at most one content descriptor: `ones=<dec>`
//! (the number of '1' bits in the block) or `payload=<hex>` (raw bytes
//! whose popcount becomes the ones-count). Lines starting with `#` and
//! blank lines are skipped. Anything else is an error with its line
//! number.
//!
//! Events without a descriptor get one from the configured [`OnesModel`]
//! during streaming, so the cache engine always sees resolved events.

use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{Access, AccessKind, CacheGeometry};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("unknown access kind {0:?} (expected R or W)")]
    BadKind(String),
    #[error("missing address")]
    MissingAddress,
    #[error("bad address {0:?} (expected hex, optional 0x prefix)")]
    BadAddress(String),
    #[error("bad ones value {0:?}")]
    BadOnes(String),
    #[error("bad payload {0:?} (expected an even-length hex string)")]
    BadPayload(String),
    #[error("unknown field {0:?}")]
    UnknownField(String),
    #[error("duplicate field {0:?}")]
    DuplicateField(&'static str),
    #[error("ones and payload are mutually exclusive")]
    OnesAndPayload,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {source}")]
    Parse { line: usize, source: ParseError },
    #[error("line {line}: ones count {ones} exceeds block_bits {block_bits}")]
    OnesOutOfRange {
        line: usize,
        ones: u32,
        block_bits: u32,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One parsed trace line before content resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessEvent {
    pub kind: AccessKind,
    pub address: u64,
    pub ones: Option<u32>,
    pub payload: Option<Vec<u8>>,
}

/// Parse one line. `Ok(None)` means the line carries no event (blank or
/// comment).
pub fn parse_trace_line(line: &str) -> Result<Option<AccessEvent>, ParseError> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return Ok(None);
    }
    let mut tokens = line.split_whitespace();
    let kind = match tokens.next() {
        Some("R") => AccessKind::Read,
        Some("W") => AccessKind::Write,
        Some(other) => return Err(ParseError::BadKind(other.to_string())),
        None => unreachable!("non-empty line has a first token"),
    };
    let addr_token = tokens.next().ok_or(ParseError::MissingAddress)?;
    let digits = addr_token.strip_prefix("0x").unwrap_or(addr_token);
    let address = u64::from_str_radix(digits, 16)
        .map_err(|_| ParseError::BadAddress(addr_token.to_string()))?;

    let mut ones = None;
    let mut payload = None;
    for token in tokens {
        if let Some(value) = token.strip_prefix("ones=") {
            if ones.is_some() {
                return Err(ParseError::DuplicateField("ones"));
            }
            ones = Some(
                value
                    .parse::<u32>()
                    .map_err(|_| ParseError::BadOnes(value.to_string()))?,
            );
        } else if let Some(value) = token.strip_prefix("payload=") {
            if payload.is_some() {
                return Err(ParseError::DuplicateField("payload"));
            }
            payload = Some(parse_hex_bytes(value)?);
        } else {
            return Err(ParseError::UnknownField(token.to_string()));
        }
    }
    if ones.is_some() && payload.is_some() {
        return Err(ParseError::OnesAndPayload);
    }
    Ok(Some(AccessEvent {
        kind,
        address,
        ones,
        payload,
    }))
}

fn parse_hex_bytes(s: &str) -> Result<Vec<u8>, ParseError> {
    if s.is_empty() || !s.len().is_multiple_of(2) {
        return Err(ParseError::BadPayload(s.to_string()));
    }
    (0..s.len())
        .step_by(2)
        .map(|i| {
            u8::from_str_radix(&s[i..i + 2], 16).map_err(|_| ParseError::BadPayload(s.to_string()))
        })
        .collect()
}

/// Render an event in the trace grammar; `parse_trace_line` inverts this.
pub fn format_trace_line(event: &AccessEvent) -> String {
    let kind = match event.kind {
        AccessKind::Read => 'R',
        AccessKind::Write => 'W',
    };
    let mut line = format!("{kind} 0x{:x}", event.address);
    if let Some(ones) = event.ones {
        line.push_str(&format!(" ones={ones}"));
    }
    if let Some(payload) = &event.payload {
        line.push_str(" payload=");
        for byte in payload {
            line.push_str(&format!("{byte:02x}"));
        }
    }
    line
}

/// Where the ones-count of a block comes from when the trace does not say.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum OnesModel {
    /// Every block holds exactly `count` one bits.
    Fixed { count: u32 },
    /// Fresh uniform draw in [0, block_bits] per event.
    UniformRandom,
    /// Deterministic per block address: the same block always resolves to
    /// the same ones-count, derived from the seed.
    FromSeed,
}

/// Resolves missing content descriptors against an [`OnesModel`].
#[derive(Debug, Clone)]
pub struct OnesResolver {
    model: OnesModel,
    block_bits: u32,
    offset_bits: u32,
    seed: u64,
    rng: ChaCha12Rng,
}

impl OnesResolver {
    pub fn new(model: OnesModel, geometry: &CacheGeometry, seed: u64) -> Self {
        Self {
            model,
            block_bits: geometry.block_bits,
            offset_bits: geometry.offset_bits(),
            seed,
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    pub fn resolve(&mut self, address: u64) -> u32 {
        match self.model {
            OnesModel::Fixed { count } => count,
            OnesModel::UniformRandom => self.rng.gen_range(0..=self.block_bits),
            OnesModel::FromSeed => {
                let block = address >> self.offset_bits;
                (splitmix64(self.seed ^ splitmix64(block)) % u64::from(self.block_bits + 1)) as u32
            }
        }
    }
}

// splitmix64: tiny stateless mixer with full 64-bit avalanche, used for
// stable per-block content derivation
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Streaming recode of a trace file into resolved engine events. Reads one
/// line at a time, so arbitrarily long files run in constant memory.
pub struct TraceStream<R: BufRead> {
    lines: std::io::Lines<R>,
    line_no: usize,
    resolver: OnesResolver,
    block_bits: u32,
}

pub fn stream_trace<R: BufRead>(
    reader: R,
    geometry: &CacheGeometry,
    model: OnesModel,
    seed: u64,
) -> TraceStream<R> {
    TraceStream {
        lines: reader.lines(),
        line_no: 0,
        resolver: OnesResolver::new(model, geometry, seed),
        block_bits: geometry.block_bits,
    }
}

impl<R: BufRead> Iterator for TraceStream<R> {
    type Item = Result<Access, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            match parse_trace_line(&line) {
                Ok(None) => continue,
                Ok(Some(event)) => {
                    let ones = match (&event.ones, &event.payload) {
                        (Some(ones), _) => *ones,
                        (None, Some(payload)) => {
                            payload.iter().map(|b| b.count_ones()).sum::<u32>()
                        }
                        (None, None) => self.resolver.resolve(event.address),
                    };
                    if ones > self.block_bits {
                        return Some(Err(TraceError::OnesOutOfRange {
                            line: self.line_no,
                            ones,
                            block_bits: self.block_bits,
                        }));
                    }
                    return Some(Ok(Access {
                        kind: event.kind,
                        address: event.address,
                        ones,
                    }));
                }
                Err(source) => {
                    return Some(Err(TraceError::Parse {
                        line: self.line_no,
                        source,
                    }))
                }
            }
        }
    }
}

/// Recipe for a synthetic workload: block addresses drawn Zipf-like over
/// `address_space` distinct blocks (`set_skew` is the Zipf exponent; 0
/// means uniform), access kinds Bernoulli in `read_fraction`, ones-counts
/// from `ones_model`. The same spec always yields the same sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_events: u64,
    pub read_fraction: f64,
    pub address_space: u64,
    pub set_skew: f64,
    pub ones_model: OnesModel,
    pub seed: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum SyntheticError {
    #[error("read_fraction must lie in [0, 1], got {0}")]
    BadReadFraction(f64),
    #[error("address_space must be >= 1")]
    EmptyAddressSpace,
    #[error("set_skew must be finite and >= 0, got {0}")]
    BadSkew(f64),
    #[error("address_space {space} does not fit above {offset_bits} offset bits")]
    AddressOverflow { space: u64, offset_bits: u32 },
    #[error("fixed ones count {count} exceeds block_bits {block_bits}")]
    FixedOnesTooLarge { count: u32, block_bits: u32 },
}

/// Deterministic synthetic event stream. Hot blocks are the low block
/// indices, so consecutive hot blocks land in different sets and set
/// pressure emerges from the geometry alone.
pub fn generate_synthetic(
    spec: &SyntheticSpec,
    geometry: &CacheGeometry,
) -> Result<impl Iterator<Item = Access>, SyntheticError> {
    if !spec.read_fraction.is_finite() || !(0.0..=1.0).contains(&spec.read_fraction) {
        return Err(SyntheticError::BadReadFraction(spec.read_fraction));
    }
    if spec.address_space == 0 {
        return Err(SyntheticError::EmptyAddressSpace);
    }
    if !spec.set_skew.is_finite() || spec.set_skew < 0.0 {
        return Err(SyntheticError::BadSkew(spec.set_skew));
    }
    let offset_bits = geometry.offset_bits();
    if spec.address_space > (u64::MAX >> offset_bits) {
        return Err(SyntheticError::AddressOverflow {
            space: spec.address_space,
            offset_bits,
        });
    }
    if let OnesModel::Fixed { count } = spec.ones_model {
        if count > geometry.block_bits {
            return Err(SyntheticError::FixedOnesTooLarge {
                count,
                block_bits: geometry.block_bits,
            });
        }
    }
    let zipf = if spec.set_skew > 0.0 {
        Some(
            Zipf::new(spec.address_space, spec.set_skew).expect("validated address_space and skew"),
        )
    } else {
        None
    };
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut resolver = OnesResolver::new(spec.ones_model, geometry, spec.seed);
    let spec = *spec;
    Ok((0..spec.num_events).map(move |_| {
        let kind = if rng.gen_bool(spec.read_fraction) {
            AccessKind::Read
        } else {
            AccessKind::Write
        };
        let block = match &zipf {
            Some(z) => z.sample(&mut rng) as u64 - 1,
            None => rng.gen_range(0..spec.address_space),
        };
        let address = block << offset_bits;
        let ones = resolver.resolve(address);
        Access {
            kind,
            address,
            ones,
        }
    }))
}
