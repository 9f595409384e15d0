//! Closed-form read-disturbance and block-failure probabilities.
//!
//! The device model: a read pulse of width `t_read` against a cell with
//! thermal stability `delta` and read/critical current ratio
//! `i_read / i_c0` flips a stored '1' to '0' with probability
//!
//! ```text
//! P = 1 - exp(-(t_read / tau) * exp(E)),   E = -delta * (1 - i_read/i_c0)
//! ```
//!
//! Flips are unidirectional, so only cells holding '1' are vulnerable. A
//! block with `n` vulnerable cells under a `t`-error-correcting code fails
//! once more than `t` cells flip between checks. With `reads` unchecked
//! reads the flip opportunities pool into a single binomial with
//! `reads * n` trials; with a check-and-scrub after every read each read is
//! its own `n`-trial binomial and the block fails if any read's flip count
//! exceeds `t`.
//!
//! Everything funnels into [`binomial_tail`], which is evaluated in log
//! space so that device-scale inputs (per-read flip probabilities around
//! 1e-13 and below) neither underflow nor cancel.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("{name} must be {requirement} (got {value})")]
    InvalidParameter {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("reads * n overflows a u64 ({reads} * {n})")]
    TrialCountOverflow { reads: u64, n: u64 },
}

/// Sign of the current-ratio exponent in the flip-probability formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignConvention {
    /// `E = -delta * (1 - i_read/i_c0)`: disturbance grows as the read
    /// current approaches the critical current. This is the physically
    /// monotone form and the default.
    Standard,
    /// `E = -delta * (i_read - i_c0) / i_c0`: the opposite sign, kept so
    /// results under that convention can be reproduced side by side.
    AsPrinted,
}

/// Device and pulse parameters for the per-read flip probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub tau_ns: f64,
    pub delta: f64,
    pub i_read_ua: f64,
    pub i_c0_ua: f64,
    pub t_read_ns: f64,
    pub sign_convention: SignConvention,
    /// Fixed per-read flip probability. When set, it bypasses the formula
    /// entirely; device fields are still validated.
    pub p_override: Option<f64>,
}

impl DeviceParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let checks: [(&'static str, f64, bool); 5] = [
            (
                "tau_ns",
                self.tau_ns,
                self.tau_ns.is_finite() && self.tau_ns > 0.0,
            ),
            (
                "delta",
                self.delta,
                self.delta.is_finite() && self.delta > 0.0,
            ),
            (
                "i_read_ua",
                self.i_read_ua,
                self.i_read_ua.is_finite() && self.i_read_ua >= 0.0,
            ),
            (
                "i_c0_ua",
                self.i_c0_ua,
                self.i_c0_ua.is_finite() && self.i_c0_ua > 0.0,
            ),
            (
                "t_read_ns",
                self.t_read_ns,
                self.t_read_ns.is_finite() && self.t_read_ns >= 0.0,
            ),
        ];
        for (name, value, ok) in checks {
            if !ok {
                return Err(ModelError::InvalidParameter {
                    name,
                    requirement: "a positive finite number (i_read_ua, t_read_ns may be zero)",
                    value,
                });
            }
        }
        if let Some(p) = self.p_override {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(ModelError::InvalidParameter {
                    name: "p_override",
                    requirement: "a probability in [0, 1]",
                    value: p,
                });
            }
        }
        Ok(())
    }
}

/// Inputs for one block-failure evaluation.
///
/// `p` is the per-read per-cell flip probability, `n` the number of
/// vulnerable ('1') cells in the block, `reads` the number of reads since
/// the last check, and `ecc_t` the number of errors the code corrects.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockErrorQuery {
    pub p: f64,
    pub n: u64,
    pub reads: u64,
    pub ecc_t: u32,
}

impl BlockErrorQuery {
    pub fn new(p: f64, n: u64, reads: u64, ecc_t: u32) -> Result<Self, ModelError> {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(ModelError::InvalidParameter {
                name: "p",
                requirement: "a probability in [0, 1]",
                value: p,
            });
        }
        if reads == 0 {
            return Err(ModelError::InvalidParameter {
                name: "reads",
                requirement: "at least 1",
                value: 0.0,
            });
        }
        if reads.checked_mul(n).is_none() {
            return Err(ModelError::TrialCountOverflow { reads, n });
        }
        Ok(Self { p, n, reads, ecc_t })
    }
}

/// Per-read probability that a single '1' cell flips, from device
/// parameters (or `p_override` when present).
pub fn read_disturbance_probability(params: &DeviceParams) -> Result<f64, ModelError> {
    params.validate()?;
    if let Some(p) = params.p_override {
        return Ok(p);
    }
    let ratio = params.i_read_ua / params.i_c0_ua;
    let exponent = match params.sign_convention {
        SignConvention::Standard => -params.delta * (1.0 - ratio),
        SignConvention::AsPrinted => -params.delta * (ratio - 1.0),
    };
    let rate = params.t_read_ns / params.tau_ns * exponent.exp();
    Ok(clamp01(-(-rate).exp_m1()))
}

/// Probability that one read of a block with `query.n` vulnerable cells is
/// uncorrectable, i.e. more than `ecc_t` cells flip in that single read.
///
/// Requires `query.reads == 1`; use [`accumulated_error_probability`] for
/// multi-read pooling.
pub fn block_error_probability(query: &BlockErrorQuery) -> f64 {
    assert_eq!(
        query.reads, 1,
        "block_error_probability is a single-read quantity"
    );
    binomial_tail(query.n, query.p, u64::from(query.ecc_t) + 1)
}

/// Probability that `query.reads` unchecked reads leave the block
/// uncorrectable at the next check: all flip opportunities pool into one
/// binomial with `reads * n` trials against the single `ecc_t` budget.
pub fn accumulated_error_probability(query: &BlockErrorQuery) -> f64 {
    let trials = query
        .reads
        .checked_mul(query.n)
        .expect("validated at construction");
    binomial_tail(trials, query.p, u64::from(query.ecc_t) + 1)
}

/// Probability that a block checked and scrubbed after every one of
/// `query.reads` reads ever sees an uncorrectable single read:
/// `1 - (1 - e1)^reads` with `e1` the single-read failure probability,
/// evaluated in the log domain.
pub fn reap_error_probability(query: &BlockErrorQuery) -> f64 {
    let single = BlockErrorQuery { reads: 1, ..*query };
    let e1 = block_error_probability(&single);
    if query.reads == 1 {
        return e1;
    }
    clamp01(-(query.reads as f64 * (-e1).ln_1p()).exp_m1())
}

/// Mean time to failure in the time unit of `sim_time_ns`, from the
/// expected-failure total of a completed run. Zero expected failures map
/// to the infinite sentinel.
pub fn mttf_from_ledger(expected_failures: f64, sim_time_ns: f64) -> f64 {
    assert!(
        expected_failures.is_finite() && expected_failures >= 0.0,
        "expected_failures must be finite and non-negative"
    );
    assert!(
        sim_time_ns.is_finite() && sim_time_ns > 0.0,
        "sim_time_ns must be finite and positive"
    );
    if expected_failures == 0.0 {
        f64::INFINITY
    } else {
        sim_time_ns / expected_failures
    }
}

/// MTTF of a scheme relative to a baseline run over the same trace and
/// time base: `baseline_failures / scheme_failures`. Two failure-free runs
/// are equally reliable (1.0); a failure-free scheme against a failing
/// baseline is infinitely better; the reverse is 0.
pub fn normalized_mttf(scheme_failures: f64, baseline_failures: f64) -> f64 {
    assert!(
        scheme_failures >= 0.0 && baseline_failures >= 0.0,
        "expected-failure totals must be non-negative"
    );
    if scheme_failures == 0.0 && baseline_failures == 0.0 {
        1.0
    } else if scheme_failures == 0.0 {
        f64::INFINITY
    } else {
        baseline_failures / scheme_failures
    }
}

/// P(X >= k_min) for X ~ Binomial(trials, p).
///
/// The smaller of the two masses is summed directly so the result never
/// comes from subtracting two near-1 doubles: when `k_min` sits below the
/// mean the complement P(X < k_min) is summed instead. Terms are seeded
/// with a log-gamma binomial coefficient, walk from the largest included
/// term toward the small ones, and stop once a (shrinking) term can no
/// longer move the running sum.
pub fn binomial_tail(trials: u64, p: f64, k_min: u64) -> f64 {
    assert!(
        p.is_finite() && (0.0..=1.0).contains(&p),
        "p must lie in [0, 1], got {p}"
    );
    if k_min == 0 {
        return 1.0;
    }
    if k_min > trials {
        return 0.0;
    }
    if p == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return 1.0;
    }
    if (k_min as f64) < p * trials as f64 {
        let below = sum_pmf_down(trials, p, 0, k_min - 1);
        clamp01(1.0 - below)
    } else {
        clamp01(sum_pmf_up(trials, p, k_min, trials))
    }
}

/// A term at least this small relative to the running sum, with the terms
/// already shrinking, cannot move an f64 sum; the geometric residual past
/// it is orders of magnitude below the 1e-9 accuracy target.
const TERM_EPS: f64 = 1e-16;

fn ln_choose(n: u64, k: u64) -> f64 {
    libm::lgamma((n + 1) as f64) - libm::lgamma((k + 1) as f64) - libm::lgamma((n - k + 1) as f64)
}

fn ln_pmf(trials: u64, i: u64, ln_p: f64, ln_q: f64) -> f64 {
    ln_choose(trials, i) + i as f64 * ln_p + (trials - i) as f64 * ln_q
}

/// Sum of Binomial(trials, p) pmf terms for i in [lo, hi], walking up.
/// Used above the mode, where terms decay as i grows.
fn sum_pmf_up(trials: u64, p: f64, lo: u64, hi: u64) -> f64 {
    let (ln_p, ln_q) = (p.ln(), (-p).ln_1p());
    let mut ln_term = ln_pmf(trials, lo, ln_p, ln_q);
    let mut sum = 0.0;
    let mut i = lo;
    loop {
        let term = ln_term.exp();
        sum += term;
        if i == hi {
            break;
        }
        // term(i+1) / term(i)
        let ratio = (trials - i) as f64 * p / ((i + 1) as f64 * (1.0 - p));
        if ratio < 1.0 && term <= sum * TERM_EPS {
            break;
        }
        ln_term += ratio.ln();
        i += 1;
    }
    sum
}

/// Same sum walking down from hi. Used below the mode, where the largest
/// term sits at hi and terms decay as i shrinks.
fn sum_pmf_down(trials: u64, p: f64, lo: u64, hi: u64) -> f64 {
    let (ln_p, ln_q) = (p.ln(), (-p).ln_1p());
    let mut ln_term = ln_pmf(trials, hi, ln_p, ln_q);
    let mut sum = 0.0;
    let mut i = hi;
    loop {
        let term = ln_term.exp();
        sum += term;
        if i == lo {
            break;
        }
        // term(i-1) / term(i)
        let ratio = i as f64 * (1.0 - p) / ((trials - i + 1) as f64 * p);
        if ratio < 1.0 && term <= sum * TERM_EPS {
            break;
        }
        ln_term += ratio.ln();
        i -= 1;
    }
    sum
}

fn clamp01(x: f64) -> f64 {
    // the +0.0 turns a negative zero (e.g. from expm1) into plain zero
    (x + 0.0).clamp(0.0, 1.0)
}
