//! Bit-exact Monte Carlo oracle for the closed-form error model.
//!
//! Every trial builds a block as real bit vectors, injects unidirectional
//! 1 -> 0 flips read by read with per-bit Bernoulli draws, and runs a
//! mismatch-counting ECC decode. Nothing here shares code with the
//! analytical formulas, so agreement between the two is evidence, not
//! tautology.

use rand::distributions::{Bernoulli, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{
    accumulated_error_probability, reap_error_probability, BlockErrorQuery, ModelError,
};

#[derive(Debug, Error, PartialEq)]
pub enum FaultError {
    #[error("scenario field {name} must satisfy {requirement}, got {value}")]
    InvalidScenario {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
}

/// How flipped cells behave on later reads.
///
/// A real cell that has flipped to '0' carries no more disturbance risk,
/// so the pool of vulnerable cells shrinks as flips land (`Physical`).
/// The closed-form model instead treats every read as exposing all n
/// original '1' cells again (`Rebinomial`), which slightly overcounts.
/// Validation runs use Rebinomial so the oracle measures the same
/// quantity the formulas compute; Physical quantifies how small the
/// idealization error actually is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Depletion {
    Physical,
    Rebinomial,
}

/// When the ECC decode runs relative to the injected reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckPolicy {
    /// One decode after all N reads, like a line that sat co-resident in
    /// a conventional parallel read path and is only checked when finally
    /// requested.
    AtEnd,
    /// Decode after every read, like the check-every-line read path.
    EveryRead,
}

impl CheckPolicy {
    pub fn label(self) -> &'static str {
        match self {
            CheckPolicy::AtEnd => "at-end",
            CheckPolicy::EveryRead => "every-read",
        }
    }
}

/// One Monte Carlo configuration: a block with `n_ones` '1' bits read
/// `reads_between_checks` times, decoded with a t-bit corrector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McScenario {
    pub p: f64,
    pub n_ones: u32,
    pub reads_between_checks: u64,
    pub ecc_t: u32,
    pub trials: u64,
    pub seed: u64,
    pub depletion: Depletion,
}

impl McScenario {
    pub fn validate(&self) -> Result<(), FaultError> {
        if !self.p.is_finite() || !(0.0..=1.0).contains(&self.p) {
            return Err(FaultError::InvalidScenario {
                name: "p",
                requirement: "a probability in [0, 1]",
                value: self.p,
            });
        }
        if self.reads_between_checks == 0 {
            return Err(FaultError::InvalidScenario {
                name: "reads_between_checks",
                requirement: ">= 1",
                value: 0.0,
            });
        }
        if self.trials == 0 {
            return Err(FaultError::InvalidScenario {
                name: "trials",
                requirement: ">= 1",
                value: 0.0,
            });
        }
        Ok(())
    }
}

/// A block's golden content and its possibly disturbed copy.
///
/// The mismatch measure the decoder sees depends on the depletion mode:
/// under `Physical` it is the popcount of `reference ^ current`; under
/// `Rebinomial` every injection success counts even when it lands on an
/// already-flipped cell (the fixed-n idealization re-arms cells), so the
/// measure can exceed the number of physically flipped bits.
#[derive(Debug, Clone)]
pub struct BlockBits {
    reference: Vec<u64>,
    current: Vec<u64>,
    n_bits: u32,
    mismatches: u64,
}

impl BlockBits {
    /// A fresh block of `n_bits` cells whose low `ones` cells hold '1'.
    /// Flip statistics do not depend on where the ones sit, only on how
    /// many there are.
    pub fn new(n_bits: u32, ones: u32) -> Self {
        assert!(ones <= n_bits, "ones {ones} exceeds n_bits {n_bits}");
        let words = (n_bits as usize).div_ceil(64);
        let mut reference = vec![0u64; words];
        let mut remaining = ones as usize;
        for word in reference.iter_mut() {
            let take = remaining.min(64);
            *word = if take == 64 { !0 } else { (1u64 << take) - 1 };
            remaining -= take;
            if remaining == 0 {
                break;
            }
        }
        Self {
            current: reference.clone(),
            reference,
            n_bits,
            mismatches: 0,
        }
    }

    pub fn n_bits(&self) -> u32 {
        self.n_bits
    }

    /// Mismatch measure the decoder will see (see type docs).
    pub fn mismatches(&self) -> u64 {
        self.mismatches
    }

    pub fn current_ones(&self) -> u32 {
        self.current.iter().map(|w| w.count_ones()).sum()
    }

    pub fn reference_ones(&self) -> u32 {
        self.reference.iter().map(|w| w.count_ones()).sum()
    }

    /// Reset the block to its golden content.
    pub fn restore(&mut self) {
        self.current.copy_from_slice(&self.reference);
        self.mismatches = 0;
    }

    fn assert_unidirectional(&self) {
        debug_assert!(
            self.reference
                .iter()
                .zip(&self.current)
                .all(|(r, c)| c & !r == 0),
            "a cell transitioned 0 -> 1"
        );
        debug_assert!(
            self.mismatches
                >= self
                    .reference
                    .iter()
                    .zip(&self.current)
                    .map(|(r, c)| u64::from((r ^ c).count_ones()))
                    .sum::<u64>(),
            "mismatch measure fell below the physical flip count"
        );
    }
}

/// Disturb the block once: every vulnerable '1' cell flips independently
/// with the read disturbance probability behind `draw`. Cells are visited
/// in ascending bit order. Returns the number of injection successes this
/// read (under `Physical` these are exactly the newly flipped bits).
pub fn inject_read<R: rand::Rng>(
    block: &mut BlockBits,
    draw: &Bernoulli,
    depletion: Depletion,
    rng: &mut R,
) -> u32 {
    let mut successes = 0u32;
    let words = block.reference.len();
    for i in 0..words {
        let mut pending = match depletion {
            Depletion::Physical => block.current[i],
            Depletion::Rebinomial => block.reference[i],
        };
        while pending != 0 {
            let bit = pending & pending.wrapping_neg();
            pending ^= bit;
            if draw.sample(rng) {
                block.current[i] &= !bit;
                successes += 1;
            }
        }
    }
    block.mismatches += u64::from(successes);
    block.assert_unidirectional();
    successes
}

/// What a t-bit-correcting decode concluded about a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeResult {
    Clean,
    /// Correctable; the block has been restored to its golden content.
    Corrected(u64),
    /// Beyond correction capability; the block is left as it was.
    Uncorrectable(u64),
}

/// Compare the block against its golden content and correct it when the
/// mismatch measure is within the code's capability.
pub fn ecc_decode(block: &mut BlockBits, ecc_t: u32) -> DecodeResult {
    let m = block.mismatches();
    if m == 0 {
        DecodeResult::Clean
    } else if m <= u64::from(ecc_t) {
        block.restore();
        DecodeResult::Corrected(m)
    } else {
        DecodeResult::Uncorrectable(m)
    }
}

/// Empirical outcome of a batch of trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McStats {
    pub uncorrectable_rate: f64,
    /// Empirical standard error sqrt(r(1-r)/trials).
    pub stderr: f64,
    pub trials: u64,
}

/// The closed-form rate the oracle should reproduce for this scenario and
/// check policy.
pub fn analytical_rate(scenario: &McScenario, policy: CheckPolicy) -> Result<f64, ModelError> {
    let query = BlockErrorQuery::new(
        scenario.p,
        u64::from(scenario.n_ones),
        scenario.reads_between_checks,
        scenario.ecc_t,
    )?;
    Ok(match policy {
        CheckPolicy::AtEnd => accumulated_error_probability(&query),
        CheckPolicy::EveryRead => reap_error_probability(&query),
    })
}

// Trials are split over a fixed number of logical shards, each with its
// own RNG stream, so the merged result is identical no matter how many
// worker threads rayon actually uses.
const SHARDS: u64 = 64;

fn shard_trials(total: u64, shard: u64) -> u64 {
    total / SHARDS + u64::from(shard < total % SHARDS)
}

/// Run the full batch: per trial, a fresh block takes
/// `reads_between_checks` disturbed reads under the given check policy,
/// and the trial fails when a decode comes back uncorrectable.
/// Deterministic in (scenario, policy) regardless of thread count.
pub fn run_trials(scenario: &McScenario, policy: CheckPolicy) -> Result<McStats, FaultError> {
    scenario.validate()?;
    let draw = Bernoulli::new(scenario.p).expect("validated probability");
    let failures: u64 = (0..SHARDS)
        .into_par_iter()
        .map(|shard| {
            let mut rng = ChaCha12Rng::seed_from_u64(scenario.seed);
            rng.set_stream(shard);
            let mut block = BlockBits::new(scenario.n_ones, scenario.n_ones);
            let mut failures = 0u64;
            for _ in 0..shard_trials(scenario.trials, shard) {
                block.restore();
                if run_one_trial(&mut block, scenario, policy, &draw, &mut rng) {
                    failures += 1;
                }
            }
            failures
        })
        .sum();
    let rate = failures as f64 / scenario.trials as f64;
    Ok(McStats {
        uncorrectable_rate: rate,
        stderr: (rate * (1.0 - rate) / scenario.trials as f64).sqrt(),
        trials: scenario.trials,
    })
}

fn run_one_trial(
    block: &mut BlockBits,
    scenario: &McScenario,
    policy: CheckPolicy,
    draw: &Bernoulli,
    rng: &mut ChaCha12Rng,
) -> bool {
    let threshold = u64::from(scenario.ecc_t);
    for _ in 0..scenario.reads_between_checks {
        inject_read(block, draw, scenario.depletion, rng);
        match policy {
            CheckPolicy::AtEnd => {
                // the mismatch measure only grows until a decode runs, so
                // the final decode's verdict is already known
                if block.mismatches() > threshold {
                    return true;
                }
            }
            CheckPolicy::EveryRead => {
                if let DecodeResult::Uncorrectable(_) = ecc_decode(block, scenario.ecc_t) {
                    return true;
                }
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(p: f64, n_ones: u32, reads: u64, trials: u64, depletion: Depletion) -> McScenario {
        McScenario {
            p,
            n_ones,
            reads_between_checks: reads,
            ecc_t: 1,
            trials,
            seed: 42,
            depletion,
        }
    }

    #[test]
    fn zero_probability_never_flips() {
        let draw = Bernoulli::new(0.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for depletion in [Depletion::Physical, Depletion::Rebinomial] {
            let mut block = BlockBits::new(512, 100);
            for _ in 0..50 {
                assert_eq!(inject_read(&mut block, &draw, depletion, &mut rng), 0);
            }
            assert_eq!(block.mismatches(), 0);
            assert_eq!(block.current_ones(), 100);
        }
    }

    #[test]
    fn certain_probability_flips_everything() {
        let draw = Bernoulli::new(1.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);

        let mut block = BlockBits::new(512, 100);
        assert_eq!(
            inject_read(&mut block, &draw, Depletion::Physical, &mut rng),
            100
        );
        assert_eq!(block.current_ones(), 0);
        // no vulnerable cells remain
        assert_eq!(
            inject_read(&mut block, &draw, Depletion::Physical, &mut rng),
            0
        );
        assert_eq!(block.mismatches(), 100);

        // the idealization re-arms the cells every read
        let mut block = BlockBits::new(512, 100);
        assert_eq!(
            inject_read(&mut block, &draw, Depletion::Rebinomial, &mut rng),
            100
        );
        assert_eq!(
            inject_read(&mut block, &draw, Depletion::Rebinomial, &mut rng),
            100
        );
        assert_eq!(block.mismatches(), 200);
        assert_eq!(block.current_ones(), 0);
    }

    #[test]
    fn two_cell_double_flip_rate_is_a_quarter() {
        let draw = Bernoulli::new(0.5).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let trials = 100_000u32;
        let mut doubles = 0u32;
        let mut block = BlockBits::new(2, 2);
        for _ in 0..trials {
            block.restore();
            if inject_read(&mut block, &draw, Depletion::Physical, &mut rng) == 2 {
                doubles += 1;
            }
        }
        let rate = f64::from(doubles) / f64::from(trials);
        // sigma = sqrt(0.25 * 0.75 / 1e5) ~ 0.0014
        assert!((rate - 0.25).abs() < 3.0 * 0.0014, "rate {rate}");
    }

    #[test]
    fn decode_outcomes_and_scrub() {
        let mut block = BlockBits::new(64, 8);
        assert_eq!(ecc_decode(&mut block, 1), DecodeResult::Clean);

        // force exactly one flip, then decode with t=1
        let draw = Bernoulli::new(1.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut one = BlockBits::new(1, 1);
        inject_read(&mut one, &draw, Depletion::Physical, &mut rng);
        assert_eq!(ecc_decode(&mut one, 1), DecodeResult::Corrected(1));
        assert_eq!(one.current_ones(), 1);
        assert_eq!(one.mismatches(), 0);

        let mut two = BlockBits::new(2, 2);
        inject_read(&mut two, &draw, Depletion::Physical, &mut rng);
        assert_eq!(two.mismatches(), 2);
        assert_eq!(ecc_decode(&mut two, 1), DecodeResult::Uncorrectable(2));
        assert_eq!(
            two.current_ones(),
            0,
            "uncorrectable decode must not repair"
        );
    }

    #[test]
    fn zero_probability_batch_never_fails() {
        for policy in [CheckPolicy::AtEnd, CheckPolicy::EveryRead] {
            let stats =
                run_trials(&scenario(0.0, 100, 10, 1000, Depletion::Rebinomial), policy).unwrap();
            assert_eq!(stats.uncorrectable_rate, 0.0);
            assert_eq!(stats.stderr, 0.0);
            assert_eq!(stats.trials, 1000);
        }
    }

    #[test]
    fn batches_are_deterministic() {
        let s = scenario(0.01, 16, 10, 20_000, Depletion::Rebinomial);
        let a = run_trials(&s, CheckPolicy::AtEnd).unwrap();
        let b = run_trials(&s, CheckPolicy::AtEnd).unwrap();
        assert_eq!(a, b);
        let other_seed = McScenario { seed: 43, ..s };
        let c = run_trials(&other_seed, CheckPolicy::AtEnd).unwrap();
        assert_ne!(a.uncorrectable_rate, c.uncorrectable_rate);
    }

    #[test]
    fn rebinomial_tracks_the_closed_form() {
        // one cheap grid cell at reduced trials; the full grid at 1e6
        // trials runs in the acceptance suite
        let s = scenario(0.01, 16, 10, 200_000, Depletion::Rebinomial);
        for policy in [CheckPolicy::AtEnd, CheckPolicy::EveryRead] {
            let expected = analytical_rate(&s, policy).unwrap();
            let stats = run_trials(&s, policy).unwrap();
            let sigma = (expected * (1.0 - expected) / s.trials as f64).sqrt();
            let z = (stats.uncorrectable_rate - expected) / sigma;
            assert!(
                z.abs() < 4.0,
                "{}: expected {expected}, got {} (z={z:.2})",
                policy.label(),
                stats.uncorrectable_rate,
            );
        }
    }

    #[test]
    fn physical_depletion_fails_less_often() {
        // depletion removes vulnerable cells, so the physical mode's rate
        // sits below the fixed-n idealization
        let reb = run_trials(
            &scenario(0.05, 50, 20, 100_000, Depletion::Rebinomial),
            CheckPolicy::AtEnd,
        )
        .unwrap();
        let phys = run_trials(
            &scenario(0.05, 50, 20, 100_000, Depletion::Physical),
            CheckPolicy::AtEnd,
        )
        .unwrap();
        assert!(
            phys.uncorrectable_rate <= reb.uncorrectable_rate,
            "physical {} vs rebinomial {}",
            phys.uncorrectable_rate,
            reb.uncorrectable_rate
        );
    }

    #[test]
    fn scenario_validation() {
        let bad = scenario(-0.1, 16, 10, 1000, Depletion::Physical);
        assert!(matches!(
            bad.validate(),
            Err(FaultError::InvalidScenario { name: "p", .. })
        ));
        let bad = scenario(f64::NAN, 16, 10, 1000, Depletion::Physical);
        assert!(matches!(
            bad.validate(),
            Err(FaultError::InvalidScenario { name: "p", .. })
        ));
        let bad = scenario(0.5, 16, 0, 1000, Depletion::Physical);
        assert!(matches!(
            bad.validate(),
            Err(FaultError::InvalidScenario {
                name: "reads_between_checks",
                ..
            })
        ));
        let bad = scenario(0.5, 16, 10, 0, Depletion::Physical);
        assert!(matches!(
            bad.validate(),
            Err(FaultError::InvalidScenario { name: "trials", .. })
        ));
    }

    #[test]
    fn trials_split_covers_every_shard_exactly_once() {
        for total in [1u64, 63, 64, 65, 1_000_000] {
            let sum: u64 = (0..SHARDS).map(|s| shard_trials(total, s)).sum();
            assert_eq!(sum, total);
        }
    }
}
