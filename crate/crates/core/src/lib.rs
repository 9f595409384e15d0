//! Trace-driven reliability simulation for STT-MRAM set-associative caches.
//!
//! Reading an STT-MRAM cell can disturb it: a cell storing '1' flips to '0'
//! with a small per-read probability, and reads never flip a '0' back. In a
//! set-associative cache whose data ways are read in parallel with the tag
//! match, every access silently reads the non-requested lines of the set as
//! well. Those concealed reads bypass the ECC check-and-scrub that the
//! requested line receives, so disturbance accumulates in co-resident lines
//! until their next demand access. This crate quantifies that accumulation
//! and the effect of checking every line read in parallel instead:
//!
//! * [`model`] evaluates the closed-form per-read flip probability and the
//!   block failure probabilities with and without per-read checking,
//! * [`cache`] replays an access trace against a set-associative cache and
//!   books expected failures per scheme,
//! * [`trace`] parses trace files and generates synthetic workloads,
//! * [`fault`] cross-checks the closed forms with bit-level Monte Carlo,
//! * [`report`] turns ledgers and counters into deterministic JSON/CSV,
//! * [`config`] holds the serializable run configuration.

pub mod cache;
pub mod config;
pub mod fault;
pub mod model;
pub mod report;
pub mod trace;
