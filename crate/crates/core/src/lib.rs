//! Workbench for studying in-context learning in a toy language model that
//! reads and writes both text words and discrete speech units.
//!
//! The pieces:
//!
//! - [`model`]: a small decoder-only transformer with exact gradients,
//!   attention capture, greedy decoding, and head ablation.
//! - [`vocab`] and [`corpus`]: a seeded synthetic corpus of transitive
//!   sentences under overlap and speaking-rate conditions, rendered into
//!   speech units.
//! - [`prompt`]: the interleaved `[TEXT] ... [SPEECH] ...` prompt format and
//!   the oracle decoder that turns generated units back into words.
//! - [`metrics`]: word error rate, content-word recall, bootstrap intervals.
//! - [`induction`]: prefix-matching head scores, head groups, group reports.
//! - [`acoustics`]: WAV I/O, pitch and intensity analysis, intensity scaling,
//!   WSOLA time stretching and PSOLA pitch flattening.
//! - [`harness`]: experiment sweeps, ablation runs, and report emission.

pub mod acoustics;
pub mod corpus;
pub mod error;
pub mod harness;
pub mod induction;
pub mod metrics;
pub mod model;
pub mod prompt;
pub mod seed;
pub mod vocab;

pub use error::{Error, Result};
