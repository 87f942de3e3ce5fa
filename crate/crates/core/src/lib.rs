//! Laboratory for one-to-many iris-code identification.
//!
//! Templates are bit-packed iris codes with validity masks ([`codec`]),
//! compared by masked fractional Hamming distance over a window of circular
//! shifts ([`matcher`]). Two search disciplines run over an ordered gallery
//! ([`search`]): exhaustive 1:N, which takes the global best entry, and
//! 1:First, which stops at the first entry within threshold. [`synth`]
//! generates calibrated populations, [`metrics`] turns closed-set outcomes
//! into TMR/FMR/FNMR tables and ROC points, [`validation`] holds the
//! reference oracles, and [`harness`] wires it all into reproducible sweeps.
//!
//! Real-valued quantities (thresholds, rates, model probabilities) are
//! generic over [`Scalar`] (`f32` or `f64`); distances themselves are exact
//! fractions of bit counts. The `*64` aliases below fix the scalar to `f64`.

pub mod cli;
pub mod codec;
pub mod error;
pub mod harness;
pub mod matcher;
pub mod metrics;
mod scalar;
pub mod search;
pub mod synth;
pub mod validation;

pub use codec::{BitMatrix, IrisTemplate};
pub use error::{Error, FormatError, Result};
pub use matcher::{best_of_m, fractional_hd, MatchScore, RotationBank, ShiftRange};
pub use scalar::Scalar;
pub use search::{Decision, Gallery, Method, Outcome, SearchResult};

pub type SearchParams64 = search::SearchParams<f64>;
pub type SearchParams32 = search::SearchParams<f32>;
pub type MetricsRow64 = metrics::MetricsRow<f64>;
pub type SummaryRow64 = metrics::SummaryRow<f64>;
pub type RocPoint64 = metrics::RocPoint<f64>;
pub type Rates64 = metrics::Rates<f64>;
pub type SweepPlan64 = metrics::SweepPlan<f64>;
pub type SweepOutput64 = metrics::SweepOutput<f64>;
pub type ScanModel64 = validation::ScanModel<f64>;
