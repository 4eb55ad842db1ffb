//! Attribute annotation of person and vehicle agents in driving datasets.
//!
//! The crate holds everything except the live annotation service: the
//! canonical record format, dataset ingestion, allocation of images to
//! annotators, inter-rater agreement statistics and attribute distribution
//! reports.

pub mod agreement;
pub mod allocation;
pub mod bias;
pub mod ingest;
pub mod model;
pub mod scalar;
pub mod store;

pub use scalar::Scalar;

/// Exact arbitrary-precision rationals.
pub type Exact = num_rational::BigRational;
/// Exact rationals for moderate counts.
pub type Ratio64 = num_rational::Ratio<i64>;

pub type Fleiss64 = agreement::FleissKappa<f64>;
pub type FleissExact = agreement::FleissKappa<Exact>;
