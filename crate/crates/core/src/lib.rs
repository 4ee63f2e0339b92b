//! Panel econometrics for studying how marketing intensity relates to firm
//! value and systematic risk, and how ownership concentration moderates it.
//!
//! The crate covers the whole chain: panel assembly and CSV ingestion,
//! derived variables, rolling market betas, OLS / fixed / random effects
//! estimation, diagnostic tests, model specifications, a synthetic data
//! generator with planted coefficients, and table output.

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod beta;
pub mod diagnostics;
pub mod ingest;
pub mod models;
pub mod panel;
pub mod pipeline;
pub mod regress;
pub mod report;
pub mod stats;
pub mod synth;
pub mod variables;
