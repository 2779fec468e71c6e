//! File formats, reports, and the parallel experiment driver for the
//! `hdqlr-core` inference library.
//!
//! The core crate is `no_std` and knows nothing about files or threads; this
//! crate adds CSV dataset ingestion, the JSON config and result documents
//! (schemas in `/schemas`), and a rayon-parallel version of the Monte Carlo
//! power harness that reduces to bit-identical results.

pub mod app;
pub mod config;
pub mod error;
pub mod io;
pub mod parallel;
pub mod report;

pub use error::AppError;
