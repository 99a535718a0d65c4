//! IO and orchestration companion to the streaming-LDP engine: flat
//! key-value configs, dataset realization, the parallel run-matrix
//! executor, CSV reporting and deterministic replay.
//!
//! The privacy machinery itself (frequency oracle, the seven release
//! mechanisms, audits, metrics) lives in `ldplab-core`; this crate only
//! moves data in and out of it.

#![deny(unsafe_code)]

pub mod config;
pub mod dataset;
pub mod error;
pub mod replay;
pub mod report;
pub mod runner;

pub use error::HarnessError;
