//! Core engine for w-event local differential privacy over data streams.
//!
//! At every step of an unbounded stream, each of `n` users holds one value
//! from a small categorical domain. A release mechanism publishes a
//! frequency estimate per step while guaranteeing that any single user's
//! privacy spend inside any window of `w` consecutive steps stays within a
//! total budget `epsilon`, using generalized randomized response
//! ([`freq`]) as the only primitive touching raw values.
//!
//! Seven mechanisms ([`budget`], [`population`]) trade accuracy against
//! communication along two axes: splitting the budget across a window
//! versus splitting the population across a window, each either uniformly
//! or adaptively via the publish-or-approximate rule in [`adaptive`].
//! [`audit`] re-derives the window guarantees from recorded spends,
//! [`generate`] builds synthetic streams, [`metrics`] scores runs, and
//! [`seed`] pins every source of randomness to one run seed.
//!
//! The crate is `no_std` (with `alloc`): all IO, file formats, and
//! orchestration live in the companion CLI crate.

#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod adaptive;
pub mod audit;
pub mod budget;
pub mod error;
pub mod freq;
pub mod generate;
pub mod metrics;
pub mod population;
pub mod seed;
pub mod stream;

pub use error::Error;
