//! Robust utility maximisation under proportional transaction costs on
//! finite scenario trees.
//!
//! The crate is organised bottom-up:
//!
//! * [`paths`]: làdlàg finite-variation paths (limits, Jordan–Hahn, parts).
//! * [`integration`]: pathwise Stieltjes integrals with the left/right jump
//!   pricing convention, plus the ε-flattening and step approximations.
//! * [`market`]: scenario trees, price model families, predictable
//!   strategies, bond ledgers, liquidation values and admissibility.
//! * [`cps`]: consistent price systems via linear feasibility.
//! * [`analysis`]: supermartingale, variation-bound and superhedging checks.
//! * [`optimize`]: the robust max-min utility problem and the convex
//!   combination machinery for limits of maximising sequences.
//! * [`spec`] and [`cli`]: JSON file formats and the command-line front-end.

pub mod analysis;
pub mod cli;
pub mod cps;
mod error;
pub mod gen;
pub mod integration;
pub mod lp;
pub mod market;
pub mod optimize;
pub mod paths;
pub mod spec;

pub use error::{Error, Result};
pub use paths::{LadlagPath, LimitKind, PathEvent};
