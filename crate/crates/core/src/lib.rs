//! Coupled MFD-subregion / cell-transmission-expressway traffic model with
//! logit route choice, and a budget-constrained expressway design search.
//!
//! Internally every quantity is SI: m, s, veh, veh/s, veh/m, m/s and $.
//! Unit conversion happens at the scenario boundary ([`units`]).

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod engine;
pub mod error;
pub mod export;
pub mod expressway;
pub mod gate;
pub mod network;
pub mod optimizer;
pub mod par;
pub mod routes;
pub mod scenario;
pub mod subregion;
pub mod units;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use network::{DesignVector, ExpresswayId, MixedNetwork};
pub use scenario::Scenario;
