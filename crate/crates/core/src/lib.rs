//! Electricity spot prices as a continuous Itô part plus a fast mean-reverting
//! compound-Poisson spike process.
//!
//! The crate covers the full loop: exact path simulation ([`simulate`]),
//! threshold jump detection on discretely sampled paths ([`detect`]),
//! estimation of the spike intensity and reversion speed ([`estimate`]),
//! forward and strip-option pricing with spike corrections ([`pricing`]) and
//! seeded replication studies ([`experiments`]).
//!
//! Time is normalized so that the observation horizon is one unit unless a
//! [`model::GridSpec`] says otherwise; all rates are per unit of that time.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod detect;
pub mod error;
pub mod estimate;
pub mod experiments;
pub mod ingest;
pub mod model;
pub mod pricing;
pub mod quadrature;
pub mod rng;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
