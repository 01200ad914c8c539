//! Design-based survey estimation with nonprobability data integration.
//!
//! The crate provides a finite-population data model, simple random sampling
//! with exact first- and second-order inclusion probabilities, prediction
//! models (linear, regression tree, bagged forest), the classical
//! Horvitz-Thompson / difference / GREG estimators alongside data-integration
//! estimators that combine a fully observed register subset with a probability
//! sample of its complement, and a seeded Monte Carlo harness for studying
//! bias, RMSE and confidence coverage of whole sampling strategies.
//!
//! Everything downstream of a seed is deterministic: random streams are
//! derived per (domain, labels) so results do not depend on execution order
//! or thread count.

pub mod accum;
pub mod config;
pub mod design;
pub mod estimators;
pub mod manifest;
pub mod models;
pub mod npd;
pub mod population;
pub mod rng;
pub mod simulation;
