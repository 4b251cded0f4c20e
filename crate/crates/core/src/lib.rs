//! Context-specific likelihood weighting for Bayesian networks with
//! structured CPDs.
//!
//! A network ([`model::Network`]) or a rule program ([`model::RuleProgram`])
//! is parsed by [`parser`], optionally compiled between the two forms by
//! [`compile`], sampled by [`engine`] and aggregated by [`estimate`].
//! [`oracle`] holds exact methods used for checking, and [`bayesball`] the
//! graph-level requisite analysis.

pub mod bayesball;
pub mod cli;
pub mod compile;
pub mod engine;
pub mod estimate;
pub mod model;
pub mod numeric;
pub mod oracle;
pub mod parser;
pub mod synth;
pub mod validate;
