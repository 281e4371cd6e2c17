//! Independent oracles and generators for the test suites.

pub mod el;
pub mod filter;
pub mod ngram;
