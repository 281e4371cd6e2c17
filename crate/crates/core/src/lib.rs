//! Core library of the context framework: the ontology reasoner plus the
//! state machines behind the framework core and its reference micro-services.

pub mod activity;
pub mod bench;
pub mod config;
pub mod filter;
pub mod history;
pub mod mapping;
pub mod ontology;
pub mod predictor;
pub mod protocol;
pub mod registry;
pub mod runtime;
pub mod trace;
