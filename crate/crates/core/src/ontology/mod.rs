//! The context model and its reasoner.
//!
//! An [`Ontology`] holds declarations, a TBox of EL class inclusions and role
//! inclusions, and an ABox of type and role assertions. Reasoning goes through
//! three stages: [`normalize`] rewrites the TBox into four normal forms,
//! [`saturate`] runs the completion rules to a fixpoint, and [`realize`]
//! encodes each individual as a fresh class to compute its named types.

mod model;
mod normalize;
mod parser;
mod realize;
mod saturate;

pub use model::{
    is_declarable_name, is_valid_name, ABoxAssertion, ClassExpression, ClassId, IndividualId, Namespace, Ontology,
    RoleId, TBoxAxiom, Vocabulary, FRESH_PREFIX, RESERVED_WORDS,
};
pub use normalize::{normalize, ConceptId, NormalAxiom, NormalizedTBox, TOP};
pub use parser::{parse_ontology, parse_ontology_with, ParseOptions};
pub use realize::{realize, Realization, Reasoner};
pub use saturate::{saturate, saturate_with, SaturationConfig, SaturationState, DEFAULT_MAX_FACTS};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OntologyError {
    #[error("line {line}, column {col}: syntax error, expected {expected}")]
    Syntax { line: usize, col: usize, expected: String },
    #[error("line {line}: undeclared name `{name}`")]
    UndeclaredName { name: String, line: usize },
    #[error("line {line}: `{name}` is declared in more than one namespace")]
    NamespaceClash { name: String, line: usize },
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("derived-fact limit of {limit} exceeded after {facts} facts")]
    ResourceLimit { limit: u64, facts: u64 },
    #[error("ontology does not share the reasoner's vocabulary and TBox")]
    TBoxMismatch,
}

impl OntologyError {
    /// Input errors (syntax, declarations, names) as opposed to reasoning errors.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, OntologyError::ResourceLimit { .. })
    }
}
