use std::collections::BTreeSet;
use std::sync::Arc;

use indexmap::IndexSet;

use super::model::{ABoxAssertion, Ontology, TBoxAxiom, Vocabulary};
use super::normalize::{normalize, ConceptId, NormalizedTBox};
use super::saturate::{Engine, SaturationConfig, SaturationState};
use super::OntologyError;

/// A classified TBox, kept as the frozen starting point for realizing any
/// ABox over the same declarations and terminology.
#[derive(Clone, Debug)]
pub struct Reasoner {
    vocab: Vocabulary,
    tbox: IndexSet<TBoxAxiom>,
    ntbox: NormalizedTBox,
    engine: Engine,
    config: SaturationConfig,
}

impl Reasoner {
    pub fn new(ontology: &Ontology) -> Result<Self, OntologyError> {
        Self::with_config(ontology, SaturationConfig::default())
    }

    pub fn with_config(ontology: &Ontology, config: SaturationConfig) -> Result<Self, OntologyError> {
        let ntbox = normalize(ontology);
        let mut engine = Engine::default();
        engine.extend(&ntbox, config)?;
        Ok(Self {
            vocab: ontology.vocab.clone(),
            tbox: ontology.tbox.clone(),
            ntbox,
            engine,
            config,
        })
    }

    pub fn classification(&self) -> SaturationState {
        SaturationState {
            tbox: Arc::new(self.ntbox.clone()),
            engine: self.engine.clone(),
        }
    }

    /// Realizes the ABox of `ontology`, which must share this reasoner's
    /// declarations and TBox. Only the ABox layer is saturated; the TBox
    /// fixpoint is reused.
    pub fn realize(&self, ontology: &Ontology) -> Result<Realization, OntologyError> {
        if ontology.vocab != self.vocab || ontology.tbox != self.tbox {
            return Err(OntologyError::TBoxMismatch);
        }
        let mut ntbox = self.ntbox.clone();
        let base: Vec<ConceptId> = self
            .vocab
            .individuals()
            .map(|(_, name)| ntbox.add_named_concept(format!("{{{name}}}")))
            .collect();
        for a in &ontology.abox {
            match a {
                ABoxAssertion::Type(i, e) => ntbox.add_concept_inclusion(base[i.index()], e),
                ABoxAssertion::Fact(r, s, o) => ntbox.add_concept_link(base[s.index()], *r, base[o.index()]),
            }
        }
        let mut engine = self.engine.clone();
        engine.extend(&ntbox, self.config)?;

        let types = base
            .iter()
            .map(|&n| {
                let mut ts: Vec<ConceptId> = engine
                    .supers(n)
                    .iter()
                    .copied()
                    .filter(|c| ntbox.is_declared_class(*c))
                    .collect();
                ts.sort();
                ts
            })
            .collect();
        Ok(Realization {
            individuals: self.vocab.individuals().map(|(_, n)| n.to_string()).collect(),
            types,
            state: SaturationState {
                tbox: Arc::new(ntbox),
                engine,
            },
        })
    }
}

/// Realizes `ontology` from scratch: classify its TBox, then its ABox.
pub fn realize(ontology: &Ontology) -> Result<Realization, OntologyError> {
    Reasoner::new(ontology)?.realize(ontology)
}

/// Named types of every declared individual.
#[derive(Clone, Debug)]
pub struct Realization {
    individuals: Vec<String>,
    /// Per individual, concept ids of declared classes in declaration order.
    types: Vec<Vec<ConceptId>>,
    state: SaturationState,
}

impl Realization {
    fn individual_index(&self, name: &str) -> Result<usize, OntologyError> {
        self.individuals
            .iter()
            .position(|i| i == name)
            .ok_or_else(|| OntologyError::UnknownName(name.to_string()))
    }

    pub fn individuals(&self) -> &[String] {
        &self.individuals
    }

    /// Declared classes the individual belongs to, in declaration order.
    /// `Top` is implicit and never reported.
    pub fn types(&self, individual: &str) -> Result<Vec<&str>, OntologyError> {
        let i = self.individual_index(individual)?;
        Ok(self.types[i].iter().map(|c| self.state.tbox.concept_name(*c)).collect())
    }

    pub fn has_type(&self, individual: &str, class: &str) -> Result<bool, OntologyError> {
        let i = self.individual_index(individual)?;
        let c = self.class(class)?;
        Ok(self.types[i].binary_search(&c).is_ok())
    }

    fn class(&self, class: &str) -> Result<ConceptId, OntologyError> {
        self.state
            .tbox
            .concept_of_class(class)
            .filter(|c| self.state.tbox.is_declared_class(*c))
            .ok_or_else(|| OntologyError::UnknownName(class.to_string()))
    }

    /// Individuals having `class` among their types, sorted by name.
    pub fn instances_of(&self, class: &str) -> Result<Vec<String>, OntologyError> {
        let c = self.class(class)?;
        let mut out: Vec<String> = self
            .individuals
            .iter()
            .zip(&self.types)
            .filter(|(_, ts)| ts.binary_search(&c).is_ok())
            .map(|(i, _)| i.clone())
            .collect();
        out.sort();
        Ok(out)
    }

    /// Every `(individual, class)` pair.
    pub fn pairs(&self) -> BTreeSet<(String, String)> {
        self.individuals
            .iter()
            .zip(&self.types)
            .flat_map(|(i, ts)| {
                ts.iter()
                    .map(move |c| (i.clone(), self.state.tbox.concept_name(*c).to_string()))
            })
            .collect()
    }

    /// The saturation including the individuals' encoding classes.
    pub fn state(&self) -> &SaturationState {
        &self.state
    }
}
