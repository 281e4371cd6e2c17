//! EL completion rules over a [`NormalizedTBox`], run with a FIFO worklist.
//!
//! Rules, with `S(X)` the subsumers of `X` and `R(r)` the links of role `r`:
//!
//! * CR1: `A' ∈ S(X)`, `A' ⊑ B` gives `B ∈ S(X)`
//! * CR2: `A1, A2 ∈ S(X)`, `A1 ⊓ A2 ⊑ B` gives `B ∈ S(X)`
//! * CR3: `A' ∈ S(X)`, `A' ⊑ ∃r.B` gives `(X, B) ∈ R(r)`
//! * CR4: `(X, Y) ∈ R(r)`, `B' ∈ S(Y)`, `∃r.B' ⊑ C` gives `C ∈ S(X)`
//! * CR5: `(X, Y) ∈ R(r)`, `r ⊑ s` gives `(X, Y) ∈ R(s)`

use std::collections::{HashSet, VecDeque};
use std::sync::Arc;

use super::model::RoleId;
use super::normalize::{ConceptId, NormalAxiom, NormalizedTBox, TOP};
use super::OntologyError;

pub const DEFAULT_MAX_FACTS: u64 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SaturationConfig {
    /// Abort with `ResourceLimit` once more than this many facts are derived.
    pub max_facts: u64,
}

impl Default for SaturationConfig {
    fn default() -> Self {
        Self {
            max_facts: DEFAULT_MAX_FACTS,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Fact {
    Sub(ConceptId, ConceptId),
    Link(RoleId, ConceptId, ConceptId),
}

/// Rule indices and derived facts. Grows as axioms are added through
/// [`Engine::extend`], so a saturated TBox can be reused as the starting
/// point for ABox reasoning.
#[derive(Clone, Debug, Default)]
pub(crate) struct Engine {
    supers: Vec<Vec<ConceptId>>,
    super_set: Vec<HashSet<u32>>,
    links: Vec<Vec<(ConceptId, ConceptId)>>,
    link_set: Vec<HashSet<(u32, u32)>>,
    preds: Vec<Vec<(RoleId, ConceptId)>>,

    told: Vec<Vec<ConceptId>>,
    conj: Vec<Vec<(ConceptId, ConceptId)>>,
    exists_right: Vec<Vec<(RoleId, ConceptId)>>,
    exists_left: Vec<Vec<(RoleId, ConceptId)>>,
    role_supers: Vec<Vec<RoleId>>,

    axioms_seen: usize,
    role_inclusions_seen: usize,
    facts: u64,
    queue: VecDeque<Fact>,
}

impl Engine {
    pub(crate) fn facts(&self) -> u64 {
        self.facts
    }

    pub(crate) fn concept_count(&self) -> usize {
        self.supers.len()
    }

    pub(crate) fn has(&self, sub: ConceptId, sup: ConceptId) -> bool {
        self.super_set.get(sub.index()).is_some_and(|s| s.contains(&sup.0))
    }

    pub(crate) fn supers(&self, c: ConceptId) -> &[ConceptId] {
        &self.supers[c.index()]
    }

    pub(crate) fn links(&self, r: RoleId) -> &[(ConceptId, ConceptId)] {
        self.links.get(r.index()).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Indexes every axiom of `tbox` not seen yet, seeds the consequences they
    /// have on already-derived facts, and runs the worklist to a fixpoint.
    pub(crate) fn extend(&mut self, tbox: &NormalizedTBox, config: SaturationConfig) -> Result<(), OntologyError> {
        let old_concepts = self.supers.len();
        let n = tbox.concept_count();
        let roles = tbox.role_count();
        self.supers.resize_with(n, Vec::new);
        self.super_set.resize_with(n, HashSet::new);
        self.preds.resize_with(n, Vec::new);
        self.told.resize_with(n, Vec::new);
        self.conj.resize_with(n, Vec::new);
        self.exists_right.resize_with(n, Vec::new);
        self.exists_left.resize_with(n, Vec::new);
        if self.links.len() < roles {
            self.links.resize_with(roles, Vec::new);
            self.link_set.resize_with(roles, HashSet::new);
            self.role_supers.resize_with(roles, Vec::new);
        }

        for c in old_concepts..n {
            let c = ConceptId(c as u32);
            self.queue.push_back(Fact::Sub(c, c));
            self.queue.push_back(Fact::Sub(c, TOP));
        }

        let new_incls = &tbox.role_inclusions()[self.role_inclusions_seen..];
        for &(r, s) in new_incls {
            self.role_supers[r.index()].push(s);
            for &(x, y) in &self.links[r.index()] {
                self.queue.push_back(Fact::Link(s, x, y));
            }
        }
        self.role_inclusions_seen = tbox.role_inclusions().len();

        let new_axioms = &tbox.axioms()[self.axioms_seen..];
        for ax in new_axioms {
            match *ax {
                NormalAxiom::Sub(a, b) => {
                    self.told[a.index()].push(b);
                    for x in 0..old_concepts {
                        if self.super_set[x].contains(&a.0) {
                            self.queue.push_back(Fact::Sub(ConceptId(x as u32), b));
                        }
                    }
                }
                NormalAxiom::Conj(a1, a2, b) => {
                    self.conj[a1.index()].push((a2, b));
                    self.conj[a2.index()].push((a1, b));
                    for x in 0..old_concepts {
                        let s = &self.super_set[x];
                        if s.contains(&a1.0) && s.contains(&a2.0) {
                            self.queue.push_back(Fact::Sub(ConceptId(x as u32), b));
                        }
                    }
                }
                NormalAxiom::SubExists(a, r, b) => {
                    self.exists_right[a.index()].push((r, b));
                    for x in 0..old_concepts {
                        if self.super_set[x].contains(&a.0) {
                            self.queue.push_back(Fact::Link(r, ConceptId(x as u32), b));
                        }
                    }
                }
                NormalAxiom::ExistsSub(r, a, b) => {
                    self.exists_left[a.index()].push((r, b));
                    for &(x, y) in &self.links[r.index()] {
                        if self.super_set[y.index()].contains(&a.0) {
                            self.queue.push_back(Fact::Sub(x, b));
                        }
                    }
                }
            }
        }
        self.axioms_seen = tbox.axioms().len();
        self.run(config)
    }

    fn run(&mut self, config: SaturationConfig) -> Result<(), OntologyError> {
        while let Some(fact) = self.queue.pop_front() {
            match fact {
                Fact::Sub(x, a) => self.add_sub(x, a),
                Fact::Link(r, x, y) => self.add_link(r, x, y),
            }
            if self.facts > config.max_facts {
                self.queue.clear();
                return Err(OntologyError::ResourceLimit {
                    limit: config.max_facts,
                    facts: self.facts,
                });
            }
        }
        Ok(())
    }

    fn add_sub(&mut self, x: ConceptId, a: ConceptId) {
        if !self.super_set[x.index()].insert(a.0) {
            return;
        }
        self.supers[x.index()].push(a);
        self.facts += 1;

        // CR1
        for &b in &self.told[a.index()] {
            self.queue.push_back(Fact::Sub(x, b));
        }
        // CR2
        let sx = &self.super_set[x.index()];
        for &(a2, b) in &self.conj[a.index()] {
            if sx.contains(&a2.0) {
                self.queue.push_back(Fact::Sub(x, b));
            }
        }
        // CR3
        for &(r, b) in &self.exists_right[a.index()] {
            self.queue.push_back(Fact::Link(r, x, b));
        }
        // CR4, with x as the link target
        let left = &self.exists_left[a.index()];
        if !left.is_empty() {
            for &(r, z) in &self.preds[x.index()] {
                for &(r2, b) in left {
                    if r2 == r {
                        self.queue.push_back(Fact::Sub(z, b));
                    }
                }
            }
        }
    }

    fn add_link(&mut self, r: RoleId, x: ConceptId, y: ConceptId) {
        if !self.link_set[r.index()].insert((x.0, y.0)) {
            return;
        }
        self.links[r.index()].push((x, y));
        self.preds[y.index()].push((r, x));
        self.facts += 1;

        // CR5
        for &s in &self.role_supers[r.index()] {
            self.queue.push_back(Fact::Link(s, x, y));
        }
        // CR4, with y as the link target
        for &b in &self.supers[y.index()] {
            for &(r2, c) in &self.exists_left[b.index()] {
                if r2 == r {
                    self.queue.push_back(Fact::Sub(x, c));
                }
            }
        }
    }

    /// One full sweep of every rule over every fact; true if nothing new follows.
    pub(crate) fn is_fixpoint(&self, tbox: &NormalizedTBox) -> bool {
        let mut incl: Vec<Vec<RoleId>> = vec![Vec::new(); tbox.role_count()];
        for &(r, s) in tbox.role_inclusions() {
            incl[r.index()].push(s);
        }
        for c in 0..tbox.concept_count() {
            let c = ConceptId(c as u32);
            if !self.has(c, c) || !self.has(c, TOP) {
                return false;
            }
        }
        for ax in tbox.axioms() {
            for x in 0..self.concept_count() {
                let x = ConceptId(x as u32);
                let ok = match *ax {
                    NormalAxiom::Sub(a, b) => !self.has(x, a) || self.has(x, b),
                    NormalAxiom::Conj(a1, a2, b) => !(self.has(x, a1) && self.has(x, a2)) || self.has(x, b),
                    NormalAxiom::SubExists(a, r, b) => {
                        !self.has(x, a) || self.link_set[r.index()].contains(&(x.0, b.0))
                    }
                    NormalAxiom::ExistsSub(r, a, b) => self
                        .links(r)
                        .iter()
                        .all(|&(s, y)| s != x || !self.has(y, a) || self.has(x, b)),
                };
                if !ok {
                    return false;
                }
            }
        }
        for (r, supers) in incl.iter().enumerate() {
            for &(x, y) in self.links(RoleId(r as u32)) {
                if supers.iter().any(|s| !self.link_set[s.index()].contains(&(x.0, y.0))) {
                    return false;
                }
            }
        }
        true
    }
}

/// Fixpoint of the completion rules over a normalized TBox.
#[derive(Clone, Debug)]
pub struct SaturationState {
    pub(crate) tbox: Arc<NormalizedTBox>,
    pub(crate) engine: Engine,
}

pub fn saturate(tbox: &NormalizedTBox) -> Result<SaturationState, OntologyError> {
    saturate_with(tbox, SaturationConfig::default())
}

pub fn saturate_with(tbox: &NormalizedTBox, config: SaturationConfig) -> Result<SaturationState, OntologyError> {
    let mut engine = Engine::default();
    engine.extend(tbox, config)?;
    Ok(SaturationState {
        tbox: Arc::new(tbox.clone()),
        engine,
    })
}

impl SaturationState {
    pub fn tbox(&self) -> &NormalizedTBox {
        &self.tbox
    }

    /// Total derived facts (subsumer entries plus role links).
    pub fn derived_facts(&self) -> u64 {
        self.engine.facts()
    }

    fn concept(&self, name: &str) -> Result<ConceptId, OntologyError> {
        self.tbox
            .concept_of_class(name)
            .ok_or_else(|| OntologyError::UnknownName(name.to_string()))
    }

    /// True iff `sup ∈ S(sub)`. Both must be declared classes or `Top`.
    pub fn is_subsumed(&self, sub: &str, sup: &str) -> Result<bool, OntologyError> {
        let (a, b) = (self.concept(sub)?, self.concept(sup)?);
        Ok(self.engine.has(a, b))
    }

    pub fn subsumes_concept(&self, sub: ConceptId, sup: ConceptId) -> bool {
        self.engine.has(sub, sup)
    }

    /// `S(c)` in derivation order, any concept including fresh ones.
    pub fn subsumers_of(&self, c: ConceptId) -> &[ConceptId] {
        self.engine.supers(c)
    }

    /// Named subsumers (declared classes and `Top`) of a declared class, sorted by name.
    pub fn subsumers(&self, class: &str) -> Result<Vec<String>, OntologyError> {
        let c = self.concept(class)?;
        let mut out: Vec<String> = self
            .engine
            .supers(c)
            .iter()
            .filter(|s| **s == TOP || self.tbox.is_declared_class(**s))
            .map(|s| self.tbox.concept_name(*s).to_string())
            .collect();
        out.sort();
        Ok(out)
    }

    /// All pairs `(A, B)` with `B ∈ S(A)` over declared classes and `Top`, sorted.
    pub fn named_subsumptions(&self) -> Vec<(String, String)> {
        let named = |c: ConceptId| c == TOP || self.tbox.is_declared_class(c);
        let mut out = Vec::new();
        for a in 0..=self.tbox.class_count() {
            let a = ConceptId(a as u32);
            for &b in self.engine.supers(a) {
                if named(b) {
                    out.push((
                        self.tbox.concept_name(a).to_string(),
                        self.tbox.concept_name(b).to_string(),
                    ));
                }
            }
        }
        out.sort();
        out
    }

    /// `R(r)` as concept-name pairs, sorted.
    pub fn role_links(&self, role: &str) -> Result<Vec<(String, String)>, OntologyError> {
        let r = (0..self.tbox.role_count())
            .map(|i| RoleId(i as u32))
            .find(|r| self.tbox.role_name(*r) == role)
            .ok_or_else(|| OntologyError::UnknownName(role.to_string()))?;
        let mut out: Vec<_> = self
            .engine
            .links(r)
            .iter()
            .map(|(x, y)| {
                (
                    self.tbox.concept_name(*x).to_string(),
                    self.tbox.concept_name(*y).to_string(),
                )
            })
            .collect();
        out.sort();
        Ok(out)
    }

    /// Direct (transitively reduced) named superclasses of each declared class,
    /// in declaration order. Classes equivalent to each other are not each
    /// other's direct superclass.
    pub fn direct_hierarchy(&self) -> Vec<(String, Vec<String>)> {
        let tbox = &self.tbox;
        let strict = |a: ConceptId, b: ConceptId| self.engine.has(a, b) && !self.engine.has(b, a);
        let mut out = Vec::new();
        for a in 1..=tbox.class_count() {
            let a = ConceptId(a as u32);
            let candidates: Vec<ConceptId> = self
                .engine
                .supers(a)
                .iter()
                .copied()
                .filter(|&b| (b == TOP || tbox.is_declared_class(b)) && strict(a, b))
                .collect();
            let mut direct: Vec<ConceptId> = Vec::new();
            let mut sorted = candidates.clone();
            sorted.sort();
            for b in sorted {
                let below = candidates.iter().any(|&c| c != b && strict(c, b));
                let dup = direct.iter().any(|&k| self.engine.has(b, k) && self.engine.has(k, b));
                if !below && !dup {
                    direct.push(b);
                }
            }
            let names = if direct.is_empty() {
                vec!["Top".to_string()]
            } else {
                direct.iter().map(|c| tbox.concept_name(*c).to_string()).collect()
            };
            out.push((tbox.concept_name(a).to_string(), names));
        }
        out
    }

    /// Re-applies every rule once; true if the state is closed under them.
    pub fn is_fixpoint(&self) -> bool {
        self.engine.is_fixpoint(&self.tbox)
    }
}
