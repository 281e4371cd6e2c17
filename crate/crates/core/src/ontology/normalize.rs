use std::collections::HashMap;
use std::fmt::Write as _;

use super::model::{ClassExpression, Ontology, RoleId, TBoxAxiom, FRESH_PREFIX};

/// A concept in the normalized signature: `Top`, a declared class, or a name
/// introduced during normalization or realization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConceptId(pub u32);

impl ConceptId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

pub const TOP: ConceptId = ConceptId(0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NormalAxiom {
    /// `A ⊑ B`
    Sub(ConceptId, ConceptId),
    /// `A1 ⊓ A2 ⊑ B`
    Conj(ConceptId, ConceptId, ConceptId),
    /// `A ⊑ ∃r.B`
    SubExists(ConceptId, RoleId, ConceptId),
    /// `∃r.A ⊑ B`
    ExistsSub(RoleId, ConceptId, ConceptId),
}

/// Expression over the normalized signature.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub(crate) enum Expr {
    Concept(ConceptId),
    And(Vec<Expr>),
    Exists(RoleId, Box<Expr>),
}

impl Expr {
    fn from_class_expression(e: &ClassExpression) -> Expr {
        match e {
            ClassExpression::Top => Expr::Concept(TOP),
            ClassExpression::Atomic(c) => Expr::Concept(ConceptId(c.0 + 1)),
            ClassExpression::And(parts) => Expr::And(parts.iter().map(Expr::from_class_expression).collect()),
            ClassExpression::Exists(r, f) => Expr::Exists(*r, Box::new(Expr::from_class_expression(f))),
        }
    }
}

/// A TBox in normal form plus the table of names it introduced.
///
/// Concept id 0 is `Top`; ids `1..=n` are the declared classes in declaration
/// order; later ids are fresh.
#[derive(Clone, Debug)]
pub struct NormalizedTBox {
    concept_names: Vec<String>,
    class_index: HashMap<String, ConceptId>,
    class_count: usize,
    role_names: Vec<String>,
    axioms: Vec<NormalAxiom>,
    role_inclusions: Vec<(RoleId, RoleId)>,
    fresh: Vec<(ConceptId, Expr)>,
    memo: HashMap<Expr, ConceptId>,
    next_fresh: usize,
}

pub fn normalize(ontology: &Ontology) -> NormalizedTBox {
    let mut n = NormalizedTBox::empty(ontology);
    for ax in &ontology.tbox {
        match ax {
            TBoxAxiom::SubClassOf(a, b) => n.add_subclass(a, b),
            TBoxAxiom::EquivalentTo(a, b) => {
                n.add_subclass(a, b);
                n.add_subclass(b, a);
            }
            TBoxAxiom::SubRoleOf(r, s) => n.add_role_inclusion(*r, *s),
        }
    }
    n
}

enum Lhs {
    Atom(ConceptId),
    Conj(ConceptId, ConceptId),
    Exists(RoleId, ConceptId),
}

impl NormalizedTBox {
    fn empty(ontology: &Ontology) -> Self {
        let vocab = &ontology.vocab;
        let mut concept_names = Vec::with_capacity(vocab.class_count() + 1);
        concept_names.push("Top".to_string());
        concept_names.extend(vocab.classes().map(|(_, n)| n.to_string()));
        let class_index = concept_names[1..]
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), ConceptId(i as u32 + 1)))
            .collect();
        NormalizedTBox {
            concept_names,
            class_index,
            class_count: vocab.class_count(),
            role_names: vocab.roles().map(|(_, n)| n.to_string()).collect(),
            axioms: Vec::new(),
            role_inclusions: Vec::new(),
            fresh: Vec::new(),
            memo: HashMap::new(),
            next_fresh: 1,
        }
    }

    pub fn axioms(&self) -> &[NormalAxiom] {
        &self.axioms
    }

    pub fn role_inclusions(&self) -> &[(RoleId, RoleId)] {
        &self.role_inclusions
    }

    pub fn concept_count(&self) -> usize {
        self.concept_names.len()
    }

    pub fn role_count(&self) -> usize {
        self.role_names.len()
    }

    /// Number of declared classes (concept ids `1..=class_count`).
    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn concept_name(&self, c: ConceptId) -> &str {
        &self.concept_names[c.index()]
    }

    pub fn role_name(&self, r: RoleId) -> &str {
        &self.role_names[r.index()]
    }

    /// The concept for a declared class name, or `Top`.
    pub fn concept_of_class(&self, name: &str) -> Option<ConceptId> {
        if name == "Top" {
            return Some(TOP);
        }
        self.class_index.get(name).copied()
    }

    pub fn is_declared_class(&self, c: ConceptId) -> bool {
        c.0 >= 1 && c.index() <= self.class_count
    }

    /// Fresh names and the expressions they stand for, in creation order.
    pub fn fresh_names(&self) -> impl Iterator<Item = (&str, String)> + '_ {
        self.fresh
            .iter()
            .map(|(c, e)| (self.concept_name(*c), self.expr_to_string(e)))
    }

    pub fn add_subclass(&mut self, sub: &ClassExpression, sup: &ClassExpression) {
        let (sub, sup) = (Expr::from_class_expression(sub), Expr::from_class_expression(sup));
        self.gci(&sub, &sup);
    }

    pub fn add_role_inclusion(&mut self, sub: RoleId, sup: RoleId) {
        if sub != sup && !self.role_inclusions.contains(&(sub, sup)) {
            self.role_inclusions.push((sub, sup));
        }
    }

    /// Adds a concept outside the fresh-name scheme (used for individuals).
    pub(crate) fn add_named_concept(&mut self, name: String) -> ConceptId {
        self.concept_names.push(name);
        ConceptId(self.concept_names.len() as u32 - 1)
    }

    /// Adds `concept ⊑ expr` for a class expression.
    pub(crate) fn add_concept_inclusion(&mut self, concept: ConceptId, sup: &ClassExpression) {
        let sup = Expr::from_class_expression(sup);
        self.gci(&Expr::Concept(concept), &sup);
    }

    pub(crate) fn add_concept_link(&mut self, concept: ConceptId, role: RoleId, filler: ConceptId) {
        self.push(NormalAxiom::SubExists(concept, role, filler));
    }

    fn push(&mut self, ax: NormalAxiom) {
        self.axioms.push(ax);
    }

    fn gci(&mut self, c: &Expr, d: &Expr) {
        match d {
            Expr::And(ds) => {
                for x in ds {
                    self.gci(c, x);
                }
                return;
            }
            Expr::Concept(TOP) => return,
            _ => {}
        }
        let lhs = match c {
            Expr::Concept(a) => Lhs::Atom(*a),
            Expr::And(cs) => {
                let (a1, a2) = self.binarize(cs);
                Lhs::Conj(a1, a2)
            }
            Expr::Exists(r, f) => Lhs::Exists(*r, self.name_of(f)),
        };
        match (lhs, d) {
            (Lhs::Atom(a), Expr::Concept(b)) => {
                if a != *b {
                    self.push(NormalAxiom::Sub(a, *b));
                }
            }
            (Lhs::Conj(a1, a2), Expr::Concept(b)) => self.push(NormalAxiom::Conj(a1, a2, *b)),
            (Lhs::Exists(r, a), Expr::Concept(b)) => self.push(NormalAxiom::ExistsSub(r, a, *b)),
            (Lhs::Atom(a), Expr::Exists(r, f)) => {
                let b = self.name_of(f);
                self.push(NormalAxiom::SubExists(a, *r, b));
            }
            (lhs, Expr::Exists(..)) => {
                let f = self.name_of(d);
                match lhs {
                    Lhs::Conj(a1, a2) => self.push(NormalAxiom::Conj(a1, a2, f)),
                    Lhs::Exists(r, a) => self.push(NormalAxiom::ExistsSub(r, a, f)),
                    Lhs::Atom(_) => unreachable!(),
                }
            }
            (_, Expr::And(_)) => unreachable!(),
        }
    }

    fn binarize(&mut self, parts: &[Expr]) -> (ConceptId, ConceptId) {
        debug_assert!(parts.len() >= 2);
        let (init, last) = parts.split_at(parts.len() - 1);
        let left = if init.len() == 1 {
            self.name_of(&init[0])
        } else {
            self.name_of(&Expr::And(init.to_vec()))
        };
        (left, self.name_of(&last[0]))
    }

    /// The concept naming `e`, introducing a fresh name with both inclusion
    /// directions on first sight of a complex expression.
    fn name_of(&mut self, e: &Expr) -> ConceptId {
        if let Expr::Concept(c) = e {
            return *c;
        }
        if let Some(c) = self.memo.get(e) {
            return *c;
        }
        let name = format!("{FRESH_PREFIX}{}", self.next_fresh);
        self.next_fresh += 1;
        let f = self.add_named_concept(name);
        self.memo.insert(e.clone(), f);
        self.fresh.push((f, e.clone()));
        self.gci(&Expr::Concept(f), e);
        self.gci(e, &Expr::Concept(f));
        f
    }

    fn write_expr(&self, out: &mut String, e: &Expr) {
        match e {
            Expr::Concept(c) => out.push_str(self.concept_name(*c)),
            Expr::And(parts) => {
                out.push_str("and(");
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    self.write_expr(out, p);
                }
                out.push(')');
            }
            Expr::Exists(r, f) => {
                let _ = write!(out, "some({}, ", self.role_name(*r));
                self.write_expr(out, f);
                out.push(')');
            }
        }
    }

    fn expr_to_string(&self, e: &Expr) -> String {
        let mut s = String::new();
        self.write_expr(&mut s, e);
        s
    }

    /// Renders a normal-form axiom in `.ctx` syntax.
    pub fn axiom_to_string(&self, ax: &NormalAxiom) -> String {
        let n = |c: ConceptId| self.concept_name(c);
        match *ax {
            NormalAxiom::Sub(a, b) => format!("SubClassOf: {}, {}", n(a), n(b)),
            NormalAxiom::Conj(a1, a2, b) => format!("SubClassOf: and({}, {}), {}", n(a1), n(a2), n(b)),
            NormalAxiom::SubExists(a, r, b) => {
                format!("SubClassOf: {}, some({}, {})", n(a), self.role_name(r), n(b))
            }
            NormalAxiom::ExistsSub(r, a, b) => {
                format!("SubClassOf: some({}, {}), {}", self.role_name(r), n(a), n(b))
            }
        }
    }

    /// All axioms (including role inclusions) rendered in `.ctx` syntax.
    pub fn to_lines(&self) -> Vec<String> {
        let mut lines: Vec<String> = self.axioms.iter().map(|a| self.axiom_to_string(a)).collect();
        lines.extend(
            self.role_inclusions
                .iter()
                .map(|(r, s)| format!("SubRoleOf: {}, {}", self.role_name(*r), self.role_name(*s))),
        );
        lines
    }
}
