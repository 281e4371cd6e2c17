use std::fmt::{self, Write as _};

use indexmap::IndexSet;

use super::OntologyError;

/// Prefix reserved for names introduced by normalization.
pub const FRESH_PREFIX: &str = "_N";

/// Words that cannot be declared as names.
pub const RESERVED_WORDS: [&str; 3] = ["Top", "and", "some"];

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }
    };
}

id_type!(
    /// Interned class name.
    ClassId
);
id_type!(
    /// Interned role name.
    RoleId
);
id_type!(
    /// Interned individual name.
    IndividualId
);

/// The three namespaces a declared name can live in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Namespace {
    Class,
    Role,
    Individual,
}

impl fmt::Display for Namespace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Namespace::Class => "class",
            Namespace::Role => "role",
            Namespace::Individual => "individual",
        })
    }
}

/// True if `name` matches `[A-Za-z_][A-Za-z0-9_]*`.
pub fn is_valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// True if `name` may be declared by a user (valid, not reserved, no fresh prefix).
pub fn is_declarable_name(name: &str) -> bool {
    is_valid_name(name) && !name.starts_with(FRESH_PREFIX) && !RESERVED_WORDS.contains(&name)
}

/// Declared names, interned per namespace. Ids are insertion positions.
#[derive(Clone, Debug, Default)]
pub struct Vocabulary {
    classes: IndexSet<String>,
    roles: IndexSet<String>,
    individuals: IndexSet<String>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.classes.iter().eq(other.classes.iter())
            && self.roles.iter().eq(other.roles.iter())
            && self.individuals.iter().eq(other.individuals.iter())
    }
}

impl Eq for Vocabulary {}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Which namespace, if any, already holds `name`.
    pub fn namespace_of(&self, name: &str) -> Option<Namespace> {
        if self.classes.contains(name) {
            Some(Namespace::Class)
        } else if self.roles.contains(name) {
            Some(Namespace::Role)
        } else if self.individuals.contains(name) {
            Some(Namespace::Individual)
        } else {
            None
        }
    }

    /// Declares `name` in `ns`. Re-declaring in the same namespace is a no-op;
    /// declaring in a second namespace is a clash.
    pub fn declare(&mut self, ns: Namespace, name: &str) -> Result<u32, OntologyError> {
        match self.namespace_of(name) {
            Some(existing) if existing != ns => {
                return Err(OntologyError::NamespaceClash {
                    name: name.to_string(),
                    line: 0,
                })
            }
            _ => {}
        }
        let set = match ns {
            Namespace::Class => &mut self.classes,
            Namespace::Role => &mut self.roles,
            Namespace::Individual => &mut self.individuals,
        };
        let (idx, _) = set.insert_full(name.to_string());
        Ok(idx as u32)
    }

    pub fn declare_class(&mut self, name: &str) -> Result<ClassId, OntologyError> {
        self.declare(Namespace::Class, name).map(ClassId)
    }

    pub fn declare_role(&mut self, name: &str) -> Result<RoleId, OntologyError> {
        self.declare(Namespace::Role, name).map(RoleId)
    }

    pub fn declare_individual(&mut self, name: &str) -> Result<IndividualId, OntologyError> {
        self.declare(Namespace::Individual, name).map(IndividualId)
    }

    pub fn class_id(&self, name: &str) -> Option<ClassId> {
        self.classes.get_index_of(name).map(|i| ClassId(i as u32))
    }

    pub fn role_id(&self, name: &str) -> Option<RoleId> {
        self.roles.get_index_of(name).map(|i| RoleId(i as u32))
    }

    pub fn individual_id(&self, name: &str) -> Option<IndividualId> {
        self.individuals.get_index_of(name).map(|i| IndividualId(i as u32))
    }

    pub fn class_name(&self, id: ClassId) -> &str {
        &self.classes[id.index()]
    }

    pub fn role_name(&self, id: RoleId) -> &str {
        &self.roles[id.index()]
    }

    pub fn individual_name(&self, id: IndividualId) -> &str {
        &self.individuals[id.index()]
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn role_count(&self) -> usize {
        self.roles.len()
    }

    pub fn individual_count(&self) -> usize {
        self.individuals.len()
    }

    pub fn classes(&self) -> impl Iterator<Item = (ClassId, &str)> {
        self.classes
            .iter()
            .enumerate()
            .map(|(i, n)| (ClassId(i as u32), n.as_str()))
    }

    pub fn roles(&self) -> impl Iterator<Item = (RoleId, &str)> {
        self.roles
            .iter()
            .enumerate()
            .map(|(i, n)| (RoleId(i as u32), n.as_str()))
    }

    pub fn individuals(&self) -> impl Iterator<Item = (IndividualId, &str)> {
        self.individuals
            .iter()
            .enumerate()
            .map(|(i, n)| (IndividualId(i as u32), n.as_str()))
    }
}

/// EL class expression.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassExpression {
    Top,
    Atomic(ClassId),
    /// Two or more distinct conjuncts, none of them an `And`.
    And(Vec<ClassExpression>),
    Exists(RoleId, Box<ClassExpression>),
}

impl ClassExpression {
    /// Builds a conjunction, flattening nested conjunctions and dropping duplicate
    /// conjuncts. Collapses to the single remaining conjunct, or `Top` when empty.
    pub fn and(parts: impl IntoIterator<Item = ClassExpression>) -> ClassExpression {
        let mut flat: Vec<ClassExpression> = Vec::new();
        let push = |e: ClassExpression, flat: &mut Vec<ClassExpression>| {
            if !flat.contains(&e) {
                flat.push(e);
            }
        };
        for part in parts {
            match part {
                ClassExpression::And(inner) => {
                    for e in inner {
                        push(e, &mut flat);
                    }
                }
                other => push(other, &mut flat),
            }
        }
        match flat.len() {
            0 => ClassExpression::Top,
            1 => flat.pop().unwrap(),
            _ => ClassExpression::And(flat),
        }
    }

    pub fn exists(role: RoleId, filler: ClassExpression) -> ClassExpression {
        ClassExpression::Exists(role, Box::new(filler))
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, ClassExpression::Top | ClassExpression::Atomic(_))
    }

    pub fn depth(&self) -> usize {
        match self {
            ClassExpression::Top | ClassExpression::Atomic(_) => 0,
            ClassExpression::And(parts) => 1 + parts.iter().map(|p| p.depth()).max().unwrap_or(0),
            ClassExpression::Exists(_, f) => 1 + f.depth(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum TBoxAxiom {
    SubClassOf(ClassExpression, ClassExpression),
    EquivalentTo(ClassExpression, ClassExpression),
    SubRoleOf(RoleId, RoleId),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ABoxAssertion {
    Type(IndividualId, ClassExpression),
    Fact(RoleId, IndividualId, IndividualId),
}

/// A context model: declarations, terminology and assertions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Ontology {
    pub vocab: Vocabulary,
    pub tbox: IndexSet<TBoxAxiom>,
    pub abox: IndexSet<ABoxAssertion>,
}

impl Ontology {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of class inclusion axioms (equivalences count once).
    pub fn gci_count(&self) -> usize {
        self.tbox
            .iter()
            .filter(|a| !matches!(a, TBoxAxiom::SubRoleOf(..)))
            .count()
    }

    /// Checks that every id used by the axioms and assertions is declared.
    pub fn check_closed(&self) -> Result<(), OntologyError> {
        fn expr_ok(v: &Vocabulary, e: &ClassExpression) -> bool {
            match e {
                ClassExpression::Top => true,
                ClassExpression::Atomic(c) => c.index() < v.class_count(),
                ClassExpression::And(ps) => ps.iter().all(|p| expr_ok(v, p)),
                ClassExpression::Exists(r, f) => r.index() < v.role_count() && expr_ok(v, f),
            }
        }
        let v = &self.vocab;
        let tbox_ok = self.tbox.iter().all(|ax| match ax {
            TBoxAxiom::SubClassOf(a, b) | TBoxAxiom::EquivalentTo(a, b) => expr_ok(v, a) && expr_ok(v, b),
            TBoxAxiom::SubRoleOf(r, s) => r.index() < v.role_count() && s.index() < v.role_count(),
        });
        let abox_ok = self.abox.iter().all(|a| match a {
            ABoxAssertion::Type(i, e) => i.index() < v.individual_count() && expr_ok(v, e),
            ABoxAssertion::Fact(r, s, o) => {
                r.index() < v.role_count() && s.index() < v.individual_count() && o.index() < v.individual_count()
            }
        });
        if tbox_ok && abox_ok {
            Ok(())
        } else {
            Err(OntologyError::UnknownName("<undeclared id>".into()))
        }
    }

    /// Set-semantics ABox update. The TBox is never touched; removing an
    /// absent assertion is a no-op.
    pub fn apply_abox_delta(
        &self,
        add: impl IntoIterator<Item = ABoxAssertion>,
        remove: impl IntoIterator<Item = ABoxAssertion>,
    ) -> Result<Ontology, OntologyError> {
        let mut next = self.clone();
        let add: Vec<_> = add.into_iter().collect();
        let remove: Vec<_> = remove.into_iter().collect();
        for a in add.iter().chain(remove.iter()) {
            self.check_assertion(a)?;
        }
        for a in add {
            next.abox.insert(a);
        }
        for a in &remove {
            next.abox.shift_remove(a);
        }
        Ok(next)
    }

    fn check_assertion(&self, a: &ABoxAssertion) -> Result<(), OntologyError> {
        let probe = Ontology {
            vocab: self.vocab.clone(),
            tbox: IndexSet::new(),
            abox: std::iter::once(a.clone()).collect(),
        };
        probe.check_closed()
    }

    /// `Type: individual, Class` by name.
    pub fn type_assertion(&self, individual: &str, class: &str) -> Result<ABoxAssertion, OntologyError> {
        let i = self
            .vocab
            .individual_id(individual)
            .ok_or_else(|| OntologyError::UnknownName(individual.to_string()))?;
        let c = self
            .vocab
            .class_id(class)
            .ok_or_else(|| OntologyError::UnknownName(class.to_string()))?;
        Ok(ABoxAssertion::Type(i, ClassExpression::Atomic(c)))
    }

    /// `Fact: role, subject, object` by name.
    pub fn fact_assertion(&self, role: &str, subject: &str, object: &str) -> Result<ABoxAssertion, OntologyError> {
        let r = self
            .vocab
            .role_id(role)
            .ok_or_else(|| OntologyError::UnknownName(role.to_string()))?;
        let s = self
            .vocab
            .individual_id(subject)
            .ok_or_else(|| OntologyError::UnknownName(subject.to_string()))?;
        let o = self
            .vocab
            .individual_id(object)
            .ok_or_else(|| OntologyError::UnknownName(object.to_string()))?;
        Ok(ABoxAssertion::Fact(r, s, o))
    }

    pub fn write_expr(&self, out: &mut String, e: &ClassExpression) {
        match e {
            ClassExpression::Top => out.push_str("Top"),
            ClassExpression::Atomic(c) => out.push_str(self.vocab.class_name(*c)),
            ClassExpression::And(parts) => {
                out.push_str("and(");
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    self.write_expr(out, p);
                }
                out.push(')');
            }
            ClassExpression::Exists(r, f) => {
                out.push_str("some(");
                out.push_str(self.vocab.role_name(*r));
                out.push_str(", ");
                self.write_expr(out, f);
                out.push(')');
            }
        }
    }

    pub fn expr_to_string(&self, e: &ClassExpression) -> String {
        let mut s = String::new();
        self.write_expr(&mut s, e);
        s
    }

    /// Serializes to the line-based `.ctx` format (LF line endings).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (_, n) in self.vocab.classes() {
            let _ = writeln!(out, "Class: {n}");
        }
        for (_, n) in self.vocab.roles() {
            let _ = writeln!(out, "Role: {n}");
        }
        for (_, n) in self.vocab.individuals() {
            let _ = writeln!(out, "Individual: {n}");
        }
        for ax in &self.tbox {
            match ax {
                TBoxAxiom::SubClassOf(a, b) | TBoxAxiom::EquivalentTo(a, b) => {
                    let kw = if matches!(ax, TBoxAxiom::SubClassOf(..)) {
                        "SubClassOf"
                    } else {
                        "EquivalentTo"
                    };
                    let _ = writeln!(out, "{kw}: {}, {}", self.expr_to_string(a), self.expr_to_string(b));
                }
                TBoxAxiom::SubRoleOf(r, s) => {
                    let _ = writeln!(
                        out,
                        "SubRoleOf: {}, {}",
                        self.vocab.role_name(*r),
                        self.vocab.role_name(*s)
                    );
                }
            }
        }
        for a in &self.abox {
            match a {
                ABoxAssertion::Type(i, e) => {
                    let _ = writeln!(
                        out,
                        "Type: {}, {}",
                        self.vocab.individual_name(*i),
                        self.expr_to_string(e)
                    );
                }
                ABoxAssertion::Fact(r, s, o) => {
                    let _ = writeln!(
                        out,
                        "Fact: {}, {}, {}",
                        self.vocab.role_name(*r),
                        self.vocab.individual_name(*s),
                        self.vocab.individual_name(*o)
                    );
                }
            }
        }
        out
    }
}
