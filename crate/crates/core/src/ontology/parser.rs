//! Reader for the line-based `.ctx` ontology format.
//!
//! ```text
//! Class: NAME | Role: NAME | Individual: NAME
//! SubClassOf: EXPR, EXPR | EquivalentTo: EXPR, EXPR | SubRoleOf: NAME, NAME
//! Type: NAME, EXPR | Fact: ROLE, SUBJECT, OBJECT
//! EXPR := NAME | Top | and(EXPR, EXPR, ...) | some(ROLE, EXPR)
//! ```
//!
//! Parsing is two-pass: all statements are read and all declarations collected
//! first, so a declaration may appear after a use.

use super::model::{
    is_declarable_name, ABoxAssertion, ClassExpression, Namespace, Ontology, TBoxAxiom, Vocabulary, FRESH_PREFIX,
};
use super::OntologyError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Auto-declare undeclared names in the namespace implied by their position.
    pub lenient: bool,
}

pub fn parse_ontology(text: &str) -> Result<Ontology, OntologyError> {
    parse_ontology_with(text, ParseOptions::default())
}

pub fn parse_ontology_with(text: &str, opts: ParseOptions) -> Result<Ontology, OntologyError> {
    let mut statements = Vec::new();
    for (idx, raw) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let line = match line.find('#') {
            Some(pos) => &line[..pos],
            None => line,
        };
        if line.trim().is_empty() {
            continue;
        }
        statements.push(LineParser::new(line, line_no).statement()?);
    }

    let mut vocab = Vocabulary::new();
    for st in &statements {
        if let Stmt::Declare(ns, name) = &st.kind {
            vocab.declare(*ns, &name.text).map_err(|e| with_line(e, st.line))?;
        }
    }

    let mut resolver = Resolver { vocab, opts };
    let mut ontology = Ontology::new();
    for st in &statements {
        match &st.kind {
            Stmt::Declare(..) => {}
            Stmt::SubClassOf(a, b) => {
                let ax = TBoxAxiom::SubClassOf(resolver.expr(a, st.line)?, resolver.expr(b, st.line)?);
                ontology.tbox.insert(ax);
            }
            Stmt::EquivalentTo(a, b) => {
                let ax = TBoxAxiom::EquivalentTo(resolver.expr(a, st.line)?, resolver.expr(b, st.line)?);
                ontology.tbox.insert(ax);
            }
            Stmt::SubRoleOf(r, s) => {
                let ax = TBoxAxiom::SubRoleOf(resolver.role(r, st.line)?, resolver.role(s, st.line)?);
                ontology.tbox.insert(ax);
            }
            Stmt::Type(i, e) => {
                let a = ABoxAssertion::Type(resolver.individual(i, st.line)?, resolver.expr(e, st.line)?);
                ontology.abox.insert(a);
            }
            Stmt::Fact(r, s, o) => {
                let a = ABoxAssertion::Fact(
                    resolver.role(r, st.line)?,
                    resolver.individual(s, st.line)?,
                    resolver.individual(o, st.line)?,
                );
                ontology.abox.insert(a);
            }
        }
    }
    ontology.vocab = resolver.vocab;
    Ok(ontology)
}

fn with_line(e: OntologyError, line: usize) -> OntologyError {
    match e {
        OntologyError::NamespaceClash { name, .. } => OntologyError::NamespaceClash { name, line },
        other => other,
    }
}

#[derive(Debug)]
struct Word {
    text: String,
}

#[derive(Debug)]
enum RawExpr {
    Name(Word),
    Top,
    And(Vec<RawExpr>),
    Some(Word, Box<RawExpr>),
}

#[derive(Debug)]
enum Stmt {
    Declare(Namespace, Word),
    SubClassOf(RawExpr, RawExpr),
    EquivalentTo(RawExpr, RawExpr),
    SubRoleOf(Word, Word),
    Type(Word, RawExpr),
    Fact(Word, Word, Word),
}

struct Statement {
    line: usize,
    kind: Stmt,
}

struct LineParser<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
}

impl<'a> LineParser<'a> {
    fn new(src: &'a str, line: usize) -> Self {
        Self { src, pos: 0, line }
    }

    fn error(&self, expected: &str) -> OntologyError {
        let col = self.src[..self.pos].chars().count() + 1;
        OntologyError::Syntax {
            line: self.line,
            col,
            expected: expected.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c == ' ' || c == '\t' {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn expect_char(&mut self, want: char) -> Result<(), OntologyError> {
        if self.peek() == Some(want) {
            self.pos += want.len_utf8();
            Ok(())
        } else {
            Err(self.error(&format!("`{want}`")))
        }
    }

    fn word(&mut self) -> Result<Word, OntologyError> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let len = rest
            .char_indices()
            .find(|(_, c)| !(c.is_ascii_alphanumeric() || *c == '_'))
            .map(|(i, _)| i)
            .unwrap_or(rest.len());
        let text = &rest[..len];
        if text.is_empty() || text.starts_with(|c: char| c.is_ascii_digit()) {
            return Err(self.error("name"));
        }
        self.pos += len;
        Ok(Word { text: text.to_string() })
    }

    /// A plain name: rejects reserved words and the fresh-name prefix.
    fn name(&mut self) -> Result<Word, OntologyError> {
        let start = self.pos;
        let w = self.word()?;
        if !is_declarable_name(&w.text) {
            self.pos = start;
            self.skip_ws();
            let what = if w.text.starts_with(FRESH_PREFIX) {
                format!("name not starting with reserved prefix `{FRESH_PREFIX}`")
            } else {
                format!("name (`{}` is reserved)", w.text)
            };
            return Err(self.error(&what));
        }
        Ok(w)
    }

    fn expr(&mut self) -> Result<RawExpr, OntologyError> {
        let start = self.pos;
        let w = self.word()?;
        match w.text.as_str() {
            "Top" => Ok(RawExpr::Top),
            "and" if self.peek() == Some('(') => {
                self.expect_char('(')?;
                let mut parts = vec![self.expr()?];
                while self.peek() == Some(',') {
                    self.expect_char(',')?;
                    parts.push(self.expr()?);
                }
                if parts.len() < 2 {
                    return Err(self.error("`,` (and() needs at least two operands)"));
                }
                self.expect_char(')')?;
                Ok(RawExpr::And(parts))
            }
            "some" if self.peek() == Some('(') => {
                self.expect_char('(')?;
                let role = self.name()?;
                self.expect_char(',')?;
                let filler = self.expr()?;
                self.expect_char(')')?;
                Ok(RawExpr::Some(role, Box::new(filler)))
            }
            _ => {
                self.pos = start;
                Ok(RawExpr::Name(self.name()?))
            }
        }
    }

    fn end(&mut self) -> Result<(), OntologyError> {
        if self.peek().is_some() {
            Err(self.error("end of line"))
        } else {
            Ok(())
        }
    }

    fn statement(mut self) -> Result<Statement, OntologyError> {
        let kw = self.word().map_err(|_| self.error("statement keyword"))?;
        self.expect_char(':')?;
        let kind = match kw.text.as_str() {
            "Class" => Stmt::Declare(Namespace::Class, self.name()?),
            "Role" => Stmt::Declare(Namespace::Role, self.name()?),
            "Individual" => Stmt::Declare(Namespace::Individual, self.name()?),
            "SubClassOf" | "EquivalentTo" => {
                let a = self.expr()?;
                self.expect_char(',')?;
                let b = self.expr()?;
                if kw.text == "SubClassOf" {
                    Stmt::SubClassOf(a, b)
                } else {
                    Stmt::EquivalentTo(a, b)
                }
            }
            "SubRoleOf" => {
                let r = self.name()?;
                self.expect_char(',')?;
                Stmt::SubRoleOf(r, self.name()?)
            }
            "Type" => {
                let i = self.name()?;
                self.expect_char(',')?;
                Stmt::Type(i, self.expr()?)
            }
            "Fact" => {
                let r = self.name()?;
                self.expect_char(',')?;
                let s = self.name()?;
                self.expect_char(',')?;
                Stmt::Fact(r, s, self.name()?)
            }
            _ => {
                self.pos = 0;
                return Err(self.error("statement keyword"));
            }
        };
        self.end()?;
        Ok(Statement { line: self.line, kind })
    }
}

struct Resolver {
    vocab: Vocabulary,
    opts: ParseOptions,
}

impl Resolver {
    fn lookup(&mut self, ns: Namespace, w: &Word, line: usize) -> Result<u32, OntologyError> {
        match self.vocab.namespace_of(&w.text) {
            Some(found) if found == ns => {}
            Some(_) => {
                return Err(OntologyError::NamespaceClash {
                    name: w.text.clone(),
                    line,
                })
            }
            None if self.opts.lenient => {}
            _ => {
                return Err(OntologyError::UndeclaredName {
                    name: w.text.clone(),
                    line,
                })
            }
        }
        self.vocab.declare(ns, &w.text).map_err(|e| with_line(e, line))
    }

    fn role(&mut self, w: &Word, line: usize) -> Result<super::RoleId, OntologyError> {
        self.lookup(Namespace::Role, w, line).map(super::RoleId)
    }

    fn individual(&mut self, w: &Word, line: usize) -> Result<super::IndividualId, OntologyError> {
        self.lookup(Namespace::Individual, w, line).map(super::IndividualId)
    }

    fn expr(&mut self, e: &RawExpr, line: usize) -> Result<ClassExpression, OntologyError> {
        Ok(match e {
            RawExpr::Top => ClassExpression::Top,
            RawExpr::Name(w) => ClassExpression::Atomic(super::ClassId(self.lookup(Namespace::Class, w, line)?)),
            RawExpr::And(parts) => {
                let parts = parts
                    .iter()
                    .map(|p| self.expr(p, line))
                    .collect::<Result<Vec<_>, _>>()?;
                ClassExpression::and(parts)
            }
            RawExpr::Some(r, f) => {
                let role = self.role(r, line)?;
                ClassExpression::exists(role, self.expr(f, line)?)
            }
        })
    }
}
