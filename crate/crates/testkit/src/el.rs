//! Random EL ontologies and a brute-force closure over their un-normalized
//! axioms. Works on plain strings and dense boolean matrices; shares no code
//! with the reasoner under test.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum OExpr {
    Top,
    Name(String),
    And(Vec<OExpr>),
    Some(String, Box<OExpr>),
}

impl OExpr {
    fn write(&self, out: &mut String) {
        match self {
            OExpr::Top => out.push_str("Top"),
            OExpr::Name(n) => out.push_str(n),
            OExpr::And(ps) => {
                out.push_str("and(");
                for (i, p) in ps.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    p.write(out);
                }
                out.push(')');
            }
            OExpr::Some(r, f) => {
                let _ = write!(out, "some({r}, ");
                f.write(out);
                out.push(')');
            }
        }
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        self.write(&mut s);
        s
    }
}

#[derive(Clone, Debug, Default)]
pub struct OOntology {
    pub classes: Vec<String>,
    pub roles: Vec<String>,
    pub individuals: Vec<String>,
    pub gcis: Vec<(OExpr, OExpr)>,
    pub equivalences: Vec<(OExpr, OExpr)>,
    pub role_inclusions: Vec<(String, String)>,
    pub types: Vec<(String, OExpr)>,
    pub facts: Vec<(String, String, String)>,
}

#[derive(Clone, Copy, Debug)]
pub struct GenParams {
    pub max_classes: usize,
    pub max_roles: usize,
    pub max_axioms: usize,
    pub max_depth: usize,
    pub max_individuals: usize,
    pub max_assertions: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            max_classes: 15,
            max_roles: 5,
            max_axioms: 40,
            max_depth: 3,
            max_individuals: 0,
            max_assertions: 0,
        }
    }
}

impl OOntology {
    /// Seeded random ontology within the given bounds.
    pub fn random(seed: u64, p: GenParams) -> OOntology {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_classes = rng.gen_range(2..=p.max_classes.max(2));
        let n_roles = rng.gen_range(1..=p.max_roles.max(1));
        let n_axioms = rng.gen_range(1..=p.max_axioms.max(1));
        let mut o = OOntology {
            classes: (0..n_classes).map(|i| format!("C{i}")).collect(),
            roles: (0..n_roles).map(|i| format!("r{i}")).collect(),
            ..Default::default()
        };
        for _ in 0..n_axioms {
            let roll: f64 = rng.gen();
            if roll < 0.1 && n_roles > 1 {
                let a = rng.gen_range(0..n_roles);
                let b = rng.gen_range(0..n_roles);
                if a != b {
                    o.role_inclusions.push((o.roles[a].clone(), o.roles[b].clone()));
                }
                continue;
            }
            let lhs = o.random_expr(&mut rng, p.max_depth);
            let rhs = o.random_expr(&mut rng, p.max_depth);
            if roll < 0.2 {
                o.equivalences.push((lhs, rhs));
            } else {
                o.gcis.push((lhs, rhs));
            }
        }
        if p.max_individuals > 0 {
            let n_ind = rng.gen_range(1..=p.max_individuals);
            o.individuals = (0..n_ind).map(|i| format!("i{i}")).collect();
            let n_assert = rng.gen_range(0..=p.max_assertions);
            for _ in 0..n_assert {
                let a = o.individuals[rng.gen_range(0..n_ind)].clone();
                if rng.gen_bool(0.6) {
                    let e = o.random_expr(&mut rng, 2);
                    o.types.push((a, e));
                } else {
                    let b = o.individuals[rng.gen_range(0..n_ind)].clone();
                    let r = o.roles[rng.gen_range(0..n_roles)].clone();
                    o.facts.push((r, a, b));
                }
            }
        }
        o
    }

    fn random_expr(&self, rng: &mut ChaCha8Rng, depth: usize) -> OExpr {
        let name = |rng: &mut ChaCha8Rng| {
            if rng.gen_bool(0.05) {
                OExpr::Top
            } else {
                OExpr::Name(self.classes[rng.gen_range(0..self.classes.len())].clone())
            }
        };
        if depth == 0 || rng.gen_bool(0.5) {
            return name(rng);
        }
        if rng.gen_bool(0.5) {
            let n = rng.gen_range(2..=3);
            OExpr::And((0..n).map(|_| self.random_expr(rng, depth - 1)).collect())
        } else {
            let r = self.roles[rng.gen_range(0..self.roles.len())].clone();
            OExpr::Some(r, Box::new(self.random_expr(rng, depth - 1)))
        }
    }

    /// The ontology in `.ctx` syntax.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.classes {
            let _ = writeln!(s, "Class: {c}");
        }
        for r in &self.roles {
            let _ = writeln!(s, "Role: {r}");
        }
        for i in &self.individuals {
            let _ = writeln!(s, "Individual: {i}");
        }
        for (a, b) in &self.gcis {
            let _ = writeln!(s, "SubClassOf: {}, {}", a.text(), b.text());
        }
        for (a, b) in &self.equivalences {
            let _ = writeln!(s, "EquivalentTo: {}, {}", a.text(), b.text());
        }
        for (r, t) in &self.role_inclusions {
            let _ = writeln!(s, "SubRoleOf: {r}, {t}");
        }
        for (i, e) in &self.types {
            let _ = writeln!(s, "Type: {i}, {}", e.text());
        }
        for (r, a, b) in &self.facts {
            let _ = writeln!(s, "Fact: {r}, {a}, {b}");
        }
        s
    }

    /// `(A, B)` for every named class or `Top` A and B with A ⊑ B.
    pub fn subsumptions(&self) -> BTreeSet<(String, String)> {
        let c = Closure::compute(self);
        let mut named: Vec<(usize, String)> = vec![(c.id(&OExpr::Top), "Top".to_string())];
        for n in &self.classes {
            named.push((c.id(&OExpr::Name(n.clone())), n.clone()));
        }
        let mut out = BTreeSet::new();
        for (a, an) in &named {
            for (b, bn) in &named {
                if c.sub[*a][*b] {
                    out.insert((an.clone(), bn.clone()));
                }
            }
        }
        out
    }

    /// `(individual, class)` for every individual and named class it belongs to.
    pub fn realization(&self) -> BTreeSet<(String, String)> {
        let c = Closure::compute(self);
        let mut out = BTreeSet::new();
        for i in &self.individuals {
            let x = c.id(&individual_concept(i));
            for n in &self.classes {
                if c.sub[x][c.id(&OExpr::Name(n.clone()))] {
                    out.insert((i.clone(), n.clone()));
                }
            }
        }
        out
    }
}

fn individual_concept(name: &str) -> OExpr {
    OExpr::Name(format!("{{{name}}}"))
}

struct Closure {
    index: HashMap<OExpr, usize>,
    sub: Vec<Vec<bool>>,
}

impl Closure {
    fn id(&self, e: &OExpr) -> usize {
        self.index[e]
    }

    fn compute(o: &OOntology) -> Closure {
        let mut exprs: Vec<OExpr> = Vec::new();
        let mut index: HashMap<OExpr, usize> = HashMap::new();
        fn collect(e: &OExpr, exprs: &mut Vec<OExpr>, index: &mut HashMap<OExpr, usize>) {
            if index.contains_key(e) {
                return;
            }
            match e {
                OExpr::And(ps) => ps.iter().for_each(|p| collect(p, exprs, index)),
                OExpr::Some(_, f) => collect(f, exprs, index),
                _ => {}
            }
            index.insert(e.clone(), exprs.len());
            exprs.push(e.clone());
        }

        let mut told: Vec<(OExpr, OExpr)> = Vec::new();
        for (a, b) in &o.gcis {
            told.push((a.clone(), b.clone()));
        }
        for (a, b) in &o.equivalences {
            told.push((a.clone(), b.clone()));
            told.push((b.clone(), a.clone()));
        }
        for (i, e) in &o.types {
            told.push((individual_concept(i), e.clone()));
        }
        for (r, a, b) in &o.facts {
            told.push((
                individual_concept(a),
                OExpr::Some(r.clone(), Box::new(individual_concept(b))),
            ));
        }

        collect(&OExpr::Top, &mut exprs, &mut index);
        for c in &o.classes {
            collect(&OExpr::Name(c.clone()), &mut exprs, &mut index);
        }
        for i in &o.individuals {
            collect(&individual_concept(i), &mut exprs, &mut index);
        }
        for (a, b) in &told {
            collect(a, &mut exprs, &mut index);
            collect(b, &mut exprs, &mut index);
        }

        let n = exprs.len();
        let role_idx: HashMap<&str, usize> = o.roles.iter().enumerate().map(|(i, r)| (r.as_str(), i)).collect();
        let nr = o.roles.len();
        // Reflexive-transitive role hierarchy by Warshall.
        let mut role_sub = vec![vec![false; nr]; nr];
        for (i, row) in role_sub.iter_mut().enumerate() {
            row[i] = true;
        }
        for (r, s) in &o.role_inclusions {
            role_sub[role_idx[r.as_str()]][role_idx[s.as_str()]] = true;
        }
        for k in 0..nr {
            for i in 0..nr {
                for j in 0..nr {
                    if role_sub[i][k] && role_sub[k][j] {
                        role_sub[i][j] = true;
                    }
                }
            }
        }

        let told_ids: Vec<(usize, usize)> = told.iter().map(|(a, b)| (index[a], index[b])).collect();
        let top = index[&OExpr::Top];
        let mut sub = vec![vec![false; n]; n];
        let mut link = vec![vec![vec![false; n]; n]; nr];

        let mut changed = true;
        while changed {
            changed = false;
            let set = |m: &mut Vec<Vec<bool>>, x: usize, y: usize| {
                if !m[x][y] {
                    m[x][y] = true;
                    true
                } else {
                    false
                }
            };
            for x in 0..n {
                changed |= set(&mut sub, x, x);
                changed |= set(&mut sub, x, top);
                for &(a, b) in &told_ids {
                    if sub[x][a] {
                        changed |= set(&mut sub, x, b);
                    }
                }
                for (y, e) in exprs.iter().enumerate() {
                    match e {
                        OExpr::And(ps) => {
                            let ids: Vec<usize> = ps.iter().map(|p| index[p]).collect();
                            if sub[x][y] {
                                for &p in &ids {
                                    changed |= set(&mut sub, x, p);
                                }
                            }
                            if ids.iter().all(|&p| sub[x][p]) {
                                changed |= set(&mut sub, x, y);
                            }
                        }
                        OExpr::Some(r, f) => {
                            let (r, f) = (role_idx[r.as_str()], index[&**f]);
                            if sub[x][y] && !link[r][x][f] {
                                link[r][x][f] = true;
                                changed = true;
                            }
                            // y = ∃r.f holds for x if x links by a subrole of r to z with f ∈ S(z).
                            if !sub[x][y] {
                                let holds =
                                    (0..nr).any(|r2| role_sub[r2][r] && (0..n).any(|z| link[r2][x][z] && sub[z][f]));
                                if holds {
                                    sub[x][y] = true;
                                    changed = true;
                                }
                            }
                        }
                        _ => {}
                    }
                }
            }
        }
        Closure { index, sub }
    }
}

/// Minimal reader for well-formed `.ctx` text, enough to feed fixtures to the
/// oracle. Panics on anything it does not understand.
pub fn parse_ctx(text: &str) -> OOntology {
    fn split_args(s: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut depth = 0;
        let mut cur = String::new();
        for ch in s.chars() {
            match ch {
                '(' => {
                    depth += 1;
                    cur.push(ch);
                }
                ')' => {
                    depth -= 1;
                    cur.push(ch);
                }
                ',' if depth == 0 => out.push(std::mem::take(&mut cur).trim().to_string()),
                _ => cur.push(ch),
            }
        }
        out.push(cur.trim().to_string());
        out
    }
    fn expr(s: &str) -> OExpr {
        let s = s.trim();
        if s == "Top" {
            OExpr::Top
        } else if let Some(inner) = s.strip_prefix("and(").and_then(|r| r.strip_suffix(')')) {
            OExpr::And(split_args(inner).iter().map(|a| expr(a)).collect())
        } else if let Some(inner) = s.strip_prefix("some(").and_then(|r| r.strip_suffix(')')) {
            let args = split_args(inner);
            assert_eq!(args.len(), 2, "bad some(): {s}");
            OExpr::Some(args[0].clone(), Box::new(expr(&args[1])))
        } else {
            OExpr::Name(s.to_string())
        }
    }
    let mut o = OOntology::default();
    for line in text.lines() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (kw, rest) = line.split_once(':').expect("statement");
        let args = split_args(rest);
        match kw.trim() {
            "Class" => o.classes.push(args[0].clone()),
            "Role" => o.roles.push(args[0].clone()),
            "Individual" => o.individuals.push(args[0].clone()),
            "SubClassOf" => o.gcis.push((expr(&args[0]), expr(&args[1]))),
            "EquivalentTo" => o.equivalences.push((expr(&args[0]), expr(&args[1]))),
            "SubRoleOf" => o.role_inclusions.push((args[0].clone(), args[1].clone())),
            "Type" => o.types.push((args[0].clone(), expr(&args[1]))),
            "Fact" => o.facts.push((args[0].clone(), args[1].clone(), args[2].clone())),
            other => panic!("unknown statement {other}"),
        }
    }
    o
}
