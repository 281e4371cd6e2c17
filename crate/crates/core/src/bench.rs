//! Synthetic ontologies for stress-testing the reasoner, and a timing
//! harness over parse, normalize and saturate.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ontology::{normalize, parse_ontology, saturate_with, OntologyError, SaturationConfig};

/// Branching factor of the generated class tree.
const BRANCHING: usize = 4;
/// Conclusions of conjunction and existential axioms are drawn from the
/// classes at most this deep, which bounds every subsumer set.
const SINK_DEPTH: usize = 2;

/// A layered class tree (class `c` has parent `(c - 1) / 4`) plus
/// conjunction, existential and role-inclusion axioms whose conclusions lie
/// in the top layers. EL without bottom has no unsatisfiable classes, so any
/// mix is consistent. Returns `.ctx` text with at least `n_axioms` axioms.
pub fn generate(n_axioms: usize, seed: u64) -> String {
    let n = n_axioms.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_classes = (n * 2 / 5).max(3);
    let n_roles = (n / 200).clamp(2, 20);
    let depth = |mut c: usize| {
        let mut d = 0;
        while c > 0 {
            c = (c - 1) / BRANCHING;
            d += 1;
        }
        d
    };
    let n_sinks = (0..n_classes).take_while(|&c| depth(c) <= SINK_DEPTH).count();

    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut ordered: Vec<String> = Vec::new();
    for c in 1..n_classes.min(n + 1) {
        let ax = format!("SubClassOf: C{c}, C{}", (c - 1) / BRANCHING);
        seen.insert(ax.clone());
        ordered.push(ax);
    }
    while ordered.len() < n {
        let any = rng.gen_range(0..n_classes);
        let other = rng.gen_range(0..n_classes);
        let sink = rng.gen_range(0..n_sinks);
        let r = rng.gen_range(0..n_roles);
        let roll: f64 = rng.gen();
        let ax = if roll < 0.25 {
            if any == other {
                continue;
            }
            format!("SubClassOf: and(C{any}, C{other}), C{sink}")
        } else if roll < 0.55 {
            format!("SubClassOf: C{any}, some(r{r}, C{other})")
        } else if roll < 0.65 {
            let third = rng.gen_range(0..n_classes);
            if third == other {
                continue;
            }
            format!("SubClassOf: C{any}, some(r{r}, and(C{other}, C{third}))")
        } else if roll < 0.92 {
            format!("SubClassOf: some(r{r}, C{other}), C{sink}")
        } else {
            let mut rs: Vec<usize> = (0..n_roles).collect();
            rs.shuffle(&mut rng);
            let (a, b) = (rs[0].min(rs[1]), rs[0].max(rs[1]));
            format!("SubRoleOf: r{b}, r{a}")
        };
        if seen.insert(ax.clone()) {
            ordered.push(ax);
        }
    }

    let mut out = String::new();
    let _ = writeln!(out, "# synthetic benchmark ontology: {n} axioms, seed {seed}");
    for c in 0..n_classes {
        let _ = writeln!(out, "Class: C{c}");
    }
    for r in 0..n_roles {
        let _ = writeln!(out, "Role: r{r}");
    }
    for ax in ordered {
        out.push_str(&ax);
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Timing {
    pub samples: Vec<f64>,
    pub median: f64,
}

impl Timing {
    fn from_samples(samples: Vec<f64>) -> Self {
        let mut s = samples.clone();
        s.sort_by(f64::total_cmp);
        let median = match s.len() {
            0 => 0.0,
            n if n % 2 == 1 => s[n / 2],
            n => (s[n / 2 - 1] + s[n / 2]) / 2.0,
        };
        Self { samples, median }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub repetitions: usize,
    pub classes: usize,
    pub roles: usize,
    pub axioms: usize,
    pub normalized_axioms: usize,
    pub fresh_names: usize,
    pub parse_ms: Timing,
    pub normalize_ms: Timing,
    pub saturate_ms: Timing,
    pub derived_facts: u64,
    /// Bytes, estimated from fact and term counts rather than measured.
    pub peak_memory_estimate: u64,
    pub completed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Per-fact and per-term byte costs behind [`BenchReport::peak_memory_estimate`]:
/// a derived fact lives in a vector and a hash set, a concept carries its
/// rule indices and name.
const BYTES_PER_FACT: u64 = 24;
const BYTES_PER_CONCEPT: u64 = 96;
const BYTES_PER_AXIOM: u64 = 32;

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1000.0
}

/// Times each phase `repetitions` times. Input errors are returned as is; a
/// derived-fact overflow yields a partial report with `completed == false`.
pub fn run(text: &str, repetitions: usize, config: SaturationConfig) -> Result<BenchReport, OntologyError> {
    let reps = repetitions.max(1);
    let (mut parse, mut norm, mut sat) = (Vec::new(), Vec::new(), Vec::new());
    let mut report = None;
    for _ in 0..reps {
        let t = Instant::now();
        let o = parse_ontology(text)?;
        parse.push(ms(t));
        let t = Instant::now();
        let nt = normalize(&o);
        norm.push(ms(t));
        let t = Instant::now();
        let result = saturate_with(&nt, config);
        sat.push(ms(t));
        let concepts = nt.concept_count() as u64;
        let axioms = nt.axioms().len() as u64 + nt.role_inclusions().len() as u64;
        let (facts, completed, error) = match result {
            Ok(state) => (state.derived_facts(), true, None),
            Err(e @ OntologyError::ResourceLimit { facts, .. }) => (facts, false, Some(e.to_string())),
            Err(e) => return Err(e),
        };
        report = Some(BenchReport {
            repetitions: reps,
            classes: o.vocab.class_count(),
            roles: o.vocab.role_count(),
            axioms: o.tbox.len(),
            normalized_axioms: axioms as usize,
            fresh_names: nt.fresh_names().count(),
            parse_ms: Timing::from_samples(vec![]),
            normalize_ms: Timing::from_samples(vec![]),
            saturate_ms: Timing::from_samples(vec![]),
            derived_facts: facts,
            peak_memory_estimate: facts * BYTES_PER_FACT + concepts * BYTES_PER_CONCEPT + axioms * BYTES_PER_AXIOM,
            completed,
            error,
        });
        if !completed {
            break;
        }
    }
    let mut r = report.expect("at least one repetition");
    r.repetitions = parse.len();
    r.parse_ms = Timing::from_samples(parse);
    r.normalize_ms = Timing::from_samples(norm);
    r.saturate_ms = Timing::from_samples(sat);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_is_deterministic_and_sized() {
        let a = generate(300, 7);
        assert_eq!(a, generate(300, 7));
        assert_ne!(a, generate(300, 8));
        let o = parse_ontology(&a).unwrap();
        assert!(o.tbox.len() >= 300);
        let tiny = parse_ontology(&generate(1, 1)).unwrap();
        assert!(!tiny.tbox.is_empty());
    }

    #[test]
    fn report_has_raw_samples_and_median() {
        let r = run(&generate(50, 1), 3, SaturationConfig::default()).unwrap();
        assert_eq!(r.parse_ms.samples.len(), 3);
        assert_eq!(r.saturate_ms.samples.len(), 3);
        assert!(r.completed);
        assert!(r.derived_facts > 0);
        let mut s = r.saturate_ms.samples.clone();
        s.sort_by(f64::total_cmp);
        assert_eq!(r.saturate_ms.median, s[1]);
    }

    #[test]
    fn resource_limit_gives_partial_report() {
        let r = run(&generate(200, 3), 3, SaturationConfig { max_facts: 10 }).unwrap();
        assert!(!r.completed);
        assert_eq!(r.repetitions, 1);
        assert!(r.derived_facts > 10);
        assert!(r.error.unwrap().contains("10"));
    }

    #[test]
    fn median_of_even_count() {
        assert_eq!(Timing::from_samples(vec![4.0, 1.0, 3.0, 2.0]).median, 2.5);
    }
}
