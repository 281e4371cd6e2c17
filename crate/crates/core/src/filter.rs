//! Context-based communication filter: priority-ordered block/allow rules
//! evaluated against the user's current contexts.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommType {
    Call,
    Sms,
    Email,
}

impl CommType {
    pub const ALL: [CommType; 3] = [CommType::Call, CommType::Sms, CommType::Email];

    pub fn as_str(self) -> &'static str {
        match self {
            CommType::Call => "call",
            CommType::Sms => "sms",
            CommType::Email => "email",
        }
    }
}

impl fmt::Display for CommType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CommType {
    type Err = FilterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "call" => Ok(CommType::Call),
            "sms" => Ok(CommType::Sms),
            "email" => Ok(CommType::Email),
            other => Err(FilterError::BadCommType(other.to_string())),
        }
    }
}

/// The comm type a rule applies to; `any` matches all of them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleCommType {
    Call,
    Sms,
    Email,
    Any,
}

impl RuleCommType {
    pub fn matches(self, t: CommType) -> bool {
        matches!(
            (self, t),
            (RuleCommType::Any, _)
                | (RuleCommType::Call, CommType::Call)
                | (RuleCommType::Sms, CommType::Sms)
                | (RuleCommType::Email, CommType::Email)
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RuleCommType::Call => "call",
            RuleCommType::Sms => "sms",
            RuleCommType::Email => "email",
            RuleCommType::Any => "any",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Block,
    Allow,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Block => "block",
            Action::Allow => "allow",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterRule {
    pub comm_type: RuleCommType,
    pub context: String,
    pub action: Action,
    /// Lower numbers take precedence.
    pub priority: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommEvent {
    pub comm_type: CommType,
    pub sender: String,
    pub ts: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Decision {
    pub action: Action,
    pub matched_rule: Option<FilterRule>,
    pub explanation: String,
}

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("duplicate rule priority {0}")]
    DuplicatePriority(i64),
    #[error("unknown comm type `{0}`")]
    BadCommType(String),
    #[error("cannot read rules: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid rules file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("scenario line {line}: {detail}")]
    Scenario { line: usize, detail: String },
}

/// Rules sorted by priority, with priorities unique.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleSet {
    rules: Vec<FilterRule>,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RulesFile {
    rules: Vec<FilterRule>,
}

impl RuleSet {
    pub fn new(mut rules: Vec<FilterRule>) -> Result<Self, FilterError> {
        let mut seen = HashSet::new();
        for r in &rules {
            if !seen.insert(r.priority) {
                return Err(FilterError::DuplicatePriority(r.priority));
            }
        }
        rules.sort_by_key(|r| r.priority);
        Ok(Self { rules })
    }

    /// Parses `{"rules": [...]}`.
    pub fn from_json(text: &str) -> Result<Self, FilterError> {
        let file: RulesFile = serde_json::from_str(text)?;
        Self::new(file.rules)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FilterError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&RulesFile {
            rules: self.rules.clone(),
        })
        .expect("rules serialize")
    }

    pub fn rules(&self) -> &[FilterRule] {
        &self.rules
    }

    /// Context names the rules mention, sorted.
    pub fn contexts(&self) -> BTreeSet<&str> {
        self.rules.iter().map(|r| r.context.as_str()).collect()
    }

    /// The lowest-priority-number rule matching the comm type and one of the
    /// current contexts decides; with no match the event is allowed.
    pub fn evaluate(&self, contexts: &BTreeSet<String>, comm_type: CommType) -> Decision {
        match self
            .rules
            .iter()
            .find(|r| r.comm_type.matches(comm_type) && contexts.contains(&r.context))
        {
            Some(rule) => Decision {
                action: rule.action,
                explanation: format!(
                    "{} {comm_type}: rule priority {} ({} {} when {}) matched current context {}",
                    rule.action.as_str(),
                    rule.priority,
                    rule.action.as_str(),
                    rule.comm_type.as_str(),
                    rule.context,
                    rule.context
                ),
                matched_rule: Some(rule.clone()),
            },
            None => Decision {
                action: Action::Allow,
                matched_rule: None,
                explanation: format!("allow {comm_type}: no rule matched, default allow"),
            },
        }
    }
}

/// One scripted comm event, offset from scenario start.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScenarioEvent {
    pub t_offset_ms: u64,
    pub comm_type: CommType,
    pub sender: String,
}

/// Reads `t_offset_ms,comm_type,sender` rows; a header row is optional.
pub fn parse_scenario(text: &str) -> Result<Vec<ScenarioEvent>, FilterError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    let mut last = 0u64;
    for (i, row) in reader.records().enumerate() {
        let line = i + 1;
        let row = row.map_err(|e| FilterError::Scenario {
            line: e.position().map(|p| p.line() as usize).unwrap_or(line),
            detail: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(line);
        if i == 0 && row.get(0) == Some("t_offset_ms") {
            continue;
        }
        if row.len() != 3 {
            return Err(FilterError::Scenario {
                line,
                detail: format!("expected 3 fields, found {}", row.len()),
            });
        }
        let t: u64 = row[0].parse().map_err(|_| FilterError::Scenario {
            line,
            detail: format!("bad offset `{}`", &row[0]),
        })?;
        if t < last {
            return Err(FilterError::Scenario {
                line,
                detail: "offsets must not decrease".into(),
            });
        }
        last = t;
        let comm_type = row[1].parse().map_err(|e: FilterError| FilterError::Scenario {
            line,
            detail: e.to_string(),
        })?;
        out.push(ScenarioEvent {
            t_offset_ms: t,
            comm_type,
            sender: row[2].to_string(),
        });
    }
    Ok(out)
}

/// One line of the decision log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionLogEntry {
    pub ts: u64,
    pub comm_type: CommType,
    pub sender: String,
    pub action: Action,
    pub matched_priority: Option<i64>,
    pub explanation: String,
    pub contexts: Vec<String>,
}

impl DecisionLogEntry {
    pub fn new(event: &CommEvent, contexts: &BTreeSet<String>, decision: &Decision) -> Self {
        Self {
            ts: event.ts,
            comm_type: event.comm_type,
            sender: event.sender.clone(),
            action: decision.action,
            matched_priority: decision.matched_rule.as_ref().map(|r| r.priority),
            explanation: decision.explanation.clone(),
            contexts: contexts.iter().cloned().collect(),
        }
    }
}
