//! Dialog state tracking and the turn policy.
//!
//! The state is a set of attribute constraints (at most one per attribute)
//! plus the history of system acts. Each turn either presents results or asks
//! for the unconstrained attribute whose values are most evenly spread over
//! the current results (maximum entropy, i.e. maximum expected information
//! gain for an attribute-value question).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ckr::{AttributeKind, AttributeSpec, Ckr, CkrRef, Operator, Value};
use crate::error::{Error, Result};
use crate::matcher::MatchMethod;
use crate::nlu::{DelexUtterance, IntentLabel, PlaceholderSource};
use crate::query::ResultSet;

/// Where a constraint came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Source {
    Literal,
    Fuzzy,
    Vector,
    Wizard,
}

impl From<MatchMethod> for Source {
    fn from(m: MatchMethod) -> Self {
        match m {
            MatchMethod::Literal => Source::Literal,
            MatchMethod::Fuzzy => Source::Fuzzy,
            MatchMethod::Vector => Source::Vector,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub turn: usize,
    pub source: Source,
}

/// A scalar, or a list for `IN`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConstraintValue {
    One(Value),
    Many(Vec<Value>),
}

impl fmt::Display for ConstraintValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintValue::One(v) => write!(f, "{v}"),
            ConstraintValue::Many(vs) => {
                let parts: Vec<String> = vs.iter().map(|v| v.to_string()).collect();
                write!(f, "[{}]", parts.join(", "))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub attribute: String,
    pub operator: Operator,
    pub value: ConstraintValue,
    pub provenance: Provenance,
}

impl Constraint {
    pub fn new(attribute: &str, operator: Operator, value: impl Into<Value>, source: Source) -> Self {
        Self {
            attribute: attribute.to_string(),
            operator,
            value: ConstraintValue::One(value.into()),
            provenance: Provenance { turn: 0, source },
        }
    }

    /// Checks the operator and value shape against the attribute's spec.
    pub fn validate(&self, ckr: &Ckr) -> Result<()> {
        let spec = ckr
            .attribute(&self.attribute)
            .ok_or_else(|| Error::UnknownAttribute(self.attribute.clone()))?;
        if !spec.allows(self.operator) {
            return Err(Error::OperatorNotAllowed {
                attribute: self.attribute.clone(),
                operator: self.operator.to_string(),
            });
        }
        let mismatch = |detail: String| Error::TypeMismatch {
            attribute: self.attribute.clone(),
            detail,
        };
        let scalars: Vec<&Value> = match (&self.value, self.operator) {
            (ConstraintValue::Many(vs), Operator::In) if !vs.is_empty() => vs.iter().collect(),
            (ConstraintValue::One(v), op) if op != Operator::In => vec![v],
            (v, op) => return Err(mismatch(format!("operator {op} cannot take value {v}"))),
        };
        for v in scalars {
            let ok = match spec.kind {
                AttributeKind::Numeric => v.as_f64().is_some(),
                AttributeKind::Boolean => v.as_bool().is_some(),
                AttributeKind::Categorical => true,
                AttributeKind::Text => matches!(v, Value::Str(_)),
            };
            if !ok {
                return Err(mismatch(format!("value {v} does not fit kind {}", spec.kind)));
            }
        }
        Ok(())
    }
}

/// A system dialog act.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "act", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DialogAct {
    RequestSlot { attribute: String },
    PresentResults { record_ids: Vec<String> },
    Confirm { constraint: Constraint },
    Greet,
    Farewell,
    Clarify { reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActKind {
    RequestSlot,
    PresentResults,
    Confirm,
    Greet,
    Farewell,
    Clarify,
}

impl ActKind {
    pub const ALL: [ActKind; 6] = [
        ActKind::RequestSlot,
        ActKind::PresentResults,
        ActKind::Confirm,
        ActKind::Greet,
        ActKind::Farewell,
        ActKind::Clarify,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActKind::RequestSlot => "REQUEST_SLOT",
            ActKind::PresentResults => "PRESENT_RESULTS",
            ActKind::Confirm => "CONFIRM",
            ActKind::Greet => "GREET",
            ActKind::Farewell => "FAREWELL",
            ActKind::Clarify => "CLARIFY",
        }
    }
}

impl fmt::Display for ActKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ActKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ActKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Template(format!("unknown act kind {s:?}")))
    }
}

impl DialogAct {
    pub fn kind(&self) -> ActKind {
        match self {
            DialogAct::RequestSlot { .. } => ActKind::RequestSlot,
            DialogAct::PresentResults { .. } => ActKind::PresentResults,
            DialogAct::Confirm { .. } => ActKind::Confirm,
            DialogAct::Greet => ActKind::Greet,
            DialogAct::Farewell => ActKind::Farewell,
            DialogAct::Clarify { .. } => ActKind::Clarify,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DialogState {
    pub entity_type: String,
    /// Sorted by attribute name, at most one per attribute.
    pub constraints: Vec<Constraint>,
    pub acts: Vec<DialogAct>,
    pub last_result_count: Option<usize>,
    /// Clarification-worthy observations, e.g. deleting an unset attribute.
    #[serde(default)]
    pub notes: Vec<String>,
}

impl DialogState {
    pub fn new(entity_type: &str) -> Self {
        Self {
            entity_type: entity_type.to_string(),
            constraints: Vec::new(),
            acts: Vec::new(),
            last_result_count: None,
            notes: Vec::new(),
        }
    }

    pub fn constraint(&self, attribute: &str) -> Option<&Constraint> {
        self.constraints.iter().find(|c| c.attribute == attribute)
    }

    pub fn is_constrained(&self, attribute: &str) -> bool {
        self.constraint(attribute).is_some()
    }

    /// The slot asked for by the most recent act, if it was a request.
    pub fn pending_slot(&self) -> Option<&str> {
        match self.acts.last() {
            Some(DialogAct::RequestSlot { attribute }) => Some(attribute),
            _ => None,
        }
    }

    pub fn record_act(&mut self, act: DialogAct) {
        self.acts.push(act);
    }

    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("state serializes")
    }

    /// SHA-256 of the canonical JSON.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_canonical_json().as_bytes()))
    }

    fn upsert(&mut self, constraint: Constraint) {
        match self
            .constraints
            .binary_search_by(|c| c.attribute.as_str().cmp(&constraint.attribute))
        {
            Ok(i) => self.constraints[i] = constraint,
            Err(i) => self.constraints.insert(i, constraint),
        }
    }

    fn remove(&mut self, attribute: &str) -> bool {
        let before = self.constraints.len();
        self.constraints.retain(|c| c.attribute != attribute);
        before != self.constraints.len()
    }
}

/// A state change suggested by one utterance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Proposal {
    Set { constraint: Constraint },
    Remove { attribute: String },
}

impl Proposal {
    pub fn attribute(&self) -> &str {
        match self {
            Proposal::Set { constraint } => &constraint.attribute,
            Proposal::Remove { attribute } => attribute,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Interpretation {
    pub proposals: Vec<Proposal>,
    /// Soft errors; they never abort the turn but may prompt a clarification.
    pub issues: Vec<String>,
}

const NEGATION_CUES: &[&str] = &["no", "not", "without"];

/// Matches a comparative cue ending right before `pos` (or, for the
/// "or more" family, starting right after it).
fn comparative_cue(tokens: &[String], pos: usize) -> Option<Operator> {
    let before = |n: usize| -> Option<String> {
        (pos >= n).then(|| tokens[pos - n..pos].join(" "))
    };
    let after = |n: usize| -> Option<String> {
        (pos + 1 + n <= tokens.len()).then(|| tokens[pos + 1..pos + 1 + n].join(" "))
    };
    let two = before(2);
    let two = two.as_deref();
    let one = before(1);
    let one = one.as_deref();
    match (two, one) {
        (Some("at least" | "no less" | "or more"), _) => return Some(Operator::Gte),
        (Some("at most" | "up to" | "no more"), _) => return Some(Operator::Lte),
        (Some("less than" | "fewer than" | "cheaper than"), _) => return Some(Operator::Lt),
        (Some("more than" | "greater than" | "larger than"), _) => return Some(Operator::Gt),
        _ => {}
    }
    match one {
        Some("under" | "below" | "less") => return Some(Operator::Lt),
        Some("over" | "above" | "more") => return Some(Operator::Gt),
        Some("min" | "minimum") => return Some(Operator::Gte),
        Some("max" | "maximum") => return Some(Operator::Lte),
        _ => {}
    }
    match after(2).as_deref() {
        Some("or more" | "or above") => Some(Operator::Gte),
        Some("or less" | "or fewer" | "or below") => Some(Operator::Lte),
        _ => None,
    }
}

struct Slot<'a> {
    pos: usize,
    attribute: &'a str,
    method: MatchMethod,
}

/// Grounds a delexicalized utterance into proposed state changes.
///
/// `pending_slot` is the attribute the system just asked for; a bare number
/// with no attribute next to it is taken as the answer to that question.
pub fn interpret(delex: &DelexUtterance, intent: IntentLabel, ckr: &Ckr, pending_slot: Option<&str>) -> Interpretation {
    let tokens = &delex.tokens;
    let mut values: BTreeMap<&str, Vec<(usize, &str, MatchMethod)>> = BTreeMap::new();
    let mut attrs: Vec<Slot<'_>> = Vec::new();
    let mut numbers: Vec<(usize, f64)> = Vec::new();

    for p in &delex.alignment {
        match &p.source {
            PlaceholderSource::Number { value } => numbers.push((p.position, *value)),
            PlaceholderSource::Match { candidate } => match &candidate.target {
                CkrRef::Value { attribute, value } => {
                    values
                        .entry(attribute)
                        .or_default()
                        .push((p.position, value, candidate.method))
                }
                CkrRef::Attribute { attribute } => attrs.push(Slot {
                    pos: p.position,
                    attribute,
                    method: candidate.method,
                }),
            },
        }
    }

    let mut out = Interpretation::default();
    let mut sets: Vec<Constraint> = Vec::new();
    let mut removals: Vec<String> = Vec::new();
    let mut bound_attrs = vec![false; attrs.len()];

    for (pos, number) in &numbers {
        let nearest = attrs
            .iter()
            .enumerate()
            .filter(|(i, s)| {
                !bound_attrs[*i]
                    && s.pos.abs_diff(*pos) <= 2
                    && ckr.attribute(s.attribute).is_some_and(|a| a.kind == AttributeKind::Numeric)
            })
            // Nearest first; on equal distance prefer the attribute after the number.
            .min_by_key(|(_, s)| (s.pos.abs_diff(*pos), s.pos < *pos));
        let (attribute, source) = match nearest {
            Some((i, slot)) => {
                bound_attrs[i] = true;
                (slot.attribute.to_string(), Source::from(slot.method))
            }
            None => match pending_slot.filter(|s| ckr.attribute(s).is_some_and(|a| a.kind == AttributeKind::Numeric)) {
                Some(slot) => (slot.to_string(), Source::Literal),
                None => {
                    out.issues.push(format!("number {number} is not attached to any attribute"));
                    continue;
                }
            },
        };
        let operator = comparative_cue(tokens, *pos).unwrap_or(Operator::Eq);
        sets.push(Constraint {
            attribute,
            operator,
            value: ConstraintValue::One(Value::Num(*number)),
            provenance: Provenance { turn: 0, source },
        });
    }

    for (attribute, hits) in &values {
        let source = Source::from(hits[0].2);
        let negated = hits.len() == 1 && hits[0].0 > 0 && matches!(tokens[hits[0].0 - 1].as_str(), "not" | "except");
        let (operator, value) = if hits.len() == 1 {
            let op = if negated { Operator::Neq } else { Operator::Eq };
            (op, ConstraintValue::One(Value::from(hits[0].1)))
        } else {
            let mut vs: Vec<&str> = hits.iter().map(|h| h.1).collect();
            vs.dedup();
            if vs.len() == 1 {
                (Operator::Eq, ConstraintValue::One(Value::from(vs[0])))
            } else {
                (Operator::In, ConstraintValue::Many(vs.into_iter().map(Value::from).collect()))
            }
        };
        sets.push(Constraint {
            attribute: attribute.to_string(),
            operator,
            value,
            provenance: Provenance { turn: 0, source },
        });
    }

    for (i, slot) in attrs.iter().enumerate() {
        if bound_attrs[i] || sets.iter().any(|c| c.attribute == slot.attribute) {
            continue;
        }
        let Some(spec) = ckr.attribute(slot.attribute) else { continue };
        if intent == IntentLabel::Delete {
            removals.push(spec.name.clone());
        } else if spec.kind == AttributeKind::Boolean {
            let lo = slot.pos.saturating_sub(2);
            let negated = tokens[lo..slot.pos].iter().any(|t| NEGATION_CUES.contains(&t.as_str()));
            sets.push(Constraint {
                attribute: spec.name.clone(),
                operator: Operator::Eq,
                value: ConstraintValue::One(Value::Bool(!negated)),
                provenance: Provenance {
                    turn: 0,
                    source: Source::from(slot.method),
                },
            });
        }
    }

    // One proposal per attribute; the first grounding wins.
    let mut seen = std::collections::BTreeSet::new();
    sets.retain(|c| seen.insert(c.attribute.clone()));

    if intent == IntentLabel::Delete {
        let named = sets.into_iter().map(|c| c.attribute).chain(removals);
        for attribute in named {
            if !out.proposals.iter().any(|p| p.attribute() == attribute) {
                out.proposals.push(Proposal::Remove { attribute });
            }
        }
        return out;
    }
    for constraint in sets {
        match constraint.validate(ckr) {
            Ok(()) => out.proposals.push(Proposal::Set { constraint }),
            Err(e) => out.issues.push(e.to_string()),
        }
    }
    out
}

/// Applies an intent's proposals, returning a new state; `state` is untouched.
pub fn apply_intent(state: &DialogState, intent: IntentLabel, proposed: &[Proposal], turn: usize) -> DialogState {
    let mut next = state.clone();
    match intent {
        IntentLabel::Add | IntentLabel::Update => {
            for p in proposed {
                if let Proposal::Set { constraint } = p {
                    let mut c = constraint.clone();
                    c.provenance.turn = turn;
                    next.upsert(c);
                }
            }
        }
        IntentLabel::Delete => {
            for p in proposed {
                if !next.remove(p.attribute()) {
                    next.notes.push(format!(
                        "turn {turn}: cannot delete {:?}, it is not constrained",
                        p.attribute()
                    ));
                }
            }
        }
        _ => {}
    }
    next
}

const MISSING: &str = "\u{2205}";
const QUANTILE_BINS: usize = 4;
const MAX_UNBINNED_DISTINCT: usize = 8;

/// Shannon entropy in bits of a count vector. Counts are sorted first so
/// equal distributions give bit-identical results.
pub fn entropy_of_counts(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let n = total as f64;
    sorted
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Entropy of `attribute`'s value distribution over `results`, in bits.
///
/// Records lacking the attribute count as one extra "missing" value. Numeric
/// attributes with more than 8 distinct values are first cut into 4 quantile
/// bins (boundaries at sorted positions ⌊k·n/4⌋, k = 1..3).
pub fn slot_entropy(results: &ResultSet, attribute: &AttributeSpec) -> Result<f64> {
    if results.records.is_empty() {
        return Err(Error::EmptyResults);
    }
    let values: Vec<Option<&Value>> = results.records.iter().map(|r| r.get(&attribute.name)).collect();
    if values.iter().all(Option::is_none) {
        return Err(Error::AttributeAbsent(attribute.name.clone()));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let missing = values.iter().filter(|v| v.is_none()).count();
    if missing > 0 {
        counts.insert(MISSING.into(), missing);
    }

    let numeric: Option<Vec<f64>> = (attribute.kind == AttributeKind::Numeric)
        .then(|| values.iter().flatten().map(|v| v.as_f64()).collect::<Option<Vec<f64>>>())
        .flatten();
    let distinct: std::collections::BTreeSet<String> = values.iter().flatten().map(|v| v.key()).collect();

    match numeric {
        Some(mut nums) if distinct.len() > MAX_UNBINNED_DISTINCT => {
            nums.sort_by(f64::total_cmp);
            let n = nums.len();
            let cuts: Vec<f64> = (1..QUANTILE_BINS).map(|k| nums[k * n / QUANTILE_BINS]).collect();
            for v in &nums {
                let bin = cuts.iter().filter(|&&c| *v >= c).count();
                *counts.entry(format!("bin{bin}")).or_default() += 1;
            }
        }
        _ => {
            for v in values.iter().flatten() {
                *counts.entry(v.key()).or_default() += 1;
            }
        }
    }
    Ok(entropy_of_counts(&counts.values().copied().collect::<Vec<_>>()))
}

/// Entropies closer than this are treated as ties.
pub const ENTROPY_TIE_EPSILON: f64 = 1e-12;

/// Attributes eligible to be requested: unconstrained, not free text, and
/// present in at least one current result.
pub fn requestable<'a>(ckr: &'a Ckr, state: &'a DialogState, results: &'a ResultSet) -> impl Iterator<Item = &'a AttributeSpec> + 'a {
    ckr.attributes.iter().filter(move |a| {
        a.kind != AttributeKind::Text
            && !state.is_constrained(&a.name)
            && results.records.iter().any(|r| r.get(&a.name).is_some())
    })
}

/// The maximum-entropy requestable attribute, ties to CKR declaration order;
/// `None` when no candidate beats `entropy_floor`.
pub fn select_slot(results: &ResultSet, ckr: &Ckr, state: &DialogState, entropy_floor: f64) -> Option<String> {
    if results.records.is_empty() {
        return None;
    }
    let mut best: Option<(&AttributeSpec, f64)> = None;
    for attr in requestable(ckr, state, results) {
        let h = slot_entropy(results, attr).expect("attribute present in results");
        if best.is_none_or(|(_, b)| h > b + ENTROPY_TIE_EPSILON) {
            best = Some((attr, h));
        }
    }
    best.filter(|(_, h)| *h > entropy_floor).map(|(a, _)| a.name.clone())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    /// Present results once at most this many remain.
    pub present_threshold: usize,
    /// Records listed in a results prompt.
    pub max_shown: usize,
    pub entropy_floor: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            present_threshold: 3,
            max_shown: 5,
            entropy_floor: 0.0,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.present_threshold == 0 || self.max_shown == 0 {
            return Err(Error::MatcherConfig(
                "present_threshold and max_shown must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

fn present(results: &ResultSet, config: &PolicyConfig) -> DialogAct {
    DialogAct::PresentResults {
        record_ids: results.ids.iter().take(config.max_shown).cloned().collect(),
    }
}

/// Chooses the system act for this turn.
pub fn decide(
    state: &DialogState,
    results: &ResultSet,
    intent: IntentLabel,
    interpretation: &Interpretation,
    ckr: &Ckr,
    config: &PolicyConfig,
) -> DialogAct {
    match intent {
        IntentLabel::Greet => return DialogAct::Greet,
        IntentLabel::End => return DialogAct::Farewell,
        IntentLabel::ShowResults => return present(results, config),
        IntentLabel::Add | IntentLabel::Update | IntentLabel::Delete if interpretation.proposals.is_empty() => {
            let reason = interpretation.issues.first().cloned().unwrap_or_else(|| match intent {
                IntentLabel::Delete => "no preference to remove was recognized".into(),
                _ => "no preference could be grounded in the domain".into(),
            });
            return DialogAct::Clarify { reason };
        }
        _ => {}
    }
    if results.total <= config.present_threshold {
        return present(results, config);
    }
    match select_slot(results, ckr, state, config.entropy_floor) {
        Some(attribute) => DialogAct::RequestSlot { attribute },
        None => present(results, config),
    }
}
