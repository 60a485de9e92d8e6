//! Central Knowledge Representation.
//!
//! Scans a flat domain knowledge base and derives the typed schema every other
//! stage is grounded on: attribute kinds, numeric ranges, categorical
//! vocabularies, the operators each attribute admits, `has-attribute`
//! relations, and the lexicon of surface strings that point back into it.
//!
//! Nothing here branches on attribute names; the same code path serves any
//! domain.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::text;

/// Upper bound on the vocabulary size of an inferred categorical attribute.
pub const MAX_CATEGORICAL_VALUES: usize = 50;

/// A scalar field value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Num(f64),
    Str(String),
}

impl Value {
    /// Numeric view; strings that parse as numbers count.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Num(n) => Some(*n),
            Value::Str(s) => s.trim().parse::<f64>().ok().filter(|v| v.is_finite()),
            Value::Bool(_) => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            Value::Str(s) => match s.trim().to_lowercase().as_str() {
                "true" => Some(true),
                "false" => Some(false),
                _ => None,
            },
            Value::Num(_) => None,
        }
    }

    /// Canonical case-folded key used for equality, counting and vocabularies.
    pub fn key(&self) -> String {
        match self {
            Value::Bool(b) => b.to_string(),
            Value::Num(n) => text::format_number(*n),
            Value::Str(s) => s.trim().to_lowercase(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Num(n) => f.write_str(&text::format_number(*n)),
            Value::Str(s) => f.write_str(s),
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_string())
    }
}

impl From<f64> for Value {
    fn from(n: f64) -> Self {
        Value::Num(n)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

/// One row of the domain database.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainRecord {
    pub entity_type: String,
    pub id: String,
    pub fields: BTreeMap<String, Value>,
}

impl DomainRecord {
    pub fn get(&self, attribute: &str) -> Option<&Value> {
        self.fields.get(attribute)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AttributeKind {
    Numeric,
    Categorical,
    Boolean,
    Text,
}

impl AttributeKind {
    /// Operators an attribute of this kind admits.
    pub fn operators(self) -> &'static [Operator] {
        use Operator::*;
        match self {
            AttributeKind::Numeric => &[Eq, Neq, Lt, Lte, Gt, Gte],
            AttributeKind::Categorical | AttributeKind::Boolean => &[Eq, Neq, In],
            AttributeKind::Text => &[Eq, Contains],
        }
    }
}

impl fmt::Display for AttributeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AttributeKind::Numeric => "NUMERIC",
            AttributeKind::Categorical => "CATEGORICAL",
            AttributeKind::Boolean => "BOOLEAN",
            AttributeKind::Text => "TEXT",
        };
        f.write_str(s)
    }
}

/// Comparison operators usable in constraints and query edges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Operator {
    Eq,
    Neq,
    Lt,
    Lte,
    Gt,
    Gte,
    In,
    Contains,
}

impl Operator {
    pub const ALL: [Operator; 8] = [
        Operator::Eq,
        Operator::Neq,
        Operator::Lt,
        Operator::Lte,
        Operator::Gt,
        Operator::Gte,
        Operator::In,
        Operator::Contains,
    ];
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Operator::Eq => "EQ",
            Operator::Neq => "NEQ",
            Operator::Lt => "LT",
            Operator::Lte => "LTE",
            Operator::Gt => "GT",
            Operator::Gte => "GTE",
            Operator::In => "IN",
            Operator::Contains => "CONTAINS",
        };
        f.write_str(s)
    }
}

/// Domain records plus optional kind overrides.
#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeBase {
    pub records: Vec<DomainRecord>,
    pub schema_overrides: BTreeMap<String, AttributeKind>,
}

#[derive(Deserialize)]
struct KbFile {
    entity_type: String,
    records: Vec<serde_json::Map<String, serde_json::Value>>,
    #[serde(default)]
    schema_overrides: BTreeMap<String, AttributeKind>,
}

impl KnowledgeBase {
    pub fn new(records: Vec<DomainRecord>) -> Self {
        Self {
            records,
            schema_overrides: BTreeMap::new(),
        }
    }

    /// Parses the KB file format: `{"entity_type": .., "records": [{"id": .., ..}]}`.
    ///
    /// A record may repeat `entity_type`; any other nested value is rejected.
    pub fn from_json(json: &str) -> Result<Self> {
        let file: KbFile = serde_json::from_str(json)
            .map_err(|e| Error::MalformedKnowledgeBase(e.to_string()))?;
        let mut records = Vec::with_capacity(file.records.len());
        for (index, raw) in file.records.into_iter().enumerate() {
            let id = match raw.get("id") {
                Some(serde_json::Value::String(s)) => s.clone(),
                Some(serde_json::Value::Number(n)) => n.to_string(),
                _ => {
                    return Err(Error::MalformedKnowledgeBase(format!(
                        "record #{index} has no string id"
                    )))
                }
            };
            let entity_type = match raw.get("entity_type") {
                Some(serde_json::Value::String(s)) => s.clone(),
                Some(_) => {
                    return Err(Error::NonScalarField {
                        record: id,
                        field: "entity_type".into(),
                    })
                }
                None => file.entity_type.clone(),
            };
            let mut fields = BTreeMap::new();
            for (name, value) in raw {
                if name == "id" || name == "entity_type" {
                    continue;
                }
                let value = match value {
                    serde_json::Value::Bool(b) => Value::Bool(b),
                    serde_json::Value::Number(n) => match n.as_f64() {
                        Some(v) => Value::Num(v),
                        None => {
                            return Err(Error::NonScalarField {
                                record: id,
                                field: name,
                            })
                        }
                    },
                    serde_json::Value::String(s) => Value::Str(s),
                    _ => {
                        return Err(Error::NonScalarField {
                            record: id,
                            field: name,
                        })
                    }
                };
                fields.insert(name, value);
            }
            records.push(DomainRecord {
                entity_type,
                id,
                fields,
            });
        }
        Ok(Self {
            records,
            schema_overrides: file.schema_overrides,
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn entity_type(&self) -> Option<&str> {
        self.records.first().map(|r| r.entity_type.as_str())
    }

    pub fn to_json(&self) -> String {
        let records: Vec<serde_json::Value> = self
            .records
            .iter()
            .map(|r| {
                let mut obj = serde_json::Map::new();
                obj.insert("id".into(), r.id.clone().into());
                for (k, v) in &r.fields {
                    obj.insert(k.clone(), serde_json::to_value(v).expect("scalar"));
                }
                serde_json::Value::Object(obj)
            })
            .collect();
        let mut root = serde_json::json!({
            "entity_type": self.entity_type().unwrap_or_default(),
            "records": records,
        });
        if !self.schema_overrides.is_empty() {
            root["schema_overrides"] = serde_json::to_value(&self.schema_overrides).expect("kinds");
        }
        serde_json::to_string_pretty(&root).expect("json")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub display_name: String,
    pub kind: AttributeKind,
    pub numeric_range: Option<[f64; 2]>,
    pub vocabulary: Option<Vec<String>>,
    pub allowed_operators: Vec<Operator>,
    pub aliases: Vec<String>,
}

impl AttributeSpec {
    pub fn allows(&self, op: Operator) -> bool {
        self.allowed_operators.contains(&op)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub name: String,
    pub source: String,
    pub target: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ckr {
    pub entity_type: String,
    pub attributes: Vec<AttributeSpec>,
    pub relations: Vec<Relation>,
    pub fingerprint: String,
}

#[derive(Serialize)]
struct CkrContent<'a> {
    entity_type: &'a str,
    attributes: &'a [AttributeSpec],
    relations: &'a [Relation],
}

impl Ckr {
    pub fn attribute(&self, name: &str) -> Option<&AttributeSpec> {
        self.attributes
            .binary_search_by(|a| a.name.as_str().cmp(name))
            .ok()
            .map(|i| &self.attributes[i])
    }

    /// SHA-256 over the canonical serialization of everything but the fingerprint.
    pub fn compute_fingerprint(&self) -> String {
        let content = CkrContent {
            entity_type: &self.entity_type,
            attributes: &self.attributes,
            relations: &self.relations,
        };
        let bytes = serde_json::to_vec(&content).expect("ckr serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Canonical JSON export; attributes are kept sorted by name so the
    /// output is byte-stable.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("ckr serializes")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// `#bedroom` -> `bedrooms`, `pets_ok` -> `pets ok`.
fn display_name(name: &str) -> String {
    let base = name.trim_start_matches('#').replace('_', " ");
    if name.starts_with('#') && !base.ends_with('s') {
        format!("{base}s")
    } else {
        base
    }
}

fn seed_aliases(name: &str) -> Vec<String> {
    let stripped = name.replace('#', "").replace('_', " ");
    let mut out: Vec<String> = Vec::new();
    for alias in [name.to_string(), stripped, name.to_lowercase()] {
        let alias = alias.trim().to_string();
        if !alias.is_empty() && !out.contains(&alias) {
            out.push(alias);
        }
    }
    out
}

fn infer_kind(values: &[&Value], record_count: usize) -> AttributeKind {
    if values.iter().all(|v| v.as_f64().is_some()) {
        return AttributeKind::Numeric;
    }
    if values.iter().all(|v| v.as_bool().is_some()) {
        return AttributeKind::Boolean;
    }
    let distinct: BTreeSet<String> = values.iter().map(|v| v.key()).collect();
    let limit = MAX_CATEGORICAL_VALUES.min(record_count.div_ceil(2));
    if distinct.len() <= limit {
        AttributeKind::Categorical
    } else {
        AttributeKind::Text
    }
}

/// Builds the CKR for a single-entity knowledge base.
pub fn build_ckr(kb: &KnowledgeBase) -> Result<Ckr> {
    let first = kb.records.first().ok_or(Error::EmptyKnowledgeBase)?;
    let entity_type = first.entity_type.clone();
    if let Some(other) = kb.records.iter().find(|r| r.entity_type != entity_type) {
        return Err(Error::MixedEntityTypes(entity_type, other.entity_type.clone()));
    }

    let mut by_field: BTreeMap<&str, Vec<&Value>> = BTreeMap::new();
    for record in &kb.records {
        for (name, value) in &record.fields {
            by_field.entry(name.as_str()).or_default().push(value);
        }
    }
    if let Some(unknown) = kb
        .schema_overrides
        .keys()
        .find(|k| !by_field.contains_key(k.as_str()))
    {
        return Err(Error::MalformedKnowledgeBase(format!(
            "schema override for unknown field {unknown:?}"
        )));
    }

    let record_count = kb.records.len();
    let mut attributes = Vec::with_capacity(by_field.len());
    for (name, values) in &by_field {
        let kind = kb
            .schema_overrides
            .get(*name)
            .copied()
            .unwrap_or_else(|| infer_kind(values, record_count));

        let numeric_range = match kind {
            AttributeKind::Numeric => {
                let nums: Vec<f64> = values.iter().filter_map(|v| v.as_f64()).collect();
                if nums.len() != values.len() {
                    return Err(Error::MalformedKnowledgeBase(format!(
                        "field {name:?} is declared NUMERIC but holds non-numeric values"
                    )));
                }
                let min = nums.iter().copied().fold(f64::INFINITY, f64::min);
                let max = nums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                Some([min, max])
            }
            _ => None,
        };
        let vocabulary = match kind {
            AttributeKind::Categorical => {
                let distinct: BTreeSet<String> = values.iter().map(|v| v.key()).collect();
                Some(distinct.into_iter().collect())
            }
            _ => None,
        };

        attributes.push(AttributeSpec {
            name: name.to_string(),
            display_name: display_name(name),
            kind,
            numeric_range,
            vocabulary,
            allowed_operators: kind.operators().to_vec(),
            aliases: seed_aliases(name),
        });
    }

    let relations = attributes
        .iter()
        .map(|a| Relation {
            name: "has-attribute".into(),
            source: entity_type.clone(),
            target: a.name.clone(),
        })
        .collect();

    let mut ckr = Ckr {
        entity_type,
        attributes,
        relations,
        fingerprint: String::new(),
    };
    ckr.fingerprint = ckr.compute_fingerprint();
    Ok(ckr)
}

/// A reference from a surface string into the CKR.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CkrRef {
    Attribute { attribute: String },
    Value { attribute: String, value: String },
}

impl CkrRef {
    pub fn attribute(&self) -> &str {
        match self {
            CkrRef::Attribute { attribute } | CkrRef::Value { attribute, .. } => attribute,
        }
    }
}

/// Surface string (normalized, case-folded) to CKR element.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    entries: BTreeMap<String, CkrRef>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts `surface` unless the normalized key is already taken.
    /// Returns whether the entry was added.
    pub fn insert(&mut self, surface: &str, target: CkrRef) -> bool {
        let key = text::normalize(surface);
        if key.is_empty() || self.entries.contains_key(&key) {
            return false;
        }
        self.entries.insert(key, target);
        true
    }

    pub fn get(&self, key: &str) -> Option<&CkrRef> {
        self.entries.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &CkrRef)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Exports aliases and categorical vocabulary values as lexicon keys.
///
/// Attribute aliases are inserted before any value, so on a key collision the
/// attribute wins; between values the attribute earliest in name order wins.
pub fn export_lexicon(ckr: &Ckr) -> Lexicon {
    let mut lexicon = Lexicon::new();
    for attr in &ckr.attributes {
        for alias in &attr.aliases {
            lexicon.insert(
                alias,
                CkrRef::Attribute {
                    attribute: attr.name.clone(),
                },
            );
        }
    }
    for attr in &ckr.attributes {
        if attr.kind != AttributeKind::Categorical {
            continue;
        }
        for value in attr.vocabulary.iter().flatten() {
            lexicon.insert(
                value,
                CkrRef::Value {
                    attribute: attr.name.clone(),
                    value: value.clone(),
                },
            );
        }
    }
    lexicon
}

/// Lists every broken CKR invariant; empty means well-formed.
pub fn validate_ckr(ckr: &Ckr) -> Vec<String> {
    let mut violations = Vec::new();
    let mut seen = BTreeSet::new();

    for attr in &ckr.attributes {
        let name = &attr.name;
        if !seen.insert(name.as_str()) {
            violations.push(format!("attribute {name:?}: names must be unique"));
        }
        match attr.kind {
            AttributeKind::Numeric => match attr.numeric_range {
                None => violations.push(format!("attribute {name:?}: NUMERIC requires a numeric range")),
                // NaN bounds fail too.
                Some([min, max]) if min.partial_cmp(&max).is_none_or(|o| o.is_gt()) => {
                    violations.push(format!("attribute {name:?}: range violates min ≤ max ({min} > {max})"))
                }
                _ => {}
            },
            AttributeKind::Categorical if attr.vocabulary.as_ref().is_none_or(|v| v.is_empty()) => {
                violations.push(format!("attribute {name:?}: CATEGORICAL requires a non-empty vocabulary"));
            }
            _ => {}
        }
        if attr.allowed_operators.is_empty() {
            violations.push(format!("attribute {name:?}: allowed operators must be non-empty"));
        }
        for op in &attr.allowed_operators {
            if !attr.kind.operators().contains(op) {
                violations.push(format!(
                    "attribute {name:?}: operator {op} is inconsistent with kind {}",
                    attr.kind
                ));
            }
        }
    }
    if ckr.attributes.windows(2).any(|w| w[0].name > w[1].name) {
        violations.push("attributes: declaration order must be lexicographic by name".into());
    }
    for rel in &ckr.relations {
        if rel.source != ckr.entity_type && !seen.contains(rel.source.as_str()) {
            violations.push(format!("relation {:?}: unknown source {:?}", rel.name, rel.source));
        }
        if rel.target != ckr.entity_type && !seen.contains(rel.target.as_str()) {
            violations.push(format!("relation {:?}: unknown target {:?}", rel.name, rel.target));
        }
    }
    if ckr.fingerprint != ckr.compute_fingerprint() {
        violations.push("fingerprint: does not match content".into());
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, fields: &[(&str, Value)]) -> DomainRecord {
        DomainRecord {
            entity_type: "apartment".into(),
            id: id.into(),
            fields: fields.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        }
    }

    fn four_apartments() -> KnowledgeBase {
        KnowledgeBase::new(
            [1.0, 1.0, 2.0, 3.0]
                .iter()
                .enumerate()
                .map(|(i, &b)| {
                    record(
                        &format!("a{i}"),
                        &[
                            ("#bedroom", Value::Num(b)),
                            ("pets_ok", Value::Bool(i % 2 == 0)),
                        ],
                    )
                })
                .collect(),
        )
    }

    #[test]
    fn numeric_range_inferred() {
        let ckr = build_ckr(&four_apartments()).unwrap();
        let spec = ckr.attribute("#bedroom").unwrap();
        assert_eq!(spec.kind, AttributeKind::Numeric);
        assert_eq!(spec.numeric_range, Some([1.0, 3.0]));
        assert_eq!(spec.allowed_operators.len(), 6);
        assert_eq!(spec.display_name, "bedrooms");
        assert_eq!(spec.aliases, ["#bedroom", "bedroom"]);
    }

    #[test]
    fn boolean_operators() {
        let ckr = build_ckr(&four_apartments()).unwrap();
        let spec = ckr.attribute("pets_ok").unwrap();
        assert_eq!(spec.kind, AttributeKind::Boolean);
        assert_eq!(spec.allowed_operators, [Operator::Eq, Operator::Neq, Operator::In]);
    }

    #[test]
    fn categorical_threshold() {
        let locations = ["chelsea", "soho", "harlem"];
        let kb = KnowledgeBase::new(
            (0..10)
                .map(|i| record(&format!("r{i}"), &[("location", Value::from(locations[i % 3]))]))
                .collect(),
        );
        let ckr = build_ckr(&kb).unwrap();
        let spec = ckr.attribute("location").unwrap();
        assert_eq!(spec.kind, AttributeKind::Categorical);
        assert_eq!(spec.vocabulary.as_ref().unwrap().len(), 3);

        // 6 distinct values over 10 records exceeds ceil(10/2) = 5.
        let kb = KnowledgeBase::new(
            (0..10)
                .map(|i| record(&format!("r{i}"), &[("name", Value::from(format!("n{}", i % 6).as_str()))]))
                .collect(),
        );
        assert_eq!(build_ckr(&kb).unwrap().attributes[0].kind, AttributeKind::Text);
    }

    #[test]
    fn overrides_take_precedence() {
        let mut kb = four_apartments();
        kb.schema_overrides.insert("#bedroom".into(), AttributeKind::Categorical);
        let ckr = build_ckr(&kb).unwrap();
        let spec = ckr.attribute("#bedroom").unwrap();
        assert_eq!(spec.kind, AttributeKind::Categorical);
        assert_eq!(spec.vocabulary.as_deref().unwrap(), ["1", "2", "3"]);

        kb.schema_overrides.insert("pool".into(), AttributeKind::Text);
        assert!(build_ckr(&kb).is_err());
    }

    #[test]
    fn rejects_bad_knowledge_bases() {
        assert!(matches!(build_ckr(&KnowledgeBase::new(vec![])), Err(Error::EmptyKnowledgeBase)));

        let mut kb = four_apartments();
        kb.records[2].entity_type = "restaurant".into();
        assert!(matches!(build_ckr(&kb), Err(Error::MixedEntityTypes(..))));

        let nested = r#"{"entity_type":"x","records":[{"id":"1","tags":["a"]}]}"#;
        assert!(matches!(KnowledgeBase::from_json(nested), Err(Error::NonScalarField { .. })));
    }

    #[test]
    fn fingerprint_ignores_record_order() {
        let kb = four_apartments();
        let mut reversed = kb.clone();
        reversed.records.reverse();
        let a = build_ckr(&kb).unwrap();
        assert_eq!(a.fingerprint, build_ckr(&kb).unwrap().fingerprint);
        assert_eq!(a.fingerprint, build_ckr(&reversed).unwrap().fingerprint);

        let mut changed = kb.clone();
        changed.records[0].fields.insert("#bedroom".into(), Value::Num(4.0));
        assert_ne!(a.fingerprint, build_ckr(&changed).unwrap().fingerprint);
    }

    #[test]
    fn lexicon_contains_aliases_and_values() {
        let kb = KnowledgeBase::new(vec![
            record("1", &[("#bedroom", Value::Num(1.0)), ("location", Value::from("Chelsea")), ("blurb", Value::from("x"))]),
            record("2", &[("#bedroom", Value::Num(2.0)), ("location", Value::from("chelsea")), ("blurb", Value::from("y"))]),
        ]);
        let mut kb = kb;
        kb.schema_overrides.insert("blurb".into(), AttributeKind::Text);
        let ckr = build_ckr(&kb).unwrap();
        let lexicon = export_lexicon(&ckr);
        let bedroom = CkrRef::Attribute { attribute: "#bedroom".into() };
        assert_eq!(lexicon.get("#bedroom"), Some(&bedroom));
        assert_eq!(lexicon.get("bedroom"), Some(&bedroom));
        assert_eq!(
            lexicon.get("chelsea"),
            Some(&CkrRef::Value { attribute: "location".into(), value: "chelsea".into() })
        );
        // TEXT attribute: aliases only.
        let blurb_keys: Vec<_> = lexicon.iter().filter(|(_, r)| r.attribute() == "blurb").map(|(k, _)| k).collect();
        assert_eq!(blurb_keys, ["blurb"]);
        for (_, target) in lexicon.iter() {
            assert!(ckr.attribute(target.attribute()).is_some());
        }
    }

    #[test]
    fn validation() {
        let ckr = build_ckr(&four_apartments()).unwrap();
        assert!(validate_ckr(&ckr).is_empty());

        let mut bad = ckr.clone();
        bad.attributes[0].numeric_range = Some([5.0, 2.0]);
        bad.fingerprint = bad.compute_fingerprint();
        let v = validate_ckr(&bad);
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("min ≤ max") && v[0].contains("#bedroom"));

        let mut bad = ckr.clone();
        bad.attributes[1].kind = AttributeKind::Categorical;
        bad.attributes[1].vocabulary = Some(vec![]);
        bad.fingerprint = bad.compute_fingerprint();
        let v = validate_ckr(&bad);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].contains("pets_ok"));
    }

    #[test]
    fn canonical_json_roundtrip() {
        let ckr = build_ckr(&four_apartments()).unwrap();
        let json = ckr.to_canonical_json();
        let back = Ckr::from_json(&json).unwrap();
        assert_eq!(back, ckr);
        assert_eq!(back.to_canonical_json(), json);
    }
}
