//! Query graphs over the in-memory domain database.
//!
//! A graph is one entity node with one labeled edge per constraint; executing
//! it is a conjunctive full scan returning records in ascending id order.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::ckr::{build_ckr, Ckr, DomainRecord, KnowledgeBase, Operator, Value};
use crate::dialog::{ConstraintValue, DialogState};
use crate::error::{Error, Result};

/// Immutable record store bound to the CKR it was built with.
#[derive(Clone, Debug)]
pub struct Database {
    entity_type: String,
    records: Vec<DomainRecord>,
    by_id: HashMap<String, usize>,
    ckr_fingerprint: String,
}

impl Database {
    pub fn records(&self) -> &[DomainRecord] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Option<&DomainRecord> {
        self.by_id.get(id).map(|&i| &self.records[i])
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ckr_fingerprint(&self) -> &str {
        &self.ckr_fingerprint
    }

    pub fn entity_type(&self) -> &str {
        &self.entity_type
    }

    /// Every record, as a result set.
    pub fn all(&self) -> ResultSet {
        ResultSet::from_records(self.records.clone())
    }
}

/// Loads `kb` after checking that `ckr` was built from it.
pub fn load_db(kb: &KnowledgeBase, ckr: &Ckr) -> Result<Database> {
    let mut records = kb.records.clone();
    records.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = records.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(Error::DuplicateId(w[0].id.clone()));
    }
    let rebuilt = build_ckr(kb)?;
    if rebuilt.fingerprint != ckr.fingerprint {
        return Err(Error::FingerprintMismatch {
            expected: ckr.fingerprint.clone(),
            found: rebuilt.fingerprint,
        });
    }
    let by_id = records.iter().enumerate().map(|(i, r)| (r.id.clone(), i)).collect();
    Ok(Database {
        entity_type: rebuilt.entity_type,
        records,
        by_id,
        ckr_fingerprint: rebuilt.fingerprint,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryEdge {
    pub attribute: String,
    pub operator: Operator,
    pub value: ConstraintValue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryGraph {
    pub entity_type: String,
    pub edges: Vec<QueryEdge>,
    pub ckr_fingerprint: String,
}

/// One edge per state constraint, ordered by attribute name.
pub fn build_query_graph(state: &DialogState, ckr: &Ckr) -> Result<QueryGraph> {
    let mut edges = Vec::with_capacity(state.constraints.len());
    for c in &state.constraints {
        c.validate(ckr)?;
        edges.push(QueryEdge {
            attribute: c.attribute.clone(),
            operator: c.operator,
            value: c.value.clone(),
        });
    }
    edges.sort_by(|a, b| a.attribute.cmp(&b.attribute));
    Ok(QueryGraph {
        entity_type: ckr.entity_type.clone(),
        edges,
        ckr_fingerprint: ckr.fingerprint.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultSet {
    pub ids: Vec<String>,
    pub records: Vec<DomainRecord>,
    pub total: usize,
}

impl ResultSet {
    /// Sorts by id and drops duplicate ids.
    pub fn from_records(mut records: Vec<DomainRecord>) -> Self {
        records.sort_by(|a, b| a.id.cmp(&b.id));
        records.dedup_by(|a, b| a.id == b.id);
        Self {
            ids: records.iter().map(|r| r.id.clone()).collect(),
            total: records.len(),
            records,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn get(&self, id: &str) -> Option<&DomainRecord> {
        self.ids.binary_search_by(|x| x.as_str().cmp(id)).ok().map(|i| &self.records[i])
    }
}

fn mismatch(attribute: &str, detail: String) -> Error {
    Error::TypeMismatch {
        attribute: attribute.to_string(),
        detail,
    }
}

fn scalar_eq(attribute: &str, field: &Value, wanted: &Value) -> Result<bool> {
    let incompatible = || mismatch(attribute, format!("cannot compare record value {field} with {wanted}"));
    match (field, wanted) {
        (Value::Str(a), Value::Str(b)) => Ok(a.trim().to_lowercase() == b.trim().to_lowercase()),
        (Value::Num(_), _) | (_, Value::Num(_)) => match (field.as_f64(), wanted.as_f64()) {
            (Some(x), Some(y)) => Ok(x == y),
            _ => Err(incompatible()),
        },
        _ => match (field.as_bool(), wanted.as_bool()) {
            (Some(x), Some(y)) => Ok(x == y),
            _ => Err(incompatible()),
        },
    }
}

fn edge_matches(edge: &QueryEdge, record: &DomainRecord) -> Result<bool> {
    let Some(field) = record.get(&edge.attribute) else {
        return Ok(false);
    };
    let attr = edge.attribute.as_str();
    let one = || match &edge.value {
        ConstraintValue::One(v) => Ok(v),
        ConstraintValue::Many(_) => Err(mismatch(attr, format!("operator {} takes a single value", edge.operator))),
    };
    match edge.operator {
        Operator::Eq => scalar_eq(attr, field, one()?),
        Operator::Neq => scalar_eq(attr, field, one()?).map(|eq| !eq),
        Operator::Lt | Operator::Lte | Operator::Gt | Operator::Gte => {
            let wanted = one()?;
            let (Some(x), Some(y)) = (field.as_f64(), wanted.as_f64()) else {
                return Err(mismatch(attr, format!("{} needs numbers, got {field} and {wanted}", edge.operator)));
            };
            Ok(match edge.operator {
                Operator::Lt => x < y,
                Operator::Lte => x <= y,
                Operator::Gt => x > y,
                _ => x >= y,
            })
        }
        Operator::In => {
            let ConstraintValue::Many(options) = &edge.value else {
                return Err(mismatch(attr, "IN takes a value list".into()));
            };
            for option in options {
                if scalar_eq(attr, field, option)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
        Operator::Contains => match (field, one()?) {
            (Value::Str(hay), Value::Str(needle)) => Ok(hay.to_lowercase().contains(&needle.to_lowercase())),
            (f, w) => Err(mismatch(attr, format!("CONTAINS needs strings, got {f} and {w}"))),
        },
    }
}

/// Records satisfying every edge, in ascending id order.
pub fn execute(graph: &QueryGraph, db: &Database) -> Result<ResultSet> {
    if graph.ckr_fingerprint != db.ckr_fingerprint {
        return Err(Error::FingerprintMismatch {
            expected: db.ckr_fingerprint.clone(),
            found: graph.ckr_fingerprint.clone(),
        });
    }
    let mut hits = Vec::new();
    'records: for record in &db.records {
        for edge in &graph.edges {
            if !edge_matches(edge, record)? {
                continue 'records;
            }
        }
        hits.push(record.clone());
    }
    Ok(ResultSet {
        ids: hits.iter().map(|r| r.id.clone()).collect(),
        total: hits.len(),
        records: hits,
    })
}
