//! `execute` against an independently written per-record predicate scan.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use convsearch_core::ckr::{build_ckr, AttributeKind, Ckr, DomainRecord, KnowledgeBase, Operator, Value};
use convsearch_core::dialog::{apply_intent, Constraint, ConstraintValue, DialogState, Proposal, Source};
use convsearch_core::nlu::IntentLabel;
use convsearch_core::query::{build_query_graph, execute, load_db, Database};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LOCATIONS: &[&str] = &["Chelsea", "soho", "Harlem", "brooklyn", "midtown", "Tribeca"];

fn fixture(n: usize, seed: u64) -> KnowledgeBase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..n)
        .map(|i| {
            let mut fields = std::collections::BTreeMap::new();
            if rng.gen_bool(0.95) {
                fields.insert("#bedroom".to_string(), Value::Num(f64::from(rng.gen_range(1..=5))));
            }
            fields.insert("price".to_string(), Value::Num(f64::from(rng.gen_range(20..120) * 50)));
            let loc = LOCATIONS[rng.gen_range(0..LOCATIONS.len())];
            let loc = if rng.gen_bool(0.3) { loc.to_uppercase() } else { loc.to_string() };
            fields.insert("location".to_string(), Value::Str(loc));
            if rng.gen_bool(0.9) {
                fields.insert("pets_ok".to_string(), Value::Bool(rng.gen_bool(0.5)));
            }
            fields.insert("name".to_string(), Value::Str(format!("Unit {i} on {} street", rng.gen_range(1..200))));
            DomainRecord { entity_type: "apartment".into(), id: format!("r{i:05}"), fields }
        })
        .collect();
    KnowledgeBase::new(records)
}

fn lower(v: &Value) -> String {
    match v {
        Value::Str(s) => s.to_lowercase(),
        other => other.to_string(),
    }
}

fn num(v: &Value) -> f64 {
    match v {
        Value::Num(x) => *x,
        Value::Str(s) => s.parse().unwrap(),
        Value::Bool(_) => panic!("not a number"),
    }
}

fn equal(field: &Value, wanted: &Value) -> bool {
    match (field, wanted) {
        (Value::Num(_), _) | (_, Value::Num(_)) => num(field) == num(wanted),
        (Value::Bool(a), Value::Bool(b)) => a == b,
        _ => lower(field) == lower(wanted),
    }
}

fn holds(c: &Constraint, r: &DomainRecord) -> bool {
    let Some(field) = r.fields.get(&c.attribute) else { return false };
    match (&c.value, c.operator) {
        (ConstraintValue::Many(vs), Operator::In) => vs.iter().any(|v| equal(field, v)),
        (ConstraintValue::One(v), Operator::Eq) => equal(field, v),
        (ConstraintValue::One(v), Operator::Neq) => !equal(field, v),
        (ConstraintValue::One(v), Operator::Lt) => num(field) < num(v),
        (ConstraintValue::One(v), Operator::Lte) => num(field) <= num(v),
        (ConstraintValue::One(v), Operator::Gt) => num(field) > num(v),
        (ConstraintValue::One(v), Operator::Gte) => num(field) >= num(v),
        (ConstraintValue::One(v), Operator::Contains) => lower(field).contains(&lower(v)),
        other => panic!("unexpected {other:?}"),
    }
}

fn scan(kb: &KnowledgeBase, cs: &[Constraint]) -> Vec<String> {
    let mut ids: Vec<String> = kb.records.iter().filter(|r| cs.iter().all(|c| holds(c, r))).map(|r| r.id.clone()).collect();
    ids.sort();
    ids
}

/// One constraint per attribute, drawn from choices `picks` against the CKR.
fn constraints_from(ckr: &Ckr, kb: &KnowledgeBase, picks: &[(usize, usize, usize, bool)]) -> Vec<Constraint> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &(a, o, v, flip_case) in picks {
        let spec = &ckr.attributes[a % ckr.attributes.len()];
        if !seen.insert(spec.name.clone()) {
            continue;
        }
        let op = spec.kind.operators()[o % spec.kind.operators().len()];
        let sample = kb.records[v % kb.records.len()].fields.get(&spec.name).cloned().unwrap_or(Value::Num(3.0));
        let value = match (spec.kind, op) {
            (AttributeKind::Numeric, _) => ConstraintValue::One(Value::Num(num(&sample) + (v % 3) as f64 - 1.0)),
            (AttributeKind::Boolean, Operator::In) => ConstraintValue::Many(vec![Value::Bool(v % 2 == 0)]),
            (AttributeKind::Boolean, _) => ConstraintValue::One(Value::Bool(v % 2 == 0)),
            (AttributeKind::Categorical, Operator::In) => {
                let vocab = spec.vocabulary.as_ref().unwrap();
                ConstraintValue::Many((0..=v % 3).map(|k| Value::from(vocab[(v + k * 5) % vocab.len()].as_str())).collect())
            }
            (AttributeKind::Categorical, _) => {
                let s = lower(&sample);
                ConstraintValue::One(Value::Str(if flip_case { s.to_uppercase() } else { s }))
            }
            (AttributeKind::Text, Operator::Contains) => {
                ConstraintValue::One(Value::Str(format!("{} on", (v % 40)).to_uppercase()))
            }
            (AttributeKind::Text, _) => ConstraintValue::One(sample),
        };
        out.push(Constraint { value, ..Constraint::new(&spec.name, op, 0.0, Source::Literal) });
    }
    out
}

fn state(cs: &[Constraint]) -> DialogState {
    let proposals: Vec<Proposal> = cs.iter().map(|c| Proposal::Set { constraint: c.clone() }).collect();
    apply_intent(&DialogState::new("apartment"), IntentLabel::Add, &proposals, 1)
}

fn setup() -> &'static (KnowledgeBase, Ckr, Database) {
    static FIXTURE: OnceLock<(KnowledgeBase, Ckr, Database)> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let kb = fixture(1000, 42);
        let ckr = build_ckr(&kb).unwrap();
        let db = load_db(&kb, &ckr).unwrap();
        (kb, ckr, db)
    })
}

fn run(ckr: &Ckr, db: &Database, cs: &[Constraint]) -> Vec<String> {
    execute(&build_query_graph(&state(cs), ckr).unwrap(), db).unwrap().ids
}

#[test]
fn fixture_has_every_kind() {
    let (_, ckr, db) = setup();
    assert_eq!(db.len(), 1000);
    let kinds: BTreeSet<_> = ckr.attributes.iter().map(|a| a.kind.to_string()).collect();
    assert_eq!(kinds.len(), 4, "{kinds:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn execute_equals_scan_and_narrows(picks in prop::collection::vec((0..5usize, 0..8usize, 0..1000usize, any::<bool>()), 1..6)) {
        let (kb, ckr, db) = setup();
        let cs = constraints_from(ckr, kb, &picks);
        let mut previous: Option<BTreeSet<String>> = None;
        for k in 0..=cs.len() {
            let got = run(ckr, db, &cs[..k]);
            prop_assert_eq!(&got, &scan(kb, &cs[..k]));
            prop_assert!(got.windows(2).all(|w| w[0] < w[1]));
            let set: BTreeSet<String> = got.into_iter().collect();
            if let Some(prev) = &previous {
                prop_assert!(set.is_subset(prev), "adding a constraint enlarged the result set");
            }
            previous = Some(set);
        }
    }

    #[test]
    fn eq_and_neq_partition_records_with_the_field(v in 0..1000usize, attr in 0..5usize) {
        let (kb, ckr, db) = setup();
        let spec = &ckr.attributes[attr];
        prop_assume!(spec.kind != AttributeKind::Text);
        let sample = kb.records[v].fields.get(&spec.name).cloned();
        prop_assume!(sample.is_some());
        let sample = sample.unwrap();
        let eq = run(ckr, db, &[Constraint::new(&spec.name, Operator::Eq, sample.clone(), Source::Literal)]);
        let neq = run(ckr, db, &[Constraint::new(&spec.name, Operator::Neq, sample, Source::Literal)]);
        let with_field = kb.records.iter().filter(|r| r.fields.contains_key(&spec.name)).count();
        prop_assert_eq!(eq.len() + neq.len(), with_field);
    }
}

#[test]
fn repeated_execution_is_bit_identical() {
    let (_, ckr, db) = setup();
    let cs = [Constraint::new("location", Operator::Eq, "CHELSEA", Source::Literal)];
    let a = execute(&build_query_graph(&state(&cs), ckr).unwrap(), db).unwrap();
    let b = execute(&build_query_graph(&state(&cs), ckr).unwrap(), db).unwrap();
    assert_eq!(a, b);
    assert!(!a.ids.is_empty());
}
