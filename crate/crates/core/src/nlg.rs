//! Template-based prompt generation grounded in CKR display names.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::ckr::{AttributeKind, Ckr, Operator};
use crate::dialog::{ActKind, DialogAct, DialogState};
use crate::error::{Error, Result};
use crate::query::ResultSet;

/// Maximum number of example values offered when asking for a slot.
pub const MAX_EXAMPLE_VALUES: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub act: ActKind,
    pub pattern: String,
    #[serde(default)]
    pub priority: i32,
    /// Restricts a `REQUEST_SLOT` template to one attribute.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<String>,
}

fn bindings(kind: ActKind) -> &'static [&'static str] {
    match kind {
        ActKind::RequestSlot => &["attr", "items", "count", "entity"],
        ActKind::PresentResults => &["count", "items", "shown", "entity"],
        ActKind::Confirm => &["attr", "value"],
        ActKind::Greet => &["entity"],
        ActKind::Farewell => &[],
        ActKind::Clarify => &["value", "entity"],
    }
}

fn placeholders(pattern: &str) -> Result<Vec<&str>> {
    let mut out = Vec::new();
    let mut rest = pattern;
    while let Some(open) = rest.find(['{', '}']) {
        if rest.as_bytes()[open] == b'}' {
            return Err(Error::Template(format!("unbalanced '}}' in {pattern:?}")));
        }
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| Error::Template(format!("unclosed '{{' in {pattern:?}")))?;
        out.push(&after[..close]);
        rest = &after[close + 1..];
    }
    Ok(out)
}

impl PromptTemplate {
    pub fn new(act: ActKind, pattern: &str, priority: i32) -> Self {
        Self {
            act,
            pattern: pattern.to_string(),
            priority,
            attribute: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let allowed = bindings(self.act);
        for name in placeholders(&self.pattern)? {
            if !allowed.contains(&name) {
                return Err(Error::Template(format!(
                    "placeholder {{{name}}} is not available for {}",
                    self.act
                )));
            }
        }
        Ok(())
    }

    fn render(&self, values: &BTreeMap<&str, String>) -> String {
        let mut out = String::with_capacity(self.pattern.len());
        let mut rest = self.pattern.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let close = after.find('}').expect("validated pattern");
            out.push_str(values.get(&after[..close]).map(String::as_str).unwrap_or_default());
            rest = &after[close + 1..];
        }
        out.push_str(rest);
        out
    }
}

/// Generic patterns, keyed by attribute kind for slot requests.
const ASK_COUNT: &str = "How many {attr} do you need? For example: {items}.";
const ASK_NUMBER: &str = "What {attr} are you looking for? For example: {items}.";
const ASK_CHOICE: &str = "Which {attr} do you prefer? For example: {items}.";
const ASK_FLAG: &str = "Does {attr} matter to you? For example: {items}.";
const ASK_GENERIC: &str = "What {attr} would you like? For example: {items}.";

/// Templates plus the CKR names they are rendered with.
#[derive(Clone, Debug, PartialEq)]
pub struct TemplateSet {
    entity: String,
    display_names: BTreeMap<String, String>,
    templates: Vec<PromptTemplate>,
}

impl TemplateSet {
    pub fn templates(&self) -> &[PromptTemplate] {
        &self.templates
    }

    /// Adds a template; on equal priority later additions win.
    pub fn push(&mut self, template: PromptTemplate) -> Result<()> {
        template.validate()?;
        self.templates.push(template);
        Ok(())
    }

    /// Adds templates from line-delimited JSON `{act, pattern, priority}`.
    pub fn load_overrides(&mut self, source: &str, origin: &str) -> Result<()> {
        for (i, line) in source.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let t: PromptTemplate = serde_json::from_str(line).map_err(|e| Error::Parse {
                path: origin.into(),
                line: i + 1,
                message: e.to_string(),
            })?;
            self.push(t).map_err(|e| Error::Parse {
                path: origin.into(),
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn load_overrides_path(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.load_overrides(&std::fs::read_to_string(path)?, &path.display().to_string())
    }

    pub fn covers(&self, kind: ActKind) -> bool {
        self.templates.iter().any(|t| t.act == kind)
    }

    fn select(&self, act: &DialogAct) -> Option<&PromptTemplate> {
        let attribute = match act {
            DialogAct::RequestSlot { attribute } => Some(attribute.as_str()),
            _ => None,
        };
        self.templates
            .iter()
            .enumerate()
            .filter(|(_, t)| t.act == act.kind())
            .filter(|(_, t)| t.attribute.is_none() || t.attribute.as_deref() == attribute)
            .max_by_key(|(i, t)| (t.priority, *i))
            .map(|(_, t)| t)
    }

    fn display(&self, attribute: &str) -> String {
        self.display_names
            .get(attribute)
            .cloned()
            .unwrap_or_else(|| attribute.to_string())
    }
}

/// One template per act kind, plus a slot request per requestable attribute
/// phrased by its kind.
pub fn default_templates(ckr: &Ckr) -> TemplateSet {
    let mut templates = vec![
        PromptTemplate::new(ActKind::RequestSlot, ASK_GENERIC, 0),
        PromptTemplate::new(
            ActKind::PresentResults,
            "I found {count} matching {entity} results.\n{items}",
            0,
        ),
        PromptTemplate::new(ActKind::Confirm, "Just to confirm: {attr} {value}?", 0),
        PromptTemplate::new(
            ActKind::Greet,
            "Hello! I can help you find a {entity}. What are you looking for?",
            0,
        ),
        PromptTemplate::new(ActKind::Farewell, "Goodbye, and thanks for searching with me!", 0),
        PromptTemplate::new(ActKind::Clarify, "Sorry, I did not understand that ({value}). Could you rephrase?", 0),
    ];
    for attr in &ckr.attributes {
        let pattern = match attr.kind {
            AttributeKind::Numeric if attr.name.starts_with('#') => ASK_COUNT,
            AttributeKind::Numeric => ASK_NUMBER,
            AttributeKind::Categorical => ASK_CHOICE,
            AttributeKind::Boolean => ASK_FLAG,
            AttributeKind::Text => continue,
        };
        templates.push(PromptTemplate {
            act: ActKind::RequestSlot,
            pattern: pattern.into(),
            priority: 10,
            attribute: Some(attr.name.clone()),
        });
    }
    TemplateSet {
        entity: ckr.entity_type.clone(),
        display_names: ckr
            .attributes
            .iter()
            .map(|a| (a.name.clone(), a.display_name.clone()))
            .collect(),
        templates,
    }
}

/// A rendered system turn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub text: String,
    /// Structured echo of the act for user interfaces.
    pub payload: serde_json::Value,
    pub act: DialogAct,
}

fn clean(s: &str) -> String {
    s.replace('{', "(").replace('}', ")")
}

fn join_options(values: &[String]) -> String {
    match values {
        [] => "any".into(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} or {last}", init.join(", ")),
    }
}

fn operator_phrase(op: Operator) -> &'static str {
    match op {
        Operator::Eq => "is",
        Operator::Neq => "is not",
        Operator::Lt => "below",
        Operator::Lte => "at most",
        Operator::Gt => "above",
        Operator::Gte => "at least",
        Operator::In => "one of",
        Operator::Contains => "contains",
    }
}

/// Most frequent values of `attribute` in `results`, ties by value.
pub fn example_values(results: &ResultSet, attribute: &str, limit: usize) -> Vec<String> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in &results.records {
        if let Some(v) = r.get(attribute) {
            *counts.entry(v.key()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.into_iter().take(limit).map(|(v, _)| v).collect()
}

/// Renders `act` with the highest-priority applicable template.
pub fn render(act: &DialogAct, state: &DialogState, results: &ResultSet, templates: &TemplateSet) -> Result<Prompt> {
    let template = templates
        .select(act)
        .ok_or_else(|| Error::UncoveredAct(act.kind().to_string()))?;
    let mut values: BTreeMap<&str, String> = BTreeMap::new();
    values.insert("entity", clean(&templates.entity));
    values.insert("count", results.total.to_string());

    let payload = match act {
        DialogAct::RequestSlot { attribute } => {
            let options = example_values(results, attribute, MAX_EXAMPLE_VALUES);
            values.insert("attr", clean(&templates.display(attribute)));
            values.insert("items", clean(&join_options(&options)));
            json!({
                "act": act.kind(),
                "attribute": attribute,
                "display_name": templates.display(attribute),
                "options": options,
                "result_count": results.total,
                "constraints": state.constraints,
            })
        }
        DialogAct::PresentResults { record_ids } => {
            let shown: Vec<_> = record_ids.iter().filter_map(|id| results.get(id)).collect();
            let lines: Vec<String> = shown
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let fields: Vec<String> = r.fields.iter().map(|(k, v)| format!("{k}: {v}")).collect();
                    clean(&format!("{}. {} | {}", i + 1, r.id, fields.join(" | ")))
                })
                .collect();
            let items = if lines.is_empty() {
                "Try removing or relaxing one of your preferences.".to_string()
            } else {
                lines.join("\n")
            };
            values.insert("items", items);
            values.insert("shown", shown.len().to_string());
            json!({
                "act": act.kind(),
                "record_ids": record_ids,
                "records": shown,
                "result_count": results.total,
                "constraints": state.constraints,
            })
        }
        DialogAct::Confirm { constraint } => {
            values.insert("attr", clean(&templates.display(&constraint.attribute)));
            values.insert(
                "value",
                clean(&format!("{} {}", operator_phrase(constraint.operator), constraint.value)),
            );
            json!({ "act": act.kind(), "constraint": constraint })
        }
        DialogAct::Clarify { reason } => {
            values.insert("value", clean(reason));
            json!({ "act": act.kind(), "reason": reason })
        }
        DialogAct::Greet | DialogAct::Farewell => json!({ "act": act.kind() }),
    };

    let text = template.render(&values).trim().to_string();
    Ok(Prompt {
        text,
        payload,
        act: act.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ckr::{build_ckr, DomainRecord, KnowledgeBase, Value};

    fn setup() -> (Ckr, ResultSet) {
        let rows = [(1.0, "chelsea"), (2.0, "soho"), (2.0, "chelsea"), (3.0, "soho")];
        let recs: Vec<DomainRecord> = rows
            .iter()
            .enumerate()
            .map(|(i, (b, loc))| DomainRecord {
                entity_type: "apartment".into(),
                id: format!("a{i}"),
                fields: [
                    ("#bedroom".to_string(), Value::Num(*b)),
                    ("location".to_string(), Value::from(*loc)),
                ]
                .into_iter()
                .collect(),
            })
            .collect();
        (build_ckr(&KnowledgeBase::new(recs.clone())).unwrap(), ResultSet::from_records(recs))
    }

    fn state() -> DialogState {
        DialogState::new("apartment")
    }

    #[test]
    fn request_slot_uses_display_name_and_examples() {
        let (ckr, results) = setup();
        let t = default_templates(&ckr);
        let p = render(&DialogAct::RequestSlot { attribute: "#bedroom".into() }, &state(), &results, &t).unwrap();
        assert_eq!(p.text, "How many bedrooms do you need? For example: 2, 1 or 3.");
        let p = render(&DialogAct::RequestSlot { attribute: "location".into() }, &state(), &results, &t).unwrap();
        assert!(p.text.contains("chelsea") && p.text.contains("soho"), "{}", p.text);
        assert_eq!(p.payload["options"], json!(["chelsea", "soho"]));
    }

    #[test]
    fn present_results_lists_items() {
        let (ckr, results) = setup();
        let t = default_templates(&ckr);
        let act = DialogAct::PresentResults { record_ids: vec!["a1".into(), "a3".into()] };
        let two = ResultSet::from_records(vec![results.records[1].clone(), results.records[3].clone()]);
        let p = render(&act, &state(), &two, &t).unwrap();
        assert!(p.text.starts_with("I found 2 matching apartment results."));
        assert_eq!(p.text.lines().filter(|l| l.contains(" | ")).count(), 2);
        assert_eq!(p.payload["record_ids"], json!(["a1", "a3"]));
        assert!(!p.text.contains('{') && !p.text.contains('}'));
    }

    #[test]
    fn fixed_lines() {
        let (ckr, results) = setup();
        let t = default_templates(&ckr);
        let bye = render(&DialogAct::Farewell, &state(), &results, &t).unwrap();
        assert_eq!(bye.text, "Goodbye, and thanks for searching with me!");
        for kind in ActKind::ALL {
            assert!(t.covers(kind), "{kind}");
        }
    }

    #[test]
    fn overrides_and_validation() {
        let (ckr, results) = setup();
        let mut t = default_templates(&ckr);
        t.load_overrides(r#"{"act":"FAREWELL","pattern":"See you around!","priority":5}"#, "mem")
            .unwrap();
        let bye = render(&DialogAct::Farewell, &state(), &results, &t).unwrap();
        assert_eq!(bye.text, "See you around!");

        assert!(t.load_overrides(r#"{"act":"GREET","pattern":"Hi {count}","priority":1}"#, "mem").is_err());
        assert!(t.load_overrides(r#"{"act":"GREET","pattern":"Hi {entity","priority":1}"#, "mem").is_err());
    }

    #[test]
    fn braces_in_values_are_neutralized() {
        let (ckr, results) = setup();
        let t = default_templates(&ckr);
        let p = render(&DialogAct::Clarify { reason: "odd {input}".into() }, &state(), &results, &t).unwrap();
        assert!(!p.text.contains('{') && !p.text.contains('}'));
    }

    #[test]
    fn uncovered_act_is_an_error() {
        let (ckr, results) = setup();
        let mut t = default_templates(&ckr);
        t.templates.retain(|x| x.act != ActKind::Greet);
        assert!(matches!(render(&DialogAct::Greet, &state(), &results, &t), Err(Error::UncoveredAct(_))));
    }
}
