//! Corpus files (one `{"text", "intent"}` object per line) and a seeded
//! template generator that fills slots from a CKR.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::IntentLabel;
use crate::ckr::{AttributeKind, AttributeSpec, Ckr};
use crate::error::{Error, Result};
use crate::text;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub text: String,
    pub intent: IntentLabel,
}

pub fn parse_corpus(source: &str, origin: &str) -> Result<Vec<TrainingExample>> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ex: TrainingExample = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: origin.into(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if ex.text.trim().is_empty() {
            return Err(Error::Parse {
                path: origin.into(),
                line: i + 1,
                message: "empty text".into(),
            });
        }
        out.push(ex);
    }
    Ok(out)
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<TrainingExample>> {
    let path = path.as_ref();
    parse_corpus(&std::fs::read_to_string(path)?, &path.display().to_string())
}

pub fn format_corpus(examples: &[TrainingExample]) -> String {
    examples
        .iter()
        .map(|ex| serde_json::to_string(ex).expect("example serializes") + "\n")
        .collect()
}

pub fn write_corpus(path: impl AsRef<Path>, examples: &[TrainingExample]) -> Result<()> {
    std::fs::write(path, format_corpus(examples))?;
    Ok(())
}

/// A generated example together with the slot fillers placed into it.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticUtterance {
    pub example: TrainingExample,
    pub fillers: Vec<String>,
}

// Slots: {val} categorical value, {val2} a second value of the same
// attribute, {attr} any requestable attribute alias, {vattr} the alias of
// {val}'s attribute, {num} a number inside {nattr}'s range, {nattr} a
// numeric attribute alias.
const ADD: &[&str] = &[
    "i want {val}",
    "i would like {val}",
    "looking for {val}",
    "something with {val} please",
    "add {val}",
    "{val}",
    "{val} please",
    "i need {num} {nattr}",
    "{num} {nattr}",
    "{num} {nattr} in {val}",
    "find me {num} {nattr} near {val}",
    "i want {num} {nattr} with {val}",
    "it should have {num} {nattr}",
    "can i get {val}",
    "i prefer {val}",
    "{nattr} under {num}",
    "at least {num} {nattr}",
    "{nattr} below {num} please",
    "more than {num} {nattr}",
    "i am looking for {val} with {num} {nattr}",
    "preferably {val}",
    "ok {val} is good",
];

const UPDATE: &[&str] = &[
    "change {vattr} to {val}",
    "actually make it {val}",
    "instead of {val} i want {val2}",
    "switch to {val}",
    "update the {nattr} to {num}",
    "change it to {num} {nattr}",
    "make that {num} {nattr} instead",
    "i changed my mind {val} instead",
    "actually {val2} instead of {val}",
    "can you change the {vattr} to {val}",
    "replace {val} with {val2}",
    "set {nattr} to {num} instead",
    "no wait change {vattr} to {val2}",
];

const DELETE: &[&str] = &[
    "remove the {attr} filter",
    "forget about {val}",
    "drop the {attr}",
    "i do not care about {attr}",
    "delete the {attr} constraint",
    "no preference on {attr}",
    "remove {val}",
    "clear the {attr}",
    "get rid of the {attr} requirement",
    "forget the {attr}",
    "{attr} does not matter",
    "skip {val}",
];

const REQUEST_INFO: &[&str] = &[
    "what {attr} options are there",
    "which {attr} do you have",
    "what are the available {attr} values",
    "tell me about the {attr}",
    "what is the {attr} of the first one",
    "what {attr} can i choose from",
    "which {attr} is the cheapest",
    "how is the {attr} for these",
    "can you tell me the {attr}",
    "what about the {attr}",
    "what kind of {attr} is there",
];

const SHOW_RESULTS: &[&str] = &[
    "show me the results",
    "what do you have",
    "list them",
    "show me what you found",
    "let me see the listings",
    "just show me everything",
    "display the matches",
    "show results now",
    "what did you find",
    "show me the options",
    "list all matches please",
    "let me see them",
];

const AFFIRM: &[&str] = &[
    "yes",
    "yes please",
    "correct",
    "that is right",
    "sure",
    "yeah that works",
    "exactly",
    "ok sounds good",
    "right",
    "yep",
    "absolutely",
    "that is correct",
];

const NEGATE: &[&str] = &[
    "no",
    "no thanks",
    "that is wrong",
    "not really",
    "nope",
    "no that is not what i meant",
    "incorrect",
    "not that",
    "no that is not right",
    "wrong",
    "nah",
];

const GREET: &[&str] = &[
    "hello",
    "hi",
    "hi there",
    "good morning",
    "hey",
    "hello i need some help",
    "greetings",
    "hey there",
    "good evening",
    "hello there can you help me",
    "hi i am searching for something",
];

const END: &[&str] = &[
    "bye",
    "goodbye",
    "thanks bye",
    "that is all",
    "see you",
    "i am done thank you",
    "quit",
    "bye for now",
    "that is all thanks",
    "goodbye and thanks",
    "i am finished",
    "exit",
];

const PREFIXES: &[&str] = &["", "", "", "", "ok ", "um ", "well ", "so "];
const SUFFIXES: &[&str] = &["", "", "", "", " please", " thanks", " now"];

fn templates(label: IntentLabel) -> &'static [&'static str] {
    match label {
        IntentLabel::Add => ADD,
        IntentLabel::Delete => DELETE,
        IntentLabel::Update => UPDATE,
        IntentLabel::RequestInfo => REQUEST_INFO,
        IntentLabel::ShowResults => SHOW_RESULTS,
        IntentLabel::Affirm => AFFIRM,
        IntentLabel::Negate => NEGATE,
        IntentLabel::Greet => GREET,
        IntentLabel::End => END,
    }
}

struct SlotPool<'a> {
    categorical: Vec<&'a AttributeSpec>,
    numeric: Vec<&'a AttributeSpec>,
    requestable: Vec<&'a AttributeSpec>,
}

impl<'a> SlotPool<'a> {
    fn new(ckr: &'a Ckr) -> Self {
        let of_kind = |k: AttributeKind| ckr.attributes.iter().filter(|a| a.kind == k).collect::<Vec<_>>();
        Self {
            categorical: of_kind(AttributeKind::Categorical)
                .into_iter()
                .filter(|a| a.vocabulary.as_ref().is_some_and(|v| !v.is_empty()))
                .collect(),
            numeric: of_kind(AttributeKind::Numeric),
            requestable: ckr.attributes.iter().filter(|a| a.kind != AttributeKind::Text).collect(),
        }
    }

    fn supports(&self, template: &str) -> bool {
        let needs_val = template.contains("{val") || template.contains("{vattr}");
        let needs_val2 = template.contains("{val2}");
        let needs_num = template.contains("{num}") || template.contains("{nattr}");
        (!needs_val || !self.categorical.is_empty())
            && (!needs_val2 || self.categorical.iter().any(|a| a.vocabulary.as_ref().unwrap().len() > 1))
            && (!needs_num || !self.numeric.is_empty())
            && (!template.contains("{attr}") || !self.requestable.is_empty())
    }
}

fn alias<'a>(attr: &'a AttributeSpec, rng: &mut ChaCha8Rng) -> &'a str {
    attr.aliases.choose(rng).map(String::as_str).unwrap_or(&attr.name)
}

fn fill(template: &str, pool: &SlotPool<'_>, rng: &mut ChaCha8Rng) -> (String, Vec<String>) {
    let mut fillers = Vec::new();
    let mut out = template.to_string();

    if template.contains("{val") || template.contains("{vattr}") {
        let candidates: Vec<&AttributeSpec> = if template.contains("{val2}") {
            pool.categorical
                .iter()
                .copied()
                .filter(|a| a.vocabulary.as_ref().unwrap().len() > 1)
                .collect()
        } else {
            pool.categorical.clone()
        };
        let attr = candidates.choose(rng).expect("supported template");
        let vocab = attr.vocabulary.as_ref().expect("categorical vocabulary");
        let picked: Vec<&String> = vocab.choose_multiple(rng, 2.min(vocab.len())).collect();
        for (slot, value) in [("{val}", picked[0]), ("{val2}", *picked.last().unwrap())] {
            if out.contains(slot) {
                out = out.replace(slot, value);
                fillers.push(value.clone());
            }
        }
        if out.contains("{vattr}") {
            let a = alias(attr, rng);
            out = out.replace("{vattr}", a);
            fillers.push(a.to_string());
        }
    }
    if template.contains("{num}") || template.contains("{nattr}") {
        let attr = pool.numeric.choose(rng).expect("supported template");
        let [min, max] = attr.numeric_range.expect("numeric range");
        let n = if max > min {
            rng.gen_range(min.ceil() as i64..=max.floor().max(min.ceil()) as i64) as f64
        } else {
            min
        };
        let n = if n < min || n > max { min } else { n };
        let num = text::format_number(n);
        let a = alias(attr, rng);
        out = out.replace("{num}", &num).replace("{nattr}", a);
        fillers.push(num);
        fillers.push(a.to_string());
    }
    if template.contains("{attr}") {
        let attr = pool.requestable.choose(rng).expect("supported template");
        let a = alias(attr, rng);
        out = out.replace("{attr}", a);
        fillers.push(a.to_string());
    }
    (out, fillers)
}

/// Like [`generate_synthetic_corpus`] but also reports the fillers used.
pub fn generate_synthetic_traced(ckr: &Ckr, n_per_label: usize, seed: u64) -> Vec<SyntheticUtterance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool = SlotPool::new(ckr);
    let mut out = Vec::with_capacity(n_per_label * IntentLabel::ALL.len());
    for label in IntentLabel::ALL {
        let usable: Vec<&str> = templates(label).iter().copied().filter(|t| pool.supports(t)).collect();
        if usable.is_empty() {
            continue;
        }
        for _ in 0..n_per_label {
            let template = usable.choose(&mut rng).expect("non-empty");
            let (body, fillers) = fill(template, &pool, &mut rng);
            let prefix = PREFIXES.choose(&mut rng).expect("prefixes");
            let suffix = SUFFIXES.choose(&mut rng).expect("suffixes");
            out.push(SyntheticUtterance {
                example: TrainingExample {
                    text: format!("{prefix}{body}{suffix}"),
                    intent: label,
                },
                fillers,
            });
        }
    }
    out
}

/// Seeded templated corpus with `n_per_label` utterances for every label.
pub fn generate_synthetic_corpus(ckr: &Ckr, n_per_label: usize, seed: u64) -> Vec<TrainingExample> {
    generate_synthetic_traced(ckr, n_per_label, seed)
        .into_iter()
        .map(|s| s.example)
        .collect()
}
