//! Natural-language understanding: delexicalization and intent labeling.

mod classifier;
mod corpus;
mod delex;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use classifier::{
    classify, evaluate, features, train, train_delexicalized, Classification, Evaluation, IntentClassifier,
    NaiveBayesModel, MODEL_FORMAT,
};
pub use corpus::{
    generate_synthetic_corpus, generate_synthetic_traced, read_corpus, parse_corpus, write_corpus, format_corpus,
    SyntheticUtterance, TrainingExample,
};
pub use delex::{delexicalize, delexicalize_tokens, AlignedPlaceholder, DelexUtterance, PlaceholderSource};

/// User intents: the three state operations plus conversational plumbing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IntentLabel {
    Add,
    Delete,
    Update,
    RequestInfo,
    ShowResults,
    Affirm,
    Negate,
    Greet,
    End,
}

impl IntentLabel {
    /// Declaration order; also the classifier's tie-break order.
    pub const ALL: [IntentLabel; 9] = [
        IntentLabel::Add,
        IntentLabel::Delete,
        IntentLabel::Update,
        IntentLabel::RequestInfo,
        IntentLabel::ShowResults,
        IntentLabel::Affirm,
        IntentLabel::Negate,
        IntentLabel::Greet,
        IntentLabel::End,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IntentLabel::Add => "ADD",
            IntentLabel::Delete => "DELETE",
            IntentLabel::Update => "UPDATE",
            IntentLabel::RequestInfo => "REQUEST_INFO",
            IntentLabel::ShowResults => "SHOW_RESULTS",
            IntentLabel::Affirm => "AFFIRM",
            IntentLabel::Negate => "NEGATE",
            IntentLabel::Greet => "GREET",
            IntentLabel::End => "END",
        }
    }
}

impl fmt::Display for IntentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IntentLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        IntentLabel::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownIntent(s.to_string()))
    }
}
