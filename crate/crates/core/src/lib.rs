//! Domain-agnostic conversational search.
//!
//! A knowledge base of flat records is turned into a typed schema ([`ckr`]),
//! which grounds every later stage: span matching ([`matcher`]), intent
//! classification over delexicalized text ([`nlu`]), constraint tracking and
//! slot selection ([`dialog`]), query execution ([`query`]) and prompt
//! rendering ([`nlg`]). [`engine`] wires one turn through all of them.

pub mod ckr;
pub mod dialog;
pub mod engine;
pub mod error;
pub mod fixtures;
pub mod matcher;
pub mod nlg;
pub mod nlu;
pub mod query;
pub mod text;

pub use ckr::{build_ckr, export_lexicon, validate_ckr, AttributeKind, AttributeSpec, Ckr, CkrRef, DomainRecord, KnowledgeBase, Lexicon, Operator, Value};
pub use dialog::{apply_intent, decide, interpret, select_slot, slot_entropy, Constraint, ConstraintValue, DialogAct, DialogState, PolicyConfig, Proposal, Source};
pub use engine::{Correction, Domain, Engine, TurnAnalysis, TurnOutcome};
pub use error::{Error, Result};
pub use matcher::{EmbeddingTable, MatchCandidate, MatchMethod, Matcher, MatcherConfig};
pub use nlg::{default_templates, render, Prompt, TemplateSet};
pub use nlu::{IntentClassifier, IntentLabel, NaiveBayesModel, TrainingExample};
pub use query::{build_query_graph, execute, load_db, Database, ResultSet};
