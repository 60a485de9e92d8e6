//! One dialog turn end to end: match, delexicalize, classify, interpret,
//! update state, query, decide and render.
//!
//! A [`Domain`] bundles every artifact derived from one knowledge base and is
//! immutable, so sessions can hold an `Arc` snapshot while a new domain is
//! ingested elsewhere.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ckr::{build_ckr, Ckr, KnowledgeBase};
use crate::dialog::{apply_intent, decide, interpret, Constraint, DialogAct, DialogState, Interpretation, PolicyConfig, Proposal, Source};
use crate::error::Result;
use crate::matcher::{EmbeddingTable, MatchCandidate, Matcher, MatcherConfig};
use crate::nlg::{default_templates, render, Prompt, TemplateSet};
use crate::nlu::{delexicalize_tokens, generate_synthetic_corpus, train, Classification, IntentClassifier, IntentLabel, NaiveBayesModel};
use crate::query::{build_query_graph, execute, load_db, Database, ResultSet};

/// Utterances per label in the corpus used when no model is supplied.
pub const BOOTSTRAP_PER_LABEL: usize = 60;
pub const BOOTSTRAP_SEED: u64 = 7;

/// Everything derived from one knowledge base.
#[derive(Debug)]
pub struct Domain {
    pub kb: KnowledgeBase,
    pub ckr: Ckr,
    pub db: Database,
    pub matcher: Matcher,
    pub templates: TemplateSet,
}

impl Domain {
    pub fn build(kb: KnowledgeBase, embeddings: Option<Arc<EmbeddingTable>>, config: &MatcherConfig) -> Result<Self> {
        let ckr = build_ckr(&kb)?;
        let db = load_db(&kb, &ckr)?;
        let matcher = Matcher::new(&ckr, embeddings, config)?;
        let templates = default_templates(&ckr);
        Ok(Self {
            kb,
            ckr,
            db,
            matcher,
            templates,
        })
    }

    pub fn from_json(kb_json: &str) -> Result<Self> {
        Self::build(KnowledgeBase::from_json(kb_json)?, None, &MatcherConfig::default())
    }

    pub fn fingerprint(&self) -> &str {
        &self.ckr.fingerprint
    }

    /// Trains naive Bayes on this domain's synthetic corpus.
    pub fn bootstrap_model(&self) -> Result<NaiveBayesModel> {
        let corpus = generate_synthetic_corpus(&self.ckr, BOOTSTRAP_PER_LABEL, BOOTSTRAP_SEED);
        train(&corpus, &self.matcher, 1.0)
    }
}

/// Human override of the automatic analysis, e.g. from a wizard.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<IntentLabel>,
    /// Replaces the proposals derived from the utterance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slots: Option<Vec<Constraint>>,
}

/// What the pipeline saw and decided in one turn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurnAnalysis {
    pub tokens: Vec<String>,
    pub candidates: Vec<MatchCandidate>,
    pub delexicalized: Vec<String>,
    /// `None` when the message had no tokens.
    pub intent: Option<IntentLabel>,
    pub classification: Option<Classification>,
    pub interpretation: Interpretation,
    pub act: DialogAct,
    pub result_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TurnOutcome {
    pub state: DialogState,
    pub analysis: TurnAnalysis,
    pub results: ResultSet,
    pub prompt: Prompt,
}

/// A domain snapshot plus the classifier and policy that drive it.
#[derive(Clone)]
pub struct Engine {
    pub domain: Arc<Domain>,
    pub classifier: Arc<dyn IntentClassifier>,
    pub policy: PolicyConfig,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("domain", &self.domain.ckr.entity_type)
            .field("fingerprint", &self.domain.ckr.fingerprint)
            .field("policy", &self.policy)
            .finish()
    }
}

impl Engine {
    pub fn new(domain: Arc<Domain>, classifier: Arc<dyn IntentClassifier>, policy: PolicyConfig) -> Result<Self> {
        policy.validate()?;
        Ok(Self {
            domain,
            classifier,
            policy,
        })
    }

    pub fn new_state(&self) -> DialogState {
        DialogState::new(&self.domain.ckr.entity_type)
    }

    /// Opening turn: a fresh state with the greeting recorded.
    pub fn greet(&self) -> Result<(DialogState, Prompt)> {
        let mut state = self.new_state();
        let results = self.domain.db.all();
        let prompt = render(&DialogAct::Greet, &state, &results, &self.domain.templates)?;
        state.record_act(DialogAct::Greet);
        Ok((state, prompt))
    }

    pub fn step(&self, state: &DialogState, text: &str, turn: usize) -> Result<TurnOutcome> {
        self.step_with(state, text, turn, &Correction::default())
    }

    /// Runs one user turn against `state` without mutating it.
    pub fn step_with(&self, state: &DialogState, text: &str, turn: usize, correction: &Correction) -> Result<TurnOutcome> {
        let domain = &*self.domain;
        let matched = domain.matcher.run(text)?;
        let delex = delexicalize_tokens(&matched.tokens, &matched.candidates)?;

        if delex.tokens.is_empty() && correction.intent.is_none() {
            let results = execute(&build_query_graph(state, &domain.ckr)?, &domain.db)?;
            let analysis = TurnAnalysis {
                tokens: matched.tokens,
                candidates: matched.candidates,
                delexicalized: delex.tokens,
                intent: None,
                classification: None,
                interpretation: Interpretation::default(),
                act: DialogAct::Clarify {
                    reason: "the message was empty".into(),
                },
                result_count: results.total,
            };
            return self.finish(state.clone(), analysis, results);
        }

        let classification = correction.intent.is_none().then(|| self.classifier.classify(&delex));
        let intent = correction
            .intent
            .or(classification.as_ref().map(|c| c.label))
            .expect("either corrected or classified");

        let mut interpretation = interpret(&delex, intent, &domain.ckr, state.pending_slot());
        if let Some(slots) = &correction.slots {
            let mut proposals = Vec::with_capacity(slots.len());
            for c in slots {
                c.validate(&domain.ckr)?;
                let mut c = c.clone();
                c.provenance.source = Source::Wizard;
                proposals.push(match intent {
                    IntentLabel::Delete => Proposal::Remove { attribute: c.attribute },
                    _ => Proposal::Set { constraint: c },
                });
            }
            interpretation = Interpretation {
                proposals,
                issues: Vec::new(),
            };
        }

        let mut next = apply_intent(state, intent, &interpretation.proposals, turn);
        let results = execute(&build_query_graph(&next, &domain.ckr)?, &domain.db)?;
        // A fresh note means the turn referred to something not in the state.
        let act = match next.notes.get(state.notes.len()..).and_then(|fresh| fresh.first()) {
            Some(note) => DialogAct::Clarify { reason: note.clone() },
            None => decide(&next, &results, intent, &interpretation, &domain.ckr, &self.policy),
        };
        next.last_result_count = Some(results.total);
        let analysis = TurnAnalysis {
            tokens: matched.tokens,
            candidates: matched.candidates,
            delexicalized: delex.tokens,
            intent: Some(intent),
            classification,
            interpretation,
            act,
            result_count: results.total,
        };
        self.finish(next, analysis, results)
    }

    fn finish(&self, mut state: DialogState, analysis: TurnAnalysis, results: ResultSet) -> Result<TurnOutcome> {
        let prompt = render(&analysis.act, &state, &results, &self.domain.templates)?;
        state.record_act(analysis.act.clone());
        Ok(TurnOutcome {
            state,
            analysis,
            results,
            prompt,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialog::ActKind;
    use crate::fixtures;

    fn engine(kb: &str) -> Engine {
        let domain = Arc::new(Domain::from_json(kb).unwrap());
        let model = domain.bootstrap_model().unwrap();
        Engine::new(domain, Arc::new(model), PolicyConfig::default()).unwrap()
    }

    fn run_script(engine: &Engine, script: &str) -> Vec<(Option<IntentLabel>, ActKind, usize)> {
        let (mut state, _) = engine.greet().unwrap();
        let mut out = Vec::new();
        for (turn, line) in script.lines().enumerate() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            let o = engine.step(&state, v["user"].as_str().unwrap(), turn + 1).unwrap();
            println!("{:?} {:?} -> {}", o.analysis.delexicalized, o.analysis.intent, o.prompt.text);
            out.push((o.analysis.intent, o.analysis.act.kind(), o.analysis.result_count));
            state = o.state;
        }
        out
    }

    #[test]
    fn apartment_script_reaches_results() {
        let e = engine(fixtures::APARTMENTS_KB);
        let got = run_script(&e, fixtures::APARTMENTS_SCRIPT);
        let acts: Vec<_> = got.iter().map(|g| g.1).collect();
        assert_eq!(acts, [ActKind::Greet, ActKind::RequestSlot, ActKind::PresentResults, ActKind::Farewell]);
        assert_eq!(got[1].2, 8);
        assert_eq!(got[2].2, 2);
    }

    #[test]
    fn restaurant_script_reaches_results() {
        let e = engine(fixtures::RESTAURANTS_KB);
        let got = run_script(&e, fixtures::RESTAURANTS_SCRIPT);
        let acts: Vec<_> = got.iter().map(|g| g.1).collect();
        assert_eq!(acts, [ActKind::Greet, ActKind::RequestSlot, ActKind::PresentResults, ActKind::Farewell]);
    }

    #[test]
    fn empty_message_clarifies_without_touching_state() {
        let e = engine(fixtures::APARTMENTS_KB);
        let (state, _) = e.greet().unwrap();
        let o = e.step(&state, "   ", 1).unwrap();
        assert_eq!(o.analysis.act.kind(), ActKind::Clarify);
        assert_eq!(o.analysis.intent, None);
        assert_eq!(o.state.constraints, state.constraints);
    }

    #[test]
    fn correction_overrides_intent_and_slots() {
        let e = engine(fixtures::APARTMENTS_KB);
        let (state, _) = e.greet().unwrap();
        let first = e.step(&state, "i want 2 bedrooms in chelsea", 1).unwrap();
        let fix = Correction {
            intent: Some(IntentLabel::Update),
            slots: Some(vec![Constraint::new("location", crate::ckr::Operator::Eq, "soho", Source::Literal)]),
        };
        let o = e.step_with(&first.state, "actually soho", 2, &fix).unwrap();
        assert_eq!(o.analysis.intent, Some(IntentLabel::Update));
        let loc = o.state.constraint("location").unwrap();
        assert_eq!(loc.provenance.source, Source::Wizard);
        assert_eq!(loc.value.to_string(), "soho");
        assert!(o.state.is_constrained("#bedroom"));
    }
}
