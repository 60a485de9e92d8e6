//! Session, transcript and feedback records.

use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use convsearch_core::dialog::{Constraint, DialogState};
use convsearch_core::engine::{Domain, TurnAnalysis};
use convsearch_core::nlg::Prompt;
use convsearch_core::nlu::IntentLabel;
use convsearch_core::query::ResultSet;
use serde::{Deserialize, Serialize};

pub fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    #[default]
    Auto,
    Woz,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Speaker {
    User,
    System,
    Wizard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptTurn {
    pub turn: usize,
    pub speaker: Speaker,
    pub text: String,
    /// On user turns: what the pipeline made of the utterance. On wizard
    /// turns: the analysis after the wizard's corrections.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<TurnAnalysis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<Prompt>,
    pub latency_ms: u64,
}

/// One line of the transcript log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub session_id: String,
    pub timestamp: u64,
    #[serde(flatten)]
    pub turn: TranscriptTurn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Rating {
    Up,
    Down,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    #[default]
    User,
    Wizard,
}

/// Fields a client may send; see [`FeedbackRecord`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeedbackInput {
    pub turn: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected_intent: Option<IntentLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected_slots: Option<Vec<Constraint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wizard_prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating: Option<Rating>,
}

impl FeedbackInput {
    pub fn is_empty(&self) -> bool {
        self.corrected_intent.is_none()
            && self.corrected_slots.is_none()
            && self.wizard_prompt.is_none()
            && self.rating.is_none()
    }
}

/// A correction or rating tied to one session turn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub session_id: String,
    #[serde(flatten)]
    pub input: FeedbackInput,
    #[serde(default)]
    pub origin: Origin,
    pub timestamp: u64,
}

/// A system turn held back for a wizard.
#[derive(Clone, Debug)]
pub struct PendingTurn {
    /// Index the system turn will take in the transcript.
    pub turn: usize,
    /// `None` for the opening greeting.
    pub user_text: Option<String>,
    /// Index of the user turn, used as constraint provenance on re-runs.
    pub user_turn: Option<usize>,
    pub base_state: DialogState,
    pub proposed_state: DialogState,
    pub analysis: Option<TurnAnalysis>,
    pub prompt: Prompt,
    pub results: ResultSet,
}

#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub mode: Mode,
    pub domain: Arc<Domain>,
    pub state: DialogState,
    pub transcript: Vec<TranscriptTurn>,
    pub pending: Option<PendingTurn>,
    pub created: u64,
    pub updated: u64,
}

/// Wire view of a session.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub mode: Mode,
    pub state: DialogState,
    pub state_fingerprint: String,
    pub ckr_fingerprint: String,
    pub transcript: Vec<TranscriptTurn>,
    pub pending: bool,
    pub created: u64,
    pub updated: u64,
}

impl Session {
    pub fn view(&self) -> SessionView {
        SessionView {
            id: self.id.clone(),
            mode: self.mode,
            state: self.state.clone(),
            state_fingerprint: self.state.fingerprint(),
            ckr_fingerprint: self.domain.ckr.fingerprint.clone(),
            transcript: self.transcript.clone(),
            pending: self.pending.is_some(),
            created: self.created,
            updated: self.updated,
        }
    }
}
