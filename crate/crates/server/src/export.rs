//! Turns logged feedback into classifier training examples.

use std::collections::HashMap;
use std::path::Path;

use convsearch_core::nlu::TrainingExample;

use crate::log::read_log;
use crate::model::{FeedbackRecord, Origin, Rating, Speaker, TranscriptEntry};

pub const TRANSCRIPT_LOG: &str = "transcripts.jsonl";
pub const FEEDBACK_LOG: &str = "feedback.jsonl";

/// One example per usable feedback record, in log order.
///
/// A record with `corrected_intent` labels the user text of its turn with
/// that intent. A wizard acceptance (`rating: UP`, wizard origin) labels it
/// with the intent the system proposed. A feedback turn pointing at a system
/// turn resolves to the closest user turn before it.
pub fn export_training(feedback: &[FeedbackRecord], transcripts: &[TranscriptEntry]) -> Vec<TrainingExample> {
    let mut by_session: HashMap<&str, Vec<&TranscriptEntry>> = HashMap::new();
    for entry in transcripts {
        by_session.entry(&entry.session_id).or_default().push(entry);
    }
    let user_turn = |session: &str, turn: usize| {
        by_session.get(session).and_then(|turns| {
            turns
                .iter()
                .filter(|e| e.turn.speaker == Speaker::User && e.turn.turn <= turn)
                .max_by_key(|e| e.turn.turn)
                .copied()
        })
    };

    let mut out = Vec::new();
    for record in feedback {
        let Some(entry) = user_turn(&record.session_id, record.input.turn) else {
            continue;
        };
        let intent = match (record.input.corrected_intent, record.origin, record.input.rating) {
            (Some(intent), _, _) => Some(intent),
            (None, Origin::Wizard, Some(Rating::Up)) => entry.turn.analysis.as_ref().and_then(|a| a.intent),
            _ => None,
        };
        if let Some(intent) = intent {
            out.push(TrainingExample {
                text: entry.turn.text.clone(),
                intent,
            });
        }
    }
    out
}

/// Reads both logs from `data_dir` and exports.
pub fn export_training_dir(data_dir: &Path) -> std::io::Result<Vec<TrainingExample>> {
    let feedback: Vec<FeedbackRecord> = read_log(&data_dir.join(FEEDBACK_LOG))?;
    let transcripts: Vec<TranscriptEntry> = read_log(&data_dir.join(TRANSCRIPT_LOG))?;
    Ok(export_training(&feedback, &transcripts))
}
