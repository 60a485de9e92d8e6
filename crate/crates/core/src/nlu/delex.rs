use serde::{Deserialize, Serialize};

use crate::ckr::CkrRef;
use crate::error::{Error, Result};
use crate::matcher::MatchCandidate;
use crate::text;

pub const NUM_PLACEHOLDER: &str = "⟨NUM⟩";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PlaceholderSource {
    Match { candidate: MatchCandidate },
    Number { value: f64 },
}

/// Links one placeholder token back to what it replaced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignedPlaceholder {
    /// Index into [`DelexUtterance::tokens`].
    pub position: usize,
    /// Original tokens covered by the placeholder.
    pub surface: Vec<String>,
    pub source: PlaceholderSource,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DelexUtterance {
    pub tokens: Vec<String>,
    pub alignment: Vec<AlignedPlaceholder>,
}

impl DelexUtterance {
    pub fn placeholder_at(&self, position: usize) -> Option<&AlignedPlaceholder> {
        self.alignment
            .binary_search_by_key(&position, |a| a.position)
            .ok()
            .map(|i| &self.alignment[i])
    }

    /// Reconstructs the tokenized original by expanding every placeholder.
    pub fn restore(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, token) in self.tokens.iter().enumerate() {
            match self.placeholder_at(i) {
                Some(p) => out.extend(p.surface.iter().cloned()),
                None => out.push(token.clone()),
            }
        }
        out
    }
}

fn placeholder_for(target: &CkrRef) -> String {
    match target {
        CkrRef::Attribute { attribute } => format!("⟨ATTR:{attribute}⟩"),
        CkrRef::Value { attribute, .. } => format!("⟨VAL:{attribute}⟩"),
    }
}

/// Replaces matched spans and bare numerals in `tokens` with placeholders.
pub fn delexicalize_tokens(tokens: &[String], candidates: &[MatchCandidate]) -> Result<DelexUtterance> {
    let mut sorted: Vec<&MatchCandidate> = candidates.iter().collect();
    sorted.sort_by_key(|c| c.start);
    for c in &sorted {
        if c.start >= c.end || c.end > tokens.len() {
            return Err(Error::InvalidSpan(c.start, c.end));
        }
    }
    for pair in sorted.windows(2) {
        if pair[1].start < pair[0].end {
            return Err(Error::OverlappingCandidates(
                (pair[0].start, pair[0].end),
                (pair[1].start, pair[1].end),
            ));
        }
    }

    let mut out = DelexUtterance::default();
    let mut next = sorted.into_iter().peekable();
    let mut i = 0;
    while i < tokens.len() {
        if let Some(cand) = next.next_if(|c| c.start == i) {
            out.alignment.push(AlignedPlaceholder {
                position: out.tokens.len(),
                surface: tokens[cand.start..cand.end].to_vec(),
                source: PlaceholderSource::Match {
                    candidate: cand.clone(),
                },
            });
            out.tokens.push(placeholder_for(&cand.target));
            i = cand.end;
            continue;
        }
        if let Some(value) = text::parse_number(&tokens[i]) {
            out.alignment.push(AlignedPlaceholder {
                position: out.tokens.len(),
                surface: vec![tokens[i].clone()],
                source: PlaceholderSource::Number { value },
            });
            out.tokens.push(NUM_PLACEHOLDER.to_string());
        } else {
            out.tokens.push(tokens[i].clone());
        }
        i += 1;
    }
    Ok(out)
}

/// Tokenizes `utterance` and delexicalizes it against `candidates`, which
/// must come from matching the same utterance.
pub fn delexicalize(utterance: &str, candidates: &[MatchCandidate]) -> Result<DelexUtterance> {
    delexicalize_tokens(&text::tokenize(utterance), candidates)
}
