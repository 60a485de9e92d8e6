//! Semantic matching of utterance spans to CKR elements.
//!
//! Three stages run in a fixed order: literal, fuzzy (normalized
//! Levenshtein), and vector (cosine over averaged word embeddings). A span
//! claimed by an earlier stage is invisible to later ones. Every stage
//! implements [`MatchStage`], so any one of them can be swapped without
//! touching the others.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ckr::{export_lexicon, Ckr, CkrRef, Lexicon};
use crate::error::{Error, Result};
use crate::text;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MatchMethod {
    Literal,
    Fuzzy,
    Vector,
}

impl fmt::Display for MatchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchMethod::Literal => "LITERAL",
            MatchMethod::Fuzzy => "FUZZY",
            MatchMethod::Vector => "VECTOR",
        })
    }
}

/// A token span `[start, end)` linked to a CKR element.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchCandidate {
    pub start: usize,
    pub end: usize,
    pub surface: String,
    /// Lexicon key the span was linked through.
    pub key: String,
    pub target: CkrRef,
    pub method: MatchMethod,
    pub score: f64,
}

impl MatchCandidate {
    pub fn overlaps(&self, start: usize, end: usize) -> bool {
        self.start < end && start < self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatcherConfig {
    pub fuzzy_threshold: f64,
    pub vector_threshold: f64,
    pub max_span_tokens: usize,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            fuzzy_threshold: 0.8,
            vector_threshold: 0.7,
            max_span_tokens: 3,
        }
    }
}

impl MatcherConfig {
    pub fn validate(&self) -> Result<()> {
        check_threshold("fuzzy_threshold", self.fuzzy_threshold)?;
        check_threshold("vector_threshold", self.vector_threshold)?;
        if self.max_span_tokens == 0 {
            return Err(Error::MatcherConfig("max_span_tokens must be positive".into()));
        }
        Ok(())
    }
}

fn check_threshold(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value <= 1.0 {
        Ok(())
    } else {
        Err(Error::MatcherConfig(format!("{name} must lie in (0, 1], got {value}")))
    }
}

/// Word vectors of one shared dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize, vectors: HashMap<String, Vec<f64>>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Embedding("dimension must be positive".into()));
        }
        if vectors.is_empty() {
            return Err(Error::Embedding("embedding table is empty".into()));
        }
        if let Some((token, v)) = vectors.iter().find(|(_, v)| v.len() != dimension) {
            return Err(Error::Embedding(format!(
                "vector for {token:?} has dimension {}, expected {dimension}",
                v.len()
            )));
        }
        let vectors = vectors.into_iter().map(|(k, v)| (k.to_lowercase(), v)).collect();
        Ok(Self { dimension, vectors })
    }

    /// Parses `token c1 c2 ... cD` lines. An optional first line `COUNT DIM`
    /// is recognized by having two integer columns while the next line has
    /// `DIM + 1` columns.
    pub fn parse(source: &str, origin: &str) -> Result<Self> {
        let lines: Vec<(usize, &str)> = source
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        let mut body = &lines[..];
        let mut declared_dim = None;
        if let Some(&(_, first)) = lines.first() {
            let cols: Vec<&str> = first.split_whitespace().collect();
            if let [count, dim] = cols[..] {
                if let (Ok(_), Ok(dim)) = (count.parse::<usize>(), dim.parse::<usize>()) {
                    let next_cols = lines.get(1).map(|(_, l)| l.split_whitespace().count());
                    if next_cols.is_none_or(|n| n == dim + 1) {
                        declared_dim = Some(dim);
                        body = &lines[1..];
                    }
                }
            }
        }
        let mut vectors = HashMap::new();
        let mut dimension = declared_dim;
        for &(line, text) in body {
            let mut cols = text.split_whitespace();
            let token = cols.next().unwrap_or_default();
            let vector = cols
                .map(|c| c.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Parse {
                    path: origin.into(),
                    line,
                    message: e.to_string(),
                })?;
            let dim = *dimension.get_or_insert(vector.len());
            if vector.len() != dim {
                return Err(Error::Embedding(format!(
                    "{origin}:{line}: dimension mismatch, expected {dim}, found {}",
                    vector.len()
                )));
            }
            vectors.insert(token.to_string(), vector);
        }
        Self::new(dimension.unwrap_or(0), vectors)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path)?, &path.display().to_string())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Looks a token up, falling back to the token without a leading `#`.
    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors
            .get(token)
            .or_else(|| self.vectors.get(token.trim_start_matches('#')))
            .map(Vec::as_slice)
    }

    /// Mean of the in-vocabulary token vectors; `None` when all are OOV.
    pub fn mean<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> Option<Vec<f64>> {
        let mut sum = vec![0.0; self.dimension];
        let mut n = 0usize;
        for token in tokens {
            if let Some(v) = self.get(token) {
                sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
                n += 1;
            }
        }
        (n > 0).then(|| sum.into_iter().map(|s| s / n as f64).collect())
    }
}

/// Character-level edit distance.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let subst = prev[j] + usize::from(ca != cb);
            cur[j + 1] = subst.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - levenshtein(a, b) / max(|a|, |b|)` over characters.
pub fn edit_similarity(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / longest as f64
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Embedding(format!(
            "cannot compare vectors of dimension {} and {}",
            u.len(),
            v.len()
        )));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// One matching strategy. `consumed[i]` marks tokens already claimed by an
/// earlier stage; implementations must not emit spans touching them.
pub trait MatchStage: Send + Sync {
    fn method(&self) -> MatchMethod;

    fn find(
        &self,
        tokens: &[String],
        consumed: &[bool],
        lexicon: &Lexicon,
        max_span_tokens: usize,
    ) -> Result<Vec<MatchCandidate>>;
}

fn free_spans(consumed: &[bool], max_span: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
    (0..consumed.len()).flat_map(move |start| {
        (start + 1..=(start + max_span).min(consumed.len()))
            .take_while(move |&end| !consumed[end - 1])
            .filter(move |_| !consumed[start])
            .map(move |end| (start, end))
    })
}

/// Keeps the best-scoring spans that do not overlap: score descending, then
/// longer span, then earlier start, then key. Result is sorted by start.
///
/// Any rejected span overlaps an accepted one of equal or higher score, so
/// raising a threshold can only remove spans from the output.
fn select_non_overlapping(mut cands: Vec<MatchCandidate>) -> Vec<MatchCandidate> {
    cands.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(b.len().cmp(&a.len()))
            .then(a.start.cmp(&b.start))
            .then_with(|| a.key.cmp(&b.key))
    });
    let mut chosen: Vec<MatchCandidate> = Vec::new();
    for cand in cands {
        if chosen.iter().all(|c| !c.overlaps(cand.start, cand.end)) {
            chosen.push(cand);
        }
    }
    chosen.sort_by_key(|c| c.start);
    chosen
}

/// Keeps the highest-scoring key per span, ties to the lexicographically smaller key.
fn best_for_span(best: &mut Option<(f64, String)>, score: f64, key: &str) {
    let better = match best {
        None => true,
        Some((s, k)) => score > *s || (score == *s && key < k.as_str()),
    };
    if better {
        *best = Some((score, key.to_string()));
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct LiteralStage;

impl MatchStage for LiteralStage {
    fn method(&self) -> MatchMethod {
        MatchMethod::Literal
    }

    fn find(
        &self,
        tokens: &[String],
        consumed: &[bool],
        lexicon: &Lexicon,
        max_span_tokens: usize,
    ) -> Result<Vec<MatchCandidate>> {
        let mut out = Vec::new();
        let mut start = 0;
        'scan: while start < tokens.len() {
            let longest = max_span_tokens.min(tokens.len() - start);
            for end in (start + 1..=start + longest).rev() {
                if consumed[start..end].iter().any(|&c| c) {
                    continue;
                }
                let surface = tokens[start..end].join(" ");
                if let Some(target) = lexicon.get(&surface) {
                    out.push(MatchCandidate {
                        start,
                        end,
                        key: surface.clone(),
                        surface,
                        target: target.clone(),
                        method: MatchMethod::Literal,
                        score: 1.0,
                    });
                    start = end;
                    continue 'scan;
                }
            }
            start += 1;
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FuzzyStage {
    pub threshold: f64,
}

impl MatchStage for FuzzyStage {
    fn method(&self) -> MatchMethod {
        MatchMethod::Fuzzy
    }

    fn find(
        &self,
        tokens: &[String],
        consumed: &[bool],
        lexicon: &Lexicon,
        max_span_tokens: usize,
    ) -> Result<Vec<MatchCandidate>> {
        check_threshold("fuzzy threshold", self.threshold)?;
        let mut cands = Vec::new();
        for (start, end) in free_spans(consumed, max_span_tokens) {
            let surface = tokens[start..end].join(" ");
            let mut best = None;
            for key in lexicon.keys() {
                let sim = edit_similarity(&surface, key);
                if sim >= self.threshold {
                    best_for_span(&mut best, sim, key);
                }
            }
            if let Some((score, key)) = best {
                cands.push(MatchCandidate {
                    start,
                    end,
                    surface,
                    target: lexicon.get(&key).expect("key from lexicon").clone(),
                    key,
                    method: MatchMethod::Fuzzy,
                    score,
                });
            }
        }
        Ok(select_non_overlapping(cands))
    }
}

#[derive(Clone, Debug)]
pub struct VectorStage {
    pub table: Arc<EmbeddingTable>,
    pub threshold: f64,
}

impl MatchStage for VectorStage {
    fn method(&self) -> MatchMethod {
        MatchMethod::Vector
    }

    fn find(
        &self,
        tokens: &[String],
        consumed: &[bool],
        lexicon: &Lexicon,
        max_span_tokens: usize,
    ) -> Result<Vec<MatchCandidate>> {
        check_threshold("vector threshold", self.threshold)?;
        if self.table.is_empty() {
            return Err(Error::Embedding("vector stage enabled with an empty table".into()));
        }
        let keys: Vec<(&str, Vec<f64>)> = lexicon
            .keys()
            .filter_map(|k| self.table.mean(k.split(' ')).map(|v| (k, v)))
            .collect();
        let mut cands = Vec::new();
        for (start, end) in free_spans(consumed, max_span_tokens) {
            // An OOV edge token adds nothing to the mean; the trimmed span
            // scores the same, so only the trimmed one is considered.
            if self.table.get(&tokens[start]).is_none() || self.table.get(&tokens[end - 1]).is_none() {
                continue;
            }
            let Some(span_vec) = self.table.mean(tokens[start..end].iter().map(String::as_str)) else {
                continue;
            };
            let mut best = None;
            for (key, key_vec) in &keys {
                let cos = cosine(&span_vec, key_vec)?;
                if cos >= self.threshold {
                    best_for_span(&mut best, cos.min(1.0), key);
                }
            }
            if let Some((score, key)) = best {
                cands.push(MatchCandidate {
                    start,
                    end,
                    surface: tokens[start..end].join(" "),
                    target: lexicon.get(&key).expect("key from lexicon").clone(),
                    key,
                    method: MatchMethod::Vector,
                    score,
                });
            }
        }
        Ok(select_non_overlapping(cands))
    }
}

/// Exact, non-overlapping, longest-first matches over the whole token list.
pub fn match_literal(tokens: &[String], lexicon: &Lexicon, max_span_tokens: usize) -> Vec<MatchCandidate> {
    LiteralStage
        .find(tokens, &vec![false; tokens.len()], lexicon, max_span_tokens)
        .expect("literal matching is infallible")
}

pub fn match_fuzzy(
    tokens: &[String],
    lexicon: &Lexicon,
    threshold: f64,
    max_span_tokens: usize,
) -> Result<Vec<MatchCandidate>> {
    FuzzyStage { threshold }.find(tokens, &vec![false; tokens.len()], lexicon, max_span_tokens)
}

pub fn match_vector(
    tokens: &[String],
    lexicon: &Lexicon,
    embeddings: &Arc<EmbeddingTable>,
    threshold: f64,
    max_span_tokens: usize,
) -> Result<Vec<MatchCandidate>> {
    VectorStage {
        table: Arc::clone(embeddings),
        threshold,
    }
    .find(tokens, &vec![false; tokens.len()], lexicon, max_span_tokens)
}

/// Tokens of an utterance and the spans linked into the CKR.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchOutput {
    pub tokens: Vec<String>,
    pub candidates: Vec<MatchCandidate>,
}

/// A staged matcher over one lexicon.
pub struct Matcher {
    lexicon: Lexicon,
    stages: Vec<Box<dyn MatchStage>>,
    max_span_tokens: usize,
}

impl fmt::Debug for Matcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Matcher")
            .field("lexicon_keys", &self.lexicon.len())
            .field("stages", &self.stages.iter().map(|s| s.method()).collect::<Vec<_>>())
            .finish()
    }
}

impl Matcher {
    /// Literal and fuzzy stages always; vector stage when a table is given.
    pub fn new(ckr: &Ckr, embeddings: Option<Arc<EmbeddingTable>>, config: &MatcherConfig) -> Result<Self> {
        config.validate()?;
        let mut stages: Vec<Box<dyn MatchStage>> = vec![
            Box::new(LiteralStage),
            Box::new(FuzzyStage {
                threshold: config.fuzzy_threshold,
            }),
        ];
        if let Some(table) = embeddings {
            if table.is_empty() {
                return Err(Error::Embedding("vector stage enabled with an empty table".into()));
            }
            stages.push(Box::new(VectorStage {
                table,
                threshold: config.vector_threshold,
            }));
        }
        Ok(Self::with_stages(export_lexicon(ckr), stages, config.max_span_tokens))
    }

    pub fn with_stages(lexicon: Lexicon, stages: Vec<Box<dyn MatchStage>>, max_span_tokens: usize) -> Self {
        Self {
            lexicon,
            stages,
            max_span_tokens,
        }
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn run_tokens(&self, tokens: &[String]) -> Result<Vec<MatchCandidate>> {
        let mut consumed = vec![false; tokens.len()];
        let mut all = Vec::new();
        for stage in &self.stages {
            let found = stage.find(tokens, &consumed, &self.lexicon, self.max_span_tokens)?;
            for cand in &found {
                consumed[cand.start..cand.end].iter_mut().for_each(|c| *c = true);
            }
            all.extend(found);
        }
        all.sort_by_key(|c| c.start);
        Ok(all)
    }

    pub fn run(&self, utterance: &str) -> Result<MatchOutput> {
        let tokens = text::tokenize(utterance);
        let candidates = self.run_tokens(&tokens)?;
        Ok(MatchOutput { tokens, candidates })
    }
}

/// One-shot convenience: build the lexicon from `ckr` and match `utterance`.
pub fn match_utterance(
    utterance: &str,
    ckr: &Ckr,
    embeddings: Option<Arc<EmbeddingTable>>,
    config: &MatcherConfig,
) -> Result<Vec<MatchCandidate>> {
    Ok(Matcher::new(ckr, embeddings, config)?.run(utterance)?.candidates)
}
