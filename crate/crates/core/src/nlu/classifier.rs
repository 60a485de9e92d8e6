//! Multinomial naive Bayes over unigram and bigram features of delexicalized
//! tokens. Value and attribute placeholders are reduced to their role
//! (`⟨VAL⟩`, `⟨ATTR⟩`) before featurization so a model trained in one domain
//! sees the same features in another.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::delex::DelexUtterance;
use super::{IntentLabel, TrainingExample};
use crate::error::{Error, Result};
use crate::matcher::Matcher;
use crate::nlu::delexicalize_tokens;

pub const MODEL_FORMAT: &str = "convsearch-naive-bayes/1";

/// Predicted label with the full posterior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: IntentLabel,
    pub confidence: BTreeMap<IntentLabel, f64>,
}

/// Anything that can label a delexicalized utterance.
pub trait IntentClassifier: Send + Sync {
    fn labels(&self) -> &[IntentLabel];
    fn classify(&self, delex: &DelexUtterance) -> Classification;
}

fn role_token(token: &str) -> &str {
    if token.starts_with("⟨VAL:") {
        "⟨VAL⟩"
    } else if token.starts_with("⟨ATTR:") {
        "⟨ATTR⟩"
    } else {
        token
    }
}

/// Unigrams followed by bigrams.
pub fn features(delex: &DelexUtterance) -> Vec<String> {
    let roles: Vec<&str> = delex.tokens.iter().map(|t| role_token(t)).collect();
    let mut out: Vec<String> = roles.iter().map(|t| t.to_string()).collect();
    out.extend(roles.windows(2).map(|w| format!("{} {}", w[0], w[1])));
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct NaiveBayesModel {
    labels: Vec<IntentLabel>,
    smoothing: f64,
    label_counts: BTreeMap<IntentLabel, u64>,
    feature_counts: BTreeMap<IntentLabel, BTreeMap<String, u64>>,
    vocabulary: BTreeSet<String>,
    log_priors: Vec<f64>,
    log_likelihood: Vec<HashMap<String, f64>>,
    log_unseen: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    smoothing: f64,
    labels: Vec<IntentLabel>,
    priors: BTreeMap<IntentLabel, f64>,
    label_counts: BTreeMap<IntentLabel, u64>,
    feature_counts: BTreeMap<IntentLabel, BTreeMap<String, u64>>,
    vocabulary: BTreeSet<String>,
}

impl NaiveBayesModel {
    fn from_counts(
        smoothing: f64,
        label_counts: BTreeMap<IntentLabel, u64>,
        mut feature_counts: BTreeMap<IntentLabel, BTreeMap<String, u64>>,
    ) -> Self {
        let labels: Vec<IntentLabel> = label_counts.keys().copied().collect();
        let vocabulary: BTreeSet<String> = feature_counts.values().flat_map(|m| m.keys().cloned()).collect();
        let total: u64 = label_counts.values().sum();
        let v = vocabulary.len() as f64;

        let mut log_priors = Vec::with_capacity(labels.len());
        let mut log_likelihood = Vec::with_capacity(labels.len());
        let mut log_unseen = Vec::with_capacity(labels.len());
        for label in &labels {
            log_priors.push((label_counts[label] as f64 / total as f64).ln());
            let counts = feature_counts.entry(*label).or_default();
            let n_c: u64 = counts.values().sum();
            let denom = (n_c as f64 + smoothing * v).ln();
            log_likelihood.push(
                counts
                    .iter()
                    .map(|(f, &n)| (f.clone(), (n as f64 + smoothing).ln() - denom))
                    .collect(),
            );
            log_unseen.push(smoothing.ln() - denom);
        }
        Self {
            labels,
            smoothing,
            label_counts,
            feature_counts,
            vocabulary,
            log_priors,
            log_likelihood,
            log_unseen,
        }
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn vocabulary(&self) -> &BTreeSet<String> {
        &self.vocabulary
    }

    pub fn priors(&self) -> BTreeMap<IntentLabel, f64> {
        self.labels
            .iter()
            .zip(&self.log_priors)
            .map(|(l, lp)| (*l, lp.exp()))
            .collect()
    }

    /// Canonical JSON of the counts and priors, tagged with [`MODEL_FORMAT`].
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            smoothing: self.smoothing,
            labels: self.labels.clone(),
            priors: self.priors(),
            label_counts: self.label_counts.clone(),
            feature_counts: self.feature_counts.clone(),
            vocabulary: self.vocabulary.clone(),
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(json)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::ModelFormat(file.format));
        }
        if file.label_counts.len() < 2 {
            return Err(Error::SingleLabelCorpus(file.label_counts.len()));
        }
        Ok(Self::from_counts(file.smoothing, file.label_counts, file.feature_counts))
    }

    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Unnormalized log posterior per label, in label order.
    fn log_scores(&self, feats: &[String]) -> Vec<f64> {
        (0..self.labels.len())
            .map(|i| {
                let table = &self.log_likelihood[i];
                feats.iter().fold(self.log_priors[i], |acc, f| {
                    acc + table.get(f).copied().unwrap_or(self.log_unseen[i])
                })
            })
            .collect()
    }
}

impl IntentClassifier for NaiveBayesModel {
    fn labels(&self) -> &[IntentLabel] {
        &self.labels
    }

    fn classify(&self, delex: &DelexUtterance) -> Classification {
        let scores = self.log_scores(&features(delex));
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = weights.iter().sum();
        let confidence: BTreeMap<IntentLabel, f64> =
            self.labels.iter().zip(&weights).map(|(l, w)| (*l, w / z)).collect();
        // Labels are in declaration order, so the first maximum wins ties.
        let mut best = 0;
        for (i, s) in scores.iter().enumerate() {
            if *s > scores[best] {
                best = i;
            }
        }
        Classification {
            label: self.labels[best],
            confidence,
        }
    }
}

pub fn classify(model: &dyn IntentClassifier, delex: &DelexUtterance) -> Classification {
    model.classify(delex)
}

/// Fits the model on already-delexicalized utterances.
pub fn train_delexicalized(examples: &[(DelexUtterance, IntentLabel)], smoothing: f64) -> Result<NaiveBayesModel> {
    if examples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut label_counts: BTreeMap<IntentLabel, u64> = BTreeMap::new();
    let mut feature_counts: BTreeMap<IntentLabel, BTreeMap<String, u64>> = BTreeMap::new();
    for (delex, label) in examples {
        *label_counts.entry(*label).or_default() += 1;
        let counts = feature_counts.entry(*label).or_default();
        for f in features(delex) {
            *counts.entry(f).or_default() += 1;
        }
    }
    if label_counts.len() < 2 {
        return Err(Error::SingleLabelCorpus(label_counts.len()));
    }
    Ok(NaiveBayesModel::from_counts(smoothing, label_counts, feature_counts))
}

fn delex_with(matcher: &Matcher, text: &str) -> Result<DelexUtterance> {
    let out = matcher.run(text)?;
    delexicalize_tokens(&out.tokens, &out.candidates)
}

/// Delexicalizes each example through `matcher` and fits naive Bayes with
/// additive smoothing.
pub fn train(examples: &[TrainingExample], matcher: &Matcher, smoothing: f64) -> Result<NaiveBayesModel> {
    if examples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let delexed = examples
        .iter()
        .map(|ex| {
            if ex.text.trim().is_empty() {
                return Err(Error::EmptyExampleText);
            }
            Ok((delex_with(matcher, &ex.text)?, ex.intent))
        })
        .collect::<Result<Vec<_>>>()?;
    train_delexicalized(&delexed, smoothing)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Row = true label, column = predicted label, both in [`IntentLabel::ALL`] order.
    pub confusion: Vec<Vec<u64>>,
}

impl Evaluation {
    pub fn render(&self) -> String {
        let mut out = format!("accuracy: {:.3} ({}/{})\n", self.accuracy, self.correct, self.total);
        let _ = write!(out, "{:>13}", "true\\pred");
        for l in IntentLabel::ALL {
            let _ = write!(out, " {:>6}", &l.as_str()[..l.as_str().len().min(6)]);
        }
        out.push('\n');
        for (row, l) in self.confusion.iter().zip(IntentLabel::ALL) {
            let _ = write!(out, "{:>13}", l.as_str());
            for n in row {
                let _ = write!(out, " {n:>6}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn evaluate(model: &dyn IntentClassifier, test: &[TrainingExample], matcher: &Matcher) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let index = |l: IntentLabel| IntentLabel::ALL.iter().position(|x| *x == l).expect("label");
    let mut confusion = vec![vec![0u64; IntentLabel::ALL.len()]; IntentLabel::ALL.len()];
    let mut correct = 0;
    for ex in test {
        let predicted = model.classify(&delex_with(matcher, &ex.text)?).label;
        confusion[index(ex.intent)][index(predicted)] += 1;
        correct += usize::from(predicted == ex.intent);
    }
    Ok(Evaluation {
        total: test.len(),
        correct,
        accuracy: correct as f64 / test.len() as f64,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ckr::Lexicon;

    fn plain_matcher() -> Matcher {
        Matcher::with_stages(Lexicon::new(), vec![], 3)
    }

    fn ex(text: &str, intent: IntentLabel) -> TrainingExample {
        TrainingExample {
            text: text.into(),
            intent,
        }
    }

    fn delex(tokens: &[&str]) -> DelexUtterance {
        DelexUtterance {
            tokens: tokens.iter().map(|t| t.to_string()).collect(),
            alignment: vec![],
        }
    }

    fn toy() -> Vec<TrainingExample> {
        vec![ex("hi", IntentLabel::Greet), ex("bye", IntentLabel::End)]
    }

    #[test]
    fn disjoint_toy_corpus() {
        let m = plain_matcher();
        let model = train(&toy(), &m, 1.0).unwrap();
        assert_eq!(model.classify(&delex(&["hi"])).label, IntentLabel::Greet);
        assert_eq!(model.classify(&delex(&["bye"])).label, IntentLabel::End);
        let eval = evaluate(&model, &toy(), &m).unwrap();
        assert_eq!(eval.accuracy, 1.0);
        assert_eq!(eval.confusion.iter().map(|r| r.iter().sum::<u64>()).sum::<u64>(), 2);
    }

    #[test]
    fn corpus_preconditions() {
        let m = plain_matcher();
        assert!(matches!(train(&[], &m, 1.0), Err(Error::EmptyCorpus)));
        let single = [ex("hi", IntentLabel::Greet), ex("hello", IntentLabel::Greet)];
        assert!(matches!(train(&single, &m, 1.0), Err(Error::SingleLabelCorpus(1))));
        assert!(matches!(
            train(&[ex(" ", IntentLabel::Greet), ex("x", IntentLabel::End)], &m, 1.0),
            Err(Error::EmptyExampleText)
        ));
        let model = train(&toy(), &m, 1.0).unwrap();
        assert!(matches!(evaluate(&model, &[], &m), Err(Error::EmptyTestSet)));
    }

    #[test]
    fn wrong_prediction_scores_zero() {
        let m = plain_matcher();
        let model = train(&toy(), &m, 1.0).unwrap();
        let eval = evaluate(&model, &[ex("hi", IntentLabel::End)], &m).unwrap();
        assert_eq!(eval.accuracy, 0.0);
        assert_eq!(eval.confusion[8][7], 1);
    }

    #[test]
    fn empty_input_follows_priors() {
        let m = plain_matcher();
        let corpus = [
            ex("hi", IntentLabel::Greet),
            ex("bye", IntentLabel::End),
            ex("bye now", IntentLabel::End),
        ];
        let model = train(&corpus, &m, 1.0).unwrap();
        let c = model.classify(&delex(&[]));
        assert_eq!(c.label, IntentLabel::End);
        assert!((c.confidence[&IntentLabel::End] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ties_break_by_declaration_order() {
        let model = train(&toy(), &plain_matcher(), 1.0).unwrap();
        // No evidence and equal priors: GREET precedes END.
        assert_eq!(model.classify(&delex(&[])).label, IntentLabel::Greet);
    }

    #[test]
    fn posteriors_normalize() {
        let corpus: Vec<_> = IntentLabel::ALL
            .iter()
            .enumerate()
            .map(|(i, l)| ex(&format!("word{i} shared"), *l))
            .collect();
        let model = train(&corpus, &plain_matcher(), 1.0).unwrap();
        for input in [vec![], vec!["shared"], vec!["word3", "unseen"]] {
            let c = model.classify(&delex(&input));
            assert_eq!(c.confidence.len(), 9);
            let sum: f64 = c.confidence.values().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(c.confidence.values().all(|p| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn placeholders_reduce_to_roles() {
        let d = delex(&["⟨NUM⟩", "⟨ATTR:#bedroom⟩", "in", "⟨VAL:location⟩"]);
        assert_eq!(
            features(&d),
            ["⟨NUM⟩", "⟨ATTR⟩", "in", "⟨VAL⟩", "⟨NUM⟩ ⟨ATTR⟩", "⟨ATTR⟩ in", "in ⟨VAL⟩"]
        );
    }

    #[test]
    fn model_json_roundtrip() {
        let model = train(&toy(), &plain_matcher(), 1.0).unwrap();
        let json = model.to_json();
        let back = NaiveBayesModel::from_json(&json).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_json(), json);
        let wrong = json.replace(MODEL_FORMAT, "other/9");
        assert!(matches!(NaiveBayesModel::from_json(&wrong), Err(Error::ModelFormat(_))));
    }
}
