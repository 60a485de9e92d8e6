//! Command implementations behind the `convsearch` binary.
//!
//! Each `cmd_*` function is usable on its own; the binary only parses flags,
//! prints and maps errors to exit codes.

pub mod args;
pub mod chat;
pub mod simulate;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use convsearch_core::ckr::{Ckr, KnowledgeBase};
use convsearch_core::dialog::PolicyConfig;
use convsearch_core::engine::{Domain, Engine};
use convsearch_core::matcher::{EmbeddingTable, Matcher, MatcherConfig};
use convsearch_core::nlu::{
    evaluate, generate_synthetic_corpus, read_corpus, train, write_corpus, Evaluation, NaiveBayesModel,
};

pub use chat::cmd_chat;
pub use simulate::{cmd_simulate, SimulationReport};

/// Name of the CKR file `ingest` writes into its output directory.
pub const CKR_FILE: &str = "ckr.json";
pub const DEFAULT_SMOOTHING: f64 = 1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct IngestReport {
    pub entity_type: String,
    pub fingerprint: String,
    pub records: usize,
    pub attributes: usize,
    pub ckr_path: PathBuf,
}

/// Builds the CKR and database for `kb` and writes the canonical CKR JSON.
pub fn cmd_ingest(kb: &Path, out_dir: &Path) -> Result<IngestReport> {
    let domain = Domain::build(read_kb(kb)?, None, &MatcherConfig::default())?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let ckr_path = out_dir.join(CKR_FILE);
    std::fs::write(&ckr_path, domain.ckr.to_canonical_json())
        .with_context(|| format!("writing {}", ckr_path.display()))?;
    Ok(IngestReport {
        entity_type: domain.ckr.entity_type.clone(),
        fingerprint: domain.ckr.fingerprint.clone(),
        records: domain.db.len(),
        attributes: domain.ckr.attributes.len(),
        ckr_path,
    })
}

/// Trains naive Bayes on `corpus`, delexicalizing against `ckr`.
pub fn cmd_train(corpus: &Path, ckr: &Path, out_model: &Path, embeddings: Option<&Path>) -> Result<NaiveBayesModel> {
    let examples = read_corpus(corpus).with_context(|| format!("reading corpus {}", corpus.display()))?;
    let matcher = ckr_matcher(&read_ckr(ckr)?, embeddings)?;
    let model = train(&examples, &matcher, DEFAULT_SMOOTHING)?;
    std::fs::write(out_model, model.to_json()).with_context(|| format!("writing {}", out_model.display()))?;
    Ok(model)
}

pub fn cmd_eval(model: &Path, corpus: &Path, ckr: &Path, embeddings: Option<&Path>) -> Result<Evaluation> {
    let model = NaiveBayesModel::from_path(model).with_context(|| format!("loading model {}", model.display()))?;
    let examples = read_corpus(corpus).with_context(|| format!("reading corpus {}", corpus.display()))?;
    let matcher = ckr_matcher(&read_ckr(ckr)?, embeddings)?;
    Ok(evaluate(&model, &examples, &matcher)?)
}

/// Writes a seeded synthetic corpus for the domain described by `ckr`.
pub fn cmd_generate_corpus(ckr: &Path, per_label: usize, seed: u64, out: &Path) -> Result<usize> {
    if per_label == 0 {
        bail!("--per-label must be positive");
    }
    let corpus = generate_synthetic_corpus(&read_ckr(ckr)?, per_label, seed);
    write_corpus(out, &corpus).with_context(|| format!("writing {}", out.display()))?;
    Ok(corpus.len())
}

/// Exports training examples from the logs in `data_dir` to `out`.
/// Missing or empty logs give an empty file.
pub fn cmd_export_training(data_dir: &Path, out: &Path) -> Result<usize> {
    let examples = convsearch_server::export_training_dir(data_dir)?;
    write_corpus(out, &examples).with_context(|| format!("writing {}", out.display()))?;
    Ok(examples.len())
}

/// Where to load a domain and model from.
#[derive(Clone, Debug, Default)]
pub struct EngineSource {
    pub kb: PathBuf,
    /// When given, the CKR built from `kb` must have this file's fingerprint.
    pub ckr: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    /// Seed for the synthetic corpus used when no model is given.
    pub seed: u64,
    pub policy: PolicyConfig,
}

impl EngineSource {
    pub fn new(kb: impl Into<PathBuf>) -> Self {
        Self {
            kb: kb.into(),
            seed: convsearch_core::engine::BOOTSTRAP_SEED,
            ..Default::default()
        }
    }

    pub fn load(&self) -> Result<Engine> {
        let embeddings = self.embeddings.as_deref().map(load_embeddings).transpose()?;
        let mut domain = Domain::build(read_kb(&self.kb)?, embeddings, &MatcherConfig::default())?;
        if let Some(p) = &self.ckr {
            let expected = read_ckr(p)?;
            if expected.fingerprint != domain.ckr.fingerprint {
                bail!(
                    "{} has fingerprint {} but {} builds {}",
                    p.display(),
                    expected.fingerprint,
                    self.kb.display(),
                    domain.ckr.fingerprint
                );
            }
        }
        if let Some(p) = &self.templates {
            domain.templates.load_overrides_path(p)?;
        }
        let model = match &self.model {
            Some(p) => NaiveBayesModel::from_path(p).with_context(|| format!("loading model {}", p.display()))?,
            None => {
                let corpus =
                    generate_synthetic_corpus(&domain.ckr, convsearch_core::engine::BOOTSTRAP_PER_LABEL, self.seed);
                train(&corpus, &domain.matcher, DEFAULT_SMOOTHING)?
            }
        };
        Ok(Engine::new(Arc::new(domain), Arc::new(model), self.policy)?)
    }
}

fn read_kb(path: &Path) -> Result<KnowledgeBase> {
    KnowledgeBase::from_path(path).with_context(|| format!("loading knowledge base {}", path.display()))
}

fn read_ckr(path: &Path) -> Result<Ckr> {
    Ckr::from_path(path).with_context(|| format!("loading ckr {}", path.display()))
}

fn load_embeddings(path: &Path) -> Result<Arc<EmbeddingTable>> {
    let table = EmbeddingTable::from_path(path).with_context(|| format!("loading embeddings {}", path.display()))?;
    Ok(Arc::new(table))
}

fn ckr_matcher(ckr: &Ckr, embeddings: Option<&Path>) -> Result<Matcher> {
    let embeddings = embeddings.map(load_embeddings).transpose()?;
    Ok(Matcher::new(ckr, embeddings, &MatcherConfig::default())?)
}
