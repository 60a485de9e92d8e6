//! Flag definitions and dispatch.

use std::io::IsTerminal;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use convsearch_core::dialog::PolicyConfig;
use convsearch_core::engine::BOOTSTRAP_SEED;
use convsearch_server::{AppState, ServerConfig};

use crate::{
    cmd_chat, cmd_eval, cmd_export_training, cmd_generate_corpus, cmd_ingest, cmd_simulate, cmd_train, EngineSource,
};

#[derive(Debug, Parser)]
#[command(name = "convsearch", version, about = "Knowledge-grounded conversational search")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every command that runs the dialog pipeline.
#[derive(Debug, Args)]
pub struct EngineArgs {
    /// Knowledge base JSON.
    #[arg(long)]
    pub kb: PathBuf,
    /// CKR the knowledge base is expected to produce.
    #[arg(long)]
    pub ckr: Option<PathBuf>,
    /// Trained model; without one a model is trained on a synthetic corpus.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// NDJSON prompt templates that override the defaults.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long, default_value_t = BOOTSTRAP_SEED)]
    pub seed: u64,
    #[command(flatten)]
    pub policy: PolicyArgs,
}

#[derive(Debug, Args)]
pub struct PolicyArgs {
    /// Present results once at most this many remain.
    #[arg(long, env = "CONVSEARCH_PRESENT_THRESHOLD", default_value_t = PolicyConfig::default().present_threshold)]
    pub present_threshold: usize,
    /// Records listed in a results prompt.
    #[arg(long, env = "CONVSEARCH_MAX_SHOWN", default_value_t = PolicyConfig::default().max_shown)]
    pub max_shown: usize,
    #[arg(long, env = "CONVSEARCH_ENTROPY_FLOOR", default_value_t = PolicyConfig::default().entropy_floor)]
    pub entropy_floor: f64,
}

impl From<&PolicyArgs> for PolicyConfig {
    fn from(a: &PolicyArgs) -> Self {
        Self {
            present_threshold: a.present_threshold,
            max_shown: a.max_shown,
            entropy_floor: a.entropy_floor,
        }
    }
}

impl EngineArgs {
    fn source(&self) -> EngineSource {
        EngineSource {
            kb: self.kb.clone(),
            ckr: self.ckr.clone(),
            model: self.model.clone(),
            embeddings: self.embeddings.clone(),
            templates: self.templates.clone(),
            seed: self.seed,
            policy: (&self.policy).into(),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the CKR and database from a knowledge base and write ckr.json.
    Ingest {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Train the intent classifier on an NDJSON corpus.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        ckr: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Print accuracy and the confusion matrix of a model on a corpus.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        ckr: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Write a seeded synthetic training corpus for a CKR.
    GenerateCorpus {
        #[arg(long)]
        ckr: PathBuf,
        #[arg(long, default_value_t = 40)]
        per_label: usize,
        #[arg(long, default_value_t = BOOTSTRAP_SEED)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Talk to the pipeline on stdin and stdout.
    Chat {
        #[command(flatten)]
        engine: EngineArgs,
        /// Show intent, matches and act for every turn.
        #[arg(long)]
        debug: bool,
    },
    /// Replay a scripted dialog and check its expectations.
    Simulate {
        script: PathBuf,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Run the HTTP server.
    Serve(ServeArgs),
    /// Turn the feedback and transcript logs into a training corpus.
    ExportTraining {
        #[arg(long, env = "CONVSEARCH_DATA_DIR", default_value = "data")]
        data_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "CONVSEARCH_LISTEN", default_value = "127.0.0.1:8080")]
    pub listen: String,
    #[arg(long, env = "CONVSEARCH_DATA_DIR", default_value = "data")]
    pub data_dir: PathBuf,
    /// Knowledge base loaded at startup; otherwise wait for /admin/ingest.
    #[arg(long, env = "CONVSEARCH_KB")]
    pub kb: Option<PathBuf>,
    #[arg(long, env = "CONVSEARCH_MODEL")]
    pub model: Option<PathBuf>,
    #[arg(long, env = "CONVSEARCH_EMBEDDINGS")]
    pub embeddings: Option<PathBuf>,
    #[arg(long, env = "CONVSEARCH_TEMPLATES")]
    pub templates: Option<PathBuf>,
    #[command(flatten)]
    pub policy: PolicyArgs,
}

impl ServeArgs {
    pub fn config(&self) -> ServerConfig {
        ServerConfig {
            data_dir: self.data_dir.clone(),
            kb_path: self.kb.clone(),
            model_path: self.model.clone(),
            embeddings_path: self.embeddings.clone(),
            templates_path: self.templates.clone(),
            policy: (&self.policy).into(),
            ..Default::default()
        }
    }
}

/// Runs one command. `Ok(false)` means it ran but did not pass.
pub fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Ingest { kb, out } => {
            let r = cmd_ingest(&kb, &out)?;
            println!("entity_type {}", r.entity_type);
            println!("fingerprint {}", r.fingerprint);
            println!("records {}", r.records);
            println!("attributes {}", r.attributes);
            println!("wrote {}", r.ckr_path.display());
        }
        Command::Train {
            corpus,
            ckr,
            out,
            embeddings,
        } => {
            let model = cmd_train(&corpus, &ckr, &out, embeddings.as_deref())?;
            println!("labels {}", model.priors().len());
            println!("vocabulary {}", model.vocabulary().len());
            println!("wrote {}", out.display());
        }
        Command::Eval {
            model,
            corpus,
            ckr,
            embeddings,
        } => print!("{}", cmd_eval(&model, &corpus, &ckr, embeddings.as_deref())?.render()),
        Command::GenerateCorpus {
            ckr,
            per_label,
            seed,
            out,
        } => {
            let n = cmd_generate_corpus(&ckr, per_label, seed, &out)?;
            println!("wrote {n} examples to {}", out.display());
        }
        Command::Chat { engine, debug } => {
            let engine = engine.source().load()?;
            let stdin = std::io::stdin();
            if stdin.is_terminal() {
                eprintln!("(type a message per line; \"bye\" or end of input quits)");
            }
            cmd_chat(&engine, stdin.lock(), std::io::stdout().lock(), debug)?;
        }
        Command::Simulate { script, engine } => {
            let report = cmd_simulate(&engine.source().load()?, &script)?;
            println!("{report}");
            return Ok(report.passed());
        }
        Command::Serve(args) => serve(&args)?,
        Command::ExportTraining { data_dir, out } => {
            let n = cmd_export_training(&data_dir, &out)?;
            println!("wrote {n} examples to {}", out.display());
        }
    }
    Ok(true)
}

fn serve(args: &ServeArgs) -> Result<()> {
    let state = Arc::new(AppState::new(args.config())?);
    if !state.is_ready() {
        tracing::warn!("no knowledge base loaded; POST /admin/ingest before creating sessions");
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&args.listen)
            .await
            .with_context(|| format!("binding {}", args.listen))?;
        tracing::info!(addr = %listener.local_addr()?, "listening");
        convsearch_server::serve(state, listener, async {
            if tokio::signal::ctrl_c().await.is_err() {
                std::future::pending::<()>().await;
            }
        })
        .await?;
        Ok::<_, anyhow::Error>(())
    })?;
    Ok(())
}

/// Parses `argv`-style arguments; handy in tests.
pub fn parse<I, T>(args: I) -> Result<Cli>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => Ok(cli),
        Err(e) => bail!("{e}"),
    }
}
