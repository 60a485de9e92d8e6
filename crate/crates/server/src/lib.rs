//! HTTP session service over the conversational-search engine.
//!
//! Sessions run either autonomously or in Wizard-of-Oz mode, where each
//! system turn is held as a proposal until a human accepts or corrects it.
//! Every turn goes to `transcripts.jsonl` and every correction or rating to
//! `feedback.jsonl` in the data directory; both files are append-only and
//! feed [`export::export_training`].
//!
//! The domain (KB, CKR, database, matcher) is swapped atomically on ingest.
//! A session keeps the domain it was created with for its whole lifetime.

mod app;
pub mod error;
pub mod export;
pub mod log;
pub mod model;

use std::future::Future;
use std::sync::Arc;

pub use app::{
    router, AppState, CreatedSession, Decision, IngestSummary, MessageReply, PendingProposal, ReplyStatus,
    ServerConfig, TrainSummary, WizardSubmit,
};
pub use error::{ApiError, ApiResult};
pub use export::{export_training, export_training_dir, FEEDBACK_LOG, TRANSCRIPT_LOG};

/// Serves `state` on `listener` until `shutdown` resolves.
pub async fn serve(
    state: Arc<AppState>,
    listener: tokio::net::TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
