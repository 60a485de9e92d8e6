use std::sync::Arc;

use convsearch_core::fixtures;
use convsearch_server::model::{FeedbackRecord, Origin, Rating, SessionView};
use convsearch_server::{AppState, ServerConfig, FEEDBACK_LOG};
use serde_json::{json, Value};
use tokio::sync::oneshot;

struct Running {
    base: String,
    client: reqwest::Client,
    state: Arc<AppState>,
    dir: tempfile::TempDir,
    _stop: oneshot::Sender<()>,
}

async fn spawn(with_kb: bool) -> Running {
    let dir = tempfile::tempdir().unwrap();
    let kb_path = dir.path().join("apartments.json");
    std::fs::write(&kb_path, fixtures::APARTMENTS_KB).unwrap();
    let config = ServerConfig {
        data_dir: dir.path().join("data"),
        kb_path: with_kb.then_some(kb_path),
        ..Default::default()
    };
    let state = Arc::new(AppState::new(config).unwrap());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let (stop, rx) = oneshot::channel();
    let served = Arc::clone(&state);
    tokio::spawn(async move {
        convsearch_server::serve(served, listener, async {
            rx.await.ok();
        })
        .await
        .unwrap();
    });
    Running {
        base,
        client: reqwest::Client::new(),
        state,
        dir,
        _stop: stop,
    }
}

impl Running {
    async fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let r = self.client.post(format!("{}{path}", self.base)).json(&body).send().await.unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    async fn get(&self, path: &str) -> (u16, Value) {
        let r = self.client.get(format!("{}{path}", self.base)).send().await.unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    async fn session(&self, mode: &str) -> String {
        let (status, body) = self.post("/sessions", json!({ "mode": mode })).await;
        assert_eq!(status, 201, "{body}");
        body["session"]["id"].as_str().unwrap().to_string()
    }

    fn feedback(&self) -> Vec<FeedbackRecord> {
        convsearch_server::log::read_log(&self.dir.path().join("data").join(FEEDBACK_LOG)).unwrap()
    }
}

#[tokio::test]
async fn not_ready_until_ingest() {
    let s = spawn(false).await;
    assert_eq!(s.get("/health").await.0, 503);
    assert_eq!(s.post("/sessions", json!({ "mode": "AUTO" })).await.0, 503);
    let (status, summary) = s.post("/admin/ingest", serde_json::from_str(fixtures::APARTMENTS_KB).unwrap()).await;
    assert_eq!(status, 200, "{summary}");
    assert_eq!(summary["bootstrapped_model"], true);
    let (status, health) = s.get("/health").await;
    assert_eq!(status, 200);
    assert_eq!(health["status"], "ready");
}

#[tokio::test]
async fn auto_session_runs_the_pipeline() {
    let s = spawn(true).await;
    let (_, created) = s.post("/sessions", json!({ "mode": "AUTO" })).await;
    assert_eq!(created["session"]["transcript"].as_array().unwrap().len(), 1);
    assert_eq!(created["prompt"]["act"]["act"], "GREET");
    let id = created["session"]["id"].as_str().unwrap();

    let (status, reply) = s.post(&format!("/sessions/{id}/message"), json!({ "text": "2 bedrooms in chelsea" })).await;
    assert_eq!(status, 200, "{reply}");
    assert_eq!(reply["analysis"]["intent"], "ADD");
    assert!(["REQUEST_SLOT", "PRESENT_RESULTS"].contains(&reply["reply"]["act"]["act"].as_str().unwrap()));

    let (_, empty) = s.post(&format!("/sessions/{id}/message"), json!({ "text": "" })).await;
    assert_eq!(empty["reply"]["act"]["act"], "CLARIFY");

    let (_, view) = s.get(&format!("/sessions/{id}")).await;
    let view: SessionView = serde_json::from_value(view).unwrap();
    let turns: Vec<usize> = view.transcript.iter().map(|t| t.turn).collect();
    assert_eq!(turns, (0..5).collect::<Vec<_>>());

    assert_eq!(s.post("/sessions/nope/message", json!({ "text": "hi" })).await.0, 404);
}

#[tokio::test]
async fn held_session_rejects_a_second_message() {
    let s = spawn(true).await;
    let id = s.session("AUTO").await;
    let created = s.state.create_session(convsearch_server::model::Mode::Auto).unwrap();
    let other = created.session.id;
    let busy = {
        let guard = s.state.hold_session(&id).unwrap();
        let r = s
            .client
            .post(format!("{}/sessions/{id}/message", s.base))
            .json(&json!({ "text": "chelsea please" }))
            .send()
            .await
            .unwrap();
        let status = r.status().as_u16();
        let retry = r.headers().get("retry-after").map(|v| v.to_str().unwrap().to_string());
        // A different session is not blocked.
        let free = s.post(&format!("/sessions/{other}/message"), json!({ "text": "chelsea please" })).await.0;
        drop(guard);
        (status, retry, free)
    };
    assert_eq!(busy.0, 409);
    assert!(busy.1.is_some());
    assert_eq!(busy.2, 200);
    assert_eq!(s.post(&format!("/sessions/{id}/message"), json!({ "text": "chelsea please" })).await.0, 200);
}

#[tokio::test]
async fn wizard_correction_flow() {
    let s = spawn(true).await;
    assert_eq!(s.get("/woz/pending").await.1, json!([]));
    let id = s.session("WOZ").await;

    let (_, pending) = s.get("/woz/pending").await;
    assert_eq!(pending.as_array().unwrap().len(), 1);
    assert_eq!(pending[0]["turn"], 0);
    assert_eq!(s.post(&format!("/sessions/{id}/message"), json!({ "text": "hi" })).await.0, 409);
    let (status, greeting) = s.post("/woz/submit", json!({ "session_id": id, "turn": 0, "decision": "accept" })).await;
    assert_eq!(status, 200, "{greeting}");
    assert_eq!(greeting["act"]["act"], "GREET");

    let (_, msg) = s.post(&format!("/sessions/{id}/message"), json!({ "text": "2 bedrooms in chelsea" })).await;
    assert_eq!(msg["status"], "pending");
    assert!(msg["reply"].is_null());
    let (_, pending) = s.get("/woz/pending").await;
    let p = &pending[0];
    assert_eq!(p["turn"], 2);
    assert_eq!(p["user_text"], "2 bedrooms in chelsea");
    assert_eq!(p["results"]["total"], 8);
    assert!(p["attributes"].as_array().unwrap().iter().any(|a| a["name"] == "location"));

    let stale = s.post("/woz/submit", json!({ "session_id": id, "turn": 1, "decision": "accept" })).await;
    assert_eq!(stale.0, 409);

    let correct = json!({
        "session_id": id,
        "turn": 2,
        "decision": { "correct": { "intent": "UPDATE" } },
        "prompt": "Which transport line suits you?",
    });
    let (status, prompt) = s.post("/woz/submit", correct).await;
    assert_eq!(status, 200, "{prompt}");
    assert_eq!(prompt["text"], "Which transport line suits you?");
    assert_eq!(s.get("/woz/pending").await.1, json!([]));

    let (_, view) = s.get(&format!("/sessions/{id}")).await;
    let view: SessionView = serde_json::from_value(view).unwrap();
    let last = view.transcript.last().unwrap();
    assert_eq!(last.text, "Which transport line suits you?");
    assert_eq!(last.analysis.as_ref().unwrap().intent.unwrap().as_str(), "UPDATE");
    assert!(view.state.is_constrained("location"));

    let records = s.feedback();
    assert_eq!(records.len(), 2);
    assert_eq!(records[0].input.rating, Some(Rating::Up));
    let fix = &records[1];
    assert_eq!(fix.origin, Origin::Wizard);
    assert_eq!(fix.input.turn, 2);
    assert_eq!(fix.input.corrected_intent.unwrap().as_str(), "UPDATE");
    assert_eq!(fix.input.wizard_prompt.as_deref(), Some("Which transport line suits you?"));

    let (_, exported) = s.post("/admin/export-training", json!({})).await;
    let examples = exported["examples"].as_array().unwrap();
    assert!(examples.iter().any(|e| e["text"] == "2 bedrooms in chelsea" && e["intent"] == "UPDATE"));
    assert!(exported["corpus"].as_str().unwrap().contains("UPDATE"));
}

#[tokio::test]
async fn feedback_is_validated_and_appended() {
    let s = spawn(true).await;
    let id = s.session("AUTO").await;
    s.post(&format!("/sessions/{id}/message"), json!({ "text": "chelsea please" })).await;
    let path = format!("/sessions/{id}/feedback");
    assert_eq!(s.post(&path, json!({ "turn": 2, "rating": "DOWN" })).await.0, 200);
    assert_eq!(s.post(&path, json!({ "turn": 2, "rating": "DOWN" })).await.0, 200);
    assert_eq!(s.post(&path, json!({ "turn": 1 })).await.0, 400);
    assert_eq!(s.post(&path, json!({ "turn": 9, "rating": "UP" })).await.0, 404);
    assert_eq!(s.post("/sessions/nope/feedback", json!({ "turn": 0, "rating": "UP" })).await.0, 404);
    let records = s.feedback();
    assert_eq!(records.len(), 2);
    assert!(records.iter().all(|r| r.input.rating == Some(Rating::Down) && r.origin == Origin::User));
}

#[tokio::test]
async fn ingest_swaps_for_new_sessions_only() {
    let s = spawn(true).await;
    let old = s.session("AUTO").await;
    let (_, before) = s.get(&format!("/sessions/{old}")).await;

    let (status, _) = s.post("/admin/ingest", json!({ "records": "not a list" })).await;
    assert!(status >= 400);
    let (_, ckr) = s.get("/ckr").await;
    assert_eq!(ckr["entity_type"], "apartment");
    assert_eq!(ckr["fingerprint"], before["ckr_fingerprint"]);

    let (status, summary) = s.post("/admin/ingest", serde_json::from_str(fixtures::RESTAURANTS_KB).unwrap()).await;
    assert_eq!(status, 200, "{summary}");
    let (_, ckr) = s.get("/ckr").await;
    assert!(ckr["attributes"].as_array().unwrap().iter().any(|a| a["name"] == "cuisine"));
    assert_ne!(ckr["fingerprint"], before["ckr_fingerprint"]);

    s.post(&format!("/sessions/{old}/message"), json!({ "text": "2 bedrooms in chelsea" })).await;
    let (_, after) = s.get(&format!("/sessions/{old}")).await;
    assert_eq!(after["ckr_fingerprint"], before["ckr_fingerprint"]);

    let new = s.session("AUTO").await;
    let (_, fresh) = s.get(&format!("/sessions/{new}")).await;
    assert_eq!(fresh["ckr_fingerprint"], ckr["fingerprint"]);
}

#[tokio::test]
async fn train_endpoint_replaces_the_model() {
    let s = spawn(true).await;
    let examples = json!([
        { "text": "hello", "intent": "GREET" },
        { "text": "bye", "intent": "END" },
    ]);
    let (status, summary) = s.post("/admin/train", json!({ "examples": examples })).await;
    assert_eq!(status, 200, "{summary}");
    assert_eq!(summary["labels"], 2);
    let (status, _) = s.post("/admin/train", json!({ "examples": [] })).await;
    assert_eq!(status, 422);
}
