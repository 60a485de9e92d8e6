//! Deterministic replay of a scripted dialog.
//!
//! A script is line-delimited JSON, one user turn per line:
//! `{"user": "...", "expect": {"intent": "ADD", "act": "REQUEST_SLOT", "result_count": 8}}`.
//! Every expectation field is optional. The greeting is produced before the
//! first line and is not part of the script.

use std::fmt;
use std::path::Path;

use anyhow::{bail, Context, Result};
use convsearch_core::dialog::ActKind;
use convsearch_core::engine::Engine;
use convsearch_core::nlu::IntentLabel;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    #[serde(default)]
    pub intent: Option<IntentLabel>,
    #[serde(default)]
    pub act: Option<ActKind>,
    #[serde(default)]
    pub result_count: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptTurn {
    pub user: String,
    #[serde(default)]
    pub expect: Option<Expectation>,
}

pub fn parse_script(source: &str) -> Result<Vec<ScriptTurn>> {
    let mut turns = Vec::new();
    for (i, line) in source.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        turns.push(serde_json::from_str(line).with_context(|| format!("script line {}", i + 1))?);
    }
    if turns.is_empty() {
        bail!("script has no turns");
    }
    Ok(turns)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TurnReport {
    /// 1-based script line.
    pub turn: usize,
    pub user: String,
    pub intent: Option<IntentLabel>,
    pub act: ActKind,
    pub result_count: usize,
    pub prompt: String,
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationReport {
    pub turns: Vec<TurnReport>,
    /// Fingerprint of the final dialog state.
    pub state_fingerprint: String,
}

impl SimulationReport {
    pub fn passed(&self) -> bool {
        self.turns.iter().all(|t| t.failures.is_empty())
    }
}

impl fmt::Display for SimulationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.turns {
            let intent = t.intent.map_or("-", |i| i.as_str());
            if t.failures.is_empty() {
                writeln!(f, "turn {} OK {:?} -> {intent} {} ({})", t.turn, t.user, t.act, t.result_count)?;
            } else {
                writeln!(f, "turn {} FAIL {:?}: {}", t.turn, t.user, t.failures.join("; "))?;
            }
        }
        let failed = self.turns.iter().filter(|t| !t.failures.is_empty()).count();
        write!(f, "{} turns, {failed} failed", self.turns.len())
    }
}

pub fn run_script(engine: &Engine, script: &[ScriptTurn]) -> Result<SimulationReport> {
    let (mut state, _) = engine.greet()?;
    let mut turns = Vec::with_capacity(script.len());
    for (i, line) in script.iter().enumerate() {
        let o = engine.step(&state, &line.user, i + 1)?;
        let a = &o.analysis;
        let mut failures = Vec::new();
        if let Some(e) = &line.expect {
            if let Some(want) = e.intent {
                if a.intent != Some(want) {
                    failures.push(format!("intent {:?}, expected {want}", a.intent));
                }
            }
            if let Some(want) = e.act {
                if a.act.kind() != want {
                    failures.push(format!("act {}, expected {want}", a.act.kind()));
                }
            }
            if let Some(want) = e.result_count {
                if a.result_count != want {
                    failures.push(format!("{} results, expected {want}", a.result_count));
                }
            }
        }
        turns.push(TurnReport {
            turn: i + 1,
            user: line.user.clone(),
            intent: a.intent,
            act: a.act.kind(),
            result_count: a.result_count,
            prompt: o.prompt.text.clone(),
            failures,
        });
        state = o.state;
    }
    Ok(SimulationReport {
        turns,
        state_fingerprint: state.fingerprint(),
    })
}

pub fn cmd_simulate(engine: &Engine, script: &Path) -> Result<SimulationReport> {
    let source = std::fs::read_to_string(script).with_context(|| format!("reading script {}", script.display()))?;
    run_script(engine, &parse_script(&source)?)
}
