use std::io::{BufRead, Write};

use anyhow::Result;
use convsearch_core::dialog::ActKind;
use convsearch_core::engine::{Engine, TurnAnalysis};

/// Read-eval loop over `input`, one user message per line. Stops after a
/// farewell or at end of input and returns the number of user turns.
pub fn cmd_chat(engine: &Engine, input: impl BufRead, mut out: impl Write, debug: bool) -> Result<usize> {
    let (mut state, greeting) = engine.greet()?;
    writeln!(out, "{}", greeting.text)?;
    let mut turns = 0;
    for line in input.lines() {
        let line = line?;
        turns += 1;
        let outcome = engine.step(&state, &line, turns)?;
        if debug {
            write_debug(&mut out, &outcome.analysis)?;
        }
        writeln!(out, "{}", outcome.prompt.text)?;
        state = outcome.state;
        if outcome.analysis.act.kind() == ActKind::Farewell {
            break;
        }
    }
    out.flush()?;
    Ok(turns)
}

fn write_debug(out: &mut impl Write, a: &TurnAnalysis) -> std::io::Result<()> {
    match (&a.intent, &a.classification) {
        (Some(intent), Some(c)) => {
            let p = c.confidence.get(intent).copied().unwrap_or(0.0);
            writeln!(out, "  [intent] {intent} ({p:.3})")?;
        }
        (Some(intent), None) => writeln!(out, "  [intent] {intent} (corrected)")?,
        (None, _) => writeln!(out, "  [intent] none")?,
    }
    for m in &a.candidates {
        writeln!(
            out,
            "  [match] {:?} -> {} via {} ({:.3})",
            m.surface,
            m.key,
            m.method,
            m.score
        )?;
    }
    writeln!(out, "  [delex] {}", a.delexicalized.join(" "))?;
    writeln!(out, "  [act] {} ({} results)", a.act.kind(), a.result_count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::EngineSource;
    use convsearch_core::fixtures;

    fn engine() -> Engine {
        let dir = tempfile::tempdir().unwrap();
        let kb = dir.path().join("kb.json");
        std::fs::write(&kb, fixtures::APARTMENTS_KB).unwrap();
        EngineSource::new(kb).load().unwrap()
    }

    #[test]
    fn bye_ends_the_loop() {
        let mut out = Vec::new();
        let turns = cmd_chat(&engine(), "bye\nnever read\n".as_bytes(), &mut out, false).unwrap();
        assert_eq!(turns, 1);
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 2);
    }

    #[test]
    fn debug_shows_intent_and_matches() {
        let mut out = Vec::new();
        cmd_chat(&engine(), "2 bedrooms in chelsea\n".as_bytes(), &mut out, true).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("[intent] ADD"), "{text}");
        assert!(text.contains("[match] \"chelsea\""), "{text}");
    }

    #[test]
    fn apartment_scenario_reaches_results() {
        let mut out = Vec::new();
        cmd_chat(&engine(), "i want 2 bedrooms in chelsea\nsubway please\n".as_bytes(), &mut out, true).unwrap();
        assert!(String::from_utf8(out).unwrap().contains("[act] PRESENT_RESULTS"));
    }
}
