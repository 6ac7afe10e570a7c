//! Terminal dialogue driving the same engine as the HTTP service.

use std::io::{BufRead, Write};

use cod_core::engine::{Answer, Decision, Engine, EngineError, PatientMessage, Session, TraceRound};

fn read_line(input: &mut impl BufRead) -> std::io::Result<Option<String>> {
    let mut line = String::new();
    if input.read_line(&mut line)? == 0 {
        return Ok(None);
    }
    Ok(Some(line.trim().to_string()))
}

fn show_round(out: &mut impl Write, r: &TraceRound) -> std::io::Result<()> {
    writeln!(out, "-- round {} (entropy {:.3})", r.round, r.entropy)?;
    let mut ranked: Vec<(&str, f64)> = r.confidence.iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    for (id, c) in ranked {
        let name = r.candidates.iter().find(|s| s.id == id).map_or(id, |s| s.name.as_str());
        let bar = "#".repeat((c * 30.0).round() as usize);
        writeln!(out, "   {c:>6.3} {bar:<30} {name}")?;
    }
    for w in &r.warnings {
        writeln!(out, "   note: {w}")?;
    }
    Ok(())
}

/// Runs one session over `input`/`output`. Returns the final decision, or
/// `None` when the user quits or input ends first.
pub fn run(engine: &Engine<'_>, input: &mut impl BufRead, out: &mut impl Write) -> anyhow::Result<Option<Decision>> {
    let mut session = Session::new(engine);
    writeln!(out, "Describe your symptoms (\"quit\" to leave).")?;
    loop {
        write!(out, "> ")?;
        out.flush()?;
        let Some(line) = read_line(input)? else {
            return Ok(None);
        };
        if line.eq_ignore_ascii_case("quit") || line.eq_ignore_ascii_case("exit") {
            return Ok(None);
        }
        if line.is_empty() {
            continue;
        }
        let msg = match (session.state.pending.is_some(), Answer::parse(&line)) {
            (true, Some(a)) => PatientMessage::Answer(a),
            (true, None) => {
                writeln!(out, "Please answer yes or no.")?;
                continue;
            }
            (false, _) => match PatientMessage::parse(&line) {
                PatientMessage::Answer(_) => PatientMessage::Text(line.clone()),
                other => other,
            },
        };
        let round = match session.advance(engine, &msg) {
            Ok(r) => r.clone(),
            Err(EngineError::NoSymptoms) => {
                writeln!(out, "No known symptoms recognized; try different wording.")?;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        show_round(out, &round)?;
        match &round.decision {
            Decision::Inquire { question_text, .. } => writeln!(out, "{question_text} (yes/no)")?,
            Decision::Diagnose {
                disease,
                confidence,
                forced,
            } => {
                let rec = engine.db.get(disease);
                let name = rec.map_or(disease.as_str(), |r| r.name.as_str());
                let qualifier = if *forced { " (question budget reached)" } else { "" };
                writeln!(out, "Diagnosis: {name}, confidence {confidence:.3}{qualifier}")?;
                if let Some(t) = rec.map(|r| r.treatment.as_str()).filter(|t| !t.is_empty()) {
                    writeln!(out, "Suggested treatment: {t}")?;
                }
                return Ok(Some(round.decision));
            }
        }
    }
}
