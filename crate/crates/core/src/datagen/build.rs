use rayon::prelude::*;

use super::{CoDRecord, CodOutcome, DatagenConfig, DatagenError, RoundVerification, Turn};
use crate::belief::{verify_against_target, AssessRequest, Backend, Verification};
use crate::engine::{entropy, select_inquiry, Answer, Decision, Engine, InquiryContext};
use crate::knowledge::{CaseRecord, DiseaseDB, SymptomId};
use crate::retriever::{recall_top_k, RetrieverModel};
use crate::simeval::simulate_patient_answer;

/// Highest-weight symptom of `disease` that is neither known nor asked;
/// ties go to the smaller token.
pub fn generated_symptom(
    db: &DiseaseDB,
    disease: &str,
    known: impl Fn(&SymptomId) -> bool,
) -> Option<SymptomId> {
    let rec = db.get(disease)?;
    let mut profile: Vec<&(SymptomId, f64)> = rec.symptom_profile.iter().filter(|(s, _)| !known(s)).collect();
    profile.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    profile.first().map(|(s, _)| s.clone())
}

fn join(items: impl IntoIterator<Item = impl AsRef<str>>) -> String {
    items
        .into_iter()
        .map(|s| s.as_ref().to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Runs the dialogue for one case with the training-time question pool
/// (the case's unasked implicit symptoms plus one generated symptom) and
/// verifies every confidence round against the target.
pub fn build_cod_record(
    case: &CaseRecord,
    cfg: &DatagenConfig,
    db: &DiseaseDB,
    model: &RetrieverModel,
    backend: &Backend,
) -> Result<CodOutcome, DatagenError> {
    case.validate(db)
        .map_err(|e| DatagenError::InvalidCase(format!("{}: {e}", case.case_id)))?;
    let session = &cfg.session;
    let verify_tau = cfg.verify_tau();
    let engine = Engine::new(db, model, backend, session)?;
    let discard = |reason: String| {
        Ok(CodOutcome::Discarded {
            case_id: case.case_id.clone(),
            reason,
        })
    };

    let mut state = engine.start();
    state.evidence.present = case.explicit.clone();
    state.reported = case.explicit.clone();
    let mut turns = vec![Turn::patient(format!("I have {}.", join(case.explicit.iter())))];
    let mut verification = Vec::new();

    loop {
        let round_no = state.round + 1;
        state.candidates = recall_top_k(model, db, &state.evidence.present, session.k)?;
        let request = AssessRequest {
            evidence: &state.evidence,
            reported: &state.reported,
            candidates: &state.candidates,
            db,
            seed: session.seed,
        };
        let mut assessment = backend.assess(&request)?;
        let mut rethinks = 0;
        while verify_against_target(&assessment.distribution, &case.target, verify_tau)
            == Verification::Erroneous
        {
            if rethinks >= cfg.rethink_limit {
                return discard(format!(
                    "round {round_no}: erroneous confidence after {rethinks} rethinks"
                ));
            }
            match backend.rethink(&request, &assessment)? {
                Some(revised) => {
                    assessment = revised;
                    rethinks += 1;
                }
                None => {
                    return discard(format!(
                        "round {round_no}: erroneous confidence and the backend cannot rethink"
                    ))
                }
            }
        }
        verification.push(if rethinks == 0 {
            RoundVerification::Valid
        } else {
            RoundVerification::Rethought { count: rethinks }
        });

        let dist = &assessment.distribution;
        let (top, c_max) = dist.argmax();
        let top = top.to_string();
        let known = |s: &SymptomId| state.evidence.knows(s) || state.asked.contains(s);
        let mut pool: Vec<SymptomId> = case.implicit.iter().filter(|s| !known(s)).cloned().collect();
        if let Some(g) = generated_symptom(db, &top, known) {
            if !pool.contains(&g) {
                pool.push(g);
            }
        }

        let mut gain = None;
        let decision = if c_max > session.tau {
            Decision::Diagnose {
                disease: top.clone(),
                confidence: c_max,
                forced: false,
            }
        } else if state.asked.len() >= session.max_rounds || pool.is_empty() {
            Decision::Diagnose {
                disease: top.clone(),
                confidence: c_max,
                forced: true,
            }
        } else {
            let ctx = InquiryContext {
                evidence: &state.evidence,
                reported: &state.reported,
                candidates: &state.candidates,
                db,
                backend,
                mode: session.entropy_mode,
                seed: session.seed,
            };
            let pick = select_inquiry(&ctx, dist, &pool)?;
            gain = Some(pick.reduction);
            Decision::inquire(pick.symptom)
        };

        let h = entropy(dist);
        let abstracted = if round_no == 1 {
            case.explicit.iter().cloned().collect()
        } else {
            Vec::new()
        };
        let round = engine.trace_round(&state, abstracted, assessment, h, decision.clone(), gain, Vec::new());
        state.round += 1;
        match decision {
            Decision::Inquire {
                symptom,
                question_text,
            } => {
                turns.push(Turn::agent(question_text, round));
                let answer = simulate_patient_answer(case, &symptom);
                turns.push(Turn::patient(if answer == Answer::Yes { "Yes." } else { "No." }));
                if answer == Answer::Yes {
                    state.evidence.present.insert(symptom.clone());
                } else {
                    state.evidence.absent.insert(symptom.clone());
                }
                state.asked.push(symptom);
            }
            Decision::Diagnose {
                disease,
                confidence,
                ..
            } => {
                if disease != case.target {
                    return discard(format!("round {round_no}: final diagnosis '{disease}' misses the target"));
                }
                let rec = db.get(&disease).expect("candidate is in the catalog");
                let mut text = format!(
                    "The most likely diagnosis is {} (confidence {:.2}).",
                    rec.name, confidence
                );
                if !rec.treatment.is_empty() {
                    text.push_str(&format!(" Suggested treatment: {}", rec.treatment));
                }
                turns.push(Turn::agent(text, round));
                return Ok(CodOutcome::Retained(CoDRecord {
                    case_id: case.case_id.clone(),
                    target: case.target.clone(),
                    tau: verify_tau,
                    turns,
                    verification,
                    final_diagnosis: disease,
                }));
            }
        }
    }
}

/// Builds records for every case in parallel; output sorted by case id.
pub fn build_training_set(
    cases: &[CaseRecord],
    cfg: &DatagenConfig,
    db: &DiseaseDB,
    model: &RetrieverModel,
    backend: &Backend,
) -> Result<Vec<CodOutcome>, DatagenError> {
    let mut out = cases
        .par_iter()
        .map(|c| build_cod_record(c, cfg, db, model, backend))
        .collect::<Result<Vec<_>, _>>()?;
    out.sort_by(|a, b| a.case_id().cmp(b.case_id()));
    Ok(out)
}
