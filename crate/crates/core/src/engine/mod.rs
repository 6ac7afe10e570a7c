//! Round-by-round dialogue control: symptom abstraction, recall, assessment
//! and the diagnose-or-inquire decision.

mod abstraction;
mod config;
mod policy;
mod session;

pub use abstraction::{abstract_symptoms, scan_text, Abstraction, Answer, PatientMessage};
pub use config::{EntropyMode, SessionConfig};
pub use policy::{
    candidate_symptom_pool, conditional_entropy, decide, entropy, entropy_of, select_inquiry,
    Inquiry, InquiryContext, ThresholdOutcome, TIE_EPSILON,
};
pub use session::{
    CandidateSnippet, Decision, DiagnosticTrace, DialogueState, Engine, Session, TraceRound,
};

use crate::belief::BeliefError;
use crate::retriever::RetrieverError;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    #[error("no recognized symptoms in the message")]
    NoSymptoms,
    #[error("session already finished")]
    Finished,
    #[error("no question is awaiting an answer")]
    NoPendingQuestion,
    #[error("a yes/no answer is expected")]
    ExpectedAnswer,
    #[error("no unasked symptoms remain")]
    EmptyPool,
    #[error("retriever: {0}")]
    Retriever(#[from] RetrieverError),
    #[error("assessment: {0}")]
    Belief(#[from] BeliefError),
    #[error("trace: {0}")]
    Trace(String),
    #[error("io: {0}")]
    Io(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::Backend;
    use crate::knowledge::{DiseaseDB, DiseaseRecord, SymptomId};
    use crate::retriever::RetrieverModel;

    fn sym(s: &str) -> SymptomId {
        SymptomId::new(s).unwrap()
    }

    fn db(profiles: &[(&str, &[(&str, f64)])]) -> DiseaseDB {
        DiseaseDB::new(
            profiles
                .iter()
                .map(|(id, p)| DiseaseRecord {
                    id: id.to_string(),
                    name: id.to_uppercase(),
                    overview: format!("about {id}"),
                    treatment: String::new(),
                    department: String::new(),
                    symptom_profile: p.iter().map(|(s, w)| (sym(s), *w)).collect(),
                })
                .collect(),
        )
        .unwrap()
    }

    fn symptoms(list: &[&str]) -> PatientMessage {
        PatientMessage::Symptoms(list.iter().map(|s| s.to_string()).collect())
    }

    #[test]
    fn full_profile_match_diagnoses_in_round_one() {
        let db = db(&[
            ("a", &[("fever", 0.9), ("cough", 0.8)]),
            ("b", &[("rash", 0.9), ("itch", 0.8)]),
            ("c", &[("nausea", 0.9), ("vomiting", 0.8)]),
        ]);
        let model = RetrieverModel::init(&db, 8, 1).unwrap();
        let backend = Backend::bayes();
        let cfg = SessionConfig { k: 3, ..SessionConfig::default() };
        let engine = Engine::new(&db, &model, &backend, &cfg).unwrap();
        let mut s = Session::new(&engine);
        let r = s.advance(&engine, &symptoms(&["fever", "cough"])).unwrap();
        assert_eq!(r.round, 1);
        match &r.decision {
            Decision::Diagnose { disease, forced, confidence } => {
                assert_eq!(disease, "a");
                assert!(!forced);
                assert!(*confidence > 0.5);
            }
            d => panic!("{d:?}"),
        }
        assert!(s.finished());
        assert!(matches!(s.advance(&engine, &symptoms(&["fever"])), Err(EngineError::Finished)));
    }

    #[test]
    fn indistinguishable_profiles_force_a_diagnosis_at_the_cap() {
        let profile: &[(&str, f64)] = &[("fever", 0.5), ("cough", 0.5), ("rash", 0.5), ("itch", 0.5)];
        let db = db(&[("a", profile), ("b", profile)]);
        let model = RetrieverModel::init(&db, 8, 1).unwrap();
        let backend = Backend::bayes();
        let cfg = SessionConfig { k: 2, max_rounds: 2, ..SessionConfig::default() };
        let engine = Engine::new(&db, &model, &backend, &cfg).unwrap();
        let mut s = Session::new(&engine);
        let r1 = s.advance(&engine, &symptoms(&["fever"])).unwrap().clone();
        assert!(matches!(r1.decision, Decision::Inquire { .. }));
        let r2 = s.advance(&engine, &PatientMessage::Answer(Answer::Yes)).unwrap().clone();
        assert!(matches!(r2.decision, Decision::Inquire { .. }));
        let r3 = s.advance(&engine, &PatientMessage::Answer(Answer::No)).unwrap().clone();
        assert_eq!(
            r3.decision,
            Decision::Diagnose { disease: "a".into(), confidence: 0.5, forced: true }
        );
        assert_eq!(s.state.asked.len(), 2);
        for q in &s.state.asked {
            assert!(s.state.evidence.knows(q));
        }
    }

    #[test]
    fn inquiry_asks_the_splitting_symptom() {
        let db = db(&[
            ("a", &[("fever", 0.9), ("rash", 0.9)]),
            ("b", &[("fever", 0.9), ("cough", 0.9)]),
        ]);
        let model = RetrieverModel::init(&db, 8, 1).unwrap();
        let backend = Backend::bayes();
        let cfg = SessionConfig { k: 2, ..SessionConfig::default() };
        let engine = Engine::new(&db, &model, &backend, &cfg).unwrap();
        let mut s = Session::new(&engine);
        let r = s.advance(&engine, &symptoms(&["fever"])).unwrap();
        assert_eq!(r.decision, Decision::inquire(sym("cough")));
        assert!(r.inquiry_gain.unwrap() > 0.0);
        assert!(matches!(
            s.advance(&engine, &symptoms(&["rash"])),
            Err(EngineError::ExpectedAnswer)
        ));
        let r = s.advance(&engine, &PatientMessage::Answer(Answer::No)).unwrap();
        assert!(matches!(&r.decision, Decision::Diagnose { disease, .. } if disease == "a"));
    }

    #[test]
    fn failed_round_leaves_state_unchanged() {
        let db = db(&[("a", &[("fever", 0.9)]), ("b", &[("cough", 0.9)])]);
        let model = RetrieverModel::init(&db, 8, 1).unwrap();
        let backend = Backend::bayes();
        let cfg = SessionConfig::default();
        let engine = Engine::new(&db, &model, &backend, &cfg).unwrap();
        let mut s = Session::new(&engine);
        let before = s.clone();
        assert!(matches!(s.advance(&engine, &symptoms(&["glow"])), Err(EngineError::NoSymptoms)));
        assert!(matches!(
            s.advance(&engine, &PatientMessage::Answer(Answer::Yes)),
            Err(EngineError::NoPendingQuestion)
        ));
        assert_eq!(s, before);
    }

    #[test]
    fn trace_round_trips_through_jsonl() {
        let db = db(&[
            ("a", &[("fever", 0.9), ("rash", 0.9)]),
            ("b", &[("fever", 0.9), ("cough", 0.9)]),
        ]);
        let model = RetrieverModel::init(&db, 8, 1).unwrap();
        let backend = Backend::bayes();
        let cfg = SessionConfig { k: 2, ..SessionConfig::default() };
        let engine = Engine::new(&db, &model, &backend, &cfg).unwrap();
        let mut s = Session::new(&engine);
        s.advance(&engine, &PatientMessage::Text("fever since monday".into())).unwrap();
        s.advance(&engine, &PatientMessage::Answer(Answer::Yes)).unwrap();
        let mut buf = Vec::new();
        s.trace.write_jsonl(&mut buf).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf).lines().count(), 2);
        let back = DiagnosticTrace::read_jsonl(&buf[..]).unwrap();
        assert_eq!(back, s.trace);
        assert!(back.rounds[0].candidates[0].overview.starts_with("about"));
    }
}
