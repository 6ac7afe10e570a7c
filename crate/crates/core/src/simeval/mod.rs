//! Simulated-patient benchmarks: accuracy, inquiry counts, threshold sweeps,
//! entropy by round and no-inquiry threshold curves.

mod curve;
mod runner;

pub use curve::{
    curve_csv, curve_from_outcomes, no_inquiry_outcomes, threshold_curve, CurvePoint,
    NoInquiryOutcome,
};
pub use runner::{
    report_from_results, run_benchmark, run_dialogue, run_seeds, simulate_patient_answer,
    standard_error, sweep_tau, EvalReport, SeedRow, SessionResult, SweepRow, DEFAULT_SEEDS,
};

use crate::engine::EngineError;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("case '{case_id}': {source}")]
    Engine {
        case_id: String,
        #[source]
        source: EngineError,
    },
    #[error("no cases to evaluate")]
    NoCases,
    #[error("at least one seed is required")]
    NoSeeds,
    #[error("thresholds must be finite and strictly ascending")]
    BadTaus,
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::belief::Backend;
    use crate::engine::{Answer, SessionConfig};
    use crate::knowledge::{CaseRecord, DiseaseDB, DiseaseRecord, SymptomId};
    use crate::retriever::RetrieverModel;

    fn sym(s: &str) -> SymptomId {
        SymptomId::new(s).unwrap()
    }

    fn set(items: &[&str]) -> BTreeSet<SymptomId> {
        items.iter().map(|s| sym(s)).collect()
    }

    fn db(profiles: &[(&str, &[(&str, f64)])]) -> DiseaseDB {
        DiseaseDB::new(
            profiles
                .iter()
                .map(|(id, p)| DiseaseRecord {
                    id: id.to_string(),
                    name: id.to_string(),
                    overview: String::new(),
                    treatment: String::new(),
                    department: String::new(),
                    symptom_profile: p.iter().map(|(s, w)| (sym(s), *w)).collect(),
                })
                .collect(),
        )
        .unwrap()
    }

    fn case(id: &str, target: &str, explicit: &[&str], implicit: &[&str]) -> CaseRecord {
        CaseRecord {
            case_id: id.into(),
            target: target.into(),
            explicit: set(explicit),
            implicit: set(implicit),
            demographics: None,
        }
    }

    fn separable() -> DiseaseDB {
        db(&[
            ("a", &[("fever", 0.9), ("cough", 0.6)]),
            ("b", &[("rash", 0.9), ("itch", 0.6)]),
        ])
    }

    #[test]
    fn simulator_answers_by_membership() {
        let c = case("c1", "a", &["fever"], &["cough"]);
        assert_eq!(simulate_patient_answer(&c, &sym("fever")), Answer::Yes);
        assert_eq!(simulate_patient_answer(&c, &sym("cough")), Answer::Yes);
        assert_eq!(simulate_patient_answer(&c, &sym("rash")), Answer::No);
    }

    #[test]
    fn separable_toy_is_solved_quickly() {
        let db = separable();
        let model = RetrieverModel::init(&db, 8, 3).unwrap();
        let cfg = SessionConfig { k: 2, ..SessionConfig::default() };
        let c = case("c1", "b", &["rash"], &["itch"]);
        let (r, trace) = run_dialogue(&c, &cfg, &db, &model, &Backend::bayes()).unwrap();
        assert!(r.correct);
        assert!(r.inquiries <= 1);
        assert_eq!(r.per_round_entropy.len(), trace.rounds.len());
        let again = run_dialogue(&c, &cfg, &db, &model, &Backend::bayes()).unwrap().0;
        assert_eq!(again, r);
    }

    #[test]
    fn unreachable_threshold_uses_the_whole_budget() {
        let p: &[(&str, f64)] = &[("s1", 0.5), ("s2", 0.5), ("s3", 0.5), ("s4", 0.5), ("s5", 0.5), ("s6", 0.5), ("s7", 0.5)];
        let db = db(&[("a", p), ("b", p)]);
        let model = RetrieverModel::init(&db, 8, 3).unwrap();
        let cfg = SessionConfig { k: 2, tau: 0.999, max_rounds: 5, ..SessionConfig::default() };
        let c = case("c1", "a", &["s1"], &["s2", "s3"]);
        let (r, _) = run_dialogue(&c, &cfg, &db, &model, &Backend::bayes()).unwrap();
        assert_eq!(r.inquiries, 5);
        assert!(r.forced);
        assert_eq!(r.per_round_entropy.len(), 6);
    }

    #[test]
    fn all_correct_report() {
        let db = separable();
        let model = RetrieverModel::init(&db, 8, 3).unwrap();
        let cfg = SessionConfig { k: 2, ..SessionConfig::default() };
        let cases = vec![case("c1", "a", &["fever", "cough"], &[]), case("c2", "b", &["rash", "itch"], &[])];
        let rep = run_benchmark(&cases, &cfg, &[1], &db, &model, &Backend::bayes()).unwrap();
        assert_eq!(rep.accuracy, 1.0);
        assert_eq!(rep.stderr_a, 0.0);
        assert_eq!(rep.per_seed.len(), 1);
        assert_eq!(rep.diagnosis_rate, 1.0);
        assert!(matches!(
            run_benchmark(&[], &cfg, &[1], &db, &model, &Backend::bayes()),
            Err(SimError::NoCases)
        ));
        assert!(matches!(
            run_benchmark(&cases, &cfg, &[], &db, &model, &Backend::bayes()),
            Err(SimError::NoSeeds)
        ));
    }

    #[test]
    fn stderr_matches_hand_arithmetic() {
        let se = standard_error(&[0.6, 0.65, 0.7]);
        assert!((se - 0.05 / 3f64.sqrt()).abs() < 1e-12);
        assert!((se - 0.0289).abs() < 1e-4);
        assert_eq!(standard_error(&[0.3]), 0.0);
    }

    #[test]
    fn entropy_by_round_averages_active_sessions() {
        let r = |id: &str, ent: Vec<f64>| SessionResult {
            case_id: id.into(),
            target: "a".into(),
            diagnosed: "a".into(),
            correct: true,
            inquiries: ent.len() - 1,
            forced: false,
            per_round_entropy: ent,
            final_confidence: 0.9,
        };
        let rep = report_from_results(&[(1, vec![r("x", vec![1.0, 0.5, 0.2]), r("y", vec![0.6])])], 2);
        assert_eq!(rep.entropy_by_round, vec![0.8, 0.5]);
        assert_eq!(rep.mean_inquiries, 1.0);
    }

    #[test]
    fn single_tau_sweep_equals_benchmark() {
        let db = separable();
        let model = RetrieverModel::init(&db, 8, 3).unwrap();
        let cfg = SessionConfig { k: 2, ..SessionConfig::default() };
        let cases = vec![case("c1", "a", &["fever"], &["cough"]), case("c2", "b", &["itch"], &["rash"])];
        let b = Backend::bayes();
        let rows = sweep_tau(&cases, &cfg, &[0.5], &[1, 2], &db, &model, &b).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].report, run_benchmark(&cases, &cfg, &[1, 2], &db, &model, &b).unwrap());
        assert!(matches!(sweep_tau(&cases, &cfg, &[0.6, 0.5], &[1], &db, &model, &b), Err(SimError::BadTaus)));
    }

    #[test]
    fn curve_edges() {
        let o = |id: &str, correct, c| NoInquiryOutcome {
            case_id: id.into(),
            diagnosed: "a".into(),
            correct,
            max_confidence: c,
        };
        let outcomes = vec![o("1", true, 0.9), o("2", false, 0.6), o("3", true, 0.4)];
        let pts = curve_from_outcomes(&outcomes, &[0.0, 0.5, 0.9]);
        assert_eq!(pts[0].rate, 1.0);
        assert!((pts[0].accuracy.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((pts[1].rate - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(pts[1].accuracy, Some(0.5));
        assert_eq!(pts[2].rate, 0.0);
        assert_eq!(pts[2].accuracy, None);
        let csv = curve_csv(&pts);
        assert!(csv.starts_with("tau,rate,accuracy\n0,1,"));
        assert!(csv.ends_with("0.9,0,\n"));
    }
}
