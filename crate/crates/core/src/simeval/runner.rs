use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::belief::Backend;
use crate::engine::{
    Answer, Decision, DiagnosticTrace, Engine, PatientMessage, Session, SessionConfig,
};
use crate::knowledge::{CaseRecord, DiseaseDB, SymptomId};
use crate::retriever::RetrieverModel;

pub const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

/// Yes iff the symptom belongs to the case. Never leaks anything else.
pub fn simulate_patient_answer(case: &CaseRecord, symptom: &SymptomId) -> Answer {
    if case.has_symptom(symptom) {
        Answer::Yes
    } else {
        Answer::No
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub case_id: String,
    pub target: String,
    pub diagnosed: String,
    pub correct: bool,
    pub inquiries: usize,
    pub forced: bool,
    pub per_round_entropy: Vec<f64>,
    pub final_confidence: f64,
}

/// Plays one case through the engine, answering every question from the
/// case record.
pub fn run_dialogue(
    case: &CaseRecord,
    cfg: &SessionConfig,
    db: &DiseaseDB,
    model: &RetrieverModel,
    backend: &Backend,
) -> Result<(SessionResult, DiagnosticTrace), SimError> {
    let ctx = |source| SimError::Engine {
        case_id: case.case_id.clone(),
        source,
    };
    let engine = Engine::new(db, model, backend, cfg).map_err(ctx)?;
    let mut session = Session::new(&engine);
    let opening = PatientMessage::Symptoms(case.explicit.iter().map(|s| s.to_string()).collect());
    let mut msg = opening;
    // Every round either asks (bounded by max_rounds) or finishes.
    for _ in 0..=cfg.max_rounds + 1 {
        let round = session.advance(&engine, &msg).map_err(ctx)?;
        match &round.decision {
            Decision::Inquire { symptom, .. } => {
                msg = PatientMessage::Answer(simulate_patient_answer(case, symptom));
            }
            Decision::Diagnose { .. } => break,
        }
    }
    let trace = session.trace;
    let Some(Decision::Diagnose {
        disease,
        confidence,
        forced,
    }) = trace.final_decision().cloned()
    else {
        unreachable!("engine forces a diagnosis at the inquiry cap")
    };
    let result = SessionResult {
        case_id: case.case_id.clone(),
        target: case.target.clone(),
        correct: disease == case.target,
        diagnosed: disease,
        inquiries: trace.n_inquiries(),
        forced,
        per_round_entropy: trace.rounds.iter().map(|r| r.entropy).collect(),
        final_confidence: confidence,
    };
    Ok((result, trace))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub seed: u64,
    pub accuracy: f64,
    pub mean_inquiries: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub mean_inquiries: f64,
    /// Fraction of sessions that crossed the threshold rather than being
    /// forced at the cap.
    pub diagnosis_rate: f64,
    pub entropy_by_round: Vec<f64>,
    pub per_seed: Vec<SeedRow>,
    pub stderr_a: f64,
    pub stderr_n: f64,
}

/// Sample standard deviation over `√len`; zero for fewer than two values.
pub fn standard_error(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    var.sqrt() / (n as f64).sqrt()
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Runs every case once per seed in parallel. Per-seed results come back
/// sorted by case id.
pub fn run_seeds(
    cases: &[CaseRecord],
    cfg: &SessionConfig,
    seeds: &[u64],
    db: &DiseaseDB,
    model: &RetrieverModel,
    backend: &Backend,
) -> Result<Vec<(u64, Vec<SessionResult>)>, SimError> {
    if cases.is_empty() {
        return Err(SimError::NoCases);
    }
    if seeds.is_empty() {
        return Err(SimError::NoSeeds);
    }
    let run_one = |seed: u64| -> Result<Vec<SessionResult>, SimError> {
        let cfg = SessionConfig {
            seed: Some(seed),
            ..cfg.clone()
        };
        let mut results = cases
            .par_iter()
            .map(|c| run_dialogue(c, &cfg, db, model, backend).map(|(r, _)| r))
            .collect::<Result<Vec<_>, _>>()?;
        results.sort_by(|a, b| a.case_id.cmp(&b.case_id));
        Ok(results)
    };
    if backend.is_deterministic() {
        // The seed cannot change a deterministic trajectory.
        let results = run_one(seeds[0])?;
        return Ok(seeds.iter().map(|s| (*s, results.clone())).collect());
    }
    seeds.iter().map(|s| Ok((*s, run_one(*s)?))).collect()
}

pub fn report_from_results(per_seed: &[(u64, Vec<SessionResult>)], max_rounds: usize) -> EvalReport {
    let rows: Vec<SeedRow> = per_seed
        .iter()
        .map(|(seed, rs)| SeedRow {
            seed: *seed,
            accuracy: mean(rs.iter().map(|r| f64::from(u8::from(r.correct)))),
            mean_inquiries: mean(rs.iter().map(|r| r.inquiries as f64)),
        })
        .collect();
    let all: Vec<&SessionResult> = per_seed.iter().flat_map(|(_, rs)| rs).collect();
    let longest = all.iter().map(|r| r.per_round_entropy.len()).max().unwrap_or(0);
    let entropy_by_round = (0..longest.min(max_rounds))
        .map(|i| mean(all.iter().filter_map(|r| r.per_round_entropy.get(i).copied())))
        .collect();
    let accs: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
    let ns: Vec<f64> = rows.iter().map(|r| r.mean_inquiries).collect();
    EvalReport {
        accuracy: mean(accs.iter().copied()),
        mean_inquiries: mean(ns.iter().copied()),
        diagnosis_rate: mean(all.iter().map(|r| f64::from(u8::from(!r.forced)))),
        entropy_by_round,
        stderr_a: standard_error(&accs),
        stderr_n: standard_error(&ns),
        per_seed: rows,
    }
}

pub fn run_benchmark(
    cases: &[CaseRecord],
    cfg: &SessionConfig,
    seeds: &[u64],
    db: &DiseaseDB,
    model: &RetrieverModel,
    backend: &Backend,
) -> Result<EvalReport, SimError> {
    let per_seed = run_seeds(cases, cfg, seeds, db, model, backend)?;
    Ok(report_from_results(&per_seed, cfg.max_rounds))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tau: f64,
    pub report: EvalReport,
}

pub(crate) fn check_ascending(taus: &[f64]) -> Result<(), SimError> {
    if taus.is_empty() || taus.windows(2).any(|w| w[0] >= w[1]) || taus.iter().any(|t| !t.is_finite()) {
        return Err(SimError::BadTaus);
    }
    Ok(())
}

/// One benchmark per threshold with everything else fixed.
pub fn sweep_tau(
    cases: &[CaseRecord],
    cfg: &SessionConfig,
    taus: &[f64],
    seeds: &[u64],
    db: &DiseaseDB,
    model: &RetrieverModel,
    backend: &Backend,
) -> Result<Vec<SweepRow>, SimError> {
    check_ascending(taus)?;
    taus.iter()
        .map(|&tau| {
            let cfg = SessionConfig { tau, ..cfg.clone() };
            Ok(SweepRow {
                tau,
                report: run_benchmark(cases, &cfg, seeds, db, model, backend)?,
            })
        })
        .collect()
}
