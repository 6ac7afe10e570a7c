use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::runner::check_ascending;
use super::SimError;
use crate::belief::{AssessRequest, Backend, SymptomEvidence};
use crate::engine::{EngineError, SessionConfig};
use crate::knowledge::{CaseRecord, DiseaseDB};
use crate::retriever::{recall_top_k, RetrieverModel};

/// Top belief for a case given all of its symptoms and no questions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoInquiryOutcome {
    pub case_id: String,
    pub diagnosed: String,
    pub correct: bool,
    pub max_confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub tau: f64,
    pub rate: f64,
    /// Absent when no case clears the threshold.
    pub accuracy: Option<f64>,
}

pub fn no_inquiry_outcomes(
    cases: &[CaseRecord],
    cfg: &SessionConfig,
    db: &DiseaseDB,
    model: &RetrieverModel,
    backend: &Backend,
) -> Result<Vec<NoInquiryOutcome>, SimError> {
    if cases.is_empty() {
        return Err(SimError::NoCases);
    }
    let mut out = cases
        .par_iter()
        .map(|case| {
            let ctx = |source: EngineError| SimError::Engine {
                case_id: case.case_id.clone(),
                source,
            };
            let present = case.all_symptoms();
            let evidence = SymptomEvidence {
                present: present.clone(),
                absent: Default::default(),
            };
            let candidates = recall_top_k(model, db, &present, cfg.k).map_err(|e| ctx(e.into()))?;
            let a = backend
                .assess(&AssessRequest {
                    evidence: &evidence,
                    reported: &present,
                    candidates: &candidates,
                    db,
                    seed: cfg.seed,
                })
                .map_err(|e| ctx(e.into()))?;
            let (top, c) = a.distribution.argmax();
            Ok(NoInquiryOutcome {
                case_id: case.case_id.clone(),
                diagnosed: top.to_string(),
                correct: top == case.target,
                max_confidence: c,
            })
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    out.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    Ok(out)
}

/// Thresholds one fixed set of outcomes.
pub fn curve_from_outcomes(outcomes: &[NoInquiryOutcome], taus: &[f64]) -> Vec<CurvePoint> {
    taus.iter()
        .map(|&tau| {
            let over: Vec<&NoInquiryOutcome> =
                outcomes.iter().filter(|o| o.max_confidence > tau).collect();
            let rate = if outcomes.is_empty() {
                0.0
            } else {
                over.len() as f64 / outcomes.len() as f64
            };
            let accuracy = (!over.is_empty())
                .then(|| over.iter().filter(|o| o.correct).count() as f64 / over.len() as f64);
            CurvePoint { tau, rate, accuracy }
        })
        .collect()
}

pub fn threshold_curve(
    cases: &[CaseRecord],
    cfg: &SessionConfig,
    taus: &[f64],
    db: &DiseaseDB,
    model: &RetrieverModel,
    backend: &Backend,
) -> Result<Vec<CurvePoint>, SimError> {
    check_ascending(taus)?;
    let outcomes = no_inquiry_outcomes(cases, cfg, db, model, backend)?;
    Ok(curve_from_outcomes(&outcomes, taus))
}

/// `tau,rate,accuracy` rows; absent accuracy is an empty field.
pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("tau,rate,accuracy\n");
    for p in points {
        let acc = p.accuracy.map(|a| a.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", p.tau, p.rate, acc));
    }
    out
}
