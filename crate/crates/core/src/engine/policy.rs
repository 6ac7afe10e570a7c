use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{EngineError, EntropyMode};
use crate::belief::{AssessRequest, Backend, ConfidenceDistribution, SymptomEvidence};
use crate::knowledge::{DiseaseDB, SymptomId};
use crate::retriever::CandidateSet;

/// Reductions closer than this are treated as tied.
pub const TIE_EPSILON: f64 = 1e-12;

/// Shannon entropy in nats. Zero-mass entries contribute nothing.
pub fn entropy(dist: &ConfidenceDistribution) -> f64 {
    entropy_of(dist.iter().map(|(_, c)| c))
}

pub fn entropy_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values
        .into_iter()
        .filter(|c| *c > 0.0)
        .map(|c| -c * c.ln())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdOutcome {
    Diagnose { disease: String, confidence: f64 },
    Inquire,
}

/// Diagnose the argmax iff its confidence strictly exceeds `tau`.
pub fn decide(dist: &ConfidenceDistribution, tau: f64) -> ThresholdOutcome {
    let (top, c) = dist.argmax();
    if c > tau {
        ThresholdOutcome::Diagnose {
            disease: top.to_string(),
            confidence: c,
        }
    } else {
        ThresholdOutcome::Inquire
    }
}

/// Unknown, not-yet-asked symptoms from the candidates' profiles, most
/// characteristic first, capped at `limit`.
pub fn candidate_symptom_pool(
    candidates: &CandidateSet,
    evidence: &SymptomEvidence,
    asked: &[SymptomId],
    db: &DiseaseDB,
    limit: usize,
) -> Result<Vec<SymptomId>, EngineError> {
    let asked: BTreeSet<&SymptomId> = asked.iter().collect();
    let mut best: Vec<(SymptomId, f64)> = Vec::new();
    for id in candidates.ids() {
        let Some(rec) = db.get(id) else { continue };
        for (s, w) in &rec.symptom_profile {
            if evidence.knows(s) || asked.contains(s) {
                continue;
            }
            match best.iter_mut().find(|(t, _)| t == s) {
                Some(entry) => entry.1 = entry.1.max(*w),
                None => best.push((s.clone(), *w)),
            }
        }
    }
    if best.is_empty() {
        return Err(EngineError::EmptyPool);
    }
    best.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0)));
    best.truncate(limit);
    Ok(best.into_iter().map(|(s, _)| s).collect())
}

/// Inputs shared by every hypothetical re-assessment in one selection.
#[derive(Debug, Clone, Copy)]
pub struct InquiryContext<'a> {
    pub evidence: &'a SymptomEvidence,
    pub reported: &'a BTreeSet<SymptomId>,
    pub candidates: &'a CandidateSet,
    pub db: &'a DiseaseDB,
    pub backend: &'a Backend,
    pub mode: EntropyMode,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inquiry {
    pub symptom: SymptomId,
    /// `H(C) − H(C|s)` for the chosen symptom.
    pub reduction: f64,
}

/// Entropy expected after asking about `s`.
pub fn conditional_entropy(
    ctx: &InquiryContext<'_>,
    current: &ConfidenceDistribution,
    s: &SymptomId,
) -> Result<f64, EngineError> {
    let assess = |evidence: &SymptomEvidence| {
        ctx.backend.distribution(&AssessRequest {
            evidence,
            reported: ctx.reported,
            candidates: ctx.candidates,
            db: ctx.db,
            seed: ctx.seed,
        })
    };
    let if_yes = entropy(&assess(&ctx.evidence.with_present(s))?);
    match ctx.mode {
        EntropyMode::PresentOnly => Ok(if_yes),
        EntropyMode::Expected => {
            let p_yes: f64 = current
                .iter()
                .map(|(d, c)| c * ctx.backend.likelihood(ctx.db, d, s))
                .sum::<f64>()
                .clamp(0.0, 1.0);
            let if_no = entropy(&assess(&ctx.evidence.with_absent(s))?);
            Ok(p_yes * if_yes + (1.0 - p_yes) * if_no)
        }
    }
}

/// Picks the pool symptom maximizing `H(C) − H(C|s)`; ties go to the
/// lexicographically smallest token.
pub fn select_inquiry(
    ctx: &InquiryContext<'_>,
    current: &ConfidenceDistribution,
    pool: &[SymptomId],
) -> Result<Inquiry, EngineError> {
    let h = entropy(current);
    let mut ordered: Vec<&SymptomId> = pool.iter().collect();
    ordered.sort();
    ordered.dedup();
    let mut best: Option<Inquiry> = None;
    for s in ordered {
        let reduction = h - conditional_entropy(ctx, current, s)?;
        if best.as_ref().is_none_or(|b| reduction > b.reduction + TIE_EPSILON) {
            best = Some(Inquiry {
                symptom: s.clone(),
                reduction,
            });
        }
    }
    best.ok_or(EngineError::EmptyPool)
}
