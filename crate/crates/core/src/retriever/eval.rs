use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{recall_top_k, RetrieverError, RetrieverModel};
use crate::knowledge::{CaseRecord, DiseaseDB};

pub const RECALL_CUTOFFS: [usize; 6] = [3, 5, 10, 30, 50, 100];
const MRR_CUTOFF: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrieverEvalReport {
    pub mrr_at_100: f64,
    pub recall_at: BTreeMap<usize, f64>,
}

/// 1-based rank of `target` when every catalog disease is scored for the
/// case's full symptom set.
pub fn target_rank(
    model: &RetrieverModel,
    db: &DiseaseDB,
    case: &CaseRecord,
) -> Result<usize, RetrieverError> {
    let all = recall_top_k(model, db, &case.all_symptoms(), db.len())?;
    let rank = all.ids().position(|id| id == case.target).map(|p| p + 1);
    rank.ok_or_else(|| RetrieverError::UnknownTarget(case.target.clone()))
}

pub fn eval_retriever(
    model: &RetrieverModel,
    db: &DiseaseDB,
    cases: &[CaseRecord],
) -> Result<RetrieverEvalReport, RetrieverError> {
    if cases.is_empty() {
        return Err(RetrieverError::NoCases);
    }
    let ranks = cases
        .iter()
        .map(|c| target_rank(model, db, c))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(report_from_ranks(&ranks))
}

pub fn report_from_ranks(ranks: &[usize]) -> RetrieverEvalReport {
    let n = ranks.len() as f64;
    let recall_at = RECALL_CUTOFFS
        .iter()
        .map(|&k| (k, ranks.iter().filter(|&&r| r <= k).count() as f64 / n))
        .collect();
    let mrr_at_100 = ranks
        .iter()
        .map(|&r| if r <= MRR_CUTOFF { 1.0 / r as f64 } else { 0.0 })
        .sum::<f64>()
        / n;
    RetrieverEvalReport {
        mrr_at_100,
        recall_at,
    }
}

impl fmt::Display for RetrieverEvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<10}", "MRR@100")?;
        for k in self.recall_at.keys() {
            write!(f, "{:>11}", format!("Recall@{k}"))?;
        }
        writeln!(f)?;
        write!(f, "{:<10.4}", self.mrr_at_100)?;
        for v in self.recall_at.values() {
            write!(f, "{v:>11.4}")?;
        }
        writeln!(f)
    }
}
