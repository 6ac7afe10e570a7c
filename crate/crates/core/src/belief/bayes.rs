//! Naive-Bayes confidence over the candidate set.
//!
//! With a uniform prior over candidates,
//! `c_d ∝ Π_{s ∈ present} p(s|d) · Π_{s ∈ absent} (1 − p(s|d))`,
//! where `p(s|d) = (w(s,d)·n_d + α) / (n_d + 2α)`, `w` is the profile weight
//! (0 when off-profile) and `n_d` the profile size.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ConfidenceDistribution, ReasoningTrace, SymptomEvidence};
use crate::knowledge::{DiseaseDB, SymptomId};
use crate::retriever::CandidateSet;

pub const DEFAULT_ALPHA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BayesConfig {
    pub smoothing_alpha: f64,
    /// Apply the `(1 − p)` factor for symptoms answered "no". Off reproduces
    /// conditioning on present symptoms only.
    pub absent_penalty: bool,
}

impl Default for BayesConfig {
    fn default() -> Self {
        Self {
            smoothing_alpha: DEFAULT_ALPHA,
            absent_penalty: true,
        }
    }
}

/// Smoothed `p(s|d)`.
pub fn symptom_likelihood(db: &DiseaseDB, disease: &str, s: &SymptomId, alpha: f64) -> f64 {
    let n = db.profile_len(disease) as f64;
    (db.weight(disease, s) * n + alpha) / (n + 2.0 * alpha)
}

pub fn bayes_posterior(
    cfg: &BayesConfig,
    evidence: &SymptomEvidence,
    candidates: &CandidateSet,
    db: &DiseaseDB,
) -> ConfidenceDistribution {
    let alpha = cfg.smoothing_alpha;
    let logs: Vec<(&str, f64)> = candidates
        .ids()
        .map(|d| {
            let mut l = 0.0;
            for s in &evidence.present {
                l += symptom_likelihood(db, d, s, alpha).ln();
            }
            if cfg.absent_penalty {
                for s in &evidence.absent {
                    l += (1.0 - symptom_likelihood(db, d, s, alpha)).ln();
                }
            }
            (d, l)
        })
        .collect();
    let max = logs.iter().map(|(_, l)| *l).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|(_, l)| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let entries: BTreeMap<String, f64> = logs
        .iter()
        .zip(&weights)
        .map(|((d, _), w)| (d.to_string(), w / total))
        .collect();
    ConfidenceDistribution::from_normalized(entries).expect("softmax output is normalized")
}

/// Per-candidate matched/contradicting symptoms plus a templated summary.
pub fn reasoning_for(
    evidence: &SymptomEvidence,
    candidates: &CandidateSet,
    db: &DiseaseDB,
    dist: &ConfidenceDistribution,
) -> ReasoningTrace {
    let mut structured = Vec::with_capacity(candidates.len());
    let mut text = String::new();
    for id in candidates.ids() {
        let on_profile = |s: &&SymptomId| db.weight(id, s) > 0.0;
        let matched: Vec<SymptomId> = evidence.present.iter().filter(on_profile).cloned().collect();
        let contradicting: Vec<SymptomId> = evidence
            .present
            .iter()
            .filter(|s| !on_profile(s))
            .chain(evidence.absent.iter().filter(on_profile))
            .cloned()
            .collect();
        let name = db.get(id).map_or(id, |d| d.name.as_str());
        text.push_str(&format!(
            "{name}: matches [{}]; against [{}]; confidence {:.3}.\n",
            join(&matched),
            join(&contradicting),
            dist.get(id).unwrap_or(0.0)
        ));
        structured.push(super::DiseaseAnalysis {
            disease: id.to_string(),
            matched,
            contradicting,
        });
    }
    ReasoningTrace {
        text: text.trim_end().to_string(),
        structured,
    }
}

fn join(items: &[SymptomId]) -> String {
    items.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::DiseaseRecord;

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
                    overview: String::new(),
                    treatment: String::new(),
                    department: String::new(),
                    symptom_profile: p.iter().map(|(s, w)| (sym(s), *w)).collect(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn no_evidence_is_uniform() {
        let db = db(&[("a", &[("x", 0.5)]), ("b", &[("y", 0.5)]), ("c", &[("z", 0.9)])]);
        let c = CandidateSet::from_ids(["a", "b", "c"]).unwrap();
        let d = bayes_posterior(&BayesConfig::default(), &SymptomEvidence::default(), &c, &db);
        for (_, v) in d.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn two_candidate_fever_example() {
        let db = db(&[("A", &[("fever", 0.9)]), ("B", &[("cough", 0.9)])]);
        let c = CandidateSet::from_ids(["A", "B"]).unwrap();
        let ev = SymptomEvidence::new([sym("fever")].into(), Default::default()).unwrap();
        let d = bayes_posterior(&BayesConfig::default(), &ev, &c, &db);
        // p(fever|A) = 0.91/1.02, p(fever|B) = 0.01/1.02 => c_A = 0.91/0.92
        let expected = 0.91 / 0.92;
        assert!((d.get("A").unwrap() - expected).abs() < 1e-12);
        assert!((d.get("A").unwrap() - 0.989).abs() < 5e-4);
    }

    #[test]
    fn absent_penalty_switch() {
        let db = db(&[("A", &[("fever", 0.9)]), ("B", &[("cough", 0.9)])]);
        let c = CandidateSet::from_ids(["A", "B"]).unwrap();
        let ev = SymptomEvidence::new(Default::default(), [sym("fever")].into()).unwrap();
        let on = bayes_posterior(&BayesConfig::default(), &ev, &c, &db);
        assert!(on.get("B").unwrap() > 0.9);
        let off = BayesConfig { absent_penalty: false, ..Default::default() };
        let lit = bayes_posterior(&off, &ev, &c, &db);
        assert_eq!(lit.get("A"), Some(0.5));
    }

    #[test]
    fn reasoning_lists_matches_and_contradictions() {
        let db = db(&[("A", &[("fever", 0.9), ("rash", 0.5)]), ("B", &[("cough", 0.9)])]);
        let c = CandidateSet::from_ids(["A", "B"]).unwrap();
        let ev = SymptomEvidence::new([sym("fever")].into(), [sym("rash")].into()).unwrap();
        let d = bayes_posterior(&BayesConfig::default(), &ev, &c, &db);
        let r = reasoning_for(&ev, &c, &db, &d);
        assert_eq!(r.structured[0].matched, vec![sym("fever")]);
        assert_eq!(r.structured[0].contradicting, vec![sym("rash")]);
        assert_eq!(r.structured[1].contradicting, vec![sym("fever")]);
        assert!(r.text.contains("A: matches [fever]"));
    }
}
