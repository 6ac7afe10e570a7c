use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::BeliefError;
use crate::knowledge::SymptomId;
use crate::retriever::CandidateSet;

/// Tolerance on the unit-sum invariant.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Accumulated symptom knowledge: confirmed present and confirmed absent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymptomEvidence {
    pub present: BTreeSet<SymptomId>,
    pub absent: BTreeSet<SymptomId>,
}

impl SymptomEvidence {
    pub fn new(
        present: BTreeSet<SymptomId>,
        absent: BTreeSet<SymptomId>,
    ) -> Result<Self, BeliefError> {
        if let Some(s) = present.intersection(&absent).next() {
            return Err(BeliefError::ConflictingEvidence(s.to_string()));
        }
        Ok(Self { present, absent })
    }

    pub fn is_empty(&self) -> bool {
        self.present.is_empty() && self.absent.is_empty()
    }

    pub fn knows(&self, s: &SymptomId) -> bool {
        self.present.contains(s) || self.absent.contains(s)
    }

    /// Copy with `s` marked present (and no longer absent).
    pub fn with_present(&self, s: &SymptomId) -> Self {
        let mut next = self.clone();
        next.absent.remove(s);
        next.present.insert(s.clone());
        next
    }

    /// Copy with `s` marked absent (and no longer present).
    pub fn with_absent(&self, s: &SymptomId) -> Self {
        let mut next = self.clone();
        next.present.remove(s);
        next.absent.insert(s.clone());
        next
    }
}

/// Normalized confidence over a candidate set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, f64>", into = "BTreeMap<String, f64>")]
pub struct ConfidenceDistribution {
    entries: BTreeMap<String, f64>,
}

impl ConfidenceDistribution {
    /// Wraps already-normalized values, checking the invariants.
    pub fn from_normalized(entries: BTreeMap<String, f64>) -> Result<Self, BeliefError> {
        if entries.is_empty() {
            return Err(BeliefError::EmptyDistribution);
        }
        let mut total = 0.0;
        for (k, v) in &entries {
            if !v.is_finite() {
                return Err(BeliefError::NonFinite(k.clone()));
            }
            if *v < 0.0 {
                return Err(BeliefError::NegativeConfidence(k.clone()));
            }
            total += v;
        }
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(BeliefError::NotNormalized(total));
        }
        Ok(Self { entries })
    }

    pub fn uniform<I, S>(ids: I) -> Result<Self, BeliefError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let keys: Vec<String> = ids.into_iter().map(Into::into).collect();
        let p = 1.0 / keys.len() as f64;
        Self::from_normalized(keys.into_iter().map(|k| (k, p)).collect())
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.entries.get(id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Highest-confidence disease; ties go to the smallest id.
    pub fn argmax(&self) -> (&str, f64) {
        let mut best: Option<(&str, f64)> = None;
        for (k, v) in self.iter() {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((k, v));
            }
        }
        best.expect("distribution is never empty")
    }

    pub fn as_map(&self) -> &BTreeMap<String, f64> {
        &self.entries
    }
}

impl TryFrom<BTreeMap<String, f64>> for ConfidenceDistribution {
    type Error = BeliefError;

    fn try_from(value: BTreeMap<String, f64>) -> Result<Self, Self::Error> {
        Self::from_normalized(value)
    }
}

impl From<ConfidenceDistribution> for BTreeMap<String, f64> {
    fn from(value: ConfidenceDistribution) -> Self {
        value.entries
    }
}

/// Repairs a raw score map into a distribution over `candidates`: unknown
/// keys are dropped, missing candidates get 0, values are renormalized. A
/// zero total falls back to uniform. Returns the warnings raised.
pub fn validate_distribution<'a, I>(
    raw: I,
    candidates: &CandidateSet,
) -> Result<(ConfidenceDistribution, Vec<String>), BeliefError>
where
    I: IntoIterator<Item = (&'a str, f64)>,
{
    let mut warnings = Vec::new();
    let mut values: BTreeMap<String, f64> = candidates.ids().map(|id| (id.to_string(), 0.0)).collect();
    let mut seen_any = false;
    for (key, v) in raw {
        seen_any = true;
        if !v.is_finite() {
            return Err(BeliefError::NonFinite(key.to_string()));
        }
        if v < 0.0 {
            return Err(BeliefError::NegativeConfidence(key.to_string()));
        }
        match values.get_mut(key) {
            Some(slot) => *slot = v,
            None => warnings.push(format!("dropped confidence for non-candidate '{key}'")),
        }
    }
    if !seen_any {
        return Err(BeliefError::EmptyDistribution);
    }
    if candidates.is_empty() {
        return Err(BeliefError::NoCandidates);
    }
    let total: f64 = values.values().sum();
    if total == 0.0 {
        warnings.push("all candidate confidences are zero; using uniform".into());
        return Ok((ConfidenceDistribution::uniform(candidates.ids())?, warnings));
    }
    for v in values.values_mut() {
        *v /= total;
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok((ConfidenceDistribution::from_normalized(values)?, warnings))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verification {
    Valid,
    Erroneous,
}

/// Training-time check: the assessment is erroneous when any non-target
/// candidate holds confidence of at least `tau`.
pub fn verify_against_target(dist: &ConfidenceDistribution, target: &str, tau: f64) -> Verification {
    if dist.iter().any(|(id, c)| id != target && c >= tau) {
        Verification::Erroneous
    } else {
        Verification::Valid
    }
}
