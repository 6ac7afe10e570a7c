//! Confidence assessment over candidate diseases.
//!
//! Two interchangeable backends produce a [`ConfidenceDistribution`] plus a
//! [`ReasoningTrace`]: a deterministic naive-Bayes posterior and an adapter
//! for an external LLM speaking a small JSON wire contract.

mod bayes;
mod distribution;
mod llm;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use bayes::{bayes_posterior, reasoning_for, symptom_likelihood, BayesConfig, DEFAULT_ALPHA};
pub use distribution::{
    validate_distribution, verify_against_target, ConfidenceDistribution, SymptomEvidence,
    Verification, SUM_TOLERANCE,
};
pub use llm::{
    parse_reply, HttpTransport, LlmBackend, LlmConfig, LlmRequest, LlmTransport, PromptTemplates,
    RawAssessment, TransportError, ENV_API_KEY, ENV_ENDPOINT,
};

use crate::knowledge::{DiseaseDB, SymptomId};
use crate::retriever::CandidateSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiseaseAnalysis {
    pub disease: String,
    pub matched: Vec<SymptomId>,
    pub contradicting: Vec<SymptomId>,
}

/// Free-text analysis plus per-candidate evidence bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub text: String,
    pub structured: Vec<DiseaseAnalysis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BeliefBackendConfig {
    Bayes(BayesConfig),
    Llm(LlmConfig),
}

impl Default for BeliefBackendConfig {
    fn default() -> Self {
        Self::Bayes(BayesConfig::default())
    }
}

impl BeliefBackendConfig {
    pub fn validate(&self) -> Result<(), BeliefError> {
        match self {
            Self::Bayes(b) if !(b.smoothing_alpha > 0.0 && b.smoothing_alpha.is_finite()) => Err(
                BeliefError::Config(format!("smoothing_alpha must be > 0, got {}", b.smoothing_alpha)),
            ),
            _ => Ok(()),
        }
    }
}

/// Inputs to one confidence assessment.
#[derive(Debug, Clone, Copy)]
pub struct AssessRequest<'a> {
    pub evidence: &'a SymptomEvidence,
    /// Symptoms volunteered in the opening report; the rest of
    /// `evidence.present` was learned by inquiry.
    pub reported: &'a BTreeSet<SymptomId>,
    pub candidates: &'a CandidateSet,
    pub db: &'a DiseaseDB,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assessment {
    pub reasoning: ReasoningTrace,
    pub distribution: ConfidenceDistribution,
    pub warnings: Vec<String>,
    /// Prompt and raw reply, for backends that have them.
    pub prompt: Option<String>,
    pub raw_reply: Option<String>,
}

#[derive(Debug, Clone)]
pub enum Backend {
    Bayes(BayesConfig),
    Llm(LlmBackend),
}

impl Backend {
    pub fn from_config(cfg: &BeliefBackendConfig) -> Result<Self, BeliefError> {
        cfg.validate()?;
        Ok(match cfg {
            BeliefBackendConfig::Bayes(b) => Self::Bayes(*b),
            BeliefBackendConfig::Llm(l) => Self::Llm(LlmBackend::from_config(l.clone())?),
        })
    }

    pub fn bayes() -> Self {
        Self::Bayes(BayesConfig::default())
    }

    pub fn config(&self) -> BeliefBackendConfig {
        match self {
            Self::Bayes(b) => BeliefBackendConfig::Bayes(*b),
            Self::Llm(l) => BeliefBackendConfig::Llm(l.config().clone()),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, Self::Bayes(_))
    }

    pub fn assess(&self, req: &AssessRequest<'_>) -> Result<Assessment, BeliefError> {
        if req.candidates.is_empty() {
            return Err(BeliefError::NoCandidates);
        }
        if let Some(id) = req.candidates.ids().find(|id| !req.db.contains_disease(id)) {
            return Err(BeliefError::UnknownCandidate(id.to_string()));
        }
        match self {
            Self::Bayes(cfg) => {
                let distribution = bayes_posterior(cfg, req.evidence, req.candidates, req.db);
                let reasoning = reasoning_for(req.evidence, req.candidates, req.db, &distribution);
                Ok(Assessment {
                    reasoning,
                    distribution,
                    warnings: Vec::new(),
                    prompt: None,
                    raw_reply: None,
                })
            }
            Self::Llm(llm) => llm.assess(req),
        }
    }

    /// Distribution only, for hypothetical evidence during inquiry selection.
    pub fn distribution(&self, req: &AssessRequest<'_>) -> Result<ConfidenceDistribution, BeliefError> {
        match self {
            Self::Bayes(cfg) => Ok(bayes_posterior(cfg, req.evidence, req.candidates, req.db)),
            Self::Llm(_) => Ok(self.assess(req)?.distribution),
        }
    }

    /// Asks for a revised assessment. `None` when the backend cannot revise
    /// (a deterministic posterior never changes its mind).
    pub fn rethink(
        &self,
        req: &AssessRequest<'_>,
        previous: &Assessment,
    ) -> Result<Option<Assessment>, BeliefError> {
        match self {
            Self::Bayes(_) => Ok(None),
            Self::Llm(llm) => llm.rethink(req, previous).map(Some),
        }
    }

    /// `p(s|d)` used for expected-answer calculations. The LLM backend falls
    /// back to the knowledge-base likelihood with default smoothing.
    pub fn likelihood(&self, db: &DiseaseDB, disease: &str, s: &SymptomId) -> f64 {
        let alpha = match self {
            Self::Bayes(cfg) => cfg.smoothing_alpha,
            Self::Llm(_) => DEFAULT_ALPHA,
        };
        symptom_likelihood(db, disease, s, alpha)
    }
}

/// One-shot convenience wrapper around [`Backend::assess`].
pub fn assess_confidence(
    backend: &Backend,
    evidence: &SymptomEvidence,
    candidates: &CandidateSet,
    db: &DiseaseDB,
) -> Result<(ReasoningTrace, ConfidenceDistribution), BeliefError> {
    let reported = evidence.present.clone();
    let a = backend.assess(&AssessRequest {
        evidence,
        reported: &reported,
        candidates,
        db,
        seed: None,
    })?;
    Ok((a.reasoning, a.distribution))
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum BeliefError {
    #[error("negative confidence for '{0}'")]
    NegativeConfidence(String),
    #[error("non-finite confidence for '{0}'")]
    NonFinite(String),
    #[error("confidence distribution is empty")]
    EmptyDistribution,
    #[error("confidences sum to {0}, not 1")]
    NotNormalized(f64),
    #[error("candidate set is empty")]
    NoCandidates,
    #[error("candidate '{0}' is not in the catalog")]
    UnknownCandidate(String),
    #[error("symptom '{0}' is recorded as both present and absent")]
    ConflictingEvidence(String),
    #[error("llm transport failed: {0}")]
    Transport(String),
    #[error("llm reply could not be parsed: {0}")]
    Unparseable(String),
    #[error("prompt template: {0}")]
    Template(String),
    #[error("backend configuration: {0}")]
    Config(String),
}
