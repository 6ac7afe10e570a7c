use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::belief::BeliefBackendConfig;
use crate::retriever::DEFAULT_K;

/// How the post-inquiry entropy of a candidate symptom is estimated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyMode {
    /// Entropy after assuming the symptom is present.
    #[default]
    PresentOnly,
    /// Answer-weighted entropy: `P(yes)·H(yes) + P(no)·H(no)`.
    Expected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// Diagnose once the top confidence strictly exceeds this.
    pub tau: f64,
    /// Maximum number of inquiries per session.
    pub max_rounds: usize,
    /// Number of candidate diseases recalled.
    pub k: usize,
    pub backend: BeliefBackendConfig,
    pub rerecall_each_round: bool,
    pub entropy_mode: EntropyMode,
    pub candidate_pool_limit: usize,
    /// Forwarded to non-deterministic backends.
    pub seed: Option<u64>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            max_rounds: 5,
            k: DEFAULT_K,
            backend: BeliefBackendConfig::default(),
            rerecall_each_round: true,
            entropy_mode: EntropyMode::PresentOnly,
            candidate_pool_limit: 32,
            seed: None,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(EngineError::InvalidConfig(format!(
                "tau must lie strictly between 0 and 1, got {}",
                self.tau
            )));
        }
        if self.k == 0 {
            return Err(EngineError::InvalidConfig("k must be at least 1".into()));
        }
        if self.candidate_pool_limit == 0 {
            return Err(EngineError::InvalidConfig(
                "candidate_pool_limit must be at least 1".into(),
            ));
        }
        self.backend
            .validate()
            .map_err(|e| EngineError::InvalidConfig(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SessionConfig::default().validate().unwrap();
    }

    #[test]
    fn tau_bounds_are_exclusive() {
        for tau in [0.0, 1.0, 1.5, -0.2, f64::NAN] {
            let cfg = SessionConfig { tau, ..SessionConfig::default() };
            assert!(cfg.validate().is_err(), "tau {tau}");
        }
    }

    #[test]
    fn zero_k_rejected() {
        assert!(SessionConfig { k: 0, ..SessionConfig::default() }.validate().is_err());
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg: SessionConfig = serde_json::from_str(r#"{"tau":0.7,"entropy_mode":"expected"}"#).unwrap();
        assert_eq!(cfg.tau, 0.7);
        assert_eq!(cfg.entropy_mode, EntropyMode::Expected);
        assert_eq!(cfg.max_rounds, 5);
    }
}
