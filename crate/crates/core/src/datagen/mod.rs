//! Training-record construction: dialogues whose every confidence round is
//! checked against the known target, with revision for backends that can
//! reconsider and discard for those that cannot.

mod build;

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use build::{build_cod_record, build_training_set, generated_symptom};

use crate::belief::{verify_against_target, BeliefError, Verification};
use crate::engine::{EngineError, SessionConfig, TraceRound};
use crate::retriever::RetrieverError;

pub const DEFAULT_RETHINK_LIMIT: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatagenConfig {
    pub session: SessionConfig,
    /// Verification threshold; the session threshold when unset.
    pub verify_tau: Option<f64>,
    pub rethink_limit: usize,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        Self {
            session: SessionConfig::default(),
            verify_tau: None,
            rethink_limit: DEFAULT_RETHINK_LIMIT,
        }
    }
}

impl DatagenConfig {
    pub fn verify_tau(&self) -> f64 {
        self.verify_tau.unwrap_or(self.session.tau)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Patient,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    /// The round behind an agent turn.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<TraceRound>,
}

impl Turn {
    pub fn patient(text: impl Into<String>) -> Self {
        Self {
            speaker: Speaker::Patient,
            text: text.into(),
            round: None,
        }
    }

    pub fn agent(text: impl Into<String>, round: TraceRound) -> Self {
        Self {
            speaker: Speaker::Agent,
            text: text.into(),
            round: Some(round),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RoundVerification {
    Valid,
    Rethought { count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoDRecord {
    pub case_id: String,
    pub target: String,
    /// Threshold the rounds were verified at.
    pub tau: f64,
    pub turns: Vec<Turn>,
    pub verification: Vec<RoundVerification>,
    pub final_diagnosis: String,
}

impl CoDRecord {
    pub fn rounds(&self) -> impl Iterator<Item = &TraceRound> {
        self.turns.iter().filter_map(|t| t.round.as_ref())
    }

    /// Re-checks every round and the final diagnosis.
    pub fn reverify(&self) -> Result<(), DatagenError> {
        for r in self.rounds() {
            if verify_against_target(&r.confidence, &self.target, self.tau) == Verification::Erroneous {
                return Err(DatagenError::Verification {
                    case_id: self.case_id.clone(),
                    round: r.round,
                });
            }
        }
        if self.final_diagnosis != self.target {
            return Err(DatagenError::Verification {
                case_id: self.case_id.clone(),
                round: self.rounds().count(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum CodOutcome {
    Retained(CoDRecord),
    Discarded { case_id: String, reason: String },
}

impl CodOutcome {
    pub fn case_id(&self) -> &str {
        match self {
            Self::Retained(r) => &r.case_id,
            Self::Discarded { case_id, .. } => case_id,
        }
    }

    pub fn retained(&self) -> Option<&CoDRecord> {
        match self {
            Self::Retained(r) => Some(r),
            Self::Discarded { .. } => None,
        }
    }
}

/// Writes retained records as JSONL after re-verifying each one. Returns
/// the number written.
pub fn export_training_set(outcomes: &[CodOutcome], path: impl AsRef<Path>) -> Result<usize, DatagenError> {
    let mut records = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        match o {
            CodOutcome::Retained(r) => {
                r.reverify()?;
                records.push(r);
            }
            CodOutcome::Discarded { case_id, .. } => {
                return Err(DatagenError::DiscardedRecord(case_id.clone()))
            }
        }
    }
    let io = |e: std::io::Error| DatagenError::Io(e.to_string());
    let mut out = BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for r in &records {
        serde_json::to_writer(&mut out, r).map_err(|e| DatagenError::Io(e.to_string()))?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)?;
    Ok(records.len())
}

pub fn load_training_set(path: impl AsRef<Path>) -> Result<Vec<CoDRecord>, DatagenError> {
    let io = |e: std::io::Error| DatagenError::Io(e.to_string());
    let reader = BufReader::new(std::fs::File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DatagenError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Debug, thiserror::Error)]
pub enum DatagenError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Retriever(#[from] RetrieverError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error("invalid case {0}")]
    InvalidCase(String),
    #[error("record for case '{0}' was discarded and cannot be exported")]
    DiscardedRecord(String),
    #[error("case '{case_id}' round {round} fails verification")]
    Verification { case_id: String, round: usize },
    #[error("io: {0}")]
    Io(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}
