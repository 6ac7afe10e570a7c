//! Disease catalog, symptom vocabulary, patient cases and case synthesis.

mod cases;
mod catalog;
mod symptom;
mod synth;

use std::path::Path;

pub use cases::{load_cases, save_cases, split_cases, CaseRecord, Demographics};
pub use catalog::{DiseaseDB, DiseaseRecord};
pub use symptom::{normalize, SymptomId};
pub use synth::{synthesize_cases, EXPLICIT_QUOTA, IMPLICIT_MAX, IMPLICIT_MIN};

const DEMO_CATALOG: &str = include_str!("../../data/demo_diseases.jsonl");

/// The bundled 20-disease demo catalog. Every disease lists a dominant
/// symptom unique to it first; profile weights decay linearly with listing
/// order.
pub fn demo_catalog() -> DiseaseDB {
    DiseaseDB::from_jsonl(DEMO_CATALOG).expect("bundled demo catalog is valid")
}

/// Raw JSONL text of the bundled demo catalog.
pub fn demo_catalog_jsonl() -> &'static str {
    DEMO_CATALOG
}

#[derive(Debug, thiserror::Error)]
pub enum KnowledgeError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record on line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate disease id '{0}'")]
    DuplicateDisease(String),
    #[error("disease '{0}' has an empty symptom profile")]
    EmptyProfile(String),
    #[error("disease id must be non-empty")]
    EmptyId,
    #[error("weight out of range for disease '{disease}', symptom '{symptom}': {weight}")]
    WeightOutOfRange {
        disease: String,
        symptom: String,
        weight: f64,
    },
    #[error("disease '{disease}' lists symptom '{symptom}' twice")]
    DuplicateProfileSymptom { disease: String, symptom: String },
    #[error("symptom token is empty after normalization")]
    EmptySymptom,
    #[error("catalog is empty")]
    EmptyCatalog,
    #[error("per_disease must be at least 1")]
    ZeroPerDisease,
    #[error("eval fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("no cases given")]
    NoCases,
    #[error("case '{case_id}' is invalid: {reason}")]
    InvalidCase { case_id: String, reason: String },
}

impl KnowledgeError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
