use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DiseaseDB, KnowledgeError, SymptomId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demographics {
    pub gender: String,
    pub age: String,
}

/// A patient abstracted as (explicit symptoms, implicit symptoms, target disease).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub target: String,
    pub explicit: BTreeSet<SymptomId>,
    pub implicit: BTreeSet<SymptomId>,
    pub demographics: Option<Demographics>,
}

impl CaseRecord {
    pub fn all_symptoms(&self) -> BTreeSet<SymptomId> {
        self.explicit.union(&self.implicit).cloned().collect()
    }

    pub fn has_symptom(&self, s: &SymptomId) -> bool {
        self.explicit.contains(s) || self.implicit.contains(s)
    }

    /// Checks the record against the catalog it claims to belong to.
    pub fn validate(&self, db: &DiseaseDB) -> Result<(), KnowledgeError> {
        let bad = |reason: String| KnowledgeError::InvalidCase {
            case_id: self.case_id.clone(),
            reason,
        };
        if self.explicit.is_empty() {
            return Err(bad("no explicit symptoms".into()));
        }
        if let Some(s) = self.explicit.intersection(&self.implicit).next() {
            return Err(bad(format!("symptom '{s}' is both explicit and implicit")));
        }
        if !db.contains_disease(&self.target) {
            return Err(bad(format!("unknown target disease '{}'", self.target)));
        }
        if let Some(s) = self.explicit.iter().chain(&self.implicit).find(|s| !db.contains_symptom(s)) {
            return Err(bad(format!("symptom '{s}' not in catalog vocabulary")));
        }
        Ok(())
    }
}

pub fn load_cases(path: impl AsRef<Path>) -> Result<Vec<CaseRecord>, KnowledgeError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| KnowledgeError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| KnowledgeError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| KnowledgeError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

pub fn save_cases(path: impl AsRef<Path>, cases: &[CaseRecord]) -> Result<(), KnowledgeError> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| KnowledgeError::io(path, e))?;
    for c in cases {
        let line = serde_json::to_string(c).expect("serializable");
        writeln!(f, "{line}").map_err(|e| KnowledgeError::io(path, e))?;
    }
    Ok(())
}

/// Seeded partition into (train, eval). The eval part has
/// `round(eval_fraction * N)` cases; both parts keep input order.
pub fn split_cases(
    cases: &[CaseRecord],
    eval_fraction: f64,
    seed: u64,
) -> Result<(Vec<CaseRecord>, Vec<CaseRecord>), KnowledgeError> {
    if !(eval_fraction > 0.0 && eval_fraction < 1.0) {
        return Err(KnowledgeError::InvalidFraction(eval_fraction));
    }
    if cases.is_empty() {
        return Err(KnowledgeError::NoCases);
    }
    let n_eval = (eval_fraction * cases.len() as f64).round() as usize;
    let mut idx: Vec<usize> = (0..cases.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_eval = vec![false; cases.len()];
    for &i in &idx[..n_eval] {
        is_eval[i] = true;
    }
    let (mut train, mut eval) = (Vec::new(), Vec::new());
    for (c, e) in cases.iter().zip(is_eval) {
        if e {
            eval.push(c.clone());
        } else {
            train.push(c.clone());
        }
    }
    Ok((train, eval))
}
