use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{KnowledgeError, SymptomId};

/// One catalog entry with its weighted symptom profile.
///
/// A profile weight is the generative prevalence of the symptom given the
/// disease, in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiseaseRecord {
    pub id: String,
    pub name: String,
    pub overview: String,
    pub treatment: String,
    pub department: String,
    pub symptom_profile: Vec<(SymptomId, f64)>,
}

#[derive(Serialize, Deserialize)]
struct ProfileEntryLine {
    s: SymptomId,
    w: f64,
}

#[derive(Serialize, Deserialize)]
struct DiseaseLine {
    id: String,
    name: String,
    #[serde(default)]
    overview: String,
    #[serde(default)]
    treatment: String,
    #[serde(default)]
    department: String,
    symptoms: Vec<ProfileEntryLine>,
}

impl From<DiseaseLine> for DiseaseRecord {
    fn from(line: DiseaseLine) -> Self {
        Self {
            id: line.id,
            name: line.name,
            overview: line.overview,
            treatment: line.treatment,
            department: line.department,
            symptom_profile: line.symptoms.into_iter().map(|e| (e.s, e.w)).collect(),
        }
    }
}

impl From<&DiseaseRecord> for DiseaseLine {
    fn from(rec: &DiseaseRecord) -> Self {
        Self {
            id: rec.id.clone(),
            name: rec.name.clone(),
            overview: rec.overview.clone(),
            treatment: rec.treatment.clone(),
            department: rec.department.clone(),
            symptoms: rec
                .symptom_profile
                .iter()
                .map(|(s, w)| ProfileEntryLine { s: s.clone(), w: *w })
                .collect(),
        }
    }
}

impl DiseaseRecord {
    /// Profile symptoms in listing order.
    pub fn symptoms(&self) -> impl Iterator<Item = &SymptomId> {
        self.symptom_profile.iter().map(|(s, _)| s)
    }

    fn validate(&self) -> Result<(), KnowledgeError> {
        if self.id.trim().is_empty() {
            return Err(KnowledgeError::EmptyId);
        }
        if self.symptom_profile.is_empty() {
            return Err(KnowledgeError::EmptyProfile(self.id.clone()));
        }
        let mut seen = BTreeSet::new();
        for (s, w) in &self.symptom_profile {
            if !(w.is_finite() && *w > 0.0 && *w <= 1.0) {
                return Err(KnowledgeError::WeightOutOfRange {
                    disease: self.id.clone(),
                    symptom: s.to_string(),
                    weight: *w,
                });
            }
            if !seen.insert(s) {
                return Err(KnowledgeError::DuplicateProfileSymptom {
                    disease: self.id.clone(),
                    symptom: s.to_string(),
                });
            }
        }
        Ok(())
    }
}

/// Validated disease catalog. Immutable once built.
#[derive(Debug, Clone)]
pub struct DiseaseDB {
    diseases: Vec<DiseaseRecord>,
    symptom_vocab: Vec<SymptomId>,
    by_id: HashMap<String, usize>,
    weights: Vec<HashMap<SymptomId, f64>>,
}

impl PartialEq for DiseaseDB {
    fn eq(&self, other: &Self) -> bool {
        self.diseases == other.diseases
    }
}

impl DiseaseDB {
    pub fn new(diseases: Vec<DiseaseRecord>) -> Result<Self, KnowledgeError> {
        if diseases.is_empty() {
            return Err(KnowledgeError::EmptyCatalog);
        }
        let mut by_id = HashMap::with_capacity(diseases.len());
        let mut vocab = BTreeSet::new();
        let mut weights = Vec::with_capacity(diseases.len());
        for (idx, rec) in diseases.iter().enumerate() {
            rec.validate()?;
            if by_id.insert(rec.id.clone(), idx).is_some() {
                return Err(KnowledgeError::DuplicateDisease(rec.id.clone()));
            }
            vocab.extend(rec.symptoms().cloned());
            weights.push(rec.symptom_profile.iter().cloned().collect());
        }
        Ok(Self {
            diseases,
            symptom_vocab: vocab.into_iter().collect(),
            by_id,
            weights,
        })
    }

    pub fn from_jsonl(text: &str) -> Result<Self, KnowledgeError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: DiseaseLine =
                serde_json::from_str(line).map_err(|e| KnowledgeError::Malformed {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            records.push(parsed.into());
        }
        Self::new(records)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KnowledgeError> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| KnowledgeError::io(path, e))?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| KnowledgeError::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: DiseaseLine =
                serde_json::from_str(&line).map_err(|e| KnowledgeError::Malformed {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            records.push(parsed.into());
        }
        Self::new(records)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for rec in &self.diseases {
            out.push_str(&serde_json::to_string(&DiseaseLine::from(rec)).expect("serializable"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), KnowledgeError> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| KnowledgeError::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| KnowledgeError::io(path, e))
    }

    pub fn diseases(&self) -> &[DiseaseRecord] {
        &self.diseases
    }

    pub fn len(&self) -> usize {
        self.diseases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diseases.is_empty()
    }

    pub fn symptom_vocab(&self) -> &[SymptomId] {
        &self.symptom_vocab
    }

    pub fn contains_symptom(&self, s: &SymptomId) -> bool {
        self.symptom_vocab.binary_search(s).is_ok()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&DiseaseRecord> {
        self.index_of(id).map(|i| &self.diseases[i])
    }

    pub fn contains_disease(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    /// Profile weight of `symptom` for disease `id`; 0 when off-profile or unknown.
    pub fn weight(&self, id: &str, symptom: &SymptomId) -> f64 {
        self.index_of(id)
            .and_then(|i| self.weights[i].get(symptom).copied())
            .unwrap_or(0.0)
    }

    pub fn profile_len(&self, id: &str) -> usize {
        self.get(id).map_or(0, |d| d.symptom_profile.len())
    }

    /// Stable hash over the symptom vocabulary and disease ids (in catalog
    /// order). Binds a trained retriever to the catalog it was trained on.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Sha256::new();
        for s in &self.symptom_vocab {
            h.update(s.as_str().as_bytes());
            h.update([0u8]);
        }
        h.update([0xffu8]);
        for d in &self.diseases {
            h.update(d.id.as_bytes());
            h.update([0u8]);
        }
        let digest = h.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const THREE: &str = r#"{"id":"flu","name":"Influenza","overview":"o","treatment":"t","department":"resp","symptoms":[{"s":"fever","w":0.9},{"s":"cough","w":0.6}]}
{"id":"cold","name":"Common cold","overview":"o","treatment":"t","department":"resp","symptoms":[{"s":"Runny  Nose","w":0.9},{"s":"cough","w":0.5}]}
{"id":"mig","name":"Migraine","overview":"o","treatment":"t","department":"neuro","symptoms":[{"s":"headache","w":1.0}]}
"#;

    #[test]
    fn loads_three_records_and_builds_vocab() {
        let db = DiseaseDB::from_jsonl(THREE).unwrap();
        assert_eq!(db.len(), 3);
        let vocab: Vec<_> = db.symptom_vocab().iter().map(|s| s.as_str()).collect();
        assert_eq!(vocab, ["cough", "fever", "headache", "runny nose"]);
        assert_eq!(db.diseases()[1].id, "cold");
        assert_eq!(db.weight("flu", &SymptomId::new("fever").unwrap()), 0.9);
        assert_eq!(db.weight("mig", &SymptomId::new("fever").unwrap()), 0.0);
    }

    #[test]
    fn duplicate_id_is_named() {
        let text = r#"{"id":"flu","name":"a","symptoms":[{"s":"fever","w":0.5}]}
{"id":"flu","name":"b","symptoms":[{"s":"cough","w":0.5}]}"#;
        let err = DiseaseDB::from_jsonl(text).unwrap_err();
        assert!(matches!(err, KnowledgeError::DuplicateDisease(ref id) if id == "flu"));
        assert!(err.to_string().contains("flu"));
    }

    #[test]
    fn weight_out_of_range_names_disease_and_symptom() {
        let text = r#"{"id":"flu","name":"a","symptoms":[{"s":"fever","w":1.5}]}"#;
        let msg = DiseaseDB::from_jsonl(text).unwrap_err().to_string();
        assert!(msg.contains("weight out of range"), "{msg}");
        assert!(msg.contains("flu") && msg.contains("fever"), "{msg}");
    }

    #[test]
    fn zero_weight_rejected() {
        let text = r#"{"id":"flu","name":"a","symptoms":[{"s":"fever","w":0.0}]}"#;
        assert!(DiseaseDB::from_jsonl(text).is_err());
    }

    #[test]
    fn empty_profile_rejected() {
        let text = r#"{"id":"flu","name":"a","symptoms":[]}"#;
        assert!(matches!(
            DiseaseDB::from_jsonl(text),
            Err(KnowledgeError::EmptyProfile(_))
        ));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = format!("{}\nnot json\n", THREE.lines().next().unwrap());
        match DiseaseDB::from_jsonl(&text) {
            Err(KnowledgeError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_profile_symptom_after_normalization() {
        let text = r#"{"id":"flu","name":"a","symptoms":[{"s":"Fever","w":0.5},{"s":"fever ","w":0.4}]}"#;
        assert!(matches!(
            DiseaseDB::from_jsonl(text),
            Err(KnowledgeError::DuplicateProfileSymptom { .. })
        ));
    }

    #[test]
    fn save_then_load_is_identity() {
        let db = DiseaseDB::from_jsonl(THREE).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        db.save(&p).unwrap();
        let back = DiseaseDB::load(&p).unwrap();
        assert_eq!(db, back);
        assert_eq!(db.fingerprint(), back.fingerprint());
    }

    #[test]
    fn fingerprint_changes_with_catalog() {
        let a = DiseaseDB::from_jsonl(THREE).unwrap();
        let b = DiseaseDB::new(a.diseases()[..2].to_vec()).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
