use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RetrieverError;
use crate::knowledge::{DiseaseDB, SymptomId};

const MAGIC: &[u8; 8] = b"CODRETR1";

/// Free embedding tables for symptoms and diseases, bound to one catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrieverModel {
    dim: usize,
    fingerprint: u64,
    symptom_index: HashMap<SymptomId, usize>,
    disease_ids: Vec<String>,
    symptom_vectors: Vec<f32>,
    disease_vectors: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub score: f64,
}

/// Top-k recalled diseases, sorted by descending score then ascending id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub entries: Vec<Candidate>,
    pub k: usize,
}

impl CandidateSet {
    /// Builds a set from scored entries, enforcing the ordering and
    /// uniqueness invariants.
    pub fn new(mut entries: Vec<Candidate>, k: usize) -> Result<Self, RetrieverError> {
        sort_candidates(&mut entries);
        let mut seen = BTreeSet::new();
        for c in &entries {
            if !c.score.is_finite() {
                return Err(RetrieverError::NonFinite("candidate score".into()));
            }
            if !seen.insert(c.id.as_str()) {
                return Err(RetrieverError::DuplicateCandidate(c.id.clone()));
            }
        }
        entries.truncate(k);
        Ok(Self { entries, k })
    }

    /// Unscored candidate set (all scores 0), ordered by id.
    pub fn from_ids<I, S>(ids: I) -> Result<Self, RetrieverError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let entries: Vec<Candidate> = ids
            .into_iter()
            .map(|id| Candidate { id: id.into(), score: 0.0 })
            .collect();
        let k = entries.len();
        Self::new(entries, k)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|c| c.id.as_str())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.iter().any(|c| c.id == id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub(crate) fn sort_candidates(entries: &mut [Candidate]) {
    // Numeric order so that -0.0 and 0.0 tie; scores are checked finite by callers.
    entries.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal).then_with(|| a.id.cmp(&b.id)));
}

impl RetrieverModel {
    /// Seeded small-random initialization, uniform in `[-1/sqrt(dim), 1/sqrt(dim)]`.
    pub fn init(db: &DiseaseDB, dim: usize, seed: u64) -> Result<Self, RetrieverError> {
        if dim == 0 {
            return Err(RetrieverError::ZeroDim);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (dim as f64).sqrt();
        let mut draw = |n: usize| -> Vec<f32> {
            (0..n)
                .map(|_| (rng.gen_range(-1.0..1.0) * scale) as f32)
                .collect()
        };
        let symptom_vectors = draw(db.symptom_vocab().len() * dim);
        let disease_vectors = draw(db.len() * dim);
        Self::from_parts(db, dim, symptom_vectors, disease_vectors)
    }

    /// Assembles a model from flat row-major tables (symptoms in vocab
    /// order, diseases in catalog order).
    pub fn from_parts(
        db: &DiseaseDB,
        dim: usize,
        symptom_vectors: Vec<f32>,
        disease_vectors: Vec<f32>,
    ) -> Result<Self, RetrieverError> {
        if dim == 0 {
            return Err(RetrieverError::ZeroDim);
        }
        if db.symptom_vocab().is_empty() {
            return Err(RetrieverError::EmptyVocab);
        }
        let n_sym = db.symptom_vocab().len();
        if symptom_vectors.len() != n_sym * dim || disease_vectors.len() != db.len() * dim {
            return Err(RetrieverError::Shape(format!(
                "expected {}x{} symptom and {}x{} disease values",
                n_sym,
                dim,
                db.len(),
                dim
            )));
        }
        if symptom_vectors.iter().chain(&disease_vectors).any(|v| !v.is_finite()) {
            return Err(RetrieverError::NonFinite("embedding table".into()));
        }
        Ok(Self {
            dim,
            fingerprint: db.fingerprint(),
            symptom_index: db
                .symptom_vocab()
                .iter()
                .enumerate()
                .map(|(i, s)| (s.clone(), i))
                .collect(),
            disease_ids: db.diseases().iter().map(|d| d.id.clone()).collect(),
            symptom_vectors,
            disease_vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn n_symptoms(&self) -> usize {
        self.symptom_index.len()
    }

    pub fn n_diseases(&self) -> usize {
        self.disease_ids.len()
    }

    pub fn disease_ids(&self) -> &[String] {
        &self.disease_ids
    }

    pub fn symptom_position(&self, s: &SymptomId) -> Option<usize> {
        self.symptom_index.get(s).copied()
    }

    pub fn symptom_vector(&self, i: usize) -> &[f32] {
        &self.symptom_vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn disease_vector(&self, j: usize) -> &[f32] {
        &self.disease_vectors[j * self.dim..(j + 1) * self.dim]
    }

    pub fn symptom_table(&self) -> &[f32] {
        &self.symptom_vectors
    }

    pub fn disease_table(&self) -> &[f32] {
        &self.disease_vectors
    }

    /// Multiplies every disease vector by `factor` (used to probe ranking
    /// scale invariance).
    pub fn scale_diseases(&mut self, factor: f32) {
        for v in &mut self.disease_vectors {
            *v *= factor;
        }
    }

    pub fn check_bound(&self, db: &DiseaseDB) -> Result<(), RetrieverError> {
        let actual = db.fingerprint();
        if actual != self.fingerprint {
            return Err(RetrieverError::FingerprintMismatch {
                model: self.fingerprint,
                catalog: actual,
            });
        }
        Ok(())
    }

    /// Binary layout, little-endian: magic `CODRETR1`, u32 dim, u64
    /// fingerprint, u32 symptom count, u32 disease count, then f32 symptom
    /// vectors followed by f32 disease vectors.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(
            28 + 4 * (self.symptom_vectors.len() + self.disease_vectors.len()),
        );
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&self.fingerprint.to_le_bytes());
        out.extend_from_slice(&(self.n_symptoms() as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_diseases() as u32).to_le_bytes());
        for v in self.symptom_vectors.iter().chain(&self.disease_vectors) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], db: &DiseaseDB) -> Result<Self, RetrieverError> {
        let bad = |m: &str| RetrieverError::Format(m.to_string());
        if bytes.len() < 28 || &bytes[..8] != MAGIC {
            return Err(bad("missing header"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let dim = u32_at(8);
        let fingerprint = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let n_sym = u32_at(20);
        let n_dis = u32_at(24);
        let body = &bytes[28..];
        if body.len() != 4 * dim * (n_sym + n_dis) {
            return Err(bad("payload length does not match header"));
        }
        if fingerprint != db.fingerprint() {
            return Err(RetrieverError::FingerprintMismatch {
                model: fingerprint,
                catalog: db.fingerprint(),
            });
        }
        let floats: Vec<f32> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let (sym, dis) = floats.split_at(n_sym * dim);
        Self::from_parts(db, dim, sym.to_vec(), dis.to_vec())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RetrieverError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| RetrieverError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, db: &DiseaseDB) -> Result<Self, RetrieverError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| RetrieverError::io(path, e))?;
        Self::from_bytes(&bytes, db)
    }
}

/// L2-normalized mean of the member symptom vectors. Symptoms outside the
/// model's vocabulary are skipped with a warning.
pub fn encode_symptoms<'a, I>(model: &RetrieverModel, symptoms: I) -> Result<Vec<f64>, RetrieverError>
where
    I: IntoIterator<Item = &'a SymptomId>,
{
    let mut acc = vec![0.0f64; model.dim];
    let mut used = 0usize;
    for s in symptoms {
        match model.symptom_position(s) {
            Some(i) => {
                for (a, v) in acc.iter_mut().zip(model.symptom_vector(i)) {
                    *a += *v as f64;
                }
                used += 1;
            }
            None => log::warn!("retriever: dropping unknown symptom '{s}'"),
        }
    }
    if used == 0 {
        return Err(RetrieverError::EmptyQuery);
    }
    for a in &mut acc {
        *a /= used as f64;
    }
    let norm = acc.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(RetrieverError::DegenerateQuery);
    }
    for a in &mut acc {
        *a /= norm;
    }
    Ok(acc)
}

/// Cosine similarity between a unit query and a raw vector; 0 for a zero vector.
pub(crate) fn cosine_to_unit(query: &[f64], v: &[f32]) -> f64 {
    let (mut dot, mut sq) = (0.0f64, 0.0f64);
    for (q, x) in query.iter().zip(v) {
        let x = *x as f64;
        dot += q * x;
        sq += x * x;
    }
    if sq == 0.0 {
        0.0
    } else {
        (dot / sq.sqrt()).clamp(-1.0, 1.0)
    }
}

/// Exact top-k disease recall by cosine similarity; ties go to the smaller id.
pub fn recall_top_k(
    model: &RetrieverModel,
    db: &DiseaseDB,
    symptoms: &BTreeSet<SymptomId>,
    k: usize,
) -> Result<CandidateSet, RetrieverError> {
    if k == 0 {
        return Err(RetrieverError::ZeroK);
    }
    model.check_bound(db)?;
    let query = encode_symptoms(model, symptoms)?;
    let entries = model
        .disease_ids
        .iter()
        .enumerate()
        .map(|(j, id)| Candidate {
            id: id.clone(),
            score: cosine_to_unit(&query, model.disease_vector(j)),
        })
        .collect();
    CandidateSet::new(entries, k)
}
