//! Seeded synthesis of patient cases from disease profiles.
//!
//! Each disease yields `per_disease` cases following the quota pattern
//! `1, 1, 2, 2, 3` explicit symptoms (cycled when more than five cases are
//! requested). Explicit symptoms are drawn by weight-proportional sampling
//! without replacement; implicit symptoms (2 to 4 of them) are then drawn the
//! same way from what remains of the profile.

use std::collections::BTreeSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CaseRecord, Demographics, DiseaseDB, DiseaseRecord, KnowledgeError, SymptomId};

/// Explicit-symptom counts per case, cycled.
pub const EXPLICIT_QUOTA: [usize; 5] = [1, 1, 2, 2, 3];
pub const IMPLICIT_MIN: usize = 2;
pub const IMPLICIT_MAX: usize = 4;

const GENDERS: [&str; 2] = ["Female", "Male"];
const AGES: [&str; 4] = ["Child", "Young adult", "Adult", "Elderly"];

pub fn synthesize_cases(
    db: &DiseaseDB,
    per_disease: usize,
    seed: u64,
) -> Result<Vec<CaseRecord>, KnowledgeError> {
    if per_disease == 0 {
        return Err(KnowledgeError::ZeroPerDisease);
    }
    if db.is_empty() {
        return Err(KnowledgeError::EmptyCatalog);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(db.len() * per_disease);
    for disease in db.diseases() {
        if disease.symptom_profile.len() < 2 {
            log::warn!(
                "skipping disease '{}': profile has fewer than 2 symptoms",
                disease.id
            );
            continue;
        }
        let demographics = Demographics {
            gender: GENDERS[rng.gen_range(0..GENDERS.len())].to_string(),
            age: AGES[rng.gen_range(0..AGES.len())].to_string(),
        };
        for i in 0..per_disease {
            out.push(synthesize_one(
                disease,
                i,
                EXPLICIT_QUOTA[i % EXPLICIT_QUOTA.len()],
                &demographics,
                &mut rng,
            ));
        }
    }
    Ok(out)
}

fn synthesize_one(
    disease: &DiseaseRecord,
    index: usize,
    explicit_quota: usize,
    demographics: &Demographics,
    rng: &mut impl Rng,
) -> CaseRecord {
    let mut pool: Vec<(SymptomId, f64)> = disease.symptom_profile.clone();
    // At least one profile symptom stays available for inquiry.
    let n_explicit = explicit_quota.min(pool.len() - 1).max(1);
    let explicit = draw_weighted(&mut pool, n_explicit, rng);
    let wanted_implicit = rng.gen_range(IMPLICIT_MIN..=IMPLICIT_MAX);
    let n_implicit = wanted_implicit.min(pool.len());
    let implicit = draw_weighted(&mut pool, n_implicit, rng);
    CaseRecord {
        case_id: format!("{}-{}", disease.id, index + 1),
        target: disease.id.clone(),
        explicit,
        implicit,
        demographics: Some(demographics.clone()),
    }
}

/// Weight-proportional sampling without replacement; drawn items are removed
/// from `pool`.
fn draw_weighted(
    pool: &mut Vec<(SymptomId, f64)>,
    count: usize,
    rng: &mut impl Rng,
) -> BTreeSet<SymptomId> {
    let mut drawn = BTreeSet::new();
    for _ in 0..count {
        let total: f64 = pool.iter().map(|(_, w)| w).sum();
        let mut u = rng.gen::<f64>() * total;
        let mut pick = pool.len() - 1;
        for (i, (_, w)) in pool.iter().enumerate() {
            if u < *w {
                pick = i;
                break;
            }
            u -= w;
        }
        drawn.insert(pool.remove(pick).0);
    }
    drawn
}
