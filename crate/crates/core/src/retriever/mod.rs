//! Dual-encoder disease retriever: free symptom/disease embedding tables,
//! exact cosine top-k recall, contrastive training and recall metrics.

mod eval;
mod model;
mod train;

use std::path::Path;

pub use eval::{eval_retriever, report_from_ranks, target_rank, RetrieverEvalReport, RECALL_CUTOFFS};
pub use model::{encode_symptoms, recall_top_k, Candidate, CandidateSet, RetrieverModel};
pub use train::{train_retriever, ContrastiveObjective, TrainConfig, TrainOutcome};

/// Default number of recalled candidates.
pub const DEFAULT_K: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum RetrieverError {
    #[error("model is bound to catalog fingerprint {model:016x}, active catalog is {catalog:016x}")]
    FingerprintMismatch { model: u64, catalog: u64 },
    #[error("no known symptoms in query")]
    EmptyQuery,
    #[error("query vectors cancel to zero")]
    DegenerateQuery,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("embedding dimension must be at least 1")]
    ZeroDim,
    #[error("symptom vocabulary is empty")]
    EmptyVocab,
    #[error("no cases given")]
    NoCases,
    #[error("case target '{0}' is not in the catalog")]
    UnknownTarget(String),
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("duplicate candidate '{0}'")]
    DuplicateCandidate(String),
    #[error("embedding table shape mismatch: {0}")]
    Shape(String),
    #[error("malformed model file: {0}")]
    Format(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl RetrieverError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::knowledge::{CaseRecord, DiseaseDB, DiseaseRecord, SymptomId};
    use proptest::prelude::*;

    fn sym(s: &str) -> SymptomId {
        SymptomId::new(s).unwrap()
    }

    fn toy_db(n_dis: usize, symptoms_per: usize) -> DiseaseDB {
        DiseaseDB::new(
            (0..n_dis)
                .map(|d| DiseaseRecord {
                    id: format!("d{d:02}"),
                    name: format!("Disease {d}"),
                    overview: String::new(),
                    treatment: String::new(),
                    department: String::new(),
                    symptom_profile: (0..symptoms_per)
                        .map(|k| (sym(&format!("s{}", (d * 3 + k) % (n_dis * 2))), 0.5))
                        .collect(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_symptom_encodes_to_its_normalized_vector() {
        let db = toy_db(3, 2);
        let model = RetrieverModel::init(&db, 4, 3).unwrap();
        let s = db.symptom_vocab()[0].clone();
        let q = encode_symptoms(&model, [&s]).unwrap();
        let v: Vec<f64> = model.symptom_vector(0).iter().map(|x| *x as f64).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (a, b) in q.iter().zip(&v) {
            assert!((a - b / n).abs() < 1e-12);
        }
    }

    fn two_symptom_model(a: [f32; 2], b: [f32; 2]) -> (DiseaseDB, RetrieverModel) {
        let db = DiseaseDB::new(vec![DiseaseRecord {
            id: "x".into(),
            name: "X".into(),
            overview: String::new(),
            treatment: String::new(),
            department: String::new(),
            symptom_profile: vec![(sym("a"), 1.0), (sym("b"), 1.0)],
        }])
        .unwrap();
        let model = RetrieverModel::from_parts(&db, 2, [a, b].concat(), vec![1.0, 0.0]).unwrap();
        (db, model)
    }

    #[test]
    fn identical_vectors_encode_to_that_direction() {
        let (_, model) = two_symptom_model([3.0, 4.0], [3.0, 4.0]);
        let q = encode_symptoms(&model, [&sym("a"), &sym("b")]).unwrap();
        assert!((q[0] - 0.6).abs() < 1e-12 && (q[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_pair_encodes_at_45_degrees() {
        let (_, model) = two_symptom_model([1.0, 0.0], [0.0, 1.0]);
        let q = encode_symptoms(&model, [&sym("a"), &sym("b")]).unwrap();
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        // cosine to each member = q . e_i
        assert!((q[0] - inv_sqrt2).abs() < 1e-12);
        assert!((q[1] - inv_sqrt2).abs() < 1e-12);
        assert!((q[0] * q[0] + q[1] * q[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_only_query_is_an_error() {
        let (_, model) = two_symptom_model([1.0, 0.0], [0.0, 1.0]);
        assert!(matches!(
            encode_symptoms(&model, [&sym("zzz")]),
            Err(RetrieverError::EmptyQuery)
        ));
    }

    #[test]
    fn identical_disease_vector_ranks_first_with_score_one() {
        let db = DiseaseDB::new(
            ["flu", "cold"]
                .iter()
                .zip(["fever", "sneezing"])
                .map(|(id, s)| DiseaseRecord {
                    id: id.to_string(),
                    name: id.to_string(),
                    overview: String::new(),
                    treatment: String::new(),
                    department: String::new(),
                    symptom_profile: vec![(sym(s), 1.0)],
                })
                .collect(),
        )
        .unwrap();
        // vocab order: fever, sneezing; catalog order: flu, cold
        let model = RetrieverModel::from_parts(
            &db,
            2,
            vec![0.6, 0.8, 1.0, 0.0],
            vec![0.6, 0.8, 0.0, 1.0],
        )
        .unwrap();
        let set = recall_top_k(&model, &db, &[sym("fever")].into(), 2).unwrap();
        assert_eq!(set.entries[0].id, "flu");
        assert!((set.entries[0].score - 1.0).abs() < 1e-7);
    }

    #[test]
    fn k_equal_catalog_returns_everything_sorted() {
        let db = toy_db(6, 3);
        let model = RetrieverModel::init(&db, 8, 5).unwrap();
        let q: BTreeSet<_> = [db.symptom_vocab()[1].clone()].into();
        let set = recall_top_k(&model, &db, &q, db.len()).unwrap();
        assert_eq!(set.len(), db.len());
        assert!(set.entries.windows(2).all(|w| w[0].score >= w[1].score));
        let big = recall_top_k(&model, &db, &q, 100).unwrap();
        assert_eq!(big.len(), db.len());
    }

    #[test]
    fn fingerprint_mismatch_is_rejected() {
        let db = toy_db(4, 2);
        let other = toy_db(5, 2);
        let model = RetrieverModel::init(&db, 4, 1).unwrap();
        let q: BTreeSet<_> = [db.symptom_vocab()[0].clone()].into();
        assert!(matches!(
            recall_top_k(&model, &other, &q, 2),
            Err(RetrieverError::FingerprintMismatch { .. })
        ));
        assert!(RetrieverModel::from_bytes(&model.to_bytes(), &other).is_err());
    }

    #[test]
    fn ties_break_by_ascending_id() {
        let db = toy_db(4, 2);
        let dim = 3;
        let sym_tab = vec![1.0f32; db.symptom_vocab().len() * dim];
        let dis_tab = vec![1.0f32; db.len() * dim];
        let model = RetrieverModel::from_parts(&db, dim, sym_tab, dis_tab).unwrap();
        let q: BTreeSet<_> = [db.symptom_vocab()[0].clone()].into();
        let ids: Vec<_> = recall_top_k(&model, &db, &q, 4).unwrap().ids().map(String::from).collect();
        assert_eq!(ids, ["d00", "d01", "d02", "d03"]);
    }

    #[test]
    fn model_file_round_trip() {
        let db = toy_db(5, 3);
        let model = RetrieverModel::init(&db, 7, 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("retriever.model");
        model.save(&p).unwrap();
        assert_eq!(RetrieverModel::load(&p, &db).unwrap(), model);
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..8], b"CODRETR1");
        assert_eq!(bytes.len(), 28 + 4 * 7 * (db.symptom_vocab().len() + db.len()));
    }

    fn separable() -> (DiseaseDB, Vec<CaseRecord>) {
        let db = DiseaseDB::new(
            [("a", "alpha"), ("b", "beta")]
                .iter()
                .map(|(id, s)| DiseaseRecord {
                    id: id.to_string(),
                    name: id.to_string(),
                    overview: String::new(),
                    treatment: String::new(),
                    department: String::new(),
                    symptom_profile: vec![(sym(s), 1.0)],
                })
                .collect(),
        )
        .unwrap();
        let mut cases = Vec::new();
        for (t, s) in [("a", "alpha"), ("b", "beta")] {
            for i in 0..20 {
                cases.push(CaseRecord {
                    case_id: format!("{t}{i}"),
                    target: t.into(),
                    explicit: [sym(s)].into(),
                    implicit: BTreeSet::new(),
                    demographics: None,
                });
            }
        }
        (db, cases)
    }

    #[test]
    fn separable_toy_reaches_perfect_recall_at_one() {
        let (db, cases) = separable();
        let cfg = TrainConfig { dim: 8, epochs: 200, learning_rate: 0.05, seed: 1 };
        let out = train_retriever(&db, &cases, &cfg).unwrap();
        for c in &cases {
            assert_eq!(target_rank(&out.model, &db, c).unwrap(), 1, "case {}", c.case_id);
        }
        // first epoch does not increase the loss
        assert!(out.losses[1] <= out.losses[0], "{:?}", &out.losses[..2]);
        assert!(out.final_loss() < out.losses[0]);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let (db, cases) = separable();
        let cfg = TrainConfig { dim: 8, epochs: 0, learning_rate: 0.05, seed: 9 };
        let out = train_retriever(&db, &cases, &cfg).unwrap();
        assert_eq!(out.model, RetrieverModel::init(&db, 8, 9).unwrap());
        assert_eq!(out.losses.len(), 1);
    }

    #[test]
    fn training_is_deterministic() {
        let (db, cases) = separable();
        let cfg = TrainConfig { dim: 4, epochs: 5, learning_rate: 0.05, seed: 2 };
        let a = train_retriever(&db, &cases, &cfg).unwrap();
        let b = train_retriever(&db, &cases, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.losses, b.losses);
    }

    #[test]
    fn unknown_target_rejected() {
        let (db, mut cases) = separable();
        cases[0].target = "nope".into();
        assert!(matches!(
            train_retriever(&db, &cases, &TrainConfig::default()),
            Err(RetrieverError::UnknownTarget(_))
        ));
    }

    #[test]
    fn perfect_ranker_scores_one_everywhere() {
        let r = report_from_ranks(&[1, 1, 1]);
        assert_eq!(r.mrr_at_100, 1.0);
        assert!(r.recall_at.values().all(|v| *v == 1.0));
    }

    #[test]
    fn rank_four_arithmetic() {
        let r = report_from_ranks(&[4]);
        assert_eq!(r.recall_at[&3], 0.0);
        assert_eq!(r.recall_at[&5], 1.0);
        assert_eq!(r.mrr_at_100, 0.25);
        assert_eq!(report_from_ranks(&[101]).mrr_at_100, 0.0);
    }

    #[test]
    fn eval_on_separable_model_is_perfect() {
        let (db, cases) = separable();
        let out = train_retriever(&db, &cases, &TrainConfig { dim: 8, ..TrainConfig::default() }).unwrap();
        let r = eval_retriever(&out.model, &db, &cases).unwrap();
        assert_eq!(r.recall_at[&3], 1.0);
        assert_eq!(r.mrr_at_100, 1.0);
        assert!(r.to_string().contains("Recall@3"));
    }

    /// Independent oracle: score every disease with a direct cosine and sort.
    fn brute_force(model: &RetrieverModel, db: &DiseaseDB, q: &BTreeSet<SymptomId>, k: usize) -> Vec<String> {
        let dim = model.dim();
        let mut mean = vec![0.0f64; dim];
        let mut n = 0.0;
        for s in q {
            let i = db.symptom_vocab().iter().position(|v| v == s).unwrap();
            for (m, x) in mean.iter_mut().zip(model.symptom_vector(i)) {
                *m += *x as f64;
            }
            n += 1.0;
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut scored: Vec<(f64, String)> = (0..db.len())
            .map(|j| {
                let v: Vec<f64> = model.disease_vector(j).iter().map(|x| *x as f64).collect();
                let dot: f64 = mean.iter().zip(&v).map(|(a, b)| a * b).sum();
                let na = mean.iter().map(|a| a * a).sum::<f64>().sqrt();
                let nb = v.iter().map(|b| b * b).sum::<f64>().sqrt();
                (dot / (na * nb), db.diseases()[j].id.clone())
            })
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        scored.into_iter().take(k).map(|(_, id)| id).collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn recall_matches_brute_force(seed in 0u64..10_000, k in 1usize..12, mask in 1u32..(1 << 10)) {
            let db = toy_db(10, 3);
            let model = RetrieverModel::init(&db, 6, seed).unwrap();
            let vocab = db.symptom_vocab();
            let q: BTreeSet<_> = vocab.iter().enumerate()
                .filter(|(i, _)| mask & (1 << (i % 10)) != 0)
                .map(|(_, s)| s.clone()).collect();
            prop_assume!(!q.is_empty());
            let got: Vec<String> = recall_top_k(&model, &db, &q, k).unwrap().ids().map(String::from).collect();
            prop_assert_eq!(got, brute_force(&model, &db, &q, k));
        }

        #[test]
        fn ranking_is_scale_invariant(seed in 0u64..10_000, factor in 0.01f32..100.0) {
            let db = toy_db(10, 3);
            let model = RetrieverModel::init(&db, 6, seed).unwrap();
            let mut scaled = model.clone();
            scaled.scale_diseases(factor);
            let q: BTreeSet<_> = db.symptom_vocab().iter().take(3).cloned().collect();
            let a: Vec<String> = recall_top_k(&model, &db, &q, 10).unwrap().ids().map(String::from).collect();
            let b: Vec<String> = recall_top_k(&scaled, &db, &q, 10).unwrap().ids().map(String::from).collect();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn recall_at_k_is_monotone(ranks in proptest::collection::vec(1usize..200, 1..50)) {
            let r = report_from_ranks(&ranks);
            let vals: Vec<f64> = r.recall_at.values().cloned().collect();
            prop_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!((0.0..=1.0).contains(&r.mrr_at_100));
        }
    }
}
