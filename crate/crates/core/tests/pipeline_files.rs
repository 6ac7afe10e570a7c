use cod_core::belief::Backend;
use cod_core::datagen::{build_training_set, export_training_set, load_training_set, DatagenConfig};
use cod_core::engine::SessionConfig;
use cod_core::knowledge::{
    demo_catalog, load_cases, save_cases, split_cases, synthesize_cases, DiseaseDB,
};
use cod_core::retriever::{eval_retriever, train_retriever, RetrieverError, RetrieverModel, TrainConfig};
use cod_core::simeval::{curve_csv, run_benchmark, threshold_curve};

#[test]
fn synth_train_eval_datagen_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let db_path = dir.path().join("diseases.jsonl");
    demo_catalog().save(&db_path).unwrap();
    let db = DiseaseDB::load(&db_path).unwrap();
    assert_eq!(db, demo_catalog());

    let cases = synthesize_cases(&db, 4, 7).unwrap();
    let cases_path = dir.path().join("cases.jsonl");
    save_cases(&cases_path, &cases).unwrap();
    let cases = load_cases(&cases_path).unwrap();
    assert_eq!(cases, synthesize_cases(&db, 4, 7).unwrap());

    let (train, held) = split_cases(&cases, 0.1, 7).unwrap();
    assert_eq!(held.len(), 8);
    let cfg = TrainConfig { epochs: 60, ..TrainConfig::default() };
    let trained = train_retriever(&db, &train, &cfg).unwrap();
    assert!(trained.final_loss() < trained.losses[0]);
    let model_path = dir.path().join("model.bin");
    trained.model.save(&model_path).unwrap();
    let model = RetrieverModel::load(&model_path, &db).unwrap();
    assert_eq!(
        eval_retriever(&model, &db, &held).unwrap(),
        eval_retriever(&trained.model, &db, &held).unwrap()
    );

    let session = SessionConfig::default();
    let report = run_benchmark(&cases, &session, &[1, 2], &db, &model, &Backend::bayes()).unwrap();
    assert_eq!(report.per_seed.len(), 2);
    assert_eq!(report.per_seed[0].accuracy, report.per_seed[1].accuracy);
    assert_eq!(report.stderr_a, 0.0);
    let json = serde_json::to_string(&report).unwrap();
    assert!(json.contains("entropy_by_round"));

    let pts = threshold_curve(&cases, &session, &[0.0, 0.5, 0.9], &db, &model, &Backend::bayes()).unwrap();
    let csv = curve_csv(&pts);
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("tau,rate,accuracy\n0,1,"));

    let dg = DatagenConfig { session, ..DatagenConfig::default() };
    let outcomes = build_training_set(&cases[..20], &dg, &db, &model, &Backend::bayes()).unwrap();
    let retained: Vec<_> = outcomes.into_iter().filter(|o| o.retained().is_some()).collect();
    let out = dir.path().join("cod_train.jsonl");
    let n = export_training_set(&retained, &out).unwrap();
    let records = load_training_set(&out).unwrap();
    assert_eq!(records.len(), n);
    for r in &records {
        r.reverify().unwrap();
        let last = r.turns.last().unwrap();
        assert!(last.text.contains("Suggested treatment"));
    }
}

#[test]
fn model_refuses_a_different_catalog() {
    let db = demo_catalog();
    let model = RetrieverModel::init(&db, 4, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    model.save(&path).unwrap();
    let mut other = db.diseases().to_vec();
    other.pop();
    let other = DiseaseDB::new(other).unwrap();
    assert!(matches!(
        RetrieverModel::load(&path, &other),
        Err(RetrieverError::FingerprintMismatch { .. })
    ));
}
