use std::fs;

use teacher_chain::dataset::{
    generate_synthetic, make_splits, read_table, read_table_with_catalog, write_table,
    ClassCatalog, SplitSpec, SyntheticSpec,
};
use teacher_chain::learner::{evaluate, init_params, load_checkpoint, save_checkpoint, ArchSpec};
use teacher_chain::Error;

#[test]
fn synthetic_tables_survive_csv_bit_exactly() {
    let d = generate_synthetic(&SyntheticSpec {
        classes: 9,
        per_class: 20,
        dim: 4,
        spread: 0.9,
        seed: 11,
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.csv");
    write_table(&path, &d.train).unwrap();
    let back = read_table(&path).unwrap();
    assert_eq!(back, d.train);
    assert_eq!(back.catalog(), &ClassCatalog::histology());
    let header = fs::read_to_string(&path).unwrap();
    assert!(header.starts_with("id,label,f0,f1,f2,f3\n"));
}

#[test]
fn parse_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "id,label,f0,f1\n0,ADI,0.1,0.2\n1,XYZ,0.3,0.4\n").unwrap();
    match read_table_with_catalog(&path, ClassCatalog::histology()) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected a parse error, got {other:?}"),
    }
    fs::write(&path, "id,label,f0,f1\n0,ADI,0.1,NaN\n").unwrap();
    assert!(matches!(
        read_table_with_catalog(&path, ClassCatalog::histology()),
        Err(Error::Parse { line: 2, .. })
    ));
}

#[test]
fn unlabelled_rows_round_trip_and_stay_out_of_splits() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mixed.csv");
    fs::write(&path, "id,label,f0\n3,,1.5\n1,TUM,-2\n").unwrap();
    let t = read_table_with_catalog(&path, ClassCatalog::histology()).unwrap();
    assert!(!t.is_fully_labelled());
    assert_eq!(t.samples()[0].label, None);
    assert!(make_splits(&t, &SplitSpec::new(0.5, 0)).is_err());
}

#[test]
fn checkpoint_predictions_match_after_reload() {
    let d = generate_synthetic(&SyntheticSpec {
        classes: 3,
        per_class: 30,
        dim: 5,
        spread: 0.7,
        seed: 1,
    })
    .unwrap();
    let model = init_params(&ArchSpec::new(5, vec![6, 4], 3), 99).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    save_checkpoint(&path, &model, 99).unwrap();
    let (back, seed) = load_checkpoint(&path).unwrap();
    assert_eq!(seed, 99);
    assert_eq!(
        evaluate(&back, &d.test).unwrap(),
        evaluate(&model, &d.test).unwrap()
    );

    fs::write(&path, "{\"format\": \"teacher-chain-checkpoint\"}").unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
}
