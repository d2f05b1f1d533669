use std::fs;

use loe_core::data::{self, Provenance, TabularSpec};
use loe_core::{Error, ErrorKind};

#[test]
fn round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = TabularSpec::default().generate(3).unwrap();
    let path = dir.path().join("t.csv");
    data::save_csv(&train, &path).unwrap();
    let back = data::load_csv(&path, Some("label")).unwrap();
    assert_eq!(back.labels, train.labels);
    assert_eq!(back.feature_names, train.feature_names);
    assert_eq!(back.provenance, Provenance::Csv);
    for (a, b) in back.features.iter().flatten().zip(train.features.iter().flatten()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn unlabeled_files_load_without_labels() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.csv");
    fs::write(&path, "a, b\n1, 2\n3.5,-4e-3\n").unwrap();
    let ds = data::load_csv(&path, None).unwrap();
    assert_eq!(ds.features, vec![vec![1.0, 2.0], vec![3.5, -4e-3]]);
    assert!(ds.labels.is_none());
    assert_eq!(ds.require_labels().unwrap_err().kind(), ErrorKind::UndefinedMetric);
}

fn parse_error(text: &str, label: Option<&str>) -> (usize, String, String) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, text).unwrap();
    match data::load_csv(&path, label).unwrap_err() {
        Error::Parse {
            row,
            column,
            message,
            ..
        } => (row, column, message),
        other => panic!("expected a parse error, got {other}"),
    }
}

#[test]
fn parse_errors_name_row_and_column() {
    let (row, column, message) = parse_error("a,b\n1,2\n3,x\n", None);
    assert_eq!((row, column.as_str()), (2, "b"));
    assert!(message.contains("`x`"));

    let (row, column, _) = parse_error("a,y\n1,0\n2,1\n3,2\n", Some("y"));
    assert_eq!((row, column.as_str()), (3, "y"));

    let (row, _, _) = parse_error("a,b\n1,2\n3\n", None);
    assert_eq!(row, 2);

    let (row, column, _) = parse_error("a,b\n1,inf\n", None);
    assert_eq!((row, column.as_str()), (1, "b"));
}

#[test]
fn header_problems_are_reported() {
    let (row, _, message) = parse_error("1.5,2\n3,4\n", None);
    assert_eq!(row, 0);
    assert!(message.contains("header"));

    let (_, column, _) = parse_error("a,b\n1,2\n", Some("label"));
    assert_eq!(column, "label");
}

#[test]
fn missing_file_is_a_data_error_naming_the_path() {
    let err = data::load_csv("/nonexistent/x.csv", None).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Data);
    assert!(err.to_string().contains("/nonexistent/x.csv"));
}
