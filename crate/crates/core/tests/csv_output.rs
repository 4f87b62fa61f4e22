use proptest::prelude::*;
use semitrack::io::{emit_csv, read_csv, Table};

#[test]
fn single_record() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.csv");
    let mut t = Table::new(&["t", "beta"]);
    t.push([0.0, 0.03]);
    emit_csv(&t, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,beta"));
    assert_eq!(lines.count(), 1);
}

#[test]
fn empty_table_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/empty.csv");
    emit_csv(&Table::new(&["t", "beta"]), &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), "t,beta\r\n");
    let (header, rows) = read_csv(&path).unwrap();
    assert_eq!(header, ["t", "beta"]);
    assert!(rows.is_empty());
}

#[test]
fn io_errors_surface() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let err = emit_csv(&Table::new(&["a"]), &blocker.join("sub.csv")).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

proptest! {
    #[test]
    fn floats_round_trip_bit_exactly(values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 1..40)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.csv");
        let mut t = Table::new(&["k", "v"]);
        for (k, v) in values.iter().enumerate() {
            t.push([k as f64, *v]);
        }
        emit_csv(&t, &path).unwrap();
        let (_, rows) = read_csv(&path).unwrap();
        prop_assert_eq!(rows.len(), values.len());
        for (row, v) in rows.iter().zip(&values) {
            prop_assert_eq!(row[1].to_bits(), v.to_bits());
        }
    }
}
