use std::io::Write;

use flate2::write::GzEncoder;
use flate2::Compression;
use tir_core::data::{load, read_table};
use tir_core::{DatasetF64, TargetSelector};

fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn csv_with_named_target() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "d.csv", "a,b,target\n1,2,3\n4,5,6\n");
    let (ds, rep): (DatasetF64, _) = load(&p, &TargetSelector::default()).unwrap();
    assert_eq!(ds.names, vec!["a", "b"]);
    assert_eq!(ds.x, vec![vec![1.0, 2.0], vec![4.0, 5.0]]);
    assert_eq!(ds.y, vec![3.0, 6.0]);
    assert_eq!(rep.rejected_rows, 0);
}

#[test]
fn target_by_index_and_name() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "d.csv", "y,a\n1,2\n3,4\n");
    let (ds, _): (DatasetF64, _) = load(&p, &"0".parse().unwrap()).unwrap();
    assert_eq!(ds.y, vec![1.0, 3.0]);
    let (ds, _): (DatasetF64, _) = load(&p, &"y".parse().unwrap()).unwrap();
    assert_eq!(ds.x, vec![vec![2.0], vec![4.0]]);
    assert!(load::<f64>(&p, &TargetSelector::default()).is_err());
}

#[test]
fn gzipped_tsv_equals_plain_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(&dir, "d.csv", "a,b,target\n1.5,2,3\n-4,5e-1,6\n");
    let gz = dir.path().join("d.tsv.gz");
    let mut enc = GzEncoder::new(std::fs::File::create(&gz).unwrap(), Compression::default());
    enc.write_all(b"a\tb\ttarget\n1.5\t2\t3\n-4\t5e-1\t6\n").unwrap();
    enc.finish().unwrap();
    let (a, _): (DatasetF64, _) = load(&csv, &TargetSelector::default()).unwrap();
    let (b, _): (DatasetF64, _) = load(&gz, &TargetSelector::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn non_numeric_rows_are_counted_and_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "d.csv", "a,b,target\n1,foo,3\n1,2,3\n4,nan,1\n,1,1\n");
    let (ds, rep): (DatasetF64, _) = load(&p, &TargetSelector::default()).unwrap();
    assert_eq!(ds.n(), 1);
    assert_eq!(rep.rejected_rows, 3);
    assert_eq!(read_table(&p).unwrap().rows.len(), 4);
}

#[test]
fn ragged_rows_are_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "d.csv", "a,target\n1,2\n1,2,3\n");
    assert!(load::<f64>(&p, &TargetSelector::default()).is_err());
}
