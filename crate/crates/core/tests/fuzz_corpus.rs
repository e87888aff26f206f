//! Replays the checked-in fuzz corpus through the same properties the fuzz
//! targets assert, so the seeds stay meaningful on stable toolchains.

use std::fs;
use std::path::PathBuf;

use softmax_newton::io::{parse_key_values, parse_matrix, parse_vector, write_matrix, write_vector};
use softmax_newton::SparseDiagonal;

fn corpus(target: &str) -> Vec<String> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<String> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| String::from_utf8_lossy(&fs::read(e.unwrap().path()).unwrap()).into_owned())
        .collect();
    out.sort();
    assert!(!out.is_empty());
    out
}

#[test]
fn matrix_seeds_round_trip() {
    for text in corpus("parse_matrix") {
        if let Ok(m) = parse_matrix(&text) {
            assert_eq!(parse_matrix(&write_matrix(&m)).unwrap(), m);
        }
    }
}

#[test]
fn vector_seeds_round_trip() {
    for text in corpus("parse_vector") {
        if let Ok(v) = parse_vector(&text) {
            assert_eq!(parse_vector(&write_vector(&v)).unwrap(), v);
        }
    }
}

#[test]
fn sparse_diagonal_seeds_round_trip() {
    for text in corpus("parse_sparse_diagonal") {
        if let Ok(s) = SparseDiagonal::parse(&text) {
            assert_eq!(SparseDiagonal::parse(&s.to_text()).unwrap(), s);
        }
    }
}

#[test]
fn key_value_seeds_parse_or_fail_cleanly() {
    let parsed = corpus("parse_key_values").iter().filter(|t| parse_key_values(t).is_ok()).count();
    assert!(parsed >= 1);
}
