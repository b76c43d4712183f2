use std::fs;
use std::path::PathBuf;

use twolocal::format::{parse_matrix, to_json};
use twolocal::scenario::{FuzzGrid, ScenarioConfig};
use twolocal::twolocal::ScenarioDescriptor;

fn corpus(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_stem().unwrap().to_string_lossy().into_owned(), fs::read_to_string(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty());
    out
}

fn check<T>(target: &str, rejected: &[&str], parse: impl Fn(&str) -> twolocal::Result<T>) -> Vec<T> {
    let mut ok = Vec::new();
    for (name, text) in corpus(target) {
        let res = parse(&text);
        assert_eq!(res.is_err(), rejected.contains(&name.as_str()), "{target}/{name}");
        ok.extend(res);
    }
    ok
}

#[test]
fn matrix_seeds() {
    for m in check("parse_matrix", &["short_row", "unknown_field"], parse_matrix) {
        assert_eq!(parse_matrix(&to_json(&m)).unwrap(), m);
    }
}

#[test]
fn config_seeds() {
    check("scenario_config", &["empty_dims", "zero_probes"], ScenarioConfig::parse);
}

#[test]
fn descriptor_seeds() {
    for d in check("scenario_descriptor", &["honest_with_kind"], ScenarioDescriptor::parse) {
        let built = d.build();
        assert_eq!(built.is_err(), d.kind.is_some_and(|k| !k.supports(&d.shape)));
    }
}

#[test]
fn grid_seeds() {
    check("fuzz_grid", &["unsupported_kind"], FuzzGrid::parse);
}
