//! Inputs shared by the criterion benchmarks under `benches/`.

use molrefine_core::descriptors::{ParameterTables, PropertyId};
use molrefine_core::fingerprint::FingerprintParams;
use molrefine_core::retrieval::Database;

const DRUGLIKE: &str = include_str!("../../core/tests/fixtures/druglike_1k.smi");

/// The 1,000-molecule drug-like sample.
pub fn druglike() -> Vec<&'static str> {
    DRUGLIKE.lines().filter_map(|l| l.split_whitespace().next()).collect()
}

/// An example index over the drug-like sample.
pub fn database() -> Database {
    let (db, _) = Database::build(&druglike(), FingerprintParams::default(), &PropertyId::ALL, ParameterTables::builtin())
        .expect("index the drug-like sample");
    db
}
