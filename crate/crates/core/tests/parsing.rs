mod common;

use molrefine_core::{parse_smiles, write_smiles, MolGraph, ParseErrorCategory as Cat};

fn category(s: &str) -> Option<Cat> {
    parse_smiles(s).error().map(|e| e.category)
}

#[test]
fn error_corpus_is_fully_classified() {
    let detail = common::parse_taxonomy().unwrap();
    println!("{detail}");
}

#[test]
fn fuzzed_inputs_are_classified_and_druglike_parse() {
    common::parser_robustness(20_000).unwrap();
}

#[test]
fn table_examples() {
    assert_eq!(category("C1CC"), Some(Cat::UnclosedRing));
    assert_eq!(category("C(C"), Some(Cat::Parentheses));
    assert_eq!(category("C12CC12"), Some(Cat::DuplicateBond));
    assert_eq!(category("CC(C)(C)(C)C"), Some(Cat::Valence));
    assert_eq!(category("c1ccc1"), Some(Cat::Aromaticity));
    let e = parse_smiles("").error().cloned().unwrap();
    assert_eq!((e.category, e.detail.as_str()), (Cat::Syntax, "empty SMILES"));
}

#[test]
fn message_format_is_stable() {
    let e = parse_smiles("C1CC").error().cloned().unwrap();
    assert_eq!(e.message(), "unclosed_ring: ring bond 1 opened but never closed at position 1");
}

#[test]
fn precedence_reports_the_earliest_stage() {
    // parentheses before unclosed ring, unclosed ring before duplicate bond,
    // duplicate bond before valence, valence before aromaticity
    assert_eq!(category("C1CC(C"), Some(Cat::Parentheses));
    assert_eq!(category("C12CC1"), Some(Cat::UnclosedRing));
    assert_eq!(category("C12C(C)(C)(C)C12"), Some(Cat::DuplicateBond));
    assert_eq!(category("c1ccc1C(C)(C)(C)(C)C"), Some(Cat::Valence));
}

#[test]
fn valence_limits_per_element() {
    for s in [
        "B(C)(C)(C)C",
        "C(C)(C)(C)(C)C",
        "N(C)(C)(C)(C)(C)C",
        "O(C)(C)C",
        "P(C)(C)(C)(C)(C)C",
        "S(C)(C)(C)(C)(C)(C)C",
        "F(C)C",
        "Cl(C)C",
        "Br(C)C",
        "I(C)C",
    ] {
        assert_eq!(category(s), Some(Cat::Valence), "{s}");
    }
}

#[test]
fn written_smiles_round_trip() {
    for s in common::druglike().iter().take(300) {
        let m = MolGraph::from_smiles(s).unwrap();
        let w = write_smiles(&m);
        assert_eq!(write_smiles(&MolGraph::from_smiles(&w).unwrap()), w, "{s}");
    }
}
