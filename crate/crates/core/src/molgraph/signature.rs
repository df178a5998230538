//! Graph signatures by iterative neighbourhood refinement.

use super::MolGraph;
use crate::hashing::{hash_words, SIGNATURE_SEED};

/// Per-atom invariant codes after refinement has stopped splitting classes.
pub(crate) fn refined_codes(mol: &MolGraph) -> Vec<u64> {
    let n = mol.atom_count();
    let mut codes: Vec<u64> = (0..n)
        .map(|i| {
            let a = mol.atom(i);
            hash_words(
                SIGNATURE_SEED,
                &[
                    a.element.atomic_number() as u64,
                    a.formal_charge as i64 as u64,
                    a.isotope.map_or(0, |v| v as u64 + 1),
                    a.aromatic as u64,
                    mol.total_h(i) as u64,
                    mol.degree(i) as u64,
                ],
            )
        })
        .collect();
    let mut classes = distinct(&codes);
    for _ in 0..n {
        let next: Vec<u64> = (0..n)
            .map(|i| {
                let mut env: Vec<(u64, u64)> = mol
                    .neighbors(i)
                    .iter()
                    .map(|&(w, e)| (mol.bonds()[e].order as u64, codes[w]))
                    .collect();
                env.sort_unstable();
                let mut words = vec![codes[i]];
                words.extend(env.into_iter().flat_map(|(o, c)| [o, c]));
                hash_words(SIGNATURE_SEED, &words)
            })
            .collect();
        let next_classes = distinct(&next);
        codes = next;
        if next_classes == classes {
            break;
        }
        classes = next_classes;
    }
    codes
}

fn distinct(codes: &[u64]) -> usize {
    let mut v = codes.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}

/// An opaque hex string equal for isomorphic attributed graphs (up to the
/// discriminating power of refinement) and independent of atom order.
pub fn graph_signature(mol: &MolGraph) -> String {
    let codes = refined_codes(mol);
    let mut atoms = codes.clone();
    atoms.sort_unstable();
    let mut bonds: Vec<(u64, u64, u64)> = mol
        .bonds()
        .iter()
        .map(|b| {
            let (x, y) = (codes[b.a], codes[b.b]);
            (x.min(y), x.max(y), b.order as u64)
        })
        .collect();
    bonds.sort_unstable();
    let mut words = vec![atoms.len() as u64, bonds.len() as u64];
    words.extend(atoms);
    words.extend(bonds.into_iter().flat_map(|(a, b, o)| [a, b, o]));
    format!("{:016x}", hash_words(SIGNATURE_SEED, &words))
}
