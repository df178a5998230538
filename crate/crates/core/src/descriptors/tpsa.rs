use super::{order_free_sum, ParameterTables};
use crate::molgraph::{BondOrder, MolGraph};

/// Environment of a polar atom as used by the fragment table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct PolarEnv {
    pub neighbors: u8,
    pub hydrogens: u8,
    pub charge: i8,
    pub single: u8,
    pub double: u8,
    pub triple: u8,
    pub aromatic: u8,
    pub in_three_ring: bool,
}

fn environment(mol: &MolGraph, i: usize) -> PolarEnv {
    let mut env = PolarEnv {
        neighbors: 0,
        hydrogens: mol.total_h(i),
        charge: mol.atom(i).formal_charge,
        single: 0,
        double: 0,
        triple: 0,
        aromatic: 0,
        in_three_ring: mol.rings().iter().any(|r| r.len() == 3 && r.contains(&i)),
    };
    for &(w, e) in mol.neighbors(i) {
        if mol.atom(w).element.atomic_number() == 1 {
            env.hydrogens += 1;
            continue;
        }
        env.neighbors += 1;
        match mol.bonds()[e].order {
            BondOrder::Aromatic => env.aromatic += 1,
            BondOrder::Single => env.single += 1,
            BondOrder::Double => env.double += 1,
            BondOrder::Triple => env.triple += 1,
        }
    }
    env
}

/// Ertl topological polar surface area over nitrogen and oxygen atoms.
pub fn ertl_tpsa_with(tables: &ParameterTables, mol: &MolGraph) -> f64 {
    order_free_sum((0..mol.atom_count()).filter_map(|i| {
        let z = mol.atom(i).element.atomic_number();
        (z == 7 || z == 8).then(|| tables.tpsa.contribution(z, &environment(mol, i)))
    }))
}
