use serde::{Deserialize, Serialize};

use super::{crippen_logp_with, ertl_tpsa_with, molecular_weight, ParameterTables};
use crate::molgraph::{BondOrder, MolGraph};
use crate::smarts::Target;

/// The eight raw inputs of the QED desirability functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QedInputs {
    pub mw: f64,
    pub alogp: f64,
    pub hba: u32,
    pub hbd: u32,
    pub psa: f64,
    pub rotb: u32,
    pub arom: u32,
    pub alerts: u32,
}

impl QedInputs {
    fn values(&self) -> [f64; 8] {
        [
            self.mw,
            self.alogp,
            self.hba as f64,
            self.hbd as f64,
            self.psa,
            self.rotb as f64,
            self.arom as f64,
            self.alerts as f64,
        ]
    }

    /// Weighted geometric mean of the desirabilities.
    pub fn score(&self, tables: &ParameterTables) -> f64 {
        let p = &tables.qed;
        let mut log_sum = 0.0;
        for (k, x) in self.values().into_iter().enumerate() {
            log_sum += p.weights[k] * p.ads[k].eval(x).max(1e-12).ln();
        }
        (log_sum / p.weights.iter().sum::<f64>()).exp()
    }
}

/// Structural counts reported next to the properties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub struct SubDescriptors {
    pub mw: f64,
    pub hba: u32,
    pub hbd: u32,
    pub rotb: u32,
    pub arom: u32,
    pub alerts: u32,
}

fn alert_count(tables: &ParameterTables, target: &Target) -> u32 {
    tables.alerts.iter().filter(|a| target.has_match(a)).count() as u32
}

/// Cycle rank of the graph left after removing aliphatic ring atoms that
/// carry a non-aromatic neighbour.
fn aromatic_ring_count(tables: &ParameterTables, mol: &MolGraph, target: &Target) -> u32 {
    let removed: Vec<bool> = (0..mol.atom_count()).map(|i| target.matches_at(&tables.qed.aliphatic_ring, i)).collect();
    let kept: Vec<usize> = (0..mol.atom_count()).filter(|&i| !removed[i]).collect();
    let edges = mol.bonds().iter().filter(|b| !removed[b.a] && !removed[b.b]).count();
    let mut seen = vec![false; mol.atom_count()];
    let mut components = 0;
    for &start in &kept {
        if seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &(w, _) in mol.neighbors(v) {
                if !removed[w] && !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
    }
    (edges + components).saturating_sub(kept.len()) as u32
}

/// QED inputs using the pattern definitions from the QED parameter table.
pub fn qed_inputs_with(tables: &ParameterTables, mol: &MolGraph) -> QedInputs {
    let target = Target::new(mol, false);
    let p = &tables.qed;
    QedInputs {
        mw: molecular_weight(mol),
        alogp: crippen_logp_with(tables, mol),
        hba: p.acceptors.iter().map(|a| target.unique_match_count(a)).sum::<usize>() as u32,
        hbd: target.unique_match_count(&p.donor) as u32,
        psa: ertl_tpsa_with(tables, mol),
        rotb: target.unique_match_count(&p.rotatable) as u32,
        arom: aromatic_ring_count(tables, mol, &target),
        alerts: alert_count(tables, &target),
    }
}

pub fn qed_with(tables: &ParameterTables, mol: &MolGraph) -> f64 {
    qed_inputs_with(tables, mol).score(tables)
}

fn is_polar(mol: &MolGraph, i: usize) -> bool {
    matches!(mol.atom(i).element.atomic_number(), 7 | 8)
}

fn heavy_degree(mol: &MolGraph, i: usize) -> usize {
    mol.neighbors(i).iter().filter(|&&(w, _)| mol.atom(w).element.atomic_number() != 1).count()
}

fn double_partner(mol: &MolGraph, i: usize) -> Option<usize> {
    mol.neighbors(i).iter().find(|&&(_, e)| mol.bonds()[e].order == BondOrder::Double).map(|&(w, _)| w)
}

/// O=C whose carbon also bears an O or N: carboxyl, ester or amide oxygen.
fn is_carbonyl_acid_or_amide_oxygen(mol: &MolGraph, i: usize) -> bool {
    if mol.atom(i).element.atomic_number() != 8 {
        return false;
    }
    let Some(c) = double_partner(mol, i) else { return false };
    mol.atom(c).element.atomic_number() == 6
        && mol.neighbors(c).iter().any(|&(w, e)| w != i && is_polar(mol, w) && mol.bonds()[e].order == BondOrder::Single)
}

fn is_carbonyl_carbon(mol: &MolGraph, c: usize) -> bool {
    mol.atom(c).element.atomic_number() == 6
        && mol.neighbors(c).iter().any(|&(w, e)| {
            mol.bonds()[e].order == BondOrder::Double && matches!(mol.atom(w).element.atomic_number(), 8 | 16)
        })
}

fn has_triple_bond(mol: &MolGraph, i: usize) -> bool {
    mol.neighbors(i).iter().any(|&(_, e)| mol.bonds()[e].order == BondOrder::Triple)
}

/// Carbon carrying three identical terminal halogens or methyls besides
/// the bond under consideration.
fn is_terminal_group(mol: &MolGraph, c: usize, via: usize) -> bool {
    if mol.atom(c).element.atomic_number() != 6 || mol.degree(c) != 4 {
        return false;
    }
    let others: Vec<usize> = mol.neighbors(c).iter().map(|&(w, _)| w).filter(|&w| w != via).collect();
    let first = mol.atom(others[0]).element.atomic_number();
    let terminal = |w: usize| {
        let z = mol.atom(w).element.atomic_number();
        match z {
            9 | 17 | 35 | 53 => mol.degree(w) == 1,
            6 => mol.degree(w) == 1 && mol.total_h(w) == 3,
            _ => false,
        }
    };
    others.iter().all(|&w| mol.atom(w).element.atomic_number() == first && terminal(w))
}

fn is_rotatable(mol: &MolGraph, e: usize) -> bool {
    let bond = &mol.bonds()[e];
    if bond.order != BondOrder::Single || mol.is_ring_bond(e) {
        return false;
    }
    let (a, b) = (bond.a, bond.b);
    if heavy_degree(mol, a) < 2 || heavy_degree(mol, b) < 2 || has_triple_bond(mol, a) || has_triple_bond(mol, b) {
        return false;
    }
    if is_terminal_group(mol, a, b) || is_terminal_group(mol, b, a) {
        return false;
    }
    let amide = |c: usize, n: usize| is_carbonyl_carbon(mol, c) && mol.atom(n).element.atomic_number() == 7;
    !(amide(a, b) || amide(b, a))
}

/// Counts with the structural definitions: HBD sums hydrogens on N and O;
/// HBA counts N and O except pyrrole-type [nH] and carbonyl oxygens of
/// acids, esters and amides; ROTB counts non-ring single bonds between
/// non-terminal heavy atoms, excluding triple-bond atoms, CX3 groups and
/// amide C-N.
pub fn sub_descriptors_with(tables: &ParameterTables, mol: &MolGraph) -> SubDescriptors {
    let n = mol.atom_count();
    let hbd = (0..n).filter(|&i| is_polar(mol, i)).map(|i| mol.total_h(i) as u32).sum();
    let hba = (0..n)
        .filter(|&i| is_polar(mol, i))
        .filter(|&i| {
            let a = mol.atom(i);
            !(a.aromatic && a.element.atomic_number() == 7 && mol.total_h(i) > 0)
        })
        .filter(|&i| !is_carbonyl_acid_or_amide_oxygen(mol, i))
        .count() as u32;
    let rotb = (0..mol.bond_count()).filter(|&e| is_rotatable(mol, e)).count() as u32;
    let arom = mol.rings().iter().filter(|r| r.iter().all(|&i| mol.atom(i).aromatic)).count() as u32;
    SubDescriptors {
        mw: molecular_weight(mol),
        hba,
        hbd,
        rotb,
        arom,
        alerts: alert_count(tables, &Target::new(mol, false)),
    }
}
