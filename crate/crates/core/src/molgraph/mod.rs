//! Molecular graphs: SMILES parsing with classified errors, SMILES writing,
//! ring perception, kekulization and graph signatures.

mod elements;
mod error;
mod kekule;
mod parse;
mod rings;
mod signature;
mod write;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use elements::Element;
pub use error::{ParseError, ParseErrorCategory};
pub use parse::{fits_token_grammar, parse_smiles, ParseOutcome};
pub use signature::graph_signature;
pub use write::write_smiles;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub element: Element,
    pub formal_charge: i8,
    /// Hydrogen count written inside brackets; always `None` for
    /// organic-subset atoms.
    pub explicit_h: Option<u8>,
    pub isotope: Option<u16>,
    pub aromatic: bool,
    pub bracketed: bool,
}

impl Atom {
    pub fn organic(element: Element, aromatic: bool) -> Atom {
        Atom {
            element,
            formal_charge: 0,
            explicit_h: None,
            isotope: None,
            aromatic,
            bracketed: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Integer order; aromatic bonds count as 1 here, see
    /// [`MolGraph::kekule_order`] for the assigned value.
    pub fn base_valence(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

/// A validated molecule. Built only through [`parse_smiles`] or
/// [`MolGraph::relabeled`], so every instance satisfies the valence and
/// aromaticity rules.
#[derive(Debug, Clone)]
pub struct MolGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    adjacency: Vec<Vec<(usize, usize)>>,
    ring_bond: Vec<bool>,
    rings: Vec<Vec<usize>>,
    ring_membership: Vec<u8>,
    implicit_h: Vec<u8>,
    kekule: Vec<u8>,
}

fn lowest_at_least(allowed: &[u8], sum: u32) -> Option<u8> {
    allowed.iter().copied().find(|&v| v as u32 >= sum)
}

fn build_adjacency(n: usize, bonds: &[Bond]) -> Vec<Vec<(usize, usize)>> {
    let mut adj = vec![Vec::new(); n];
    for (i, b) in bonds.iter().enumerate() {
        adj[b.a].push((b.b, i));
        adj[b.b].push((b.a, i));
    }
    adj
}

impl MolGraph {
    /// Runs the post-grammar validation stages (valence, then aromaticity and
    /// kekulization) and derives rings and hydrogen counts. `positions` maps
    /// atoms to byte offsets for error reporting.
    pub(crate) fn from_parts(atoms: Vec<Atom>, bonds: Vec<Bond>, positions: Option<&[usize]>) -> Result<MolGraph, ParseError> {
        let n = atoms.len();
        let pos = |i: usize| positions.and_then(|p| p.get(i).copied());
        let adjacency = build_adjacency(n, &bonds);
        let ring_bond = rings::ring_bonds(&adjacency, bonds.len());
        let edges: Vec<(usize, usize)> = bonds.iter().map(|b| (b.a, b.b)).collect();
        let ring_list = rings::smallest_rings(&adjacency, &edges, &ring_bond);

        // Lower-bound valence with aromatic bonds counted once.
        let lower: Vec<u32> = (0..n)
            .map(|i| {
                let bond_sum: u32 = adjacency[i].iter().map(|&(_, e)| bonds[e].order.base_valence() as u32).sum();
                bond_sum + atoms[i].explicit_h.unwrap_or(0) as u32
            })
            .collect();
        for (i, atom) in atoms.iter().enumerate() {
            if let Some(allowed) = atom.element.allowed_valences(atom.formal_charge) {
                let max = allowed.last().copied().unwrap_or(0) as u32;
                if lower[i] > max {
                    return Err(ParseError::new(
                        ParseErrorCategory::Valence,
                        format!(
                            "atom {} ({}) has valence {}, exceeding the maximum of {}",
                            i,
                            atom_label(atom),
                            lower[i],
                            max
                        ),
                        pos(i),
                    ));
                }
            }
        }

        let mut in_ring = vec![false; n];
        for (e, b) in bonds.iter().enumerate() {
            if ring_bond[e] {
                in_ring[b.a] = true;
                in_ring[b.b] = true;
            }
        }
        for (i, atom) in atoms.iter().enumerate() {
            if atom.aromatic && !in_ring[i] {
                return Err(ParseError::new(
                    ParseErrorCategory::Aromaticity,
                    format!("atom {} ({}) is marked aromatic but is not in a ring", i, atom_label(atom)),
                    pos(i),
                ));
            }
        }
        for (e, b) in bonds.iter().enumerate() {
            if b.order != BondOrder::Aromatic {
                continue;
            }
            if !atoms[b.a].aromatic || !atoms[b.b].aromatic {
                return Err(ParseError::new(
                    ParseErrorCategory::Aromaticity,
                    format!("aromatic bond between atoms {} and {} that are not both aromatic", b.a, b.b),
                    pos(b.b),
                ));
            }
            if !ring_bond[e] {
                return Err(ParseError::new(
                    ParseErrorCategory::Aromaticity,
                    format!("aromatic bond between atoms {} and {} is not in a ring", b.a, b.b),
                    pos(b.b),
                ));
            }
        }

        let needs: Vec<bool> = (0..n)
            .map(|i| {
                let atom = &atoms[i];
                atom.aromatic
                    && atom
                        .element
                        .allowed_valences(atom.formal_charge)
                        .and_then(|allowed| lowest_at_least(&allowed, lower[i]))
                        .is_some_and(|v| v as u32 > lower[i])
            })
            .collect();
        let aromatic_bond: Vec<bool> = bonds.iter().map(|b| b.order == BondOrder::Aromatic).collect();
        let double = kekule::assign_double_bonds(&adjacency, &aromatic_bond, &needs).map_err(|i| {
            ParseError::new(
                ParseErrorCategory::Aromaticity,
                format!("cannot kekulize the aromatic system containing atom {} ({})", i, atom_label(&atoms[i])),
                pos(i),
            )
        })?;
        let kekule: Vec<u8> = bonds
            .iter()
            .enumerate()
            .map(|(e, b)| match b.order {
                BondOrder::Aromatic => 1 + double[e] as u8,
                other => other.base_valence(),
            })
            .collect();

        check_huckel(&atoms, &bonds, &adjacency, &ring_bond, &ring_list, &needs).map_err(|(atom, size, electrons)| {
            ParseError::new(
                ParseErrorCategory::Aromaticity,
                format!("aromatic ring of {size} atoms has {electrons} pi electrons, which violates the 4n+2 rule"),
                pos(atom),
            )
        })?;

        let mut implicit_h = vec![0u8; n];
        for (i, atom) in atoms.iter().enumerate() {
            if atom.bracketed {
                continue;
            }
            let sum: u32 = adjacency[i].iter().map(|&(_, e)| kekule[e] as u32).sum();
            if let Some(allowed) = atom.element.allowed_valences(atom.formal_charge) {
                match lowest_at_least(&allowed, sum) {
                    Some(v) => implicit_h[i] = (v as u32 - sum) as u8,
                    None => {
                        return Err(ParseError::new(
                            ParseErrorCategory::Valence,
                            format!("atom {} ({}) has valence {}, exceeding the maximum allowed", i, atom_label(atom), sum),
                            pos(i),
                        ))
                    }
                }
            }
        }

        let mut ring_membership = vec![0u8; n];
        for ring in &ring_list {
            for &a in ring {
                ring_membership[a] = ring_membership[a].saturating_add(1);
            }
        }

        Ok(MolGraph {
            atoms,
            bonds,
            adjacency,
            ring_bond,
            rings: ring_list,
            ring_membership,
            implicit_h,
            kekule,
        })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> &Atom {
        &self.atoms[i]
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    /// `(neighbour, bond index)` pairs for atom `i`.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<usize> {
        self.adjacency[a].iter().find(|&&(w, _)| w == b).map(|&(_, e)| e)
    }

    /// Smallest-set-of-smallest-rings basis; each ring is an ordered cycle.
    pub fn rings(&self) -> &[Vec<usize>] {
        &self.rings
    }

    pub fn is_ring_bond(&self, e: usize) -> bool {
        self.ring_bond[e]
    }

    pub fn is_ring_atom(&self, i: usize) -> bool {
        self.adjacency[i].iter().any(|&(_, e)| self.ring_bond[e])
    }

    /// Number of basis rings containing atom `i`.
    pub fn ring_membership(&self, i: usize) -> usize {
        self.ring_membership[i] as usize
    }

    pub fn implicit_h(&self, i: usize) -> u8 {
        self.implicit_h[i]
    }

    pub fn total_h(&self, i: usize) -> u8 {
        self.implicit_h[i] + self.atoms[i].explicit_h.unwrap_or(0)
    }

    /// Bond order after kekulization (1, 2 or 3).
    pub fn kekule_order(&self, e: usize) -> u8 {
        self.kekule[e]
    }

    /// Sum of kekulized bond orders plus hydrogens.
    pub fn valence(&self, i: usize) -> u32 {
        let bonds: u32 = self.adjacency[i].iter().map(|&(_, e)| self.kekule[e] as u32).sum();
        bonds + self.total_h(i) as u32
    }

    pub fn component_count(&self) -> usize {
        rings::component_count(&self.adjacency)
    }

    /// Atom indices grouped by connected component, in order of first atom.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.atoms.len()];
        let mut out = Vec::new();
        for start in 0..self.atoms.len() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = BTreeSet::from([start]);
            let mut stack = vec![start];
            while let Some(v) = stack.pop() {
                for &(w, _) in &self.adjacency[v] {
                    if !seen[w] {
                        seen[w] = true;
                        comp.insert(w);
                        stack.push(w);
                    }
                }
            }
            out.push(comp.into_iter().collect());
        }
        out
    }

    /// Returns the same molecule with atoms renumbered so that old atom
    /// `order[k]` becomes new atom `k`.
    pub fn relabeled(&self, order: &[usize]) -> MolGraph {
        assert_eq!(order.len(), self.atoms.len(), "relabeling must be a permutation");
        let mut new_index = vec![usize::MAX; order.len()];
        for (k, &old) in order.iter().enumerate() {
            new_index[old] = k;
        }
        let atoms = order.iter().map(|&old| self.atoms[old].clone()).collect();
        let bonds = self
            .bonds
            .iter()
            .map(|b| Bond {
                a: new_index[b.a],
                b: new_index[b.b],
                order: b.order,
            })
            .collect();
        MolGraph::from_parts(atoms, bonds, None).expect("relabeling preserves validity")
    }
}

pub(crate) fn atom_label(atom: &Atom) -> String {
    if atom.aromatic {
        atom.element.symbol().to_lowercase()
    } else {
        atom.element.symbol().to_string()
    }
}

fn electronegativity(z: u8) -> f64 {
    match z {
        1 => 2.20,
        5 => 2.04,
        6 => 2.55,
        7 => 3.04,
        8 => 3.44,
        9 => 3.98,
        14 => 1.90,
        15 => 2.19,
        16 => 2.58,
        17 => 3.16,
        33 => 2.18,
        34 => 2.55,
        35 => 2.96,
        53 => 2.66,
        _ => 1.5,
    }
}

/// Pi-electron contribution of an aromatic atom. Atoms with spare valence
/// for a ring double bond give one electron. A non-aromatic double bond gives one electron, unless it leaves the ring
/// system towards a more electronegative atom, which takes it.
fn pi_electrons(
    atoms: &[Atom],
    bonds: &[Bond],
    adjacency: &[Vec<(usize, usize)>],
    ring_bond: &[bool],
    needs: &[bool],
    i: usize,
) -> u32 {
    let atom = &atoms[i];
    if needs[i] {
        return 1;
    }
    let exo = adjacency[i]
        .iter()
        .copied()
        .find(|&(_, e)| matches!(bonds[e].order, BondOrder::Double | BondOrder::Triple));
    if let Some((w, e)) = exo {
        let z = atom.element.atomic_number();
        let zw = atoms[w].element.atomic_number();
        if !ring_bond[e] && electronegativity(zw) > electronegativity(z) {
            return 0;
        }
        return 1;
    }
    match atom.element.atomic_number() {
        7 | 8 | 15 | 16 | 33 | 34 => 2,
        6 if atom.formal_charge < 0 => 2,
        _ => 0,
    }
}

/// Every basis ring made only of aromatic atoms and bonds must hold 4n+2 pi
/// electrons, either alone, merged with up to two fused all-aromatic-atom
/// rings, or as its whole fused system. Returns `(atom, ring size,
/// electrons)` on failure.
fn check_huckel(
    atoms: &[Atom],
    bonds: &[Bond],
    adjacency: &[Vec<(usize, usize)>],
    ring_bond: &[bool],
    rings: &[Vec<usize>],
    needs: &[bool],
) -> Result<(), (usize, usize, u32)> {
    let aromatic_bonds = |ring: &Vec<usize>| {
        (0..ring.len()).all(|k| {
            let (x, y) = (ring[k], ring[(k + 1) % ring.len()]);
            adjacency[x]
                .iter()
                .any(|&(w, e)| w == y && bonds[e].order == BondOrder::Aromatic)
        })
    };
    let candidates: Vec<&Vec<usize>> = rings
        .iter()
        .filter(|r| r.iter().all(|&a| atoms[a].aromatic))
        .collect();
    let electrons: Vec<u32> = (0..atoms.len())
        .map(|a| if atoms[a].aromatic { pi_electrons(atoms, bonds, adjacency, ring_bond, needs, a) } else { 0 })
        .collect();
    let count = |set: &BTreeSet<usize>| -> u32 { set.iter().map(|&a| electrons[a]).sum() };
    let huckel = |e: u32| e % 4 == 2;
    let sets: Vec<BTreeSet<usize>> = candidates.iter().map(|r| r.iter().copied().collect()).collect();
    let fused = |a: &BTreeSet<usize>, b: &BTreeSet<usize>| a.intersection(b).count() >= 2;
    for (k, ring) in sets.iter().enumerate() {
        if !aromatic_bonds(candidates[k]) {
            continue;
        }
        let own = count(ring);
        if huckel(own) {
            continue;
        }
        let neighbours: Vec<usize> = (0..sets.len()).filter(|&j| j != k && fused(ring, &sets[j])).collect();
        let mut merged_ok = false;
        'search: for &j in &neighbours {
            let pair: BTreeSet<usize> = ring.union(&sets[j]).copied().collect();
            if huckel(count(&pair)) {
                merged_ok = true;
                break;
            }
            for (l, third) in sets.iter().enumerate() {
                if l != k && l != j && fused(&pair, third) {
                    let triple: BTreeSet<usize> = pair.union(third).copied().collect();
                    if huckel(count(&triple)) {
                        merged_ok = true;
                        break 'search;
                    }
                }
            }
        }
        if merged_ok {
            continue;
        }
        let mut system = ring.clone();
        let mut grew = true;
        while grew {
            grew = false;
            for other in &sets {
                if !other.is_subset(&system) && fused(&system, other) {
                    system.extend(other.iter().copied());
                    grew = true;
                }
            }
        }
        if system.len() > ring.len() && huckel(count(&system)) {
            continue;
        }
        return Err((candidates[k][0], ring.len(), own));
    }
    Ok(())
}
