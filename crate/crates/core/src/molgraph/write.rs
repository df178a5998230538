//! Deterministic SMILES output: depth-first from atom 0, neighbours and
//! branches in atom-index order.

use std::collections::BTreeSet;
use std::fmt::Write;

use super::{BondOrder, MolGraph};

struct Plan {
    children: Vec<Vec<(usize, usize)>>,
    /// Per atom, ring-closure bonds in discovery order as `(bond, is_opening)`.
    closures: Vec<Vec<(usize, bool)>>,
    roots: Vec<usize>,
}

fn plan(mol: &MolGraph) -> Plan {
    let n = mol.atom_count();
    let mut children = vec![Vec::new(); n];
    let mut closures = vec![Vec::new(); n];
    let mut roots = Vec::new();
    let mut state = vec![0u8; n]; // 0 unseen, 1 on stack, 2 done
    let mut sorted: Vec<Vec<(usize, usize)>> = (0..n)
        .map(|v| {
            let mut nb = mol.neighbors(v).to_vec();
            nb.sort_unstable();
            nb
        })
        .collect();
    for root in 0..n {
        if state[root] != 0 {
            continue;
        }
        roots.push(root);
        state[root] = 1;
        let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
        while let Some(top) = stack.last_mut() {
            let (v, via, slot) = (top.0, top.1, top.2);
            if slot == sorted[v].len() {
                state[v] = 2;
                stack.pop();
                continue;
            }
            top.2 += 1;
            let (w, e) = sorted[v][slot];
            if e == via {
                continue;
            }
            match state[w] {
                0 => {
                    children[v].push((w, e));
                    state[w] = 1;
                    stack.push((w, e, 0));
                }
                1 => {
                    // back edge to an ancestor: it opens at w, closes here
                    closures[w].push((e, true));
                    closures[v].push((e, false));
                }
                _ => {}
            }
        }
    }
    sorted.clear();
    Plan {
        children,
        closures,
        roots,
    }
}

fn bond_symbol(mol: &MolGraph, e: usize) -> &'static str {
    let bond = mol.bonds()[e];
    match bond.order {
        BondOrder::Single if mol.atom(bond.a).aromatic && mol.atom(bond.b).aromatic => "-",
        BondOrder::Single | BondOrder::Aromatic => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
    }
}

/// Hydrogen count the reader would infer for an unbracketed atom here.
/// Aromatic bonds count once; an aromatic atom with spare valence takes
/// one unit of it as a ring double bond.
fn organic_h(mol: &MolGraph, v: usize) -> Option<u8> {
    let atom = mol.atom(v);
    let sum: u32 = mol
        .neighbors(v)
        .iter()
        .map(|&(_, e)| mol.bonds()[e].order.base_valence() as u32)
        .sum();
    let allowed = atom.element.allowed_valences(0)?;
    let target = allowed.into_iter().find(|&x| x as u32 >= sum)? as u32;
    let pi = (atom.aromatic && target > sum) as u32;
    Some((target - sum - pi) as u8)
}

fn atom_token(mol: &MolGraph, v: usize, out: &mut String) {
    let atom = mol.atom(v);
    let h = mol.total_h(v);
    let organic = atom.element.is_organic_subset()
        && atom.formal_charge == 0
        && atom.isotope.is_none()
        && organic_h(mol, v) == Some(h);
    let symbol = if atom.aromatic {
        atom.element.symbol().to_lowercase()
    } else {
        atom.element.symbol().to_string()
    };
    if organic {
        out.push_str(&symbol);
        return;
    }
    out.push('[');
    if let Some(iso) = atom.isotope {
        let _ = write!(out, "{iso}");
    }
    out.push_str(&symbol);
    match h {
        0 => {}
        1 => out.push('H'),
        _ => {
            let _ = write!(out, "H{h}");
        }
    }
    match atom.formal_charge {
        0 => {}
        1 => out.push('+'),
        -1 => out.push('-'),
        q if q > 0 => {
            let _ = write!(out, "+{q}");
        }
        q => {
            let _ = write!(out, "-{}", -q);
        }
    }
    out.push(']');
}

fn ring_label(out: &mut String, label: usize) {
    if label < 10 {
        let _ = write!(out, "{label}");
    } else {
        let _ = write!(out, "%{label:02}");
    }
}

struct Writer<'a> {
    mol: &'a MolGraph,
    plan: Plan,
    free: BTreeSet<usize>,
    labels: Vec<usize>,
    out: String,
}

impl Writer<'_> {
    fn emit_atom(&mut self, v: usize) {
        atom_token(self.mol, v, &mut self.out);
        let mut released = Vec::new();
        for &(e, opening) in &self.plan.closures[v] {
            if !opening {
                let label = self.labels[e];
                ring_label(&mut self.out, label);
                released.push(label);
            }
        }
        for &(e, opening) in &self.plan.closures[v] {
            if opening {
                let label = *self.free.iter().next().expect("ring labels exhausted");
                self.free.remove(&label);
                self.labels[e] = label;
                self.out.push_str(bond_symbol(self.mol, e));
                ring_label(&mut self.out, label);
            }
        }
        self.free.extend(released);
    }

    fn emit_tree(&mut self, root: usize) {
        // Explicit stack of (atom, next child slot); branches close on pop.
        self.emit_atom(root);
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        while let Some(&mut (v, ref mut slot)) = stack.last_mut() {
            let kids = self.plan.children[v].len();
            if *slot == kids {
                stack.pop();
                if let Some(&(parent, pslot)) = stack.last() {
                    if pslot < self.plan.children[parent].len() {
                        self.out.push(')');
                    }
                }
                continue;
            }
            let (w, e) = self.plan.children[v][*slot];
            *slot += 1;
            if *slot < kids {
                self.out.push('(');
            }
            self.out.push_str(bond_symbol(self.mol, e));
            self.emit_atom(w);
            stack.push((w, 0));
        }
    }
}

/// Writes a SMILES string that parses back to an equivalent graph.
pub fn write_smiles(mol: &MolGraph) -> String {
    let plan = plan(mol);
    let roots = plan.roots.clone();
    let mut w = Writer {
        mol,
        plan,
        free: (1..=99).collect(),
        labels: vec![0; mol.bond_count()],
        out: String::new(),
    };
    for (k, root) in roots.into_iter().enumerate() {
        if k > 0 {
            w.out.push('.');
        }
        w.emit_tree(root);
    }
    w.out
}
