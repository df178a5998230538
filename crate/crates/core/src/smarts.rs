//! A SMARTS subset sufficient for descriptor atom typing and structural
//! alerts: atomic primitives (element, `#n`, `a`/`A`, `H`, `D`, `X`, `v`,
//! `R`, `r`, `x`, charge, isotope), recursive `$(...)`, logical operators
//! `! & , ;`, bond primitives `- = # : ~ @` with the same operators, ring
//! closures, branches and `.`. Matching is backtracking subgraph
//! monomorphism.

use std::cell::RefCell;
use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::molgraph::{BondOrder, Element, MolGraph};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid pattern {pattern:?}: {detail} at offset {offset}")]
pub struct SmartsError {
    pub pattern: String,
    pub detail: String,
    pub offset: usize,
}

#[derive(Debug, Clone)]
enum AtomPrim {
    Any,
    Aromatic,
    Aliphatic,
    Element(u8, bool),
    AtomicNum(u8),
    TotalH(u8),
    ImplicitH(Option<u8>),
    Degree(u8),
    Connectivity(u8),
    Valence(u8),
    RingCount(Option<u8>),
    RingSize(Option<u8>),
    RingBonds(Option<u8>),
    Charge(i8),
    Isotope(u16),
    Recursive(usize, Box<Smarts>),
}

#[derive(Debug, Clone)]
enum Expr<P> {
    Prim(P),
    Not(Box<Expr<P>>),
    And(Vec<Expr<P>>),
    Or(Vec<Expr<P>>),
}

#[derive(Debug, Clone, Copy)]
enum BondPrim {
    Single,
    Double,
    Triple,
    Aromatic,
    Any,
    Ring,
    /// No symbol written: single or aromatic.
    Default,
}

#[derive(Debug, Clone)]
struct PatternBond {
    a: usize,
    b: usize,
    expr: Expr<BondPrim>,
}

/// A parsed pattern.
#[derive(Debug, Clone)]
pub struct Smarts {
    text: String,
    atoms: Vec<Expr<AtomPrim>>,
    bonds: Vec<PatternBond>,
    adjacency: Vec<Vec<(usize, usize)>>,
    /// Matching order and, per position, the already-placed neighbour to
    /// extend from.
    order: Vec<(usize, Option<usize>)>,
}

static RECURSIVE_IDS: AtomicUsize = AtomicUsize::new(0);

struct Parser<'a> {
    text: &'a str,
    b: &'a [u8],
    i: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, detail: impl Into<String>) -> SmartsError {
        SmartsError {
            pattern: self.text.to_string(),
            detail: detail.into(),
            offset: self.i,
        }
    }

    fn peek(&self) -> Option<u8> {
        self.b.get(self.i).copied()
    }

    fn pattern(&mut self) -> Result<Smarts, SmartsError> {
        let mut atoms = Vec::new();
        let mut bonds: Vec<PatternBond> = Vec::new();
        let mut prev: Option<usize> = None;
        let mut stack: Vec<Option<usize>> = Vec::new();
        let mut pending_bond: Option<Expr<BondPrim>> = None;
        let mut rings: HashMap<u32, (usize, Option<Expr<BondPrim>>)> = HashMap::new();
        while let Some(c) = self.peek() {
            match c {
                b'(' => {
                    self.i += 1;
                    stack.push(prev);
                }
                b')' => {
                    self.i += 1;
                    prev = stack.pop().ok_or_else(|| self.err("unmatched ')'"))?;
                }
                b'.' => {
                    self.i += 1;
                    prev = None;
                }
                b'0'..=b'9' | b'%' => {
                    let label = if c == b'%' {
                        self.i += 1;
                        let start = self.i;
                        let v = self.b.get(start..start + 2).ok_or_else(|| self.err("bad ring label"))?;
                        self.i += 2;
                        (v[0] - b'0') as u32 * 10 + (v[1] - b'0') as u32
                    } else {
                        self.i += 1;
                        (c - b'0') as u32
                    };
                    let current = prev.ok_or_else(|| self.err("ring closure before any atom"))?;
                    let expr = pending_bond.take();
                    match rings.remove(&label) {
                        Some((other, open_expr)) => bonds.push(PatternBond {
                            a: other,
                            b: current,
                            expr: expr.or(open_expr).unwrap_or(Expr::Prim(BondPrim::Default)),
                        }),
                        None => {
                            rings.insert(label, (current, expr));
                        }
                    }
                }
                b'-' | b'=' | b'#' | b':' | b'~' | b'@' | b'!' | b'/' | b'\\' => {
                    pending_bond = Some(self.bond_expr()?);
                }
                _ => {
                    let expr = self.atom()?;
                    let idx = atoms.len();
                    atoms.push(expr);
                    if let Some(p) = prev {
                        bonds.push(PatternBond {
                            a: p,
                            b: idx,
                            expr: pending_bond.take().unwrap_or(Expr::Prim(BondPrim::Default)),
                        });
                    }
                    pending_bond = None;
                    prev = Some(idx);
                }
            }
        }
        if !rings.is_empty() {
            return Err(self.err("unclosed ring bond"));
        }
        if !stack.is_empty() {
            return Err(self.err("unmatched '('"));
        }
        if atoms.is_empty() {
            return Err(self.err("empty pattern"));
        }
        Ok(Smarts::assemble(self.text.to_string(), atoms, bonds))
    }

    fn bond_expr(&mut self) -> Result<Expr<BondPrim>, SmartsError> {
        let start = self.i;
        while matches!(self.peek(), Some(b'-' | b'=' | b'#' | b':' | b'~' | b'@' | b'!' | b'/' | b'\\' | b'&' | b',' | b';')) {
            self.i += 1;
        }
        let run = &self.b[start..self.i];
        let mut k = 0;
        let expr = parse_low(run, &mut k, &|s: &[u8], k: &mut usize| {
            let c = s[*k];
            *k += 1;
            Some(match c {
                b'-' | b'/' | b'\\' => BondPrim::Single,
                b'=' => BondPrim::Double,
                b'#' => BondPrim::Triple,
                b':' => BondPrim::Aromatic,
                b'~' => BondPrim::Any,
                b'@' => BondPrim::Ring,
                _ => return None,
            })
        });
        match expr {
            Some(e) if k == run.len() => Ok(e),
            _ => Err(SmartsError {
                pattern: self.text.to_string(),
                detail: "malformed bond expression".into(),
                offset: start,
            }),
        }
    }

    fn atom(&mut self) -> Result<Expr<AtomPrim>, SmartsError> {
        let c = self.peek().unwrap();
        let two = self.text.get(self.i..self.i + 2);
        let prim = match c {
            b'[' => return self.bracket(),
            b'*' => AtomPrim::Any,
            b'a' => AtomPrim::Aromatic,
            b'A' => AtomPrim::Aliphatic,
            b'C' if two == Some("Cl") => {
                self.i += 1;
                AtomPrim::Element(17, false)
            }
            b'B' if two == Some("Br") => {
                self.i += 1;
                AtomPrim::Element(35, false)
            }
            b'B' | b'C' | b'N' | b'O' | b'P' | b'S' | b'F' | b'I' => {
                AtomPrim::Element(Element::from_symbol(&self.text[self.i..self.i + 1]).unwrap().atomic_number(), false)
            }
            b'b' | b'c' | b'n' | b'o' | b'p' | b's' => {
                let upper = (c as char).to_ascii_uppercase().to_string();
                AtomPrim::Element(Element::from_symbol(&upper).unwrap().atomic_number(), true)
            }
            _ => return Err(self.err(format!("unexpected character '{}'", c as char))),
        };
        self.i += 1;
        Ok(Expr::Prim(prim))
    }

    fn bracket(&mut self) -> Result<Expr<AtomPrim>, SmartsError> {
        let open = self.i;
        self.i += 1;
        let mut depth = 0usize;
        let mut end = self.i;
        while end < self.b.len() {
            match self.b[end] {
                b'[' => depth += 1,
                b']' if depth == 0 => break,
                b']' => depth -= 1,
                _ => {}
            }
            end += 1;
        }
        if end >= self.b.len() {
            return Err(self.err("unterminated bracket atom"));
        }
        let inner = &self.text[self.i..end];
        // A bare hydrogen atom: [H], [2H], [H+].
        let bare = inner.trim_start_matches(|c: char| c.is_ascii_digit());
        let hydrogen = bare.starts_with('H')
            && bare[1..].chars().all(|c| c == '+' || c == '-' || c.is_ascii_digit())
            && !bare[1..].starts_with(|c: char| c.is_ascii_digit());
        let mut k = 0;
        let base = self.i;
        let text = self.text;
        let result = parse_low(inner.as_bytes(), &mut k, &|s: &[u8], k: &mut usize| {
            atom_primitive(text, base, s, k, hydrogen)
        });
        match result {
            Some(e) if k == inner.len() => {
                self.i = end + 1;
                Ok(e)
            }
            _ => {
                self.i = open + 1 + k;
                Err(self.err("malformed atom expression"))
            }
        }
    }
}

/// Parses one atomic primitive at `s[*k]`; `hydrogen` says whether a leading
/// `H` names the element rather than a hydrogen count.
fn atom_primitive(text: &str, base: usize, s: &[u8], k: &mut usize, hydrogen: bool) -> Option<AtomPrim> {
    let c = *s.get(*k)?;
    let number = |k: &mut usize| -> Option<u32> {
        let start = *k;
        while *k < s.len() && s[*k].is_ascii_digit() {
            *k += 1;
        }
        (*k > start).then(|| std::str::from_utf8(&s[start..*k]).unwrap().parse().unwrap_or(u32::MAX))
    };
    let count = |k: &mut usize| -> Option<Option<u8>> {
        match number(k) {
            None => Some(None),
            Some(v) if v <= 255 => Some(Some(v as u8)),
            Some(_) => None,
        }
    };
    let prim = match c {
        b'*' => {
            *k += 1;
            AtomPrim::Any
        }
        b'0'..=b'9' => {
            let v = number(k)?;
            AtomPrim::Isotope(u16::try_from(v).ok()?)
        }
        b'#' => {
            *k += 1;
            AtomPrim::AtomicNum(u8::try_from(number(k)?).ok()?)
        }
        b'$' => {
            if s.get(*k + 1) != Some(&b'(') {
                return None;
            }
            let start = *k + 2;
            let mut depth = 1;
            let mut j = start;
            while j < s.len() && depth > 0 {
                match s[j] {
                    b'(' => depth += 1,
                    b')' => depth -= 1,
                    _ => {}
                }
                j += 1;
            }
            if depth != 0 {
                return None;
            }
            let sub = &text[base + start..base + j - 1];
            let pattern = Smarts::parse(sub).ok()?;
            *k = j;
            AtomPrim::Recursive(RECURSIVE_IDS.fetch_add(1, Ordering::Relaxed), Box::new(pattern))
        }
        b'@' => {
            // chirality carries no constraint here
            *k += 1;
            if s.get(*k) == Some(&b'@') {
                *k += 1;
            }
            AtomPrim::Any
        }
        b'+' | b'-' => {
            let unit: i32 = if c == b'+' { 1 } else { -1 };
            *k += 1;
            let q = match number(k) {
                Some(v) => unit * v as i32,
                None => {
                    let mut q = unit;
                    while s.get(*k) == Some(&c) {
                        q += unit;
                        *k += 1;
                    }
                    q
                }
            };
            AtomPrim::Charge(i8::try_from(q).ok()?)
        }
        b'H' if hydrogen && s[..*k].iter().all(u8::is_ascii_digit) => {
            *k += 1;
            AtomPrim::Element(1, false)
        }
        b'H' if s.get(*k + 1).is_some_and(|n| n.is_ascii_lowercase()) => element(s, k)?,
        b'H' => {
            *k += 1;
            AtomPrim::TotalH(count(k)?.unwrap_or(1))
        }
        b'h' => {
            *k += 1;
            AtomPrim::ImplicitH(count(k)?)
        }
        b'D' if !s.get(*k + 1).is_some_and(|n| n.is_ascii_lowercase()) => {
            *k += 1;
            AtomPrim::Degree(count(k)?.unwrap_or(1))
        }
        b'X' => {
            *k += 1;
            AtomPrim::Connectivity(count(k)?.unwrap_or(1))
        }
        b'v' => {
            *k += 1;
            AtomPrim::Valence(count(k)?.unwrap_or(1))
        }
        b'R' if !s.get(*k + 1).is_some_and(|n| n.is_ascii_lowercase()) => {
            *k += 1;
            AtomPrim::RingCount(count(k)?)
        }
        b'r' => {
            *k += 1;
            AtomPrim::RingSize(count(k)?)
        }
        b'x' => {
            *k += 1;
            AtomPrim::RingBonds(count(k)?)
        }
        b'a' if s.get(*k + 1) != Some(&b's') => {
            *k += 1;
            AtomPrim::Aromatic
        }
        b'A' if !s.get(*k + 1).is_some_and(|n| n.is_ascii_lowercase()) => {
            *k += 1;
            AtomPrim::Aliphatic
        }
        _ => element(s, k)?,
    };
    Some(prim)
}

fn element(s: &[u8], k: &mut usize) -> Option<AtomPrim> {
    let c = s[*k];
    if c.is_ascii_uppercase() {
        if let Some(&n) = s.get(*k + 1).filter(|n| n.is_ascii_lowercase()) {
            let sym = format!("{}{}", c as char, n as char);
            if let Some(e) = Element::from_symbol(&sym) {
                *k += 2;
                return Some(AtomPrim::Element(e.atomic_number(), false));
            }
        }
        let e = Element::from_symbol(&(c as char).to_string())?;
        *k += 1;
        return Some(AtomPrim::Element(e.atomic_number(), false));
    }
    if c.is_ascii_lowercase() {
        let pair = s.get(*k..*k + 2);
        if pair == Some(b"se") || pair == Some(b"as") {
            *k += 2;
            return Some(AtomPrim::Element(if pair == Some(b"se") { 34 } else { 33 }, true));
        }
        let z = match c {
            b'b' => 5,
            b'c' => 6,
            b'n' => 7,
            b'o' => 8,
            b'p' => 15,
            b's' => 16,
            _ => return None,
        };
        *k += 1;
        return Some(AtomPrim::Element(z, true));
    }
    None
}

type PrimFn<'f, P> = dyn Fn(&[u8], &mut usize) -> Option<P> + 'f;

/// `;` (lowest), then `,`, then `&` or juxtaposition, then `!`.
fn parse_low<P>(s: &[u8], k: &mut usize, prim: &PrimFn<P>) -> Option<Expr<P>> {
    let mut terms = vec![parse_or(s, k, prim)?];
    while s.get(*k) == Some(&b';') {
        *k += 1;
        terms.push(parse_or(s, k, prim)?);
    }
    Some(if terms.len() == 1 { terms.pop().unwrap() } else { Expr::And(terms) })
}

fn parse_or<P>(s: &[u8], k: &mut usize, prim: &PrimFn<P>) -> Option<Expr<P>> {
    let mut terms = vec![parse_and(s, k, prim)?];
    while s.get(*k) == Some(&b',') {
        *k += 1;
        terms.push(parse_and(s, k, prim)?);
    }
    Some(if terms.len() == 1 { terms.pop().unwrap() } else { Expr::Or(terms) })
}

fn parse_and<P>(s: &[u8], k: &mut usize, prim: &PrimFn<P>) -> Option<Expr<P>> {
    let mut terms = vec![parse_not(s, k, prim)?];
    loop {
        match s.get(*k) {
            Some(b'&') => {
                *k += 1;
                terms.push(parse_not(s, k, prim)?);
            }
            Some(b',') | Some(b';') | None => break,
            Some(_) => terms.push(parse_not(s, k, prim)?),
        }
    }
    Some(if terms.len() == 1 { terms.pop().unwrap() } else { Expr::And(terms) })
}

fn parse_not<P>(s: &[u8], k: &mut usize, prim: &PrimFn<P>) -> Option<Expr<P>> {
    if s.get(*k) == Some(&b'!') {
        *k += 1;
        return Some(Expr::Not(Box::new(parse_not(s, k, prim)?)));
    }
    prim(s, k).map(Expr::Prim)
}

impl std::fmt::Display for Smarts {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.text)
    }
}

impl Smarts {
    pub fn parse(text: &str) -> Result<Smarts, SmartsError> {
        let mut p = Parser {
            text,
            b: text.as_bytes(),
            i: 0,
        };
        p.pattern()
    }

    /// Atomic numbers the first pattern atom can match, when the pattern
    /// restricts them.
    pub fn first_atom_elements(&self) -> Option<Vec<u8>> {
        fn elements(e: &Expr<AtomPrim>) -> Option<Vec<u8>> {
            match e {
                Expr::Prim(AtomPrim::Element(z, _)) | Expr::Prim(AtomPrim::AtomicNum(z)) => Some(vec![*z]),
                Expr::Prim(_) | Expr::Not(_) => None,
                Expr::Or(items) => {
                    let mut all = Vec::new();
                    for item in items {
                        all.extend(elements(item)?);
                    }
                    all.sort_unstable();
                    all.dedup();
                    Some(all)
                }
                Expr::And(items) => items.iter().filter_map(elements).reduce(|a, b| a.into_iter().filter(|z| b.contains(z)).collect()),
            }
        }
        self.atoms.first().and_then(elements)
    }

    fn assemble(text: String, atoms: Vec<Expr<AtomPrim>>, bonds: Vec<PatternBond>) -> Smarts {
        let n = atoms.len();
        let mut adjacency = vec![Vec::new(); n];
        for (i, b) in bonds.iter().enumerate() {
            adjacency[b.a].push((b.b, i));
            adjacency[b.b].push((b.a, i));
        }
        let mut placed = vec![false; n];
        let mut order = Vec::with_capacity(n);
        for root in 0..n {
            if placed[root] {
                continue;
            }
            placed[root] = true;
            order.push((root, None));
            let mut head = order.len() - 1;
            while head < order.len() {
                let v = order[head].0;
                head += 1;
                for &(w, _) in &adjacency[v] {
                    if !placed[w] {
                        placed[w] = true;
                        order.push((w, Some(v)));
                    }
                }
            }
        }
        Smarts {
            text,
            atoms,
            bonds,
            adjacency,
            order,
        }
    }
}

#[derive(Debug, Clone)]
struct TargetAtom {
    z: u8,
    aromatic: bool,
    charge: i8,
    isotope: Option<u16>,
    total_h: u8,
    implicit_h: u8,
    degree: u8,
    connectivity: u8,
    valence: u8,
    ring_count: u8,
    min_ring: u8,
    ring_bonds: u8,
}

#[derive(Debug, Clone, Copy)]
struct TargetBond {
    order: BondOrder,
    ring: bool,
}

/// A molecule prepared for matching, optionally with hydrogens expanded
/// into explicit atoms (appended after the heavy atoms).
pub struct Target {
    atoms: Vec<TargetAtom>,
    bonds: Vec<TargetBond>,
    adjacency: Vec<Vec<(usize, usize)>>,
    cache: RefCell<HashMap<(usize, usize), bool>>,
}

impl Target {
    pub fn new(mol: &MolGraph, explicit_hydrogens: bool) -> Target {
        let n = mol.atom_count();
        let mut min_ring = vec![0u8; n];
        for ring in mol.rings() {
            let size = ring.len().min(255) as u8;
            for &a in ring {
                if min_ring[a] == 0 || size < min_ring[a] {
                    min_ring[a] = size;
                }
            }
        }
        let mut atoms: Vec<TargetAtom> = (0..n)
            .map(|i| {
                let a = mol.atom(i);
                let h = mol.total_h(i);
                let heavy = mol.degree(i) as u8;
                TargetAtom {
                    z: a.element.atomic_number(),
                    aromatic: a.aromatic,
                    charge: a.formal_charge,
                    isotope: a.isotope,
                    total_h: h,
                    implicit_h: if explicit_hydrogens { 0 } else { h },
                    degree: if explicit_hydrogens { heavy + h } else { heavy },
                    connectivity: heavy + h,
                    valence: mol.valence(i).min(255) as u8,
                    ring_count: mol.ring_membership(i).min(255) as u8,
                    min_ring: min_ring[i],
                    ring_bonds: mol.neighbors(i).iter().filter(|&&(_, e)| mol.is_ring_bond(e)).count() as u8,
                }
            })
            .collect();
        let mut bonds: Vec<TargetBond> = (0..mol.bond_count())
            .map(|e| TargetBond {
                order: mol.bonds()[e].order,
                ring: mol.is_ring_bond(e),
            })
            .collect();
        let mut adjacency: Vec<Vec<(usize, usize)>> = (0..n).map(|i| mol.neighbors(i).to_vec()).collect();
        if explicit_hydrogens {
            for i in 0..n {
                for _ in 0..mol.total_h(i) {
                    let h = atoms.len();
                    let e = bonds.len();
                    atoms.push(TargetAtom {
                        z: 1,
                        aromatic: false,
                        charge: 0,
                        isotope: None,
                        total_h: 0,
                        implicit_h: 0,
                        degree: 1,
                        connectivity: 1,
                        valence: 1,
                        ring_count: 0,
                        min_ring: 0,
                        ring_bonds: 0,
                    });
                    bonds.push(TargetBond {
                        order: BondOrder::Single,
                        ring: false,
                    });
                    adjacency.push(vec![(i, e)]);
                    adjacency[i].push((h, e));
                }
            }
        }
        Target {
            atoms,
            bonds,
            adjacency,
            cache: RefCell::new(HashMap::new()),
        }
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn atomic_number(&self, i: usize) -> u8 {
        self.atoms[i].z
    }

    fn atom_ok(&self, expr: &Expr<AtomPrim>, i: usize) -> bool {
        match expr {
            Expr::Prim(p) => self.prim_ok(p, i),
            Expr::Not(e) => !self.atom_ok(e, i),
            Expr::And(v) => v.iter().all(|e| self.atom_ok(e, i)),
            Expr::Or(v) => v.iter().any(|e| self.atom_ok(e, i)),
        }
    }

    fn prim_ok(&self, p: &AtomPrim, i: usize) -> bool {
        let a = &self.atoms[i];
        match p {
            AtomPrim::Any => true,
            AtomPrim::Aromatic => a.aromatic,
            AtomPrim::Aliphatic => !a.aromatic,
            AtomPrim::Element(z, arom) => a.z == *z && a.aromatic == *arom,
            AtomPrim::AtomicNum(z) => a.z == *z,
            AtomPrim::TotalH(n) => a.total_h == *n,
            AtomPrim::ImplicitH(None) => a.implicit_h > 0,
            AtomPrim::ImplicitH(Some(n)) => a.implicit_h == *n,
            AtomPrim::Degree(n) => a.degree == *n,
            AtomPrim::Connectivity(n) => a.connectivity == *n,
            AtomPrim::Valence(n) => a.valence == *n,
            AtomPrim::RingCount(None) => a.ring_count > 0,
            AtomPrim::RingCount(Some(n)) => a.ring_count == *n,
            AtomPrim::RingSize(None) => a.min_ring > 0,
            AtomPrim::RingSize(Some(n)) => a.min_ring == *n,
            AtomPrim::RingBonds(None) => a.ring_bonds > 0,
            AtomPrim::RingBonds(Some(n)) => a.ring_bonds == *n,
            AtomPrim::Charge(q) => a.charge == *q,
            AtomPrim::Isotope(m) => a.isotope == Some(*m),
            AtomPrim::Recursive(id, pattern) => {
                if let Some(&hit) = self.cache.borrow().get(&(*id, i)) {
                    return hit;
                }
                let hit = self.matches_at(pattern, i);
                self.cache.borrow_mut().insert((*id, i), hit);
                hit
            }
        }
    }

    fn bond_ok(expr: &Expr<BondPrim>, b: TargetBond) -> bool {
        match expr {
            Expr::Prim(p) => match p {
                BondPrim::Single => b.order == BondOrder::Single,
                BondPrim::Double => b.order == BondOrder::Double,
                BondPrim::Triple => b.order == BondOrder::Triple,
                BondPrim::Aromatic => b.order == BondOrder::Aromatic,
                BondPrim::Any => true,
                BondPrim::Ring => b.ring,
                BondPrim::Default => matches!(b.order, BondOrder::Single | BondOrder::Aromatic),
            },
            Expr::Not(e) => !Self::bond_ok(e, b),
            Expr::And(v) => v.iter().all(|e| Self::bond_ok(e, b)),
            Expr::Or(v) => v.iter().any(|e| Self::bond_ok(e, b)),
        }
    }

    fn bond_between(&self, x: usize, y: usize) -> Option<TargetBond> {
        self.adjacency[x]
            .iter()
            .find(|&&(w, _)| w == y)
            .map(|&(_, e)| self.bonds[e])
    }

    /// Enumerates embeddings, calling `visit` with the pattern-to-target map;
    /// `visit` returns true to stop. `anchor` pins pattern atom 0.
    fn search(&self, p: &Smarts, anchor: Option<usize>, visit: &mut dyn FnMut(&[usize]) -> bool) {
        let n = p.atoms.len();
        let mut map = vec![usize::MAX; n];
        let mut used = vec![false; self.atoms.len()];
        self.extend(p, 0, anchor, &mut map, &mut used, visit);
    }

    fn extend(
        &self,
        p: &Smarts,
        depth: usize,
        anchor: Option<usize>,
        map: &mut Vec<usize>,
        used: &mut Vec<bool>,
        visit: &mut dyn FnMut(&[usize]) -> bool,
    ) -> bool {
        if depth == p.order.len() {
            return visit(map);
        }
        let (pa, parent) = p.order[depth];
        let candidates: Vec<usize> = match (depth, anchor, parent) {
            (0, Some(a), _) => vec![a],
            (_, _, Some(pp)) => self.adjacency[map[pp]].iter().map(|&(w, _)| w).collect(),
            _ => (0..self.atoms.len()).collect(),
        };
        for t in candidates {
            if used[t] || !self.atom_ok(&p.atoms[pa], t) {
                continue;
            }
            let bonds_ok = p.adjacency[pa].iter().all(|&(q, e)| {
                if map[q] == usize::MAX {
                    return true;
                }
                match self.bond_between(t, map[q]) {
                    Some(b) => Self::bond_ok(&p.bonds[e].expr, b),
                    None => false,
                }
            });
            if !bonds_ok {
                continue;
            }
            map[pa] = t;
            used[t] = true;
            let stop = self.extend(p, depth + 1, anchor, map, used, visit);
            used[t] = false;
            map[pa] = usize::MAX;
            if stop {
                return true;
            }
        }
        false
    }

    /// True if some embedding maps pattern atom 0 onto target atom `atom`.
    pub fn matches_at(&self, p: &Smarts, atom: usize) -> bool {
        let mut found = false;
        self.search(p, Some(atom), &mut |_| {
            found = true;
            true
        });
        found
    }

    pub fn has_match(&self, p: &Smarts) -> bool {
        let mut found = false;
        self.search(p, None, &mut |_| {
            found = true;
            true
        });
        found
    }

    /// Number of embeddings with distinct matched atom sets.
    pub fn unique_match_count(&self, p: &Smarts) -> usize {
        let mut seen: HashSet<Vec<usize>> = HashSet::new();
        self.search(p, None, &mut |m| {
            let mut key = m.to_vec();
            key.sort_unstable();
            seen.insert(key);
            false
        });
        seen.len()
    }
}
