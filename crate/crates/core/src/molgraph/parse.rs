//! SMILES reader. Parsing runs in stages (lexing, token grammar, branch
//! balance, graph construction, valence, aromaticity) and the first stage
//! that fails decides the reported category.

use std::collections::BTreeMap;

use super::error::{ParseError, ParseErrorCategory as Cat};
use super::{rings, Atom, Bond, BondOrder, Element, MolGraph};

/// Result of [`parse_smiles`]: a molecule or exactly one classified error.
#[derive(Debug, Clone)]
pub enum ParseOutcome {
    Valid(MolGraph),
    Invalid(ParseError),
}

impl ParseOutcome {
    pub fn is_valid(&self) -> bool {
        matches!(self, ParseOutcome::Valid(_))
    }

    pub fn molecule(&self) -> Option<&MolGraph> {
        match self {
            ParseOutcome::Valid(m) => Some(m),
            ParseOutcome::Invalid(_) => None,
        }
    }

    pub fn error(&self) -> Option<&ParseError> {
        match self {
            ParseOutcome::Valid(_) => None,
            ParseOutcome::Invalid(e) => Some(e),
        }
    }

    pub fn into_result(self) -> Result<MolGraph, ParseError> {
        match self {
            ParseOutcome::Valid(m) => Ok(m),
            ParseOutcome::Invalid(e) => Err(e),
        }
    }
}

impl From<Result<MolGraph, ParseError>> for ParseOutcome {
    fn from(r: Result<MolGraph, ParseError>) -> Self {
        match r {
            Ok(m) => ParseOutcome::Valid(m),
            Err(e) => ParseOutcome::Invalid(e),
        }
    }
}

/// Parses a SMILES string. Surrounding whitespace is ignored; reported
/// positions are byte offsets into `text` as given.
pub fn parse_smiles(text: &str) -> ParseOutcome {
    let lead = text.len() - text.trim_start().len();
    let body = text.trim();
    if body.is_empty() {
        return ParseOutcome::Invalid(ParseError::new(Cat::Syntax, "empty SMILES", None));
    }
    parse_body(body)
        .map_err(|mut e| {
            e.position = e.position.map(|p| p + lead);
            e
        })
        .into()
}

/// Whether `text` lexes as SMILES tokens in a grammatical order. Ring,
/// parenthesis and chemistry checks are not applied.
pub fn fits_token_grammar(text: &str) -> bool {
    !text.is_empty() && lex(text).and_then(|t| check_grammar(&t)).is_ok()
}

impl MolGraph {
    /// Convenience wrapper over [`parse_smiles`].
    pub fn from_smiles(text: &str) -> Result<MolGraph, ParseError> {
        parse_smiles(text).into_result()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BondSym {
    Single,
    Double,
    Triple,
    Aromatic,
    /// `/` or `\`: a single bond whose stereo marker is discarded.
    Directional,
}

impl BondSym {
    fn glyph(self) -> &'static str {
        match self {
            BondSym::Single => "-",
            BondSym::Double => "=",
            BondSym::Triple => "#",
            BondSym::Aromatic => ":",
            BondSym::Directional => "/",
        }
    }

    fn order(self) -> BondOrder {
        match self {
            BondSym::Single | BondSym::Directional => BondOrder::Single,
            BondSym::Double => BondOrder::Double,
            BondSym::Triple => BondOrder::Triple,
            BondSym::Aromatic => BondOrder::Aromatic,
        }
    }
}

#[derive(Debug, Clone)]
enum Tok {
    Atom(Atom),
    Bond(BondSym),
    Open,
    Close,
    Ring(u8),
    Dot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Atom,
    Bond,
    Open,
    Close,
    Ring,
    Dot,
}

impl Tok {
    fn kind(&self) -> Kind {
        match self {
            Tok::Atom(_) => Kind::Atom,
            Tok::Bond(_) => Kind::Bond,
            Tok::Open => Kind::Open,
            Tok::Close => Kind::Close,
            Tok::Ring(_) => Kind::Ring,
            Tok::Dot => Kind::Dot,
        }
    }
}

fn syntax(detail: impl Into<String>, pos: usize) -> ParseError {
    ParseError::new(Cat::Syntax, detail, Some(pos))
}

fn describe_char(s: &str, pos: usize) -> String {
    match s[pos..].chars().next() {
        Some(c) if c.is_ascii_graphic() => format!("'{c}'"),
        Some(c) if c == ' ' || c == '\t' || c == '\n' || c == '\r' => "whitespace".to_string(),
        Some(c) => format!("{:?}", c),
        None => "end of input".to_string(),
    }
}

fn parse_body(s: &str) -> Result<MolGraph, ParseError> {
    let tokens = lex(s)?;
    check_grammar(&tokens)?;
    check_parentheses(&tokens)?;
    let (atoms, bonds, positions) = build(&tokens)?;
    MolGraph::from_parts(atoms, bonds, Some(&positions))
}

fn lex(s: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let b = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let start = i;
        let c = b[i];
        let tok = match c {
            b'(' => Tok::Open,
            b')' => Tok::Close,
            b'.' => Tok::Dot,
            b'-' => Tok::Bond(BondSym::Single),
            b'=' => Tok::Bond(BondSym::Double),
            b'#' => Tok::Bond(BondSym::Triple),
            b':' => Tok::Bond(BondSym::Aromatic),
            b'/' | b'\\' => Tok::Bond(BondSym::Directional),
            b'$' => return Err(syntax("quadruple bond '$' is not supported", i)),
            b'0'..=b'9' => Tok::Ring(c - b'0'),
            b'%' => {
                let digits = b.get(i + 1..i + 3).filter(|d| d.iter().all(u8::is_ascii_digit));
                match digits {
                    Some(d) => {
                        i += 2;
                        Tok::Ring((d[0] - b'0') * 10 + (d[1] - b'0'))
                    }
                    None => return Err(syntax("'%' must be followed by two ring-bond digits", i)),
                }
            }
            b'[' => {
                let (atom, end) = lex_bracket(s, i)?;
                i = end;
                Tok::Atom(atom)
            }
            b'*' => return Err(syntax("wildcard atom '*' is not supported", i)),
            b'B' if b.get(i + 1) == Some(&b'r') => {
                i += 1;
                Tok::Atom(Atom::organic(Element::BR, false))
            }
            b'C' if b.get(i + 1) == Some(&b'l') => {
                i += 1;
                Tok::Atom(Atom::organic(Element::CL, false))
            }
            b'B' => Tok::Atom(Atom::organic(Element::B, false)),
            b'C' => Tok::Atom(Atom::organic(Element::C, false)),
            b'N' => Tok::Atom(Atom::organic(Element::N, false)),
            b'O' => Tok::Atom(Atom::organic(Element::O, false)),
            b'P' => Tok::Atom(Atom::organic(Element::P, false)),
            b'S' => Tok::Atom(Atom::organic(Element::S, false)),
            b'F' => Tok::Atom(Atom::organic(Element::F, false)),
            b'I' => Tok::Atom(Atom::organic(Element::I, false)),
            b'b' => Tok::Atom(Atom::organic(Element::B, true)),
            b'c' => Tok::Atom(Atom::organic(Element::C, true)),
            b'n' => Tok::Atom(Atom::organic(Element::N, true)),
            b'o' => Tok::Atom(Atom::organic(Element::O, true)),
            b'p' => Tok::Atom(Atom::organic(Element::P, true)),
            b's' => Tok::Atom(Atom::organic(Element::S, true)),
            b']' => return Err(syntax("']' without a matching '['", i)),
            c if c.is_ascii_alphabetic() => {
                let end = s[i..]
                    .char_indices()
                    .skip(1)
                    .find(|(_, ch)| !ch.is_ascii_lowercase())
                    .map(|(k, _)| i + k)
                    .unwrap_or(s.len());
                let word = &s[i..end.min(i + 2)];
                return Err(syntax(
                    format!("unrecognized atom symbol '{word}' outside brackets"),
                    i,
                ));
            }
            _ => return Err(syntax(format!("unexpected character {}", describe_char(s, i)), i)),
        };
        out.push((tok, start));
        i += 1;
    }
    Ok(out)
}

/// Parses `[isotope? symbol chirality? hcount? charge? class?]` starting at
/// the `[` at `open`. Returns the atom and the index of the closing `]`.
fn lex_bracket(s: &str, open: usize) -> Result<(Atom, usize), ParseError> {
    let b = s.as_bytes();
    let mut i = open + 1;
    let unterminated = || syntax("bracket atom is missing its closing ']'", open);
    let number = |i: &mut usize| -> Option<u32> {
        let start = *i;
        while *i < b.len() && b[*i].is_ascii_digit() && *i - start < 6 {
            *i += 1;
        }
        (*i > start).then(|| s[start..*i].parse().unwrap())
    };

    let isotope = number(&mut i);
    if isotope.is_some_and(|v| v > 999) {
        return Err(syntax("isotope mass is out of range", open + 1));
    }
    let sym_pos = i;
    let Some(&c) = b.get(i) else {
        return Err(unterminated());
    };
    let (element, aromatic) = if c.is_ascii_uppercase() {
        let two = b
            .get(i + 1)
            .filter(|n| n.is_ascii_lowercase())
            .and_then(|_| Element::from_symbol(&s[i..i + 2]));
        match two {
            Some(e) => {
                i += 2;
                (e, false)
            }
            None => match Element::from_symbol(&s[i..i + 1]) {
                Some(e) => {
                    i += 1;
                    (e, false)
                }
                None => {
                    return Err(syntax(
                        format!("unknown element symbol {} in bracket atom", describe_char(s, i)),
                        i,
                    ))
                }
            },
        }
    } else if c.is_ascii_lowercase() {
        let two = s.get(i..i + 2).filter(|t| *t == "se" || *t == "as");
        match two {
            Some(t) => {
                i += 2;
                (Element::from_symbol(if t == "se" { "Se" } else { "As" }).unwrap(), true)
            }
            None => {
                let e = match c {
                    b'b' => Element::B,
                    b'c' => Element::C,
                    b'n' => Element::N,
                    b'o' => Element::O,
                    b'p' => Element::P,
                    b's' => Element::S,
                    _ => {
                        return Err(syntax(
                            format!("unknown aromatic symbol {} in bracket atom", describe_char(s, i)),
                            i,
                        ))
                    }
                };
                i += 1;
                (e, true)
            }
        }
    } else if c == b'*' {
        return Err(syntax("wildcard atom '*' is not supported", i));
    } else if c == b']' {
        return Err(syntax("bracket atom has no element symbol", open));
    } else {
        return Err(syntax(
            format!("expected an element symbol in bracket atom, found {}", describe_char(s, i)),
            sym_pos,
        ));
    };

    // Chirality is accepted and discarded.
    if b.get(i) == Some(&b'@') {
        i += 1;
        if b.get(i) == Some(&b'@') {
            i += 1;
        } else if let Some(tag) = s.get(i..i + 2).filter(|t| ["TH", "AL", "SP", "TB", "OH"].contains(t)) {
            let _ = tag;
            i += 2;
            if number(&mut i).is_none() {
                return Err(syntax("chirality class is missing its number", i));
            }
        }
    }

    let mut explicit_h = 0u8;
    if b.get(i) == Some(&b'H') {
        i += 1;
        explicit_h = match number(&mut i) {
            Some(v) if v <= 9 => v as u8,
            Some(_) => return Err(syntax("hydrogen count is out of range", i - 1)),
            None => 1,
        };
    }

    let mut charge: i32 = 0;
    if let Some(&sign) = b.get(i).filter(|c| **c == b'+' || **c == b'-') {
        let unit = if sign == b'+' { 1 } else { -1 };
        let sign_pos = i;
        i += 1;
        if let Some(v) = number(&mut i) {
            charge = unit * v as i32;
        } else {
            charge = unit;
            while b.get(i) == Some(&sign) {
                charge += unit;
                i += 1;
            }
        }
        if charge.abs() > 15 {
            return Err(syntax("formal charge is out of range", sign_pos));
        }
    }

    if b.get(i) == Some(&b':') {
        i += 1;
        if number(&mut i).is_none() {
            return Err(syntax("atom class ':' must be followed by a number", i));
        }
    }

    match b.get(i) {
        Some(b']') => {}
        None => return Err(unterminated()),
        Some(_) => {
            return Err(syntax(
                format!("unexpected {} in bracket atom", describe_char(s, i)),
                i,
            ))
        }
    }
    let atom = Atom {
        element,
        formal_charge: charge as i8,
        explicit_h: Some(explicit_h),
        isotope: isotope.map(|v| v as u16),
        aromatic,
        bracketed: true,
    };
    Ok((atom, i))
}

fn check_grammar(tokens: &[(Tok, usize)]) -> Result<(), ParseError> {
    // Kind of the previous token, and for bonds, what preceded the bond.
    let mut prev: Option<Kind> = None;
    let mut before_bond: Option<Kind> = None;
    let mut last_bond = BondSym::Single;
    for (tok, pos) in tokens {
        let pos = *pos;
        match tok {
            Tok::Atom(_) => {}
            Tok::Bond(sym) => match prev {
                None => return Err(syntax(format!("bond '{}' has no preceding atom", sym.glyph()), pos)),
                Some(Kind::Bond) => {
                    return Err(syntax(
                        format!("consecutive bond symbols '{}' and '{}'", last_bond.glyph(), sym.glyph()),
                        pos,
                    ))
                }
                Some(Kind::Dot) => return Err(syntax(format!("bond '{}' follows a '.'", sym.glyph()), pos)),
                _ => {}
            },
            Tok::Open => match prev {
                None => return Err(syntax("branch opened before any atom", pos)),
                Some(Kind::Open) => return Err(syntax("branch opened directly inside another branch", pos)),
                Some(Kind::Bond) => {
                    return Err(syntax(format!("branch opened after bond '{}'", last_bond.glyph()), pos))
                }
                Some(Kind::Dot) => return Err(syntax("branch opened after a '.'", pos)),
                _ => {}
            },
            Tok::Close => match prev {
                Some(Kind::Open) => return Err(syntax("empty branch '()'", pos)),
                Some(Kind::Bond) => {
                    return Err(syntax(format!("bond '{}' has no following atom", last_bond.glyph()), pos))
                }
                Some(Kind::Dot) => return Err(syntax("'.' has no following atom", pos)),
                // A leading ')' is a balance problem, reported by the next stage.
                _ => {}
            },
            Tok::Ring(label) => match prev {
                Some(Kind::Atom) | Some(Kind::Ring) => {}
                Some(Kind::Bond) if matches!(before_bond, Some(Kind::Atom) | Some(Kind::Ring)) => {}
                _ => return Err(syntax(format!("ring bond {label} does not follow an atom"), pos)),
            },
            Tok::Dot => match prev {
                None => return Err(syntax("'.' has no preceding atom", pos)),
                Some(Kind::Bond) => {
                    return Err(syntax(format!("bond '{}' has no following atom", last_bond.glyph()), pos))
                }
                Some(Kind::Open) => return Err(syntax("'.' directly after '('", pos)),
                Some(Kind::Dot) => return Err(syntax("consecutive '.' symbols", pos)),
                _ => {}
            },
        }
        if let Tok::Bond(sym) = tok {
            before_bond = prev;
            last_bond = *sym;
        }
        prev = Some(tok.kind());
    }
    if let Some((tok, pos)) = tokens.last() {
        match tok {
            Tok::Bond(sym) => return Err(syntax(format!("bond '{}' has no following atom", sym.glyph()), *pos)),
            Tok::Dot => return Err(syntax("'.' has no following atom", *pos)),
            _ => {}
        }
    }
    if !tokens.iter().any(|(t, _)| matches!(t, Tok::Atom(_))) {
        return Err(syntax("no atoms found", tokens[0].1));
    }
    Ok(())
}

fn check_parentheses(tokens: &[(Tok, usize)]) -> Result<(), ParseError> {
    let mut open = Vec::new();
    for (tok, pos) in tokens {
        match tok {
            Tok::Open => open.push(*pos),
            Tok::Close if open.pop().is_none() => {
                return Err(ParseError::new(Cat::Parentheses, "unmatched ')'", Some(*pos)));
            }
            _ => {}
        }
    }
    if let Some(&pos) = open.first() {
        return Err(ParseError::new(Cat::Parentheses, "unmatched '('", Some(pos)));
    }
    Ok(())
}

struct PendingBond {
    a: usize,
    b: usize,
    sym: Option<BondSym>,
}

type Built = (Vec<Atom>, Vec<Bond>, Vec<usize>);

fn build(tokens: &[(Tok, usize)]) -> Result<Built, ParseError> {
    let mut atoms: Vec<Atom> = Vec::new();
    let mut positions = Vec::new();
    let mut pending: Vec<PendingBond> = Vec::new();
    let mut branch_stack: Vec<Option<usize>> = Vec::new();
    let mut prev: Option<usize> = None;
    let mut bond_sym: Option<BondSym> = None;
    // label -> (atom, bond symbol at the opening digit, position)
    let mut open_rings: BTreeMap<u8, (usize, Option<BondSym>, usize)> = BTreeMap::new();
    let mut syntax_err: Option<ParseError> = None;
    let mut duplicate_err: Option<ParseError> = None;

    let bonded = |pending: &[PendingBond], x: usize, y: usize| {
        pending
            .iter()
            .any(|p| (p.a == x && p.b == y) || (p.a == y && p.b == x))
    };

    for (tok, pos) in tokens {
        match tok {
            Tok::Atom(atom) => {
                let idx = atoms.len();
                atoms.push(atom.clone());
                positions.push(*pos);
                if let Some(p) = prev {
                    pending.push(PendingBond {
                        a: p,
                        b: idx,
                        sym: bond_sym.take(),
                    });
                }
                bond_sym = None;
                prev = Some(idx);
            }
            Tok::Bond(sym) => bond_sym = Some(*sym),
            Tok::Open => branch_stack.push(prev),
            Tok::Close => prev = branch_stack.pop().flatten(),
            Tok::Dot => {
                prev = None;
                bond_sym = None;
            }
            Tok::Ring(label) => {
                let Some(current) = prev else { continue };
                let sym = bond_sym.take();
                match open_rings.remove(label) {
                    None => {
                        open_rings.insert(*label, (current, sym, *pos));
                    }
                    Some((partner, open_sym, _)) => {
                        let resolved = match (open_sym, sym) {
                            (Some(x), Some(y)) if x.order() != y.order() => {
                                syntax_err.get_or_insert_with(|| {
                                    syntax(
                                        format!(
                                            "ring bond {label} has conflicting bond symbols '{}' and '{}'",
                                            x.glyph(),
                                            y.glyph()
                                        ),
                                        *pos,
                                    )
                                });
                                continue;
                            }
                            (x, y) => x.or(y),
                        };
                        if partner == current {
                            duplicate_err.get_or_insert_with(|| {
                                ParseError::new(
                                    Cat::DuplicateBond,
                                    format!("ring bond {label} bonds atom {current} to itself"),
                                    Some(*pos),
                                )
                            });
                        } else if bonded(&pending, partner, current) {
                            duplicate_err.get_or_insert_with(|| {
                                ParseError::new(
                                    Cat::DuplicateBond,
                                    format!(
                                        "ring bond {label} duplicates the existing bond between atoms {partner} and {current}"
                                    ),
                                    Some(*pos),
                                )
                            });
                        } else {
                            pending.push(PendingBond {
                                a: partner,
                                b: current,
                                sym: resolved,
                            });
                        }
                    }
                }
            }
        }
    }

    if let Some(e) = syntax_err {
        return Err(e);
    }
    if let Some((label, (_, _, pos))) = open_rings.iter().min_by_key(|(_, (_, _, pos))| *pos) {
        return Err(ParseError::new(
            Cat::UnclosedRing,
            format!("ring bond {label} opened but never closed"),
            Some(*pos),
        ));
    }
    if let Some(e) = duplicate_err {
        return Err(e);
    }

    // Unmarked bonds between aromatic atoms are aromatic only inside rings.
    let mut adjacency = vec![Vec::new(); atoms.len()];
    for (i, p) in pending.iter().enumerate() {
        adjacency[p.a].push((p.b, i));
        adjacency[p.b].push((p.a, i));
    }
    let on_cycle = rings::ring_bonds(&adjacency, pending.len());
    let bonds = pending
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let order = match p.sym {
                Some(sym) => sym.order(),
                None if atoms[p.a].aromatic && atoms[p.b].aromatic && on_cycle[i] => BondOrder::Aromatic,
                None => BondOrder::Single,
            };
            Bond { a: p.a, b: p.b, order }
        })
        .collect();
    Ok((atoms, bonds, positions))
}
