//! Morgan-style circular fingerprints and Tanimoto similarity.
//!
//! Atom codes start from (element, degree, charge, total H, ring flag,
//! aromatic flag) and are refined `radius` times by folding the sorted
//! (bond, neighbour code) pairs. Every code at every radius sets bit
//! `code mod nbits`. Hashing is XXH64 over little-endian words with a fixed
//! seed, so bit vectors are identical across platforms.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::hashing::{hash_words, FINGERPRINT_SEED};
use crate::molgraph::{BondOrder, MolGraph};

pub const DEFAULT_RADIUS: u32 = 2;
pub const DEFAULT_NBITS: u32 = 2048;
pub const MAX_RADIUS: u32 = 8;
pub const MIN_NBITS: u32 = 64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FingerprintError {
    #[error("nbits must be a power of two of at least {MIN_NBITS}, got {0}")]
    InvalidBits(u32),
    #[error("radius must be at most {MAX_RADIUS}, got {0}")]
    InvalidRadius(u32),
    #[error("fingerprint parameters differ: {left} vs {right}")]
    Mismatch { left: FingerprintParams, right: FingerprintParams },
    #[error("invalid fingerprint encoding: {0}")]
    Encoding(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FingerprintParams {
    pub radius: u32,
    pub nbits: u32,
}

impl Default for FingerprintParams {
    fn default() -> Self {
        FingerprintParams { radius: DEFAULT_RADIUS, nbits: DEFAULT_NBITS }
    }
}

impl std::fmt::Display for FingerprintParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "radius {} / {} bits", self.radius, self.nbits)
    }
}

impl FingerprintParams {
    pub fn new(radius: u32, nbits: u32) -> Result<Self, FingerprintError> {
        let p = FingerprintParams { radius, nbits };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), FingerprintError> {
        if self.nbits < MIN_NBITS || !self.nbits.is_power_of_two() {
            return Err(FingerprintError::InvalidBits(self.nbits));
        }
        if self.radius > MAX_RADIUS {
            return Err(FingerprintError::InvalidRadius(self.radius));
        }
        Ok(())
    }
}

/// A fixed-width bit vector tagged with the parameters that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    params: FingerprintParams,
    words: Vec<u64>,
}

impl Fingerprint {
    pub fn empty(params: FingerprintParams) -> Result<Self, FingerprintError> {
        params.validate()?;
        Ok(Fingerprint { params, words: vec![0; params.nbits as usize / 64] })
    }

    pub fn params(&self) -> FingerprintParams {
        self.params
    }

    pub fn nbits(&self) -> u32 {
        self.params.nbits
    }

    pub fn radius(&self) -> u32 {
        self.params.radius
    }

    pub fn set(&mut self, bit: u32) {
        let bit = bit % self.params.nbits;
        self.words[bit as usize / 64] |= 1 << (bit % 64);
    }

    pub fn get(&self, bit: u32) -> bool {
        bit < self.params.nbits && self.words[bit as usize / 64] >> (bit % 64) & 1 == 1
    }

    pub fn popcount(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// Indices of set bits in increasing order.
    pub fn on_bits(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.params.nbits).filter(|&b| self.get(b))
    }

    /// Base64 of the raw little-endian bit vector.
    pub fn to_base64(&self) -> String {
        let bytes: Vec<u8> = self.words.iter().flat_map(|w| w.to_le_bytes()).collect();
        STANDARD.encode(bytes)
    }

    pub fn from_base64(params: FingerprintParams, text: &str) -> Result<Self, FingerprintError> {
        params.validate()?;
        let bytes = STANDARD.decode(text).map_err(|e| FingerprintError::Encoding(e.to_string()))?;
        if bytes.len() * 8 != params.nbits as usize {
            return Err(FingerprintError::Encoding(format!(
                "{} bytes do not hold {} bits",
                bytes.len(),
                params.nbits
            )));
        }
        let words = bytes.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
        Ok(Fingerprint { params, words })
    }
}

#[derive(Serialize, Deserialize)]
struct EncodedFingerprint {
    radius: u32,
    nbits: u32,
    bits: String,
}

impl Serialize for Fingerprint {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        EncodedFingerprint { radius: self.params.radius, nbits: self.params.nbits, bits: self.to_base64() }
            .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Fingerprint {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let e = EncodedFingerprint::deserialize(deserializer)?;
        Fingerprint::from_base64(FingerprintParams { radius: e.radius, nbits: e.nbits }, &e.bits)
            .map_err(serde::de::Error::custom)
    }
}

fn bond_code(order: BondOrder) -> u64 {
    match order {
        BondOrder::Single => 1,
        BondOrder::Double => 2,
        BondOrder::Triple => 3,
        BondOrder::Aromatic => 4,
    }
}

/// Initial atom invariant.
pub(crate) fn atom_invariant(mol: &MolGraph, i: usize) -> u64 {
    let a = mol.atom(i);
    hash_words(
        FINGERPRINT_SEED,
        &[
            a.element.atomic_number() as u64,
            mol.degree(i) as u64,
            a.formal_charge as i64 as u64,
            mol.total_h(i) as u64,
            mol.is_ring_atom(i) as u64,
            a.aromatic as u64,
        ],
    )
}

/// Environment codes per radius: `codes[r][atom]`.
pub(crate) fn environment_codes(mol: &MolGraph, radius: u32) -> Vec<Vec<u64>> {
    let n = mol.atom_count();
    let mut layers = vec![(0..n).map(|i| atom_invariant(mol, i)).collect::<Vec<u64>>()];
    for r in 1..=radius {
        let prev = layers.last().expect("layer 0 exists");
        let next = (0..n)
            .map(|i| {
                let mut pairs: Vec<(u64, u64)> =
                    mol.neighbors(i).iter().map(|&(w, e)| (bond_code(mol.bonds()[e].order), prev[w])).collect();
                pairs.sort_unstable();
                let mut words = Vec::with_capacity(2 + 2 * pairs.len());
                words.push(r as u64);
                words.push(prev[i]);
                for (b, c) in pairs {
                    words.push(b);
                    words.push(c);
                }
                hash_words(FINGERPRINT_SEED, &words)
            })
            .collect();
        layers.push(next);
    }
    layers
}

pub fn morgan_fingerprint(mol: &MolGraph, params: FingerprintParams) -> Result<Fingerprint, FingerprintError> {
    let mut fp = Fingerprint::empty(params)?;
    for layer in environment_codes(mol, params.radius) {
        for code in layer {
            fp.set((code % params.nbits as u64) as u32);
        }
    }
    Ok(fp)
}

/// |a ∧ b| / |a ∨ b|, or 1.0 when both are empty.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, FingerprintError> {
    if a.params != b.params {
        return Err(FingerprintError::Mismatch { left: a.params, right: b.params });
    }
    let (mut both, mut either) = (0u32, 0u32);
    for (x, y) in a.words.iter().zip(&b.words) {
        both += (x & y).count_ones();
        either += (x | y).count_ones();
    }
    Ok(if either == 0 { 1.0 } else { both as f64 / either as f64 })
}
