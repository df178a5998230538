//! The pinned 64-bit hash used by signatures and fingerprints:
//! XXH64 over little-endian `u64` words.

use xxhash_rust::xxh64::xxh64;

pub(crate) const SIGNATURE_SEED: u64 = 0x5349_474e_0000_0001;
pub(crate) const FINGERPRINT_SEED: u64 = 0x4650_5249_0000_0002;

pub(crate) fn hash_words(seed: u64, words: &[u64]) -> u64 {
    let mut bytes = Vec::with_capacity(words.len() * 8);
    for w in words {
        bytes.extend_from_slice(&w.to_le_bytes());
    }
    xxh64(&bytes, seed)
}
